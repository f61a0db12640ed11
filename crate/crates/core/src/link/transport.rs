use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;

use super::fog::{FogNode, FogSession};
use super::protocol::{read_frame, MsgType, ReadError, WireMessage};
use crate::error::{Error, Result};

/// Byte and frame counters of one link, as seen from the edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames_sent: u64,
    pub bytes_sent: u64,
    pub frames_received: u64,
    pub bytes_received: u64,
    /// Bytes sent per message type name.
    pub sent_by_type: BTreeMap<&'static str, u64>,
}

impl LinkStats {
    fn record_sent(&mut self, ty: MsgType, bytes: usize) {
        self.frames_sent += 1;
        self.bytes_sent += bytes as u64;
        *self.sent_by_type.entry(ty.name()).or_default() += bytes as u64;
    }

    fn record_received(&mut self, bytes: usize) {
        self.frames_received += 1;
        self.bytes_received += bytes as u64;
    }
}

/// Edge-side connection to a fog node. Every call delivers one message and
/// returns the replies it produced.
pub trait Link {
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>>;
    fn stats(&self) -> &LinkStats;
}

/// In-process link: frames are encoded and decoded exactly as on a socket
/// but handed to a [`FogSession`] directly.
pub struct LoopbackLink {
    session: FogSession,
    stats: LinkStats,
}

impl LoopbackLink {
    pub fn new(node: Arc<FogNode>) -> Self {
        Self {
            session: FogSession::new(node),
            stats: LinkStats::default(),
        }
    }
}

impl Link for LoopbackLink {
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>> {
        msg.validate()?;
        let bytes = msg.encode();
        self.stats.record_sent(msg.msg_type(), bytes.len());
        let (received, _) = WireMessage::decode(&bytes)?;
        let Some(reply) = self.session.handle(&received)? else {
            return Ok(Vec::new());
        };
        let reply_bytes = reply.encode();
        self.stats.record_received(reply_bytes.len());
        Ok(vec![WireMessage::decode(&reply_bytes)?.0])
    }

    fn stats(&self) -> &LinkStats {
        &self.stats
    }
}

/// Blocking TCP link. Only feature maps are answered, so the link waits for
/// a reply after each one.
pub struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    stats: LinkStats,
}

impl TcpLink {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            stats: LinkStats::default(),
        })
    }
}

impl Link for TcpLink {
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>> {
        msg.validate()?;
        let n = msg.write_to(&mut self.writer)?;
        self.writer.flush()?;
        self.stats.record_sent(msg.msg_type(), n);
        if msg.msg_type() != MsgType::FeatureMap {
            return Ok(Vec::new());
        }
        match read_frame(&mut self.reader) {
            Ok(Some((reply, n))) => {
                self.stats.record_received(n);
                Ok(vec![reply])
            }
            Ok(None) => Err(Error::Link("fog closed the session".to_string())),
            Err(ReadError::Protocol(e)) => Err(e.into()),
            Err(ReadError::Io(e)) => Err(e.into()),
        }
    }

    fn stats(&self) -> &LinkStats {
        &self.stats
    }
}
