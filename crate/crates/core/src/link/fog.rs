use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use super::protocol::{read_frame, Payload, ProtocolError, ReadError, WireMessage};
use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::nn::{load_weights, weights_hash, ModelGraph, Tensor, CUT_SHAPE};

/// Parameter count the fog half of the network must have.
const FOG_PARAMS: usize = 3804;

#[derive(Debug, Clone, PartialEq)]
pub struct FogConfig {
    pub listen: String,
    pub weights: PathBuf,
    pub max_sessions: usize,
    /// Line-delimited JSON log of every handled message.
    pub log_path: Option<PathBuf>,
}

impl Default for FogConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".to_string(),
            weights: PathBuf::from("model.nnw"),
            max_sessions: 8,
            log_path: None,
        }
    }
}

#[derive(Serialize)]
struct LogRecord<'a> {
    session: u32,
    beat: u32,
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<AamiClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probs: Option<[f32; 4]>,
    latency_us: u128,
}

type SharedLog = Arc<Mutex<Box<dyn Write + Send>>>;

/// The fog half of the network plus its version hash. Shared read-only by
/// every session.
pub struct FogNode {
    model: ModelGraph<f32>,
    hash: [u8; 32],
    log: Option<SharedLog>,
}

impl FogNode {
    pub fn new(model: ModelGraph<f32>) -> Result<Self> {
        let fog_params = model.fog_param_count();
        if fog_params != FOG_PARAMS {
            return Err(Error::param(format!(
                "fog subgraph has {fog_params} parameters, expected {FOG_PARAMS}"
            )));
        }
        Ok(Self {
            hash: weights_hash(&model),
            model,
            log: None,
        })
    }

    pub fn with_log(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.log = Some(Arc::new(Mutex::new(sink)));
        self
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hash
    }

    pub fn model(&self) -> &ModelGraph<f32> {
        &self.model
    }

    /// Runs the fog layers on a received feature map.
    pub fn classify(&self, values: &[f32]) -> Result<(AamiClass, [f32; 4])> {
        let cut = Tensor::new(vec![CUT_SHAPE.0, CUT_SHAPE.1], values.to_vec())?;
        let probs = self.model.forward_fog(&cut)?;
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        let class = AamiClass::from_head2_index(best).expect("four head-2 classes");
        Ok((
            class,
            [
                probs[0] as f32,
                probs[1] as f32,
                probs[2] as f32,
                probs[3] as f32,
            ],
        ))
    }

    fn log(&self, rec: &LogRecord<'_>) {
        if let Some(log) = &self.log {
            let mut sink = log.lock().unwrap_or_else(|e| e.into_inner());
            if let Ok(line) = serde_json::to_string(rec) {
                let _ = writeln!(sink, "{line}");
            }
        }
    }
}

/// Per-connection protocol state.
pub struct FogSession {
    node: Arc<FogNode>,
    session_id: Option<u32>,
}

impl FogSession {
    pub fn new(node: Arc<FogNode>) -> Self {
        Self {
            node,
            session_id: None,
        }
    }

    pub fn session_id(&self) -> Option<u32> {
        self.session_id
    }

    /// Handles one inbound message; feature maps produce a classification
    /// reply, everything else is only logged.
    pub fn handle(&mut self, msg: &WireMessage) -> Result<Option<WireMessage>> {
        let started = Instant::now();
        let kind = msg.msg_type().name();
        let reply = match (&msg.payload, self.session_id) {
            (Payload::Hello { weights_hash, .. }, None) => {
                if *weights_hash != self.node.hash {
                    return Err(ProtocolError::VersionMismatch.into());
                }
                self.session_id = Some(msg.session_id);
                None
            }
            (_, None) => return Err(ProtocolError::NoHello.into()),
            (Payload::Hello { .. }, Some(_)) => {
                return Err(ProtocolError::Unexpected("HELLO").into())
            }
            (Payload::Classification { .. }, Some(_)) => {
                return Err(ProtocolError::Unexpected("CLASSIFICATION").into())
            }
            (Payload::FeatureMap { values }, Some(_)) => {
                let (class, probs) = self.node.classify(values)?;
                Some(WireMessage::new(
                    msg.session_id,
                    msg.beat_id,
                    Payload::Classification { class, probs },
                ))
            }
            _ => None,
        };
        let (class, probs) = match reply.as_ref().map(|r| &r.payload) {
            Some(Payload::Classification { class, probs }) => (Some(*class), Some(*probs)),
            _ => (None, None),
        };
        self.node.log(&LogRecord {
            session: msg.session_id,
            beat: msg.beat_id,
            kind,
            class,
            probs,
            latency_us: started.elapsed().as_micros(),
        });
        Ok(reply)
    }
}

/// TCP front end: one thread per connection, bounded concurrent sessions.
pub struct FogServer {
    listener: TcpListener,
    node: Arc<FogNode>,
    max_sessions: usize,
    active: Arc<AtomicUsize>,
}

impl FogServer {
    pub fn bind(addr: impl ToSocketAddrs, node: Arc<FogNode>, max_sessions: usize) -> Result<Self> {
        if max_sessions == 0 {
            return Err(Error::param("max_sessions must be at least 1"));
        }
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            node,
            max_sessions,
            active: Arc::new(AtomicUsize::new(0)),
        })
    }

    /// Loads weights, checks the fog parameter count and binds the listener.
    pub fn from_config(cfg: &FogConfig) -> Result<Self> {
        let mut node = FogNode::new(load_weights(&cfg.weights)?)?;
        if let Some(path) = &cfg.log_path {
            node = node.with_log(Box::new(BufWriter::new(std::fs::File::create(path)?)));
        }
        Self::bind(cfg.listen.as_str(), Arc::new(node), cfg.max_sessions)
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until the listener fails.
    pub fn serve(self) -> Result<()> {
        info!("fog service listening on {}", self.local_addr()?);
        for stream in self.listener.incoming() {
            let stream = stream?;
            let prev = self.active.fetch_add(1, Ordering::SeqCst);
            if prev >= self.max_sessions {
                self.active.fetch_sub(1, Ordering::SeqCst);
                warn!("{}", ProtocolError::SessionLimit(self.max_sessions));
                drop(stream);
                continue;
            }
            let node = Arc::clone(&self.node);
            let active = Arc::clone(&self.active);
            thread::spawn(move || {
                if let Err(e) = serve_connection(stream, node) {
                    warn!("session closed: {e}");
                }
                active.fetch_sub(1, Ordering::SeqCst);
            });
        }
        Ok(())
    }

    /// Runs [`serve`](Self::serve) on a background thread.
    pub fn spawn(self) -> thread::JoinHandle<Result<()>> {
        thread::spawn(move || self.serve())
    }
}

fn serve_connection(stream: TcpStream, node: Arc<FogNode>) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut session = FogSession::new(node);
    loop {
        let msg = match read_frame(&mut reader) {
            Ok(Some((msg, _))) => msg,
            Ok(None) => return Ok(()),
            Err(ReadError::Protocol(e)) => return Err(e.into()),
            Err(ReadError::Io(e)) => return Err(e.into()),
        };
        if let Some(reply) = session.handle(&msg)? {
            reply.write_to(&mut writer)?;
            writer.flush()?;
        }
    }
}
