use std::io::{self, Read, Write};

use thiserror::Error;

use crate::aami::AamiClass;
use crate::nn::CUT_SHAPE;

pub const FRAME_MAGIC: &[u8; 4] = b"EFG1";
/// Largest accepted value of the length field.
pub const MAX_FRAME_LEN: usize = 1 << 20;
/// Magic plus the length field.
pub const PREFIX_LEN: usize = 8;
/// Type, session id and beat id.
pub const HEADER_LEN: usize = 9;
pub const FEATURE_VALUES: usize = CUT_SHAPE.0 * CUT_SHAPE.1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("length field {0} outside [{HEADER_LEN}, {MAX_FRAME_LEN}]")]
    Length(u32),
    #[error("short read in {field}: need {need} bytes, have {have}")]
    Short {
        field: &'static str,
        need: usize,
        have: usize,
    },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("{kind} payload must be {expected} bytes, got {got}")]
    PayloadSize {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid value in {0}")]
    InvalidValue(&'static str),
    #[error("model version mismatch")]
    VersionMismatch,
    #[error("session must open with HELLO")]
    NoHello,
    #[error("session limit of {0} reached")]
    SessionLimit(usize),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    Hello = 1,
    HeartRate = 2,
    FeatureMap = 3,
    Classification = 4,
    RateChange = 5,
    NoiseReport = 6,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => MsgType::Hello,
            2 => MsgType::HeartRate,
            3 => MsgType::FeatureMap,
            4 => MsgType::Classification,
            5 => MsgType::RateChange,
            6 => MsgType::NoiseReport,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::HeartRate => "HEART_RATE",
            MsgType::FeatureMap => "FEATURE_MAP",
            MsgType::Classification => "CLASSIFICATION",
            MsgType::RateChange => "RATE_CHANGE",
            MsgType::NoiseReport => "NOISE_REPORT",
        }
    }

    /// Fixed payload size of this type.
    pub fn payload_len(self) -> usize {
        match self {
            MsgType::Hello => 34,
            MsgType::HeartRate => 4,
            MsgType::FeatureMap => FEATURE_VALUES * 4,
            MsgType::Classification => 17,
            MsgType::RateChange => 3,
            MsgType::NoiseReport => 5,
        }
    }

    /// Total encoded size of a frame of this type.
    pub fn frame_len(self) -> usize {
        PREFIX_LEN + HEADER_LEN + self.payload_len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Hello {
        weights_hash: [u8; 32],
        fs: u16,
    },
    HeartRate {
        bpm: f32,
    },
    /// Cut activation, position-major then channel.
    FeatureMap {
        values: Vec<f32>,
    },
    Classification {
        class: AamiClass,
        probs: [f32; 4],
    },
    RateChange {
        fs: u16,
        reason: u8,
    },
    NoiseReport {
        window_start: u32,
        reason: u8,
    },
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::Hello { .. } => MsgType::Hello,
            Payload::HeartRate { .. } => MsgType::HeartRate,
            Payload::FeatureMap { .. } => MsgType::FeatureMap,
            Payload::Classification { .. } => MsgType::Classification,
            Payload::RateChange { .. } => MsgType::RateChange,
            Payload::NoiseReport { .. } => MsgType::NoiseReport,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub session_id: u32,
    /// Zero when the message is not about a beat.
    pub beat_id: u32,
    pub payload: Payload,
}

fn finite(v: f32, field: &'static str) -> Result<f32, ProtocolError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ProtocolError::InvalidValue(field))
    }
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes(b[at..at + 2].try_into().expect("2 bytes"))
}

impl WireMessage {
    pub fn new(session_id: u32, beat_id: u32, payload: Payload) -> Self {
        Self {
            session_id,
            beat_id,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }

    /// Checks payload-level constraints that the type system does not carry.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        match &self.payload {
            Payload::HeartRate { bpm } => {
                finite(*bpm, "heart rate")?;
            }
            Payload::FeatureMap { values } => {
                if values.len() != FEATURE_VALUES {
                    return Err(ProtocolError::PayloadSize {
                        kind: "FEATURE_MAP",
                        expected: FEATURE_VALUES * 4,
                        got: values.len() * 4,
                    });
                }
                for v in values {
                    finite(*v, "feature map")?;
                }
            }
            Payload::Classification { class, probs } => {
                if class.head2_index().is_none() {
                    return Err(ProtocolError::InvalidValue("class"));
                }
                for p in probs {
                    finite(*p, "probabilities")?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let ty = self.msg_type();
        let mut out = Vec::with_capacity(ty.frame_len());
        out.extend_from_slice(FRAME_MAGIC);
        out.extend_from_slice(&((HEADER_LEN + ty.payload_len()) as u32).to_le_bytes());
        out.push(ty as u8);
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&self.beat_id.to_le_bytes());
        match &self.payload {
            Payload::Hello { weights_hash, fs } => {
                out.extend_from_slice(weights_hash);
                out.extend_from_slice(&fs.to_le_bytes());
            }
            Payload::HeartRate { bpm } => out.extend_from_slice(&bpm.to_le_bytes()),
            Payload::FeatureMap { values } => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Payload::Classification { class, probs } => {
                out.push(class.head2_index().unwrap_or(u8::MAX as usize) as u8);
                for p in probs {
                    out.extend_from_slice(&p.to_le_bytes());
                }
            }
            Payload::RateChange { fs, reason } => {
                out.extend_from_slice(&fs.to_le_bytes());
                out.push(*reason);
            }
            Payload::NoiseReport {
                window_start,
                reason,
            } => {
                out.extend_from_slice(&window_start.to_le_bytes());
                out.push(*reason);
            }
        }
        out
    }

    /// Decodes one frame from the start of `bytes`; returns the message and
    /// the number of bytes consumed. Never reads past the declared length.
    pub fn decode(bytes: &[u8]) -> Result<(WireMessage, usize), ProtocolError> {
        let body_len = parse_prefix(bytes)?;
        let have = bytes.len() - PREFIX_LEN;
        if have < body_len {
            return Err(ProtocolError::Short {
                field: "frame body",
                need: body_len,
                have,
            });
        }
        let msg = decode_body(&bytes[PREFIX_LEN..PREFIX_LEN + body_len])?;
        Ok((msg, PREFIX_LEN + body_len))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<usize> {
        let bytes = self.encode();
        w.write_all(&bytes)?;
        Ok(bytes.len())
    }
}

/// Validates magic and length field; returns the declared body length.
fn parse_prefix(bytes: &[u8]) -> Result<usize, ProtocolError> {
    if bytes.len() < 4 {
        return Err(ProtocolError::Short {
            field: "magic",
            need: 4,
            have: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != FRAME_MAGIC {
        return Err(ProtocolError::BadMagic(magic));
    }
    if bytes.len() < PREFIX_LEN {
        return Err(ProtocolError::Short {
            field: "length",
            need: 4,
            have: bytes.len() - 4,
        });
    }
    let declared = u32_at(bytes, 4);
    if (declared as usize) < HEADER_LEN || declared as usize > MAX_FRAME_LEN {
        return Err(ProtocolError::Length(declared));
    }
    Ok(declared as usize)
}

fn decode_body(body: &[u8]) -> Result<WireMessage, ProtocolError> {
    let ty = MsgType::from_u8(body[0]).ok_or(ProtocolError::UnknownType(body[0]))?;
    let session_id = u32_at(body, 1);
    let beat_id = u32_at(body, 5);
    let p = &body[HEADER_LEN..];
    if p.len() != ty.payload_len() {
        return Err(ProtocolError::PayloadSize {
            kind: ty.name(),
            expected: ty.payload_len(),
            got: p.len(),
        });
    }
    let payload = match ty {
        MsgType::Hello => Payload::Hello {
            weights_hash: p[..32].try_into().expect("32 bytes"),
            fs: u16_at(p, 32),
        },
        MsgType::HeartRate => Payload::HeartRate {
            bpm: finite(f32_at(p, 0), "heart rate")?,
        },
        MsgType::FeatureMap => Payload::FeatureMap {
            values: p
                .chunks_exact(4)
                .map(|c| {
                    finite(
                        f32::from_le_bytes(c.try_into().expect("4 bytes")),
                        "feature map",
                    )
                })
                .collect::<Result<_, _>>()?,
        },
        MsgType::Classification => {
            let class = AamiClass::from_head2_index(p[0] as usize)
                .ok_or(ProtocolError::InvalidValue("class"))?;
            let mut probs = [0.0f32; 4];
            for (i, v) in probs.iter_mut().enumerate() {
                *v = finite(f32_at(p, 1 + 4 * i), "probabilities")?;
            }
            Payload::Classification { class, probs }
        }
        MsgType::RateChange => Payload::RateChange {
            fs: u16_at(p, 0),
            reason: p[2],
        },
        MsgType::NoiseReport => Payload::NoiseReport {
            window_start: u32_at(p, 0),
            reason: p[4],
        },
    };
    Ok(WireMessage {
        session_id,
        beat_id,
        payload,
    })
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads one frame from a byte stream. `Ok(None)` means the stream ended
/// cleanly before a new frame started.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<(WireMessage, usize)>, ReadError> {
    let mut prefix = [0u8; PREFIX_LEN];
    let mut got = 0;
    while got < PREFIX_LEN {
        let n = r.read(&mut prefix[got..])?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(ProtocolError::Short {
                field: "frame prefix",
                need: PREFIX_LEN,
                have: got,
            }
            .into());
        }
        got += n;
    }
    let body_len = parse_prefix(&prefix)?;
    let mut body = vec![0u8; body_len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ReadError::Protocol(ProtocolError::Short {
            field: "frame body",
            need: body_len,
            have: 0,
        }),
        _ => ReadError::Io(e),
    })?;
    Ok(Some((decode_body(&body)?, PREFIX_LEN + body_len)))
}
