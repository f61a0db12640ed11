//! Edge/fog wire protocol, the fog-side classifier service and the links
//! the edge uses to reach it.

mod fog;
mod protocol;
mod transport;

pub use fog::{FogConfig, FogNode, FogServer, FogSession};
pub use protocol::{
    read_frame, MsgType, Payload, ProtocolError, ReadError, WireMessage, FEATURE_VALUES,
    FRAME_MAGIC, HEADER_LEN, MAX_FRAME_LEN, PREFIX_LEN,
};
pub use transport::{Link, LinkStats, LoopbackLink, TcpLink};
