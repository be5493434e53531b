//! Child-process codec bridge.
//!
//! An external program speaks a framed binary protocol on its standard
//! input/output and is then usable as any other [`Codec`](crate::codec::Codec).
//! Requests are strictly serial: one frame out, one frame back.

pub mod frame;
mod server;
mod session;
pub mod wire;

use thiserror::Error;

pub use frame::{read_frame, BridgeFrame, MsgType, PROTOCOL_VERSION};
pub use server::{serve, ServeExit};
pub use session::{BridgeCodec, BridgeSession};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("failed to spawn codec adapter: {0}")]
    Spawn(String),

    #[error("codec adapter did not complete the handshake in time")]
    HandshakeTimeout,

    #[error("protocol version mismatch: adapter speaks {0}, client speaks {PROTOCOL_VERSION}")]
    VersionMismatch(u8),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("codec adapter exited")]
    ChildExited,

    #[error("codec adapter did not answer in time")]
    RequestTimeout,

    #[error("codec adapter reported an error: {0}")]
    Remote(String),

    #[error("session is unusable after an earlier failure")]
    SessionClosed,

    #[error("bridge i/o: {0}")]
    Io(#[from] std::io::Error),
}
