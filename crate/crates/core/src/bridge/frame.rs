//! Length-prefixed frames: `"CICB"`, version `u8`, type `u8`, payload length
//! `u32` big-endian, payload.

use std::io::{self, Read, Write};

use super::BridgeError;

pub const MAGIC: &[u8; 4] = b"CICB";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;

/// Payloads above this size are rejected before allocation.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    HelloAck = 2,
    Encode = 3,
    Encoded = 4,
    Decode = 5,
    Decoded = 6,
    Roundtrip = 7,
    Roundtripped = 8,
    Error = 9,
    Shutdown = 10,
}

impl MsgType {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MsgType::*;
        Some(match v {
            1 => Hello,
            2 => HelloAck,
            3 => Encode,
            4 => Encoded,
            5 => Decode,
            6 => Decoded,
            7 => Roundtrip,
            8 => Roundtripped,
            9 => Error,
            10 => Shutdown,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeFrame {
    pub version: u8,
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl BridgeFrame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            msg_type,
            payload,
        }
    }

    pub fn error(message: &str) -> Self {
        Self::new(MsgType::Error, message.as_bytes().to_vec())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.to_bytes())?;
        w.flush()
    }

    /// Parse exactly one frame occupying all of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self, BridgeError> {
        if bytes.len() < HEADER_LEN {
            return Err(violation(format!(
                "{} bytes is shorter than a frame header",
                bytes.len()
            )));
        }
        let (header, len) = parse_header(bytes[..HEADER_LEN].try_into().unwrap())?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != len as usize {
            return Err(violation(format!(
                "declared payload length {len}, found {}",
                payload.len()
            )));
        }
        Ok(Self {
            version: header.0,
            msg_type: header.1,
            payload: payload.to_vec(),
        })
    }
}

fn violation(msg: String) -> BridgeError {
    BridgeError::ProtocolViolation(msg)
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<((u8, MsgType), u32), BridgeError> {
    if &h[..4] != MAGIC {
        return Err(violation(format!("bad magic {:02x?}", &h[..4])));
    }
    let msg_type = MsgType::from_u8(h[5]).ok_or_else(|| violation(format!("unknown message type {}", h[5])))?;
    let len = u32::from_be_bytes(h[6..10].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(violation(format!("payload length {len} exceeds limit")));
    }
    Ok(((h[4], msg_type), len))
}

/// Read one frame. `Ok(None)` on a clean end of stream before any header
/// byte; a partial frame is a protocol violation.
pub fn read_frame(r: &mut impl Read) -> Result<Option<BridgeFrame>, BridgeError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match r.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(violation("stream ended inside a frame header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(BridgeError::Io(e)),
        }
    }
    let ((version, msg_type), len) = parse_header(&header)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => violation("stream ended inside a frame payload".into()),
        _ => BridgeError::Io(e),
    })?;
    Ok(Some(BridgeFrame {
        version,
        msg_type,
        payload,
    }))
}
