use std::io::{Read, Write};

use super::frame::{read_frame, BridgeFrame, MsgType, PROTOCOL_VERSION};
use super::{wire, BridgeError};
use crate::codec::Codec;
use crate::image::Image;

/// Why the serve loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeExit {
    /// SHUTDOWN received.
    Shutdown,
    /// Input closed without SHUTDOWN.
    PeerClosed,
    /// Unframeable input; an ERROR frame was sent before stopping.
    Desynchronized,
    /// Writing a reply failed.
    BrokenPipe,
}

impl ServeExit {
    pub fn code(self) -> i32 {
        match self {
            ServeExit::Shutdown => 0,
            ServeExit::PeerClosed => 1,
            ServeExit::Desynchronized => 2,
            ServeExit::BrokenPipe => 3,
        }
    }
}

/// Answer bridge requests with `codec` until SHUTDOWN or end of input.
///
/// Well-framed but invalid requests get an ERROR reply and the loop
/// continues. Input that cannot be framed gets one ERROR reply and ends the
/// loop, since the stream position is lost.
pub fn serve<C: Codec + ?Sized>(codec: &C, input: &mut impl Read, output: &mut impl Write) -> ServeExit {
    loop {
        let frame = match read_frame(input) {
            Ok(Some(f)) => f,
            Ok(None) => return ServeExit::PeerClosed,
            Err(BridgeError::Io(_)) => return ServeExit::PeerClosed,
            Err(e) => {
                let _ = BridgeFrame::error(&e.to_string()).write_to(output);
                return ServeExit::Desynchronized;
            }
        };
        if frame.msg_type == MsgType::Shutdown {
            return ServeExit::Shutdown;
        }
        let reply = handle(codec, &frame).unwrap_or_else(|msg| BridgeFrame::error(&msg));
        if reply.write_to(output).is_err() {
            return ServeExit::BrokenPipe;
        }
    }
}

fn handle<C: Codec + ?Sized>(codec: &C, frame: &BridgeFrame) -> Result<BridgeFrame, String> {
    if frame.version != PROTOCOL_VERSION {
        return Err(format!(
            "unsupported protocol version {} (expected {PROTOCOL_VERSION})",
            frame.version
        ));
    }
    let image = |bytes: &[u8]| wire::decode_image(bytes).map_err(|e| e.to_string());
    let checked = |req: &Image, out: Image| -> Result<Image, String> {
        if out.same_shape(req) {
            Ok(out)
        } else {
            Err(format!(
                "codec returned {:?} for a {:?} request",
                out.shape(),
                req.shape()
            ))
        }
    };
    match frame.msg_type {
        MsgType::Hello => Ok(BridgeFrame::new(
            MsgType::HelloAck,
            wire::encode_descriptor(&codec.descriptor()),
        )),
        MsgType::Encode => {
            let img = image(&frame.payload)?;
            let bs = codec.encode(&img).map_err(|e| e.to_string())?;
            Ok(BridgeFrame::new(MsgType::Encoded, wire::encode_bitstream(&bs)))
        }
        MsgType::Decode => {
            let bs = wire::decode_bitstream(&frame.payload).map_err(|e| e.to_string())?;
            let img = codec.decode(&bs).map_err(|e| e.to_string())?;
            Ok(BridgeFrame::new(MsgType::Decoded, wire::encode_image(&img)))
        }
        MsgType::Roundtrip => {
            let img = image(&frame.payload)?;
            let out = codec.roundtrip(&img).map_err(|e| e.to_string())?;
            let out = checked(&img, out)?;
            Ok(BridgeFrame::new(MsgType::Roundtripped, wire::encode_image(&out)))
        }
        other => Err(format!("unexpected request type {other:?}")),
    }
}
