//! Serves a built-in codec over the bridge protocol on stdin/stdout.

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use cic_core::bridge::{self, read_frame, wire, BridgeFrame, MsgType};
use cic_core::harness::CodecSpec;
use cic_core::Image;

#[derive(Parser)]
#[command(name = "cic-serve", about = "Bridge adapter for the built-in codecs")]
struct Args {
    /// Codec name or builtin:<name>?k=v spec.
    #[arg(long, default_value = "identity")]
    codec: String,
    /// Blur width; shorthand for builtin:blur?sigma=<value>.
    #[arg(long)]
    sigma: Option<f64>,
    /// Misbehave on purpose, for client conformance tests.
    #[arg(long, value_enum, hide = true)]
    fault: Option<Fault>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    /// Answer HELLO with an unsupported protocol version.
    BadVersion,
    /// Read requests, never answer.
    Silent,
    /// Answer ROUNDTRIP with a 1x1 image.
    WrongDims,
    /// Exit right after the handshake.
    ExitAfterHello,
}

fn faulty(fault: Fault, codec: &dyn cic_core::Codec) -> i32 {
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    while let Ok(Some(frame)) = read_frame(&mut input) {
        let reply = match (fault, frame.msg_type) {
            (_, MsgType::Shutdown) => return 0,
            (Fault::Silent, _) => continue,
            (Fault::BadVersion, MsgType::Hello) => BridgeFrame {
                version: bridge::PROTOCOL_VERSION + 1,
                msg_type: MsgType::HelloAck,
                payload: wire::encode_descriptor(&codec.descriptor()),
            },
            (Fault::WrongDims, MsgType::Roundtrip) => {
                let one = Image::filled(1, 1, 1, 0.0).expect("valid image");
                BridgeFrame::new(MsgType::Roundtripped, wire::encode_image(&one))
            }
            (_, MsgType::Hello) => {
                let ack = BridgeFrame::new(MsgType::HelloAck, wire::encode_descriptor(&codec.descriptor()));
                if matches!(fault, Fault::ExitAfterHello) {
                    let _ = ack.write_to(&mut output);
                    return 1;
                }
                ack
            }
            _ => BridgeFrame::error("unsupported request in fault mode"),
        };
        if reply.write_to(&mut output).is_err() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = match args.sigma {
        Some(sigma) => format!("builtin:blur?sigma={sigma}"),
        None => args.codec.clone(),
    };
    let codec = match CodecSpec::parse(&spec) {
        Ok(CodecSpec::Bridge { .. }) => {
            eprintln!("cic-serve: only built-in codecs can be served");
            return ExitCode::from(64);
        }
        Ok(s) => match s.build() {
            Ok(c) => c,
            Err(e) => {
                eprintln!("cic-serve: {e}");
                return ExitCode::from(64);
            }
        },
        Err(e) => {
            eprintln!("cic-serve: {e}");
            return ExitCode::from(64);
        }
    };
    let code = match args.fault {
        Some(f) => faulty(f, &*codec),
        None => {
            let mut input = BufReader::new(io::stdin().lock());
            let mut output = BufWriter::new(io::stdout().lock());
            bridge::serve(&*codec, &mut input, &mut output).code()
        }
    };
    ExitCode::from(code as u8)
}
