use std::io::BufReader;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use super::frame::{read_frame, BridgeFrame, MsgType, PROTOCOL_VERSION};
use super::{wire, BridgeError};
use crate::codec::{Bitstream, Codec, CodecDescriptor};
use crate::error::{CicError, Result};
use crate::image::Image;

type Incoming = std::result::Result<Option<BridgeFrame>, BridgeError>;

/// A running adapter process and its handshake descriptor.
///
/// After any transport or protocol failure the session is closed and every
/// later request fails with [`BridgeError::SessionClosed`].
pub struct BridgeSession {
    child: Child,
    stdin: Option<ChildStdin>,
    incoming: Receiver<Incoming>,
    descriptor: CodecDescriptor,
    timeout: Duration,
    healthy: bool,
}

impl BridgeSession {
    /// Spawn `program args...` and perform the HELLO handshake.
    pub fn open(program: &str, args: &[String], timeout: Duration) -> std::result::Result<Self, BridgeError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Spawn(format!("{program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, incoming) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let item = read_frame(&mut reader);
                let stop = !matches!(item, Ok(Some(_)));
                if tx.send(item).is_err() || stop {
                    break;
                }
            }
        });
        let mut session = Self {
            child,
            stdin,
            incoming,
            descriptor: CodecDescriptor {
                name: String::new(),
                deterministic: false,
                quality_param: 0.0,
                latent_dim: crate::codec::LatentDim::Opaque,
            },
            timeout,
            healthy: true,
        };
        let reply = session
            .exchange(BridgeFrame::new(MsgType::Hello, Vec::new()))
            .map_err(|e| match e {
                BridgeError::RequestTimeout => BridgeError::HandshakeTimeout,
                other => other,
            });
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                session.kill();
                return Err(e);
            }
        };
        if reply.version != PROTOCOL_VERSION {
            session.kill();
            return Err(BridgeError::VersionMismatch(reply.version));
        }
        match reply.msg_type {
            MsgType::HelloAck => {}
            MsgType::Error => {
                session.kill();
                return Err(BridgeError::Remote(
                    String::from_utf8_lossy(&reply.payload).into_owned(),
                ));
            }
            other => {
                session.kill();
                return Err(BridgeError::ProtocolViolation(format!(
                    "expected HELLO_ACK, got {other:?}"
                )));
            }
        }
        match wire::decode_descriptor(&reply.payload) {
            Ok(d) => session.descriptor = d,
            Err(e) => {
                session.kill();
                return Err(e);
            }
        }
        Ok(session)
    }

    pub fn descriptor(&self) -> &CodecDescriptor {
        &self.descriptor
    }

    pub fn is_healthy(&self) -> bool {
        self.healthy
    }

    fn kill(&mut self) {
        self.healthy = false;
        self.stdin.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn fail(&mut self, e: BridgeError) -> BridgeError {
        self.kill();
        e
    }

    /// Send one frame and wait for the reply.
    fn exchange(&mut self, request: BridgeFrame) -> std::result::Result<BridgeFrame, BridgeError> {
        if !self.healthy {
            return Err(BridgeError::SessionClosed);
        }
        let stdin = self.stdin.as_mut().ok_or(BridgeError::SessionClosed)?;
        if let Err(e) = request.write_to(stdin) {
            let err = match e.kind() {
                std::io::ErrorKind::BrokenPipe => BridgeError::ChildExited,
                _ => BridgeError::Io(e),
            };
            return Err(self.fail(err));
        }
        match self.incoming.recv_timeout(self.timeout) {
            Ok(Ok(Some(frame))) => Ok(frame),
            Ok(Ok(None)) | Err(RecvTimeoutError::Disconnected) => Err(self.fail(BridgeError::ChildExited)),
            Ok(Err(e)) => Err(self.fail(e)),
            Err(RecvTimeoutError::Timeout) => Err(self.fail(BridgeError::RequestTimeout)),
        }
    }

    /// Exchange and unwrap the expected reply type; ERROR frames become
    /// [`BridgeError::Remote`] and leave the session usable.
    fn request(
        &mut self,
        msg: MsgType,
        payload: Vec<u8>,
        expect: MsgType,
    ) -> std::result::Result<Vec<u8>, BridgeError> {
        let reply = self.exchange(BridgeFrame::new(msg, payload))?;
        if reply.version != PROTOCOL_VERSION {
            return Err(self.fail(BridgeError::ProtocolViolation(format!(
                "reply carries version {}",
                reply.version
            ))));
        }
        if reply.msg_type == MsgType::Error {
            return Err(BridgeError::Remote(
                String::from_utf8_lossy(&reply.payload).into_owned(),
            ));
        }
        if reply.msg_type != expect {
            return Err(self.fail(BridgeError::ProtocolViolation(format!(
                "expected {expect:?}, got {:?}",
                reply.msg_type
            ))));
        }
        Ok(reply.payload)
    }

    fn image_reply(&mut self, payload: &[u8], like: Option<&Image>) -> std::result::Result<Image, BridgeError> {
        let img = match wire::decode_image(payload) {
            Ok(img) => img,
            Err(e) => return Err(self.fail(e)),
        };
        if let Some(req) = like {
            if !img.same_shape(req) {
                return Err(self.fail(BridgeError::ProtocolViolation(format!(
                    "reply shape {:?} differs from request {:?}",
                    img.shape(),
                    req.shape()
                ))));
            }
        }
        Ok(img)
    }

    pub fn remote_encode(&mut self, img: &Image) -> std::result::Result<Bitstream, BridgeError> {
        let payload = self.request(MsgType::Encode, wire::encode_image(img), MsgType::Encoded)?;
        wire::decode_bitstream(&payload).map_err(|e| self.fail(e))
    }

    pub fn remote_decode(&mut self, bs: &Bitstream) -> std::result::Result<Image, BridgeError> {
        let payload = self.request(MsgType::Decode, wire::encode_bitstream(bs), MsgType::Decoded)?;
        self.image_reply(&payload, None)
    }

    pub fn remote_roundtrip(&mut self, img: &Image) -> std::result::Result<Image, BridgeError> {
        let payload = self.request(MsgType::Roundtrip, wire::encode_image(img), MsgType::Roundtripped)?;
        self.image_reply(&payload, Some(img))
    }

    /// Ask the adapter to exit; kill it if it has not exited within the
    /// session timeout.
    pub fn shutdown(mut self) -> std::result::Result<(), BridgeError> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> std::result::Result<(), BridgeError> {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = BridgeFrame::new(MsgType::Shutdown, Vec::new()).write_to(&mut stdin);
        }
        self.healthy = false;
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.child.try_wait()? {
                Some(_) => return Ok(()),
                None if Instant::now() >= deadline => {
                    let _ = self.child.kill();
                    let _ = self.child.wait();
                    return Err(BridgeError::ChildExited);
                }
                None => thread::sleep(Duration::from_millis(5)),
            }
        }
    }
}

impl Drop for BridgeSession {
    fn drop(&mut self) {
        if self.child.try_wait().ok().flatten().is_none() {
            let _ = self.shutdown_inner();
        }
    }
}

/// [`Codec`] backed by a bridge session; calls are serialized on a mutex.
pub struct BridgeCodec {
    session: Mutex<BridgeSession>,
    descriptor: CodecDescriptor,
}

impl BridgeCodec {
    pub fn new(session: BridgeSession) -> Self {
        let descriptor = session.descriptor().clone();
        Self {
            session: Mutex::new(session),
            descriptor,
        }
    }

    /// Spawn from a whitespace-separated command line.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| CicError::ConfigInvalid("empty bridge command".into()))?;
        let args: Vec<String> = parts.map(str::to_owned).collect();
        Ok(Self::new(BridgeSession::open(program, &args, timeout)?))
    }

    fn with_session<T>(&self, f: impl FnOnce(&mut BridgeSession) -> std::result::Result<T, BridgeError>) -> Result<T> {
        let mut guard = self.session.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard).map_err(CicError::from)
    }
}

impl Codec for BridgeCodec {
    fn descriptor(&self) -> CodecDescriptor {
        self.descriptor.clone()
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        self.with_session(|s| s.remote_encode(img))
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        self.with_session(|s| s.remote_decode(bs))
    }

    fn roundtrip(&self, img: &Image) -> Result<Image> {
        self.with_session(|s| s.remote_roundtrip(img))
    }
}
