use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use cic_core::bridge::{read_frame, BridgeCodec, BridgeError, BridgeFrame, BridgeSession, MsgType};
use cic_core::codec::{DownUpCodec, IdentityCodec};
use cic_core::engine::{run_cic, LoopConfig};
use cic_core::{Codec, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SERVE: &str = env!("CARGO_BIN_EXE_cic-serve");
const TIMEOUT: Duration = Duration::from_secs(10);

fn open(args: &[&str]) -> Result<BridgeSession, BridgeError> {
    let args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    BridgeSession::open(SERVE, &args, TIMEOUT)
}

fn random_image(seed: u64, w: usize, h: usize, c: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::new(w, h, c, (0..w * h * c).map(|_| rng.gen_range(0.0..255.0)).collect()).unwrap()
}

#[test]
fn identity_session() {
    let mut s = open(&["--codec", "identity"]).unwrap();
    assert_eq!(s.descriptor().name, "identity");
    assert!(s.descriptor().deterministic);
    let img = random_image(1, 2, 2, 3);
    assert_eq!(s.remote_encode(&img).unwrap().bit_length(), 96);
    let rt = s.remote_roundtrip(&img).unwrap();
    assert_eq!(rt, img.clamp_round());
    let bs = s.remote_encode(&img).unwrap();
    assert_eq!(s.remote_decode(&bs).unwrap(), rt);
    s.shutdown().unwrap();
}

#[test]
fn remote_error_keeps_session_usable() {
    let mut s = open(&["--codec", "quant?step=8"]).unwrap();
    let junk = cic_core::Bitstream::new(vec![1, 2, 3], 24).unwrap();
    assert!(matches!(s.remote_decode(&junk), Err(BridgeError::Remote(_))));
    assert!(s.is_healthy());
    let img = random_image(2, 5, 4, 1);
    assert_eq!(
        s.remote_roundtrip(&img).unwrap(),
        cic_core::codec::UniformQuantCodec::new(8.0)
            .unwrap()
            .roundtrip(&img)
            .unwrap()
    );
}

/// Direct 2-D convolution with the outer-product kernel, edges replicated.
fn blur_oracle(img: &Image, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    let (w, h, c) = img.shape();
    let src = img.clamp_round();
    let mut out = vec![0.0; img.dim()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                        acc += g[(dy + r) as usize] * g[(dx + r) as usize] * src.data()[(yy * w + xx) * c + ch];
                    }
                }
                out[(y as usize * w + x as usize) * c + ch] = acc / (total * total);
            }
        }
    }
    out
}

#[test]
fn blur_bridge_matches_convolution() {
    for sigma in [0.7, 1.5, 2.5] {
        let mut s = open(&["--sigma", &sigma.to_string()]).unwrap();
        assert_eq!(s.descriptor().name, "blur");
        let img = random_image(3, 13, 9, 3);
        let got = s.remote_roundtrip(&img).unwrap();
        for (a, b) in got.data().iter().zip(blur_oracle(&img, sigma)) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1.0), "sigma {sigma}: {a} vs {b}");
        }
    }
}

#[test]
fn bad_version_is_rejected() {
    assert!(matches!(
        open(&["--fault", "bad-version"]),
        Err(BridgeError::VersionMismatch(2))
    ));
}

#[test]
fn silent_server_times_out() {
    let start = Instant::now();
    let r = BridgeSession::open(SERVE, &["--fault".into(), "silent".into()], Duration::from_millis(300));
    assert!(matches!(r, Err(BridgeError::HandshakeTimeout)));
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn wrong_dims_poison_the_session() {
    let mut s = open(&["--fault", "wrong-dims"]).unwrap();
    let img = random_image(4, 4, 4, 3);
    assert!(matches!(
        s.remote_roundtrip(&img),
        Err(BridgeError::ProtocolViolation(_))
    ));
    assert!(!s.is_healthy());
    assert!(matches!(s.remote_roundtrip(&img), Err(BridgeError::SessionClosed)));
}

#[test]
fn child_exit_is_reported() {
    let mut s = open(&["--fault", "exit-after-hello"]).unwrap();
    let r = s.remote_roundtrip(&random_image(5, 3, 3, 1));
    assert!(matches!(r, Err(BridgeError::ChildExited)), "{r:?}");
    assert!(matches!(
        s.remote_roundtrip(&random_image(5, 3, 3, 1)),
        Err(BridgeError::SessionClosed)
    ));
}

#[test]
fn shutdown_is_prompt() {
    let s = open(&["--codec", "dct?quality=50"]).unwrap();
    let start = Instant::now();
    s.shutdown().unwrap();
    assert!(start.elapsed() < Duration::from_secs(2));
}

#[test]
fn bridge_matches_in_process_codec() {
    let cases: Vec<(&str, Box<dyn Codec>)> = vec![
        ("identity", Box::new(IdentityCodec)),
        ("downup?factor=2", Box::new(DownUpCodec::new(2).unwrap())),
    ];
    for (spec, local) in cases {
        let remote = BridgeCodec::spawn(&format!("{SERVE} --codec {spec}"), TIMEOUT).unwrap();
        let img = random_image(6, 17, 11, 3);
        assert_eq!(remote.encode(&img).unwrap(), local.encode(&img).unwrap(), "{spec}");
        let f_d0 = local.roundtrip(&img).unwrap();
        let cfg = LoopConfig {
            max_iters: 8,
            ..LoopConfig::default()
        };
        let a = run_cic(&remote, &f_d0, &cfg, Some(&img)).unwrap();
        let b = run_cic(&*local, &f_d0, &cfg, Some(&img)).unwrap();
        assert_eq!(a.output, b.output, "{spec}");
        assert_eq!(a.residual_trace, b.residual_trace, "{spec}");
        assert_eq!(a.iterations_run, b.iterations_run);
    }
}

fn malformed_frame(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let msg = MsgType::from_u8(rng.gen_range(1..=10)).unwrap();
    let len = rng.gen_range(0..64);
    let mut bytes = BridgeFrame::new(msg, (0..len).map(|_| rng.gen()).collect()).to_bytes();
    match rng.gen_range(0..7) {
        0 => bytes[rng.gen_range(0..4)] ^= 1 << rng.gen_range(0..8),
        1 => bytes[4] = rng.gen_range(2..=255),
        2 => bytes[5] = if rng.gen() { 0 } else { rng.gen_range(11..=255) },
        3 => bytes[6..10].copy_from_slice(&rng.gen_range(len as u32 + 1..u32::MAX).to_be_bytes()),
        4 => bytes.truncate(rng.gen_range(0..bytes.len())),
        5 => {
            let n = rng.gen_range(1..40);
            bytes = (0..n).map(|_| rng.gen()).collect();
        }
        _ => bytes.extend((0..rng.gen_range(1..8)).map(|_| rng.gen::<u8>())),
    }
    bytes
}

fn wait_with_timeout(child: &mut std::process::Child, limit: Duration) -> Option<std::process::ExitStatus> {
    let start = Instant::now();
    loop {
        if let Some(st) = child.try_wait().unwrap() {
            return Some(st);
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            return None;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

#[test]
fn malformed_frames_never_crash_or_hang() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1C);
    let frames: Vec<Vec<u8>> = (0..1000).map(|_| malformed_frame(&mut rng)).collect();

    for bytes in &frames {
        let parsed = BridgeFrame::parse(bytes);
        let streamed = read_frame(&mut &bytes[..]);
        if let Ok(f) = &parsed {
            assert_eq!(&f.to_bytes(), bytes);
        }
        drop(streamed);
    }

    let chunks: Vec<&[Vec<u8>]> = frames.chunks(125).collect();
    std::thread::scope(|scope| {
        for chunk in chunks {
            scope.spawn(move || {
                for bytes in chunk {
                    let mut child = Command::new(SERVE)
                        .stdin(Stdio::piped())
                        .stdout(Stdio::piped())
                        .stderr(Stdio::null())
                        .spawn()
                        .unwrap();
                    let mut stdin = child.stdin.take().unwrap();
                    let hello = BridgeFrame::new(MsgType::Hello, Vec::new()).to_bytes();
                    let _ = stdin.write_all(&hello);
                    let _ = stdin.write_all(bytes);
                    drop(stdin);
                    let mut stdout = child.stdout.take().unwrap();
                    let reader = std::thread::spawn(move || {
                        let mut out = Vec::new();
                        let _ = stdout.read_to_end(&mut out);
                        out
                    });
                    let status = wait_with_timeout(&mut child, Duration::from_secs(10)).expect("server hung");
                    let out = reader.join().unwrap();
                    let code = status.code().expect("server killed by a signal");
                    assert!((0..=3).contains(&code), "exit {code} for {bytes:02x?}");
                    let mut replies = &out[..];
                    let ack = read_frame(&mut replies).unwrap().unwrap();
                    assert_eq!(ack.msg_type, MsgType::HelloAck);
                    while let Some(f) = read_frame(&mut replies).unwrap() {
                        assert!(matches!(
                            f.msg_type,
                            MsgType::Error
                                | MsgType::HelloAck
                                | MsgType::Encoded
                                | MsgType::Decoded
                                | MsgType::Roundtripped
                        ));
                    }
                }
            });
        }
    });
}
