//! Built-in bitstream container.
//!
//! Layout (big-endian): `"CICS"`, codec id `u8`, width `u32`, height `u32`,
//! channels `u8`, 8 parameter bytes, payload.

use crate::error::{CicError, Result};

pub const MAGIC: &[u8; 4] = b"CICS";
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1 + 8;

/// Header cost charged by the entropy-sized codecs, in bits.
pub const HEADER_BITS: u64 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CodecId {
    Identity = 1,
    Affine = 2,
    UniformQuant = 3,
    BlockDct = 4,
    DownUp = 5,
    GaussianBlur = 6,
}

impl CodecId {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Identity,
            2 => Self::Affine,
            3 => Self::UniformQuant,
            4 => Self::BlockDct,
            5 => Self::DownUp,
            6 => Self::GaussianBlur,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub codec: CodecId,
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub params: [u8; 8],
}

impl Header {
    pub fn new(codec: CodecId, shape: (usize, usize, usize), params: [u8; 8]) -> Result<Self> {
        let (w, h, c) = shape;
        let width = u32::try_from(w).map_err(|_| CicError::UnsupportedDimensions(format!("width {w}")))?;
        let height = u32::try_from(h).map_err(|_| CicError::UnsupportedDimensions(format!("height {h}")))?;
        let channels = u8::try_from(c).map_err(|_| CicError::UnsupportedDimensions(format!("channels {c}")))?;
        Ok(Self {
            codec,
            width,
            height,
            channels,
            params,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width as usize, self.height as usize, self.channels as usize)
    }

    pub fn sample_count(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.codec as u8);
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.push(self.channels);
        out.extend_from_slice(&self.params);
    }

    /// Parse the header and return it with the remaining payload bytes.
    pub fn read(bytes: &[u8], expected: CodecId) -> Result<(Self, &[u8])> {
        if bytes.len() < HEADER_LEN {
            return Err(CicError::MalformedBitstream(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(CicError::MalformedBitstream("bad magic".into()));
        }
        let codec = CodecId::from_u8(bytes[4])
            .ok_or_else(|| CicError::MalformedBitstream(format!("unknown codec id {}", bytes[4])))?;
        if codec != expected {
            return Err(CicError::MalformedBitstream(format!(
                "bitstream from {codec:?}, decoder is {expected:?}"
            )));
        }
        let width = u32::from_be_bytes(bytes[5..9].try_into().unwrap());
        let height = u32::from_be_bytes(bytes[9..13].try_into().unwrap());
        let channels = bytes[13];
        if width == 0 || height == 0 || channels == 0 {
            return Err(CicError::MalformedBitstream("zero dimension".into()));
        }
        let params = bytes[14..22].try_into().unwrap();
        Ok((
            Self {
                codec,
                width,
                height,
                channels,
                params,
            },
            &bytes[HEADER_LEN..],
        ))
    }
}

pub fn f64_param(v: f64) -> [u8; 8] {
    v.to_be_bytes()
}

pub fn read_f64_param(p: &[u8; 8]) -> f64 {
    f64::from_be_bytes(*p)
}

pub fn f32_pair_param(a: f32, b: f32) -> [u8; 8] {
    let mut p = [0u8; 8];
    p[..4].copy_from_slice(&a.to_be_bytes());
    p[4..].copy_from_slice(&b.to_be_bytes());
    p
}

pub fn u32_param(v: u32) -> [u8; 8] {
    let mut p = [0u8; 8];
    p[..4].copy_from_slice(&v.to_be_bytes());
    p
}

pub fn read_u32_param(p: &[u8; 8]) -> u32 {
    u32::from_be_bytes(p[..4].try_into().unwrap())
}

/// Fixed-width sample readers for container payloads.
pub(crate) fn read_f32_samples(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    read_fixed(payload, count, 4, |b| f32::from_be_bytes(b.try_into().unwrap()) as f64)
}

pub(crate) fn read_f64_samples(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    read_fixed(payload, count, 8, |b| f64::from_be_bytes(b.try_into().unwrap()))
}

pub(crate) fn read_i16_samples(payload: &[u8], count: usize) -> Result<Vec<i16>> {
    read_fixed(payload, count, 2, |b| i16::from_be_bytes(b.try_into().unwrap()))
}

fn read_fixed<T>(payload: &[u8], count: usize, width: usize, f: impl Fn(&[u8]) -> T) -> Result<Vec<T>> {
    if payload.len() != count * width {
        return Err(CicError::MalformedBitstream(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            count * width
        )));
    }
    let out: Vec<T> = payload.chunks_exact(width).map(f).collect();
    if out.len() != count {
        return Err(CicError::MalformedBitstream("short payload".into()));
    }
    Ok(out)
}

pub(crate) fn check_finite(samples: &[f64]) -> Result<()> {
    if samples.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CicError::MalformedBitstream("non-finite sample".into()))
    }
}
