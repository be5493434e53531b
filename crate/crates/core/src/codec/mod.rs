//! Encoder/decoder abstraction and deterministic reference codecs.
//!
//! A codec's composed roundtrip `decode(encode(f))` is the nonlinear map the
//! closed loop drives toward the first decoded image. Built-in codecs frame
//! their payload in a small portable container (see [`container`]) and report
//! an explicit bit count rather than the container's byte length.

mod affine;
mod blur;
pub mod container;
mod dct;
mod downup;
pub mod entropy;
mod identity;
mod quant;

use serde::{Deserialize, Serialize};

pub use affine::AffineCodec;
pub use blur::GaussianBlurCodec;
pub use dct::{scaled_quant_table, BlockDctCodec, LUMINANCE_QUANT_TABLE};
pub use downup::DownUpCodec;
pub use identity::IdentityCodec;
pub use quant::UniformQuantCodec;

use crate::error::Result;
use crate::image::Image;

/// Encoded image: opaque bytes plus the exact number of meaningful bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    payload: Vec<u8>,
    bit_length: u64,
}

impl Bitstream {
    pub fn new(payload: Vec<u8>, bit_length: u64) -> Result<Self> {
        if bit_length > 8 * payload.len() as u64 {
            return Err(crate::error::CicError::MalformedBitstream(format!(
                "bit length {bit_length} exceeds payload capacity {}",
                8 * payload.len()
            )));
        }
        Ok(Self { payload, bit_length })
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn bit_length(&self) -> u64 {
        self.bit_length
    }
}

/// Latent dimension `d` of the encoded representation; serialized as a
/// number or the string `"opaque"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentDim {
    Count(u64),
    Opaque,
}

impl Serialize for LatentDim {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LatentDim::Count(n) => s.serialize_u64(*n),
            LatentDim::Opaque => s.serialize_str("opaque"),
        }
    }
}

impl<'de> Deserialize<'de> for LatentDim {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(LatentDim::Count)
                .ok_or_else(|| serde::de::Error::custom("latent_dim must be a non-negative integer")),
            serde_json::Value::String(s) if s == "opaque" => Ok(LatentDim::Opaque),
            other => Err(serde::de::Error::custom(format!("invalid latent_dim {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecDescriptor {
    pub name: String,
    pub deterministic: bool,
    pub quality_param: f64,
    pub latent_dim: LatentDim,
}

/// An encoder/decoder pair.
///
/// Implementations flagged deterministic must be pure functions of their
/// inputs. `roundtrip` may be overridden when a cheaper path exists but must
/// equal `decode(encode(img))`.
pub trait Codec: Send + Sync {
    fn descriptor(&self) -> CodecDescriptor;

    fn encode(&self, img: &Image) -> Result<Bitstream>;

    fn decode(&self, bs: &Bitstream) -> Result<Image>;

    fn roundtrip(&self, img: &Image) -> Result<Image> {
        self.decode(&self.encode(img)?)
    }
}

impl<C: Codec + ?Sized> Codec for Box<C> {
    fn descriptor(&self) -> CodecDescriptor {
        (**self).descriptor()
    }
    fn encode(&self, img: &Image) -> Result<Bitstream> {
        (**self).encode(img)
    }
    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        (**self).decode(bs)
    }
    fn roundtrip(&self, img: &Image) -> Result<Image> {
        (**self).roundtrip(img)
    }
}

impl<C: Codec + ?Sized> Codec for &C {
    fn descriptor(&self) -> CodecDescriptor {
        (**self).descriptor()
    }
    fn encode(&self, img: &Image) -> Result<Bitstream> {
        (**self).encode(img)
    }
    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        (**self).decode(bs)
    }
    fn roundtrip(&self, img: &Image) -> Result<Image> {
        (**self).roundtrip(img)
    }
}

/// Counts roundtrip calls on an inner codec.
pub struct CountingCodec<C> {
    inner: C,
    roundtrips: std::sync::atomic::AtomicUsize,
    encodes: std::sync::atomic::AtomicUsize,
}

impl<C: Codec> CountingCodec<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            roundtrips: Default::default(),
            encodes: Default::default(),
        }
    }

    pub fn roundtrips(&self) -> usize {
        self.roundtrips.load(std::sync::atomic::Ordering::SeqCst)
    }

    pub fn encodes(&self) -> usize {
        self.encodes.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl<C: Codec> Codec for CountingCodec<C> {
    fn descriptor(&self) -> CodecDescriptor {
        self.inner.descriptor()
    }
    fn encode(&self, img: &Image) -> Result<Bitstream> {
        self.encodes.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.encode(img)
    }
    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        self.inner.decode(bs)
    }
    fn roundtrip(&self, img: &Image) -> Result<Image> {
        self.roundtrips.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.roundtrip(img)
    }
}
