use super::container::{self, CodecId, Header};
use super::{Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::Result;
use crate::image::Image;

/// `NF(f) = a * f + b`, elementwise and exactly linear.
///
/// Unlike the other built-ins this codec does not clamp-round its input:
/// it is an instrument for checking the linearized loop analysis, which only
/// holds exactly when the map is affine everywhere. Samples are stored as
/// 64-bit floats.
#[derive(Debug, Clone, Copy)]
pub struct AffineCodec {
    pub a: f64,
    pub b: f64,
}

impl AffineCodec {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

impl Codec for AffineCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "affine".into(),
            deterministic: true,
            quality_param: self.a,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let params = container::f32_pair_param(self.a as f32, self.b as f32);
        let header = Header::new(CodecId::Affine, img.shape(), params)?;
        let mut out = Vec::with_capacity(container::HEADER_LEN + 8 * img.dim());
        header.write(&mut out);
        for &v in img.data() {
            out.extend_from_slice(&self.apply(v).to_be_bytes());
        }
        Bitstream::new(out, 64 * img.dim() as u64)
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::Affine)?;
        let samples = container::read_f64_samples(payload, header.sample_count())?;
        container::check_finite(&samples)?;
        let (w, h, c) = header.shape();
        Image::new(w, h, c, samples)
    }

    fn roundtrip(&self, img: &Image) -> Result<Image> {
        img.map(|v| self.apply(v))
    }
}
