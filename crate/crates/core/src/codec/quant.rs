use super::container::{self, CodecId, Header};
use super::{entropy, Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::{CicError, Result};
use crate::image::Image;

/// Scalar quantizer `NF(f) = q * round(f / q)` on clamp-rounded input.
#[derive(Debug, Clone, Copy)]
pub struct UniformQuantCodec {
    step: f64,
}

impl UniformQuantCodec {
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(CicError::ConfigInvalid(format!("quantizer step {step} must be > 0")));
        }
        // symbols are stored as i16
        if 255.0 / step > f64::from(i16::MAX) {
            return Err(CicError::ConfigInvalid(format!("quantizer step {step} too small")));
        }
        Ok(Self { step })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn symbols(&self, img: &Image) -> Vec<i16> {
        img.clamp_round()
            .data()
            .iter()
            .map(|&v| (v / self.step).round() as i16)
            .collect()
    }
}

impl Codec for UniformQuantCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "quant".into(),
            deterministic: true,
            quality_param: self.step,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let symbols = self.symbols(img);
        let header = Header::new(CodecId::UniformQuant, img.shape(), container::f64_param(self.step))?;
        let mut out = Vec::with_capacity(container::HEADER_LEN + 2 * symbols.len());
        header.write(&mut out);
        for s in &symbols {
            out.extend_from_slice(&s.to_be_bytes());
        }
        Bitstream::new(out, entropy::modeled_bits(&symbols))
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::UniformQuant)?;
        let step = container::read_f64_param(&header.params);
        if !(step.is_finite() && step > 0.0) {
            return Err(CicError::MalformedBitstream(format!("bad step {step}")));
        }
        let symbols = container::read_i16_samples(payload, header.sample_count())?;
        let (w, h, c) = header.shape();
        Image::new(w, h, c, symbols.iter().map(|&s| step * f64::from(s)).collect())
    }
}
