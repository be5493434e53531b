use super::container::{CodecId, Header};
use super::{Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::{CicError, Result};
use crate::image::Image;

/// Stores raw 8-bit samples. Its roundtrip is the clamp-rounding map.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl Codec for IdentityCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "identity".into(),
            deterministic: true,
            quality_param: 0.0,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let header = Header::new(CodecId::Identity, img.shape(), [0; 8])?;
        let mut out = Vec::with_capacity(super::container::HEADER_LEN + img.dim());
        header.write(&mut out);
        out.extend(img.to_bytes());
        Bitstream::new(out, 8 * img.dim() as u64)
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::Identity)?;
        if payload.len() != header.sample_count() {
            return Err(CicError::MalformedBitstream(format!(
                "expected {} samples, found {}",
                header.sample_count(),
                payload.len()
            )));
        }
        let (w, h, c) = header.shape();
        Image::new(w, h, c, payload.iter().map(|&b| f64::from(b)).collect())
    }
}
