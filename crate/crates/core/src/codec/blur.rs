use super::container::{self, CodecId, Header};
use super::{Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::{CicError, Result};
use crate::image::Image;

/// Separable Gaussian blur on clamp-rounded input, stored as 32-bit floats.
///
/// Kernel radius is `ceil(3 * sigma)`, taps are normalized to sum to one and
/// borders replicate the edge sample. This is the smooth reference codec
/// served over the bridge protocol.
#[derive(Debug, Clone)]
pub struct GaussianBlurCodec {
    sigma: f64,
    kernel: Vec<f64>,
}

impl GaussianBlurCodec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0 && sigma <= 64.0) {
            return Err(CicError::ConfigInvalid(format!("blur sigma {sigma} outside (0, 64]")));
        }
        Ok(Self {
            sigma,
            kernel: gaussian_kernel(sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn blur(&self, img: &Image) -> Image {
        let (w, h, c) = img.shape();
        let r = (self.kernel.len() / 2) as isize;
        let src = img.clamp_round();
        let data = src.data();
        let mut tmp = vec![0.0; data.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (t, wgt) in self.kernel.iter().enumerate() {
                        let xx = (x as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                        acc += wgt * data[(y * w + xx) * c + ch];
                    }
                    tmp[(y * w + x) * c + ch] = acc;
                }
            }
        }
        let mut out = vec![0.0; data.len()];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for (t, wgt) in self.kernel.iter().enumerate() {
                        let yy = (y as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                        acc += wgt * tmp[(yy * w + x) * c + ch];
                    }
                    out[(y * w + x) * c + ch] = acc;
                }
            }
        }
        img.with_data(out).expect("blur preserves shape and finiteness")
    }
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil().max(1.0) as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

impl Codec for GaussianBlurCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "blur".into(),
            deterministic: true,
            quality_param: self.sigma,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let blurred = self.blur(img);
        let header = Header::new(CodecId::GaussianBlur, img.shape(), container::f64_param(self.sigma))?;
        let mut out = Vec::with_capacity(container::HEADER_LEN + 4 * img.dim());
        header.write(&mut out);
        for &v in blurred.data() {
            out.extend_from_slice(&(v as f32).to_be_bytes());
        }
        Bitstream::new(out, 32 * img.dim() as u64)
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::GaussianBlur)?;
        let samples = container::read_f32_samples(payload, header.sample_count())?;
        container::check_finite(&samples)?;
        let (w, h, c) = header.shape();
        Image::new(w, h, c, samples)
    }
}
