use super::container::{self, CodecId, Header};
use super::{Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::{CicError, Result};
use crate::image::Image;

/// Bilinear downsample by an integer factor, then bilinear upsample back.
///
/// Pixel centers are aligned the usual half-pixel way: low-resolution sample
/// `i` sits at high-resolution coordinate `(i + 0.5) * k - 0.5`. The stored
/// representation is the low-resolution image as 32-bit floats.
#[derive(Debug, Clone, Copy)]
pub struct DownUpCodec {
    factor: usize,
}

impl DownUpCodec {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 || factor > u32::MAX as usize {
            return Err(CicError::ConfigInvalid(format!("resampling factor {factor}")));
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    fn low_res(&self, img: &Image) -> Image {
        let k = self.factor;
        let (w, h, _) = img.shape();
        let (pw, ph) = (w.div_ceil(k) * k, h.div_ceil(k) * k);
        let padded = img.clamp_round().pad_replicate(pw, ph);
        let map = |i: usize| (i as f64 + 0.5) * k as f64 - 0.5;
        resample(&padded, pw / k, ph / k, map)
    }

    fn high_res(&self, low: &Image, shape: (usize, usize, usize)) -> Result<Image> {
        let k = self.factor as f64;
        let (w, h, _) = shape;
        let (lw, lh, _) = low.shape();
        let map = |i: usize| (i as f64 + 0.5) / k - 0.5;
        resample(low, lw * self.factor, lh * self.factor, map).crop(0, 0, h, w)
    }
}

/// Taps `(lo, hi, t)` for sampling at continuous coordinate `x` over `n`
/// samples, with edge clamping.
fn taps(x: f64, n: usize) -> (usize, usize, f64) {
    let x = x.clamp(0.0, (n - 1) as f64);
    let lo = x.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    (lo, hi, x - lo as f64)
}

fn resample(src: &Image, out_w: usize, out_h: usize, map: impl Fn(usize) -> f64) -> Image {
    let (w, h, c) = src.shape();
    let data = src.data();
    let cols: Vec<_> = (0..out_w).map(|j| taps(map(j), w)).collect();
    let rows: Vec<_> = (0..out_h).map(|i| taps(map(i), h)).collect();
    let mut out = Vec::with_capacity(out_w * out_h * c);
    for &(r0, r1, ty) in &rows {
        for &(c0, c1, tx) in &cols {
            for ch in 0..c {
                let at = |r: usize, col: usize| data[(r * w + col) * c + ch];
                let top = at(r0, c0) * (1.0 - tx) + at(r0, c1) * tx;
                let bottom = at(r1, c0) * (1.0 - tx) + at(r1, c1) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    Image::new(out_w, out_h, c, out).expect("resample preserves finiteness")
}

impl Codec for DownUpCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "downup".into(),
            deterministic: true,
            quality_param: self.factor as f64,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let low = self.low_res(img);
        let header = Header::new(CodecId::DownUp, img.shape(), container::u32_param(self.factor as u32))?;
        let mut out = Vec::with_capacity(container::HEADER_LEN + 4 * low.dim());
        header.write(&mut out);
        for &v in low.data() {
            out.extend_from_slice(&(v as f32).to_be_bytes());
        }
        Bitstream::new(out, 32 * low.dim() as u64)
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::DownUp)?;
        let k = container::read_u32_param(&header.params) as usize;
        if k == 0 {
            return Err(CicError::MalformedBitstream("zero factor".into()));
        }
        let (w, h, c) = header.shape();
        let (lw, lh) = (w.div_ceil(k), h.div_ceil(k));
        let samples = container::read_f32_samples(payload, lw * lh * c)?;
        container::check_finite(&samples)?;
        let low = Image::new(lw, lh, c, samples)?;
        Self { factor: k }.high_res(&low, (w, h, c))
    }
}
