//! Toy JPEG-like transform codec: 8x8 DCT-II, scaled luminance table,
//! uniform rounding, entropy-modeled size.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::container::{self, CodecId, Header};
use super::{entropy, Bitstream, Codec, CodecDescriptor, LatentDim};
use crate::error::{CicError, Result};
use crate::image::Image;

pub const BLOCK: usize = 8;

/// Standard JPEG luminance quantization table (quality 50), row-major.
pub const LUMINANCE_QUANT_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Linear quality scaling used by the IJG reference encoder, for
/// `quality` in `(0, 100]`.
pub fn scaled_quant_table(quality: f64) -> [f64; 64] {
    let scale = if quality < 50.0 {
        5000.0 / quality
    } else {
        200.0 - 2.0 * quality
    };
    let mut out = [0.0; 64];
    for (o, &base) in out.iter_mut().zip(LUMINANCE_QUANT_TABLE.iter()) {
        *o = ((f64::from(base) * scale + 50.0) / 100.0).floor().clamp(1.0, 255.0);
    }
    out
}

/// Orthonormal DCT-II basis, `basis[k][n]`.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (k, row) in m.iter_mut().enumerate() {
            let scale = if k == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * ((2 * n + 1) as f64 * k as f64 * PI / (2 * BLOCK) as f64).cos();
            }
        }
        m
    })
}

fn forward(block: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    let mut tmp = [0.0; 64];
    // rows
    for y in 0..BLOCK {
        for k in 0..BLOCK {
            tmp[y * BLOCK + k] = (0..BLOCK).map(|x| m[k][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..BLOCK {
        for x in 0..BLOCK {
            out[k * BLOCK + x] = (0..BLOCK).map(|y| m[k][y] * tmp[y * BLOCK + x]).sum();
        }
    }
    out
}

fn inverse(coef: &[f64; 64]) -> [f64; 64] {
    let m = basis();
    let mut tmp = [0.0; 64];
    for v in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[v * BLOCK + x] = (0..BLOCK).map(|u| m[u][x] * coef[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|v| m[v][y] * tmp[v * BLOCK + x]).sum();
        }
    }
    out
}

fn padded(n: usize) -> usize {
    n.div_ceil(BLOCK) * BLOCK
}

/// Blockwise DCT quantizer.
///
/// The transform consumes real-valued input without clamp-rounding so that
/// the roundtrip map is exactly idempotent. Blocks are visited in raster
/// order per channel; the edge is padded by replication.
#[derive(Debug, Clone)]
pub struct BlockDctCodec {
    quality: f64,
    table: [f64; 64],
}

impl BlockDctCodec {
    pub fn new(quality: f64) -> Result<Self> {
        if !(quality > 0.0 && quality <= 100.0) {
            return Err(CicError::ConfigInvalid(format!(
                "DCT quality {quality} outside (0, 100]"
            )));
        }
        Ok(Self {
            quality,
            table: scaled_quant_table(quality),
        })
    }

    pub fn quality(&self) -> f64 {
        self.quality
    }

    /// Quantized coefficients, channel-major then block raster then zigzag-free
    /// row-major coefficient order.
    pub fn symbols(&self, img: &Image) -> Vec<i16> {
        let (w, h, c) = img.shape();
        let (pw, ph) = (padded(w), padded(h));
        let src = img.pad_replicate(pw, ph);
        let data = src.data();
        let mut out = Vec::with_capacity(pw * ph * c);
        for ch in 0..c {
            for by in (0..ph).step_by(BLOCK) {
                for bx in (0..pw).step_by(BLOCK) {
                    let mut block = [0.0; 64];
                    for y in 0..BLOCK {
                        for x in 0..BLOCK {
                            block[y * BLOCK + x] = data[((by + y) * pw + bx + x) * c + ch];
                        }
                    }
                    let coef = forward(&block);
                    out.extend(coef.iter().zip(&self.table).map(|(v, q)| (v / q).round() as i16));
                }
            }
        }
        out
    }

    fn reconstruct(table: &[f64; 64], symbols: &[i16], shape: (usize, usize, usize)) -> Result<Image> {
        let (w, h, c) = shape;
        let (pw, ph) = (padded(w), padded(h));
        let mut data = vec![0.0; pw * ph * c];
        let mut chunks = symbols.chunks_exact(64);
        for ch in 0..c {
            for by in (0..ph).step_by(BLOCK) {
                for bx in (0..pw).step_by(BLOCK) {
                    let s = chunks
                        .next()
                        .ok_or_else(|| CicError::MalformedBitstream("too few coefficient blocks".into()))?;
                    let mut coef = [0.0; 64];
                    for ((dst, &sym), q) in coef.iter_mut().zip(s).zip(table) {
                        *dst = f64::from(sym) * q;
                    }
                    let block = inverse(&coef);
                    for y in 0..BLOCK {
                        for x in 0..BLOCK {
                            data[((by + y) * pw + bx + x) * c + ch] = block[y * BLOCK + x];
                        }
                    }
                }
            }
        }
        Image::new(pw, ph, c, data)?.crop(0, 0, h, w)
    }
}

impl Codec for BlockDctCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            name: "dct".into(),
            deterministic: true,
            quality_param: self.quality,
            latent_dim: LatentDim::Opaque,
        }
    }

    fn encode(&self, img: &Image) -> Result<Bitstream> {
        let symbols = self.symbols(img);
        let header = Header::new(CodecId::BlockDct, img.shape(), container::f64_param(self.quality))?;
        let mut out = Vec::with_capacity(container::HEADER_LEN + 2 * symbols.len());
        header.write(&mut out);
        for s in &symbols {
            out.extend_from_slice(&s.to_be_bytes());
        }
        Bitstream::new(out, entropy::modeled_bits(&symbols))
    }

    fn decode(&self, bs: &Bitstream) -> Result<Image> {
        let (header, payload) = Header::read(bs.payload(), CodecId::BlockDct)?;
        let quality = container::read_f64_param(&header.params);
        if !(quality > 0.0 && quality <= 100.0) {
            return Err(CicError::MalformedBitstream(format!("bad quality {quality}")));
        }
        let (w, h, c) = header.shape();
        let count = padded(w) * padded(h) * c;
        let symbols = container::read_i16_samples(payload, count)?;
        Self::reconstruct(&scaled_quant_table(quality), &symbols, (w, h, c))
    }
}
