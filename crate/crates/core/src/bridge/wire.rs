//! Payload encodings carried inside bridge frames.
//!
//! Image: width `u32` BE, height `u32` BE, channels `u8`, dtype `u8`
//! (`1` = 32-bit little-endian float), then samples row-major interleaved.
//! Encoded stream: bit length `u64` BE, then the opaque codec bytes.

use super::BridgeError;
use crate::codec::{Bitstream, CodecDescriptor};
use crate::image::Image;

pub const DTYPE_F32_LE: u8 = 1;
const IMAGE_HEADER_LEN: usize = 10;

fn violation(msg: impl Into<String>) -> BridgeError {
    BridgeError::ProtocolViolation(msg.into())
}

pub fn encode_image(img: &Image) -> Vec<u8> {
    let (w, h, c) = img.shape();
    let mut out = Vec::with_capacity(IMAGE_HEADER_LEN + 4 * img.dim());
    out.extend_from_slice(&(w as u32).to_be_bytes());
    out.extend_from_slice(&(h as u32).to_be_bytes());
    out.push(c as u8);
    out.push(DTYPE_F32_LE);
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<Image, BridgeError> {
    if bytes.len() < IMAGE_HEADER_LEN {
        return Err(violation("image payload shorter than its header"));
    }
    let w = u32::from_be_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let h = u32::from_be_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let c = bytes[8] as usize;
    if bytes[9] != DTYPE_F32_LE {
        return Err(violation(format!("unsupported sample dtype {}", bytes[9])));
    }
    let count = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(c))
        .filter(|&n| n > 0)
        .ok_or_else(|| violation(format!("invalid image dimensions {w}x{h}x{c}")))?;
    let body = &bytes[IMAGE_HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(violation(format!(
            "image {w}x{h}x{c} needs {} sample bytes, found {}",
            count * 4,
            body.len()
        )));
    }
    let samples: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(violation("non-finite sample in image payload"));
    }
    Image::new(w, h, c, samples).map_err(|e| violation(e.to_string()))
}

pub fn encode_bitstream(bs: &Bitstream) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + bs.payload().len());
    out.extend_from_slice(&bs.bit_length().to_be_bytes());
    out.extend_from_slice(bs.payload());
    out
}

pub fn decode_bitstream(bytes: &[u8]) -> Result<Bitstream, BridgeError> {
    if bytes.len() < 8 {
        return Err(violation("encoded payload shorter than its bit length field"));
    }
    let bits = u64::from_be_bytes(bytes[..8].try_into().unwrap());
    Bitstream::new(bytes[8..].to_vec(), bits).map_err(|e| violation(e.to_string()))
}

pub fn encode_descriptor(d: &CodecDescriptor) -> Vec<u8> {
    serde_json::to_vec(d).expect("descriptor serializes")
}

pub fn decode_descriptor(bytes: &[u8]) -> Result<CodecDescriptor, BridgeError> {
    serde_json::from_slice(bytes).map_err(|e| violation(format!("bad descriptor: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::LatentDim;

    #[test]
    fn image_layout() {
        let img = Image::new(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(encode_image(&img), [0, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0x80, 0x3f]);
    }

    #[test]
    fn image_round_trip_is_exact_for_f32_values() {
        let img = Image::from_fn(3, 2, 3, |p| (p.row * 3 + p.col) as f64 * 0.25 - p.channel as f64).unwrap();
        assert_eq!(decode_image(&encode_image(&img)).unwrap(), img);
    }

    #[test]
    fn image_rejects_bad_payloads() {
        let img = Image::filled(2, 2, 1, 5.0).unwrap();
        let good = encode_image(&img);
        assert!(decode_image(&good[..good.len() - 1]).is_err());
        let mut dtype = good.clone();
        dtype[9] = 2;
        assert!(decode_image(&dtype).is_err());
        let mut zero = good.clone();
        zero[8] = 0;
        assert!(decode_image(&zero).is_err());
        let mut nan = good;
        nan[10..14].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_image(&nan).is_err());
    }

    #[test]
    fn bitstream_and_descriptor() {
        let bs = Bitstream::new(vec![9, 8, 7], 20).unwrap();
        assert_eq!(decode_bitstream(&encode_bitstream(&bs)).unwrap(), bs);
        let mut over = encode_bitstream(&bs);
        over[7] = 200;
        assert!(decode_bitstream(&over).is_err());
        let d = CodecDescriptor {
            name: "identity".into(),
            deterministic: true,
            quality_param: 0.0,
            latent_dim: LatentDim::Opaque,
        };
        assert_eq!(decode_descriptor(&encode_descriptor(&d)).unwrap(), d);
        let counted = CodecDescriptor {
            latent_dim: LatentDim::Count(42),
            ..d
        };
        assert_eq!(decode_descriptor(&encode_descriptor(&counted)).unwrap(), counted);
        assert!(decode_descriptor(b"{").is_err());
    }
}
