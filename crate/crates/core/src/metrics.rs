//! Reconstruction quality and rate metrics.
//!
//! PSNR and SSIM clamp-round both inputs to 8 bits first. SSIM is the
//! single-window (whole image) form with population statistics.

use serde::{Serialize, Serializer};

use crate::error::{CicError, Result};
use crate::image::Image;

const PEAK: f64 = 255.0;
const C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
const C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

/// Default subpixel depth `S` in bits.
pub const DEFAULT_SUBPIXEL_BITS: u32 = 8;

/// Peak signal-to-noise ratio in dB; `Infinite` when the inputs agree
/// exactly after clamp-rounding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Infinite,
}

impl Psnr {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Psnr::Infinite)
    }

    /// `f64::INFINITY` for the infinite case.
    pub fn value(&self) -> f64 {
        match *self {
            Psnr::Db(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.6}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Db(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rate {
    /// `B / (S * W * H * C)`.
    pub bpsp: f64,
    /// `B / (W * H * C)`.
    pub bpsp_raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub psnr: Psnr,
    pub ssim: f64,
    pub bpsp: f64,
    pub bpsp_raw: f64,
    pub bits: u64,
    pub subpixel_bits: u32,
}

fn clamped_pair(f: &Image, f0: &Image) -> Result<(Vec<f64>, Vec<f64>)> {
    f.ensure_same_shape(f0)?;
    Ok((f.clamp_round().into_vec(), f0.clamp_round().into_vec()))
}

pub fn psnr(f: &Image, f0: &Image) -> Result<Psnr> {
    let (a, b) = clamped_pair(f, f0)?;
    let sse: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    if sse == 0.0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sse / a.len() as f64;
    Ok(Psnr::Db(10.0 * (PEAK * PEAK / mse).log10()))
}

pub fn ssim(f: &Image, f0: &Image) -> Result<f64> {
    let (a, b) = clamped_pair(f, f0)?;
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        var_a += dx * dx;
        var_b += dy * dy;
        cov += dx * dy;
    }
    let (var_a, var_b, cov) = (var_a / n, var_b / n, cov / n);
    let num = (2.0 * mean_a * mean_b + C1) * (2.0 * cov + C2);
    let den = (mean_a * mean_a + mean_b * mean_b + C1) * (var_a + var_b + C2);
    Ok(num / den)
}

pub fn bpsp(bits: u64, subpixel_bits: u32, width: usize, height: usize, channels: usize) -> Result<Rate> {
    if bits == 0 || subpixel_bits == 0 || width == 0 || height == 0 || channels == 0 {
        return Err(CicError::ZeroDimension);
    }
    let samples = (width * height * channels) as f64;
    let bpsp_raw = bits as f64 / samples;
    Ok(Rate {
        bpsp: bits as f64 / (f64::from(subpixel_bits) * samples),
        bpsp_raw,
    })
}

pub fn report(f: &Image, f0: &Image, bits: u64, subpixel_bits: u32) -> Result<MetricsReport> {
    let (w, h, c) = f0.shape();
    let rate = bpsp(bits, subpixel_bits, w, h, c)?;
    Ok(MetricsReport {
        psnr: psnr(f, f0)?,
        ssim: ssim(f, f0)?,
        bpsp: rate.bpsp,
        bpsp_raw: rate.bpsp_raw,
        bits,
        subpixel_bits,
    })
}

/// Absolute and thresholded difference maps (single channel, `W x H`).
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceImages {
    pub abs_img: Image,
    /// Values in `{0, 1}`.
    pub logic_img: Image,
    pub threshold: f64,
}

impl DifferenceImages {
    /// Logic map scaled to `{0, 255}` for export.
    pub fn logic_display(&self) -> Image {
        self.logic_img.map(|v| v * 255.0).expect("finite")
    }

    pub fn flagged_pixels(&self) -> usize {
        self.logic_img.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// Per-pixel `|f_t - f_r|`, reduced over channels by maximum, and the map of
/// pixels strictly above `threshold`.
pub fn difference_images(f_t: &Image, f_r: &Image, threshold: f64) -> Result<DifferenceImages> {
    f_t.ensure_same_shape(f_r)?;
    let (w, h, c) = f_t.shape();
    let abs: Vec<f64> = f_t
        .data()
        .chunks_exact(c)
        .zip(f_r.data().chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
        .collect();
    let logic = abs.iter().map(|&d| if d > threshold { 1.0 } else { 0.0 }).collect();
    Ok(DifferenceImages {
        abs_img: Image::new(w, h, 1, abs)?,
        logic_img: Image::new(w, h, 1, logic)?,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, v: &[f64]) -> Image {
        Image::new(w, h, c, v.to_vec()).unwrap()
    }

    #[test]
    fn psnr_worked_values() {
        let a = Image::filled(2, 2, 1, 100.0).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Infinite);
        let b = Image::filled(2, 2, 1, 116.0).unwrap();
        let p = psnr(&a, &b).unwrap().value();
        assert!((p - 24.0484).abs() < 5e-5, "{p}");
        let zero = Image::filled(3, 2, 3, 0.0).unwrap();
        let full = Image::filled(3, 2, 3, 255.0).unwrap();
        assert_eq!(psnr(&zero, &full).unwrap(), Psnr::Db(0.0));
    }

    #[test]
    fn ssim_worked_values() {
        let a = Image::filled(4, 4, 1, 100.0).unwrap();
        let b = Image::filled(4, 4, 1, 110.0).unwrap();
        let expected = 22006.5025 / 22106.5025;
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.995477).abs() < 1e-6);
        let z = Image::filled(2, 2, 3, 0.0).unwrap();
        assert_eq!(ssim(&z, &z).unwrap(), 1.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn metrics_reject_mismatched_shapes() {
        let a = Image::filled(2, 2, 1, 0.0).unwrap();
        let b = Image::filled(2, 2, 3, 0.0).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        assert!(difference_images(&a, &b, 1.0).is_err());
    }

    #[test]
    fn bpsp_worked_values() {
        let r = bpsp(786_432, 8, 256, 256, 3).unwrap();
        assert_eq!(r.bpsp, 0.5);
        assert_eq!(r.bpsp_raw, 4.0);
        let raw = bpsp(8 * 10 * 7 * 3, 8, 10, 7, 3).unwrap();
        assert_eq!(raw.bpsp, 1.0);
        assert!(matches!(bpsp(0, 8, 1, 1, 1), Err(CicError::ZeroDimension)));
        assert!(matches!(bpsp(8, 8, 0, 1, 1), Err(CicError::ZeroDimension)));
    }

    #[test]
    fn logic_threshold_is_strict() {
        let a = img(2, 1, 1, &[10.0, 10.0]);
        let b = img(2, 1, 1, &[16.0, 15.0]);
        let d = difference_images(&a, &b, 5.0).unwrap();
        assert_eq!(d.abs_img.data(), &[6.0, 5.0]);
        assert_eq!(d.logic_img.data(), &[1.0, 0.0]);
        assert_eq!(d.logic_display().data(), &[255.0, 0.0]);
    }

    #[test]
    fn channel_reduction_takes_maximum() {
        let a = img(2, 1, 3, &[50.0, 50.0, 50.0, 9.0, 9.0, 9.0]);
        let b = img(2, 1, 3, &[50.0, 57.0, 50.0, 9.0, 9.0, 9.0]);
        let d = difference_images(&a, &b, 5.0).unwrap();
        assert_eq!(d.abs_img.data(), &[7.0, 0.0]);
        assert_eq!(d.flagged_pixels(), 1);
    }

    #[test]
    fn identical_inputs_give_black_maps() {
        let a = Image::from_fn(3, 3, 3, |p| (p.row + p.col + p.channel) as f64).unwrap();
        let d = difference_images(&a, &a, 0.0).unwrap();
        assert!(d.abs_img.data().iter().all(|&v| v == 0.0));
        assert_eq!(d.flagged_pixels(), 0);
    }
}
