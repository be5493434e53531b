//! Real-valued pixel tensors and 8-bit file I/O.
//!
//! Samples are stored row-major with channels interleaved, in the nominal
//! `[0, 255]` display range. Intermediate values may leave that range; they
//! are only clamped on export and when entering a quality metric.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{CicError, Result};

/// A `W x H x C` image with `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

/// Location of a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelIndex {
    pub row: usize,
    pub col: usize,
    pub channel: usize,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(CicError::DimensionMismatch(format!(
                "empty image {width}x{height}x{channels}"
            )));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| CicError::DimensionMismatch("dimension overflow".into()))?;
        if data.len() != expected {
            return Err(CicError::DimensionMismatch(format!(
                "{width}x{height}x{channels} needs {expected} samples, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(CicError::DimensionMismatch(format!(
                "non-finite sample at offset {pos}"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(PixelIndex) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for row in 0..height {
            for col in 0..width {
                for channel in 0..channels {
                    data.push(f(PixelIndex { row, col, channel }));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Dimension `D = W * H * C` of the flattened vector space.
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(CicError::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn offset(&self, idx: PixelIndex) -> usize {
        debug_assert!(idx.row < self.height && idx.col < self.width && idx.channel < self.channels);
        (idx.row * self.width + idx.col) * self.channels + idx.channel
    }

    pub fn get(&self, idx: PixelIndex) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn unflatten(v: Vec<f64>, width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::new(width, height, channels, v)
    }

    /// Same shape, new samples. Non-finite results are rejected.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.width, self.height, self.channels, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Clamp to `[0, 255]` and round half away from zero.
    pub fn clamp_round(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| quantize_sample(v) as f64).collect(),
        }
    }

    pub fn l2_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn linf_distance(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy out the rectangle starting at (`row`, `col`).
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(CicError::DimensionMismatch(format!(
                "crop {height}x{width}@({row},{col}) outside {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(width * height * c);
        for r in row..row + height {
            let start = (r * self.width + col) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Self::new(width, height, c, data)
    }

    /// Overwrite the rectangle at (`row`, `col`) with `tile`.
    pub fn paste(&mut self, tile: &Image, row: usize, col: usize) -> Result<()> {
        if tile.channels != self.channels || row + tile.height > self.height || col + tile.width > self.width {
            return Err(CicError::DimensionMismatch(format!(
                "paste {:?}@({row},{col}) into {:?}",
                tile.shape(),
                self.shape()
            )));
        }
        let c = self.channels;
        for r in 0..tile.height {
            let dst = ((row + r) * self.width + col) * c;
            let src = r * tile.width * c;
            self.data[dst..dst + tile.width * c].copy_from_slice(&tile.data[src..src + tile.width * c]);
        }
        Ok(())
    }

    /// Extend to `new_width x new_height` by replicating the last row/column.
    pub fn pad_replicate(&self, new_width: usize, new_height: usize) -> Self {
        debug_assert!(new_width >= self.width && new_height >= self.height);
        let c = self.channels;
        let mut data = Vec::with_capacity(new_width * new_height * c);
        for r in 0..new_height {
            let sr = r.min(self.height - 1);
            for col in 0..new_width {
                let sc = col.min(self.width - 1);
                let start = (sr * self.width + sc) * c;
                data.extend_from_slice(&self.data[start..start + c]);
            }
        }
        Self {
            width: new_width,
            height: new_height,
            channels: c,
            data,
        }
    }

    /// Read a PNG or binary PNM file (format detected from content).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CicError::FileNotFound(path.to_path_buf()),
            _ => CicError::Io(e),
        })?;
        let reader = image::ImageReader::new(BufReader::new(file))
            .with_guessed_format()
            .map_err(CicError::Io)?;
        match reader.format() {
            Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
            other => {
                return Err(CicError::MalformedImage(format!(
                    "{}: unsupported format {other:?}",
                    path.display()
                )))
            }
        }
        let decoded = reader
            .decode()
            .map_err(|e| CicError::MalformedImage(format!("{}: {e}", path.display())))?;
        let (width, height) = (decoded.width() as usize, decoded.height() as usize);
        let (channels, bytes) = match decoded {
            DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
            DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
            other => {
                return Err(CicError::MalformedImage(format!(
                    "{}: unsupported pixel layout {:?} (8-bit gray or RGB only)",
                    path.display(),
                    other.color()
                )))
            }
        };
        Self::new(width, height, channels, bytes.into_iter().map(f64::from).collect())
    }

    /// Write an 8-bit file; the extension picks PNG or PNM (P6 for RGB,
    /// P5 for grayscale). Samples go through [`quantize_sample`].
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => ImageFormat::Png,
            Some("ppm" | "pgm" | "pnm") => ImageFormat::Pnm,
            _ => {
                return Err(CicError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("{}: expected .png, .ppm or .pgm", path.display()),
                )))
            }
        };
        let bytes = self.to_bytes();
        let (w, h) = (self.width as u32, self.height as u32);
        let dynamic = match self.channels {
            1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).unwrap()),
            3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).unwrap()),
            c => {
                return Err(CicError::UnsupportedDimensions(format!(
                    "cannot export {c}-channel image"
                )))
            }
        };
        let mut out = BufWriter::new(File::create(path)?);
        dynamic.write_to(&mut out, format).map_err(|e| match e {
            image::ImageError::IoError(io) => CicError::Io(io),
            other => CicError::Io(std::io::Error::other(other.to_string())),
        })?;
        Ok(())
    }

    /// Clamp-rounded 8-bit samples in storage order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize_sample(v)).collect()
    }
}

/// `clamp(round(x), 0, 255)` with round-half-away-from-zero.
pub fn quantize_sample(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}
