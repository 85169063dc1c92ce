//! Source images: 8-bit RGB ingestion and normalized YUV planes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image has zero width or height"));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "expected {} RGB bytes for {width}x{height}, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(RawImage {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        RawImage::new(width, height, pixels)
    }

    /// Decodes PNG or binary PPM from memory.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = img.dimensions();
        RawImage::new(w as usize, h as usize, img.into_raw())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        RawImage::decode(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
            image::ImageFormat::Png,
        )?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Per-channel z-score parameters. `std == 0.0` marks a constant channel,
/// which normalizes to all zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    pub const CONSTANT_THRESHOLD: f64 = 1e-12;

    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        ChannelStats {
            mean,
            std: if std < Self::CONSTANT_THRESHOLD { 0.0 } else { std },
        }
    }

    #[inline]
    pub fn apply(&self, value: f64) -> f64 {
        if self.std == 0.0 {
            0.0
        } else {
            (value - self.mean) / self.std
        }
    }
}

/// BT.601 full-range RGB to YUV on the 0..255 scale.
#[inline]
pub fn rgb_to_yuv(rgb: [u8; 3]) -> [f64; 3] {
    let r = rgb[0] as f64;
    let g = rgb[1] as f64;
    let b = rgb[2] as f64;
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    [y, 0.492 * (b - y), 0.877 * (r - y)]
}

/// Normalizes interleaved RGB bytes with precomputed statistics into
/// interleaved YUV values.
pub fn normalize_rgb(rgb: &[u8], stats: &[ChannelStats; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rgb.len());
    for px in rgb.chunks_exact(3) {
        let yuv = rgb_to_yuv([px[0], px[1], px[2]]);
        for c in 0..3 {
            out.push(stats[c].apply(yuv[c]));
        }
    }
    out
}

/// YUV image, each channel z-score normalized over the whole image.
/// Values are stored interleaved, row-major: `(y * width + x) * 3 + channel`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub stats: [ChannelStats; 3],
}

impl NormalizedImage {
    #[inline]
    pub fn at(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + channel]
    }

    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.data.iter().skip(channel).step_by(3).copied().collect()
    }
}

pub fn to_normalized_yuv(img: &RawImage) -> Result<NormalizedImage> {
    if img.width == 0 || img.height == 0 {
        return Err(Error::invalid("empty image"));
    }
    let yuv: Vec<[f64; 3]> = img
        .pixels
        .chunks_exact(3)
        .map(|p| rgb_to_yuv([p[0], p[1], p[2]]))
        .collect();
    let stats = [0, 1, 2].map(|c| {
        let plane: Vec<f64> = yuv.iter().map(|v| v[c]).collect();
        ChannelStats::from_samples(&plane)
    });
    Ok(NormalizedImage {
        width: img.width,
        height: img.height,
        data: normalize_rgb(&img.pixels, &stats),
        stats,
    })
}
