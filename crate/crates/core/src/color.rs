//! Colour transforms that run ahead of thresholding: luma grayscale,
//! gray-world colour balance and RGB to CMYK.
//!
//! Every real-to-8-bit conversion rounds half away from zero. Where the
//! operands are integers the rounding is done in integer arithmetic so the
//! output is bit-exact on every platform.

use std::fmt;

use thiserror::Error;

use crate::raster::{GrayImage, RgbImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    Red,
    Green,
    Blue,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Red => "red",
            Channel::Green => "green",
            Channel::Blue => "blue",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ColorError {
    /// A channel is zero everywhere, so its balance gain is undefined.
    #[error("{0} channel has zero mean; colour balance is undefined")]
    DegenerateChannel(Channel),
}

/// BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let weighted = 299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32;
    // weights sum to 1000, so the result never exceeds 255
    ((weighted + 500) / 1000) as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let data = img.pixels().map(luma).collect();
    GrayImage::from_raw(img.width(), img.height(), data).expect("same dimensions as source")
}

/// Scales each channel by `mean(gray) / mean(channel)`, where `gray` is the
/// luma of the input image. Results are rounded and clamped to `[0, 255]`.
pub fn color_balance(img: &RgbImage) -> Result<RgbImage, ColorError> {
    let mut sums = [0u64; 3];
    let mut gray_sum = 0u64;
    for px in img.pixels() {
        for (s, v) in sums.iter_mut().zip(px) {
            *s += v as u64;
        }
        gray_sum += luma(px) as u64;
    }

    let channels = [Channel::Red, Channel::Green, Channel::Blue];
    let mut luts = [[0u8; 256]; 3];
    for ((lut, &sum), channel) in luts.iter_mut().zip(&sums).zip(channels) {
        if sum == 0 {
            return Err(ColorError::DegenerateChannel(channel));
        }
        // round(gray_sum * v / sum), half away from zero
        let den = 2 * sum as u128;
        for (v, slot) in lut.iter_mut().enumerate() {
            let num = 2 * gray_sum as u128 * v as u128 + sum as u128;
            *slot = (num / den).min(255) as u8;
        }
    }

    let data = img
        .as_raw()
        .chunks_exact(3)
        .flat_map(|p| [luts[0][p[0] as usize], luts[1][p[1] as usize], luts[2][p[2] as usize]])
        .collect();
    Ok(RgbImage::from_raw(img.width(), img.height(), data).expect("same dimensions as source"))
}

/// Per-pixel CMYK planes. `C`, `M`, `Y` are in `[0, 1]`, `K` in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CmykImage {
    width: u32,
    height: u32,
    cmy: Vec<[f64; 3]>,
    k: Vec<u8>,
}

impl CmykImage {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `(C, M, Y, K)` at `(x, y)`.
    pub fn pixel(&self, x: u32, y: u32) -> (f64, f64, f64, u8) {
        let i = y as usize * self.width as usize + x as usize;
        let [c, m, y] = self.cmy[i];
        (c, m, y, self.k[i])
    }

    pub fn cmy(&self) -> &[[f64; 3]] {
        &self.cmy
    }

    pub fn key(&self) -> &[u8] {
        &self.k
    }
}

/// Converts one pixel. A pure black pixel (`K = 255`) has no chroma and maps
/// to `C = M = Y = 0`.
#[inline]
pub fn pixel_to_cmyk(rgb: [u8; 3]) -> ([f64; 3], u8) {
    let primed = rgb.map(|v| 255 - v);
    let k = primed.into_iter().min().expect("three channels");
    if k == 255 {
        return ([0.0; 3], k);
    }
    let den = (255 - k) as f64;
    (primed.map(|p| (p - k) as f64 / den), k)
}

pub fn rgb_to_cmyk(img: &RgbImage) -> CmykImage {
    let (cmy, k) = img.pixels().map(pixel_to_cmyk).unzip();
    CmykImage { width: img.width(), height: img.height(), cmy, k }
}

/// Quantizes the magenta plane to `round(M * 255)`.
pub fn extract_m_channel(img: &CmykImage) -> GrayImage {
    let data = img.cmy.iter().map(|c| (c[1] * 255.0).round() as u8).collect();
    GrayImage::from_raw(img.width, img.height, data).expect("same dimensions as source")
}
