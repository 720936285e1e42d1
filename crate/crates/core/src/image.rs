//! Grayscale images, the separable Gaussian filter shared by the slicer and
//! the segmenter, and 16-bit PNG IO.

use std::path::Path;

use image::{ImageBuffer, Luma};
use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{ForgeError, Result};

/// Smallest side accepted for a screening image: one patch must fit.
pub const MIN_IMAGE_SIDE: usize = 60;

/// Linear-intensity grayscale image, indexed `[row, col]` (i.e. `[y, x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (h, w) = pixels.dim();
        if h < MIN_IMAGE_SIDE || w < MIN_IMAGE_SIDE {
            return Err(ForgeError::InvalidParams(format!(
                "image is {w}x{h}, both sides must be at least {MIN_IMAGE_SIDE}"
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(ForgeError::InvalidParams(
                "image contains non-finite values".into(),
            ));
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    /// Returns `(height, width)`.
    pub fn dim(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    /// Arithmetic mean of all pixels.
    pub fn mean_intensity(&self) -> f64 {
        mean_intensity(self.pixels.view())
    }

    /// `max - min` over all pixels.
    pub fn intensity_range(&self) -> f64 {
        let (lo, hi) = self
            .pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.into_luma16();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(f64::from).collect();
        let pixels = Array2::from_shape_vec((h as usize, w as usize), data)
            .expect("buffer length matches dimensions");
        Self::new(pixels)
    }

    pub fn save_png16(&self, path: &Path) -> Result<()> {
        save_png16(self.pixels.view(), path)
    }
}

/// Arithmetic mean, accumulated row by row.
pub fn mean_intensity(pixels: ArrayView2<f64>) -> f64 {
    let n = pixels.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = pixels.rows().into_iter().map(|r| r.sum()).sum();
    total / n as f64
}

/// Normalized 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / denom).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

fn convolve_lanes(src: &Array2<f64>, axis: Axis, taps: &[f64]) -> Array2<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut out = Array2::zeros(src.raw_dim());
    for (lane_in, mut lane_out) in src.lanes(axis).into_iter().zip(out.lanes_mut(axis)) {
        let n = lane_in.len() as isize;
        for i in 0..n {
            let lo = (i - radius).max(0);
            let hi = (i + radius).min(n - 1);
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for j in lo..=hi {
                let w = taps[(j - i + radius) as usize];
                acc += w * lane_in[j as usize];
                wsum += w;
            }
            lane_out[i as usize] = acc / wsum;
        }
    }
    out
}

/// Separable Gaussian blur. Taps falling outside the image are dropped and
/// the remaining weights renormalized. `sigma == 0` returns a copy.
pub fn gaussian_blur(pixels: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return pixels.clone();
    }
    let taps = gaussian_kernel(sigma);
    let rows_done = convolve_lanes(pixels, Axis(1), &taps);
    convolve_lanes(&rows_done, Axis(0), &taps)
}

/// Writes values rounded and clamped to `0..=65535` as a 16-bit PNG.
pub fn save_png16(pixels: ArrayView2<f64>, path: &Path) -> Result<()> {
    let (h, w) = pixels.dim();
    let raw: Vec<u16> = pixels.iter().map(|&v| quantize_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn quantize_u16(v: f64) -> u16 {
    v.round().clamp(0.0, u16::MAX as f64) as u16
}

/// Writes a boolean mask as an 8-bit PNG (255 = set).
pub fn save_mask_png(mask: ArrayView2<bool>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let raw: Vec<u8> = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}

pub fn load_mask_png(path: &Path) -> Result<Array2<bool>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v >= 128).collect();
    Ok(Array2::from_shape_vec((h as usize, w as usize), data)
        .expect("buffer length matches dimensions"))
}

/// Writes a `[0, 1]` image as an 8-bit PNG, for visual inspection.
pub fn save_unit_png8(pixels: ArrayView2<f64>, path: &Path) -> Result<()> {
    let (h, w) = pixels.dim();
    let raw: Vec<u8> = pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer length matches dimensions");
    buf.save(path)?;
    Ok(())
}
