//! Central-cell selection: smooth, binarize against a fraction of the mean
//! intensity, erode, keep large components, take the one nearest the image
//! centre, dilate.

mod labeling;
mod morphology;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use labeling::{label_components, Component, Connectivity};
pub use morphology::{dilate_disk, erode_disk};

use crate::error::{ForgeError, Result};
use crate::image::{gaussian_blur, GrayImage};

/// Which side of the threshold counts as cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Cells darker than the resin background.
    #[default]
    Dark,
    Bright,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub smooth_sigma_px: f64,
    pub threshold_factor: f64,
    pub erosion_radius_px: usize,
    pub dilation_radius_px: usize,
    pub min_area_px: usize,
    pub connectivity: Connectivity,
    pub polarity: Polarity,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            smooth_sigma_px: 4.0,
            threshold_factor: 0.9,
            erosion_radius_px: 5,
            dilation_radius_px: 8,
            min_area_px: 2000,
            connectivity: Connectivity::Eight,
            polarity: Polarity::Dark,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_factor > 0.0 && self.threshold_factor < 2.0) {
            return Err(ForgeError::InvalidParams(format!(
                "threshold_factor {} must be in (0, 2)",
                self.threshold_factor
            )));
        }
        if !(self.smooth_sigma_px >= 0.0) {
            return Err(ForgeError::InvalidParams(
                "smooth_sigma_px must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Binary mask of the selected cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    bits: Array2<bool>,
    area_px: usize,
    /// `(x, y)`.
    centroid: [f64; 2],
}

impl CellMask {
    /// Builds a mask from raw bits, computing area and centroid.
    pub fn from_bits(bits: Array2<bool>) -> Self {
        let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for ((y, x), &b) in bits.indexed_iter() {
            if b {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
        let centroid = if n > 0 {
            [sx / n as f64, sy / n as f64]
        } else {
            [f64::NAN, f64::NAN]
        };
        Self {
            bits,
            area_px: n,
            centroid,
        }
    }

    pub fn bits(&self) -> &Array2<bool> {
        &self.bits
    }

    pub fn area_px(&self) -> usize {
        self.area_px
    }

    pub fn centroid_xy(&self) -> [f64; 2] {
        self.centroid
    }

    pub fn dim(&self) -> (usize, usize) {
        self.bits.dim()
    }

    pub fn iou(&self, other: &Array2<bool>) -> f64 {
        iou(&self.bits, other)
    }
}

/// Intersection over union of two equally shaped masks; 1 when both empty.
pub fn iou(a: &Array2<bool>, b: &Array2<bool>) -> f64 {
    assert_eq!(a.dim(), b.dim(), "mask shapes differ");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b.iter()) {
        inter += usize::from(p && q);
        union += usize::from(p || q);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Foreground before erosion: smoothed pixels on the cell side of
/// `threshold_factor × mean(image)`.
pub fn binarize(image: &GrayImage, config: &SegmenterConfig) -> Array2<bool> {
    let threshold = config.threshold_factor * image.mean_intensity();
    let smoothed = gaussian_blur(image.pixels(), config.smooth_sigma_px);
    match config.polarity {
        Polarity::Dark => smoothed.mapv(|v| v < threshold),
        Polarity::Bright => smoothed.mapv(|v| v > threshold),
    }
}

pub fn segment_central_cell(image: &GrayImage, config: &SegmenterConfig) -> Result<CellMask> {
    config.validate()?;
    let foreground = binarize(image, config);
    let eroded = erode_disk(&foreground, config.erosion_radius_px);
    let (labels, comps) = label_components(&eroded, config.connectivity);

    let (h, w) = image.dim();
    let center = [(h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0];
    let dist2 =
        |c: &Component| (c.centroid[0] - center[0]).powi(2) + (c.centroid[1] - center[1]).powi(2);
    let chosen = comps
        .iter()
        .filter(|c| c.area >= config.min_area_px)
        .min_by(|a, b| dist2(a).total_cmp(&dist2(b)))
        .ok_or(ForgeError::NoCellFound)?;

    let selected = labels.mapv(|l| l == chosen.label);
    Ok(CellMask::from_bits(dilate_disk(
        &selected,
        config.dilation_radius_px,
    )))
}
