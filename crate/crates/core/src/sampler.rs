//! Background patch candidates inside a cell mask, weighted toward flat
//! regions with probability ∝ σ^-exponent.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::image::GrayImage;
use crate::segment::CellMask;

/// Square box, top-left at `(x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchBox {
    pub x0: usize,
    pub y0: usize,
    pub size: usize,
}

impl PatchBox {
    pub fn view<'a>(&self, pixels: &'a Array2<f64>) -> ArrayView2<'a, f64> {
        pixels.slice(s![
            self.y0..self.y0 + self.size,
            self.x0..self.x0 + self.size
        ])
    }

    pub fn extract(&self, image: &GrayImage) -> Array2<f64> {
        self.view(image.pixels()).to_owned()
    }

    pub fn fits(&self, height: usize, width: usize) -> bool {
        self.x0 + self.size <= width && self.y0 + self.size <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchCandidate {
    #[serde(rename = "box")]
    pub bbox: PatchBox,
    /// Intensity standard deviation inside the box, clamped at the floor.
    pub sigma: f64,
    /// Normalized selection probability.
    pub weight: f64,
    /// Fraction of box pixels inside the cell mask.
    pub coverage: f64,
}

/// Lower clamp on σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum SigmaFloor {
    /// Fraction of the image's intensity range.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub box_size: usize,
    pub grid_stride_px: usize,
    pub cover_min: f64,
    pub sigma_floor: SigmaFloor,
    pub weight_exponent: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            box_size: 60,
            grid_stride_px: 30,
            cover_min: 0.9,
            sigma_floor: SigmaFloor::Relative(1e-3),
            weight_exponent: 4.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cover_min > 0.0 && self.cover_min <= 1.0) {
            return Err(ForgeError::InvalidParams(format!(
                "cover_min {} must be in (0, 1]",
                self.cover_min
            )));
        }
        if self.grid_stride_px == 0 || self.box_size == 0 {
            return Err(ForgeError::InvalidParams(
                "stride and box size must be >= 1".into(),
            ));
        }
        let floor_ok = match self.sigma_floor {
            SigmaFloor::Relative(f) | SigmaFloor::Absolute(f) => f >= 0.0 && f.is_finite(),
        };
        if !floor_ok || !(self.weight_exponent >= 0.0) {
            return Err(ForgeError::InvalidParams(
                "bad sigma floor or exponent".into(),
            ));
        }
        Ok(())
    }

    fn floor_for(&self, image: &GrayImage) -> f64 {
        let raw = match self.sigma_floor {
            SigmaFloor::Relative(f) => f * image.intensity_range(),
            SigmaFloor::Absolute(v) => v,
        };
        // A flat image would otherwise give infinite weights.
        raw.max(f64::MIN_POSITIVE.sqrt())
    }
}

/// Population standard deviation.
pub fn std_dev(values: ArrayView2<f64>) -> f64 {
    let n = values.len() as f64;
    let mean = values.sum() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn summed_area(mask: &Array2<bool>) -> Array2<u32> {
    let (h, w) = mask.dim();
    let mut sat = Array2::zeros((h + 1, w + 1));
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += u32::from(mask[[y, x]]);
            sat[[y + 1, x + 1]] = sat[[y, x + 1]] + row;
        }
    }
    sat
}

/// All stride-aligned boxes with mask coverage ≥ `cover_min`, carrying
/// normalized σ weights.
pub fn enumerate_boxes(
    image: &GrayImage,
    mask: &CellMask,
    config: &SamplerConfig,
) -> Result<Vec<PatchCandidate>> {
    config.validate()?;
    let (h, w) = image.dim();
    if mask.dim() != (h, w) {
        return Err(ForgeError::ShapeMismatch {
            expected: (h, w),
            found: mask.dim(),
        });
    }
    let size = config.box_size;
    if size > h || size > w {
        return Err(ForgeError::NoCandidates);
    }
    let sat = summed_area(mask.bits());
    let floor = config.floor_for(image);
    let area = (size * size) as f64;

    let mut out = Vec::new();
    for y0 in (0..=h - size).step_by(config.grid_stride_px) {
        for x0 in (0..=w - size).step_by(config.grid_stride_px) {
            let (y1, x1) = (y0 + size, x0 + size);
            let inside = sat[[y1, x1]] + sat[[y0, x0]] - sat[[y0, x1]] - sat[[y1, x0]];
            let coverage = inside as f64 / area;
            if coverage < config.cover_min {
                continue;
            }
            let bbox = PatchBox { x0, y0, size };
            let sigma = std_dev(bbox.view(image.pixels())).max(floor);
            out.push(PatchCandidate {
                bbox,
                sigma,
                weight: 0.0,
                coverage,
            });
        }
    }
    if out.is_empty() {
        return Err(ForgeError::NoCandidates);
    }
    normalize_weights(&mut out, config.weight_exponent)?;
    Ok(out)
}

/// `weight_i = σ_i^-p / Σ_j σ_j^-p`, evaluated in log space.
pub fn normalize_weights(candidates: &mut [PatchCandidate], exponent: f64) -> Result<()> {
    if candidates.is_empty() {
        return Err(ForgeError::EmptyCandidateSet);
    }
    let logs: Vec<f64> = candidates
        .iter()
        .map(|c| -exponent * c.sigma.ln())
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    for (c, r) in candidates.iter_mut().zip(raw) {
        c.weight = r / total;
    }
    Ok(())
}

/// Categorical draw over the normalized weights.
pub fn sample_patch<R: Rng + ?Sized>(
    candidates: &[PatchCandidate],
    rng: &mut R,
) -> Result<PatchCandidate> {
    let cumulative: Vec<f64> = candidates
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().ok_or(ForgeError::EmptyCandidateSet)?;
    let u = rng.random::<f64>() * total;
    let idx = cumulative
        .partition_point(|&c| c <= u)
        .min(candidates.len() - 1);
    Ok(candidates[idx])
}

/// Draw ignoring weights.
pub fn sample_uniform<R: Rng + ?Sized>(
    candidates: &[PatchCandidate],
    rng: &mut R,
) -> Result<PatchCandidate> {
    if candidates.is_empty() {
        return Err(ForgeError::EmptyCandidateSet);
    }
    Ok(candidates[rng.random_range(0..candidates.len())])
}
