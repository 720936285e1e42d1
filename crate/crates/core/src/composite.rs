//! Painting a model slice into a background patch by subtraction with a
//! lower-quantile floor: `I = max(Q(bg), bg − α·σ(bg)·S·ε)`.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::sampler::{std_dev, PatchBox};
use crate::slicer::{ModelSlice, SliceSpec};

pub const PATCH_SIZE: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<PatchBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice: Option<SliceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatch {
    pub pixels: Array2<f64>,
    pub label: Label,
    pub provenance: Provenance,
}

impl SyntheticPatch {
    pub fn with_source(mut self, source_id: impl Into<String>, bbox: PatchBox, seed: u64) -> Self {
        self.provenance.source_id = Some(source_id.into());
        self.provenance.bbox = Some(bbox);
        self.provenance.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeConfig {
    pub alpha: f64,
    pub epsilon_range: (f64, f64),
    pub quantile: f64,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon_range: (0.9, 1.1),
            quantile: 0.05,
        }
    }
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.epsilon_range;
        if !(self.alpha > 0.0) {
            return Err(ForgeError::InvalidParams("alpha must be > 0".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(ForgeError::InvalidParams(
                "quantile must be in (0, 1)".into(),
            ));
        }
        if !(lo > 0.0 && lo < hi && hi < 2.0) {
            return Err(ForgeError::InvalidParams(format!(
                "epsilon_range ({lo}, {hi}) must be a nonempty interval inside (0, 2)"
            )));
        }
        Ok(())
    }
}

/// Quantile by linear interpolation between order statistics at rank
/// `(n − 1)·p` (the numpy default convention).
pub fn quantile(values: ArrayView2<f64>, p: f64) -> f64 {
    let mut sorted: Vec<f64> = values.iter().copied().collect();
    assert!(!sorted.is_empty(), "quantile of an empty patch");
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile5(values: ArrayView2<f64>) -> f64 {
    quantile(values, 0.05)
}

fn check_patch(found: (usize, usize)) -> Result<()> {
    if found != (PATCH_SIZE, PATCH_SIZE) {
        return Err(ForgeError::ShapeMismatch {
            expected: (PATCH_SIZE, PATCH_SIZE),
            found,
        });
    }
    Ok(())
}

/// Applies the compositing formula for a given `epsilon`.
pub fn composite_with_epsilon(
    bg: ArrayView2<f64>,
    slice: ArrayView2<f64>,
    alpha: f64,
    quantile_p: f64,
    epsilon: f64,
) -> Array2<f64> {
    let floor = quantile(bg, quantile_p);
    let depth = alpha * std_dev(bg) * epsilon;
    Zip::from(bg)
        .and(slice)
        .map_collect(|&b, &s| floor.max(b - depth * s))
}

/// Positive patch: draws ε once and subtracts the slice.
pub fn composite<R: Rng + ?Sized>(
    bg: &Array2<f64>,
    slice: &ModelSlice,
    config: &CompositeConfig,
    rng: &mut R,
) -> Result<SyntheticPatch> {
    config.validate()?;
    check_patch(bg.dim())?;
    check_patch(slice.pixels().dim())?;
    let (lo, hi) = config.epsilon_range;
    let epsilon = rng.random_range(lo..hi);
    let pixels = composite_with_epsilon(
        bg.view(),
        slice.pixels().view(),
        config.alpha,
        config.quantile,
        epsilon,
    );
    Ok(SyntheticPatch {
        pixels,
        label: Label::Positive,
        provenance: Provenance {
            slice: Some(*slice.spec()),
            alpha: Some(config.alpha),
            epsilon: Some(epsilon),
            ..Provenance::default()
        },
    })
}

/// Negative patch: the background, untouched.
pub fn make_negative(bg: &Array2<f64>) -> Result<SyntheticPatch> {
    check_patch(bg.dim())?;
    Ok(SyntheticPatch {
        pixels: bg.clone(),
        label: Label::Negative,
        provenance: Provenance::default(),
    })
}
