//! Generation settings and their flat `key = value` file form.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composite::CompositeConfig;
use crate::error::{ForgeError, Result};
use crate::model::ModelParams;
use crate::sampler::{SamplerConfig, SigmaFloor};
use crate::segment::{Connectivity, Polarity, SegmenterConfig};
use crate::slicer::SlicerConfig;
use crate::surrogate::SurrogateConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum BackgroundSource {
    /// Negative screening images. Files directly in the directory are their
    /// own identity; files in a subdirectory share the subdirectory's name
    /// as patient id.
    Directory(PathBuf),
    Surrogate {
        count: usize,
        config: SurrogateConfig,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub n_train_patches: usize,
    pub n_val_patches: usize,
    pub n_test_patches: usize,
    pub positive_fraction: f64,
    /// Share of negatives drawn uniformly over candidates instead of by σ weight.
    pub neg_uniform_frac: f64,
    /// Share of background identities held out for test (and again for val
    /// when val patches are requested).
    pub holdout_identity_fraction: f64,
    pub master_seed: u64,
    pub model: ModelParams,
    pub slicer: SlicerConfig,
    pub segmenter: SegmenterConfig,
    pub sampler: SamplerConfig,
    pub composite: CompositeConfig,
    pub background: BackgroundSource,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_train_patches: 18_000,
            n_val_patches: 0,
            n_test_patches: 2_000,
            positive_fraction: 0.5,
            neg_uniform_frac: 0.5,
            holdout_identity_fraction: 0.1,
            master_seed: 0,
            model: ModelParams::default(),
            slicer: SlicerConfig::default(),
            segmenter: SegmenterConfig::default(),
            sampler: SamplerConfig::default(),
            composite: CompositeConfig::default(),
            background: BackgroundSource::Surrogate {
                count: 40,
                config: SurrogateConfig::default(),
            },
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_patches == 0 || self.n_test_patches == 0 {
            return Err(ForgeError::Config("patch counts must be > 0".into()));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(ForgeError::Config(
                "positive_fraction must be in (0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.neg_uniform_frac) {
            return Err(ForgeError::Config(
                "neg_uniform_frac must be in [0, 1]".into(),
            ));
        }
        if !(self.holdout_identity_fraction > 0.0 && self.holdout_identity_fraction < 0.5) {
            return Err(ForgeError::Config(
                "holdout_identity_fraction must be in (0, 0.5)".into(),
            ));
        }
        if let BackgroundSource::Surrogate { count, config } = &self.background {
            if *count == 0 {
                return Err(ForgeError::Config("surrogate_count must be > 0".into()));
            }
            config.validate()?;
        }
        self.model.validate()?;
        self.slicer.validate()?;
        self.segmenter.validate()?;
        self.sampler.validate()?;
        self.composite.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_flat_str(&text)
    }

    /// Parses the flat key-value form; absent keys keep their defaults.
    pub fn from_flat_str(text: &str) -> Result<Self> {
        let flat: FlatConfig =
            toml::from_str(text).map_err(|e| ForgeError::Config(e.to_string()))?;
        let cfg = flat.apply(Self::default())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every setting, one `key = value` per line.
    pub fn to_flat_string(&self) -> String {
        toml::to_string(&FlatConfig::from(self)).expect("flat config serializes")
    }
}

/// On-disk form: every field optional, no nesting.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FlatConfig {
    n_train_patches: Option<usize>,
    n_val_patches: Option<usize>,
    n_test_patches: Option<usize>,
    positive_fraction: Option<f64>,
    neg_uniform_frac: Option<f64>,
    holdout_identity_fraction: Option<f64>,
    master_seed: Option<u64>,

    background_dir: Option<PathBuf>,
    surrogate_count: Option<usize>,
    surrogate_width: Option<usize>,
    surrogate_height: Option<usize>,
    surrogate_seed: Option<u64>,
    surrogate_noise_amplitude: Option<f64>,
    surrogate_background_intensity: Option<f64>,
    surrogate_cell_semi_axis_min: Option<f64>,
    surrogate_cell_semi_axis_max: Option<f64>,
    surrogate_nucleus_radius_min: Option<f64>,
    surrogate_nucleus_radius_max: Option<f64>,
    surrogate_distractors_min: Option<usize>,
    surrogate_distractors_max: Option<usize>,
    surrogate_partial_cells_min: Option<usize>,
    surrogate_partial_cells_max: Option<usize>,

    model_diameter_nm: Option<f64>,
    model_length_nm: Option<f64>,
    model_wall_thickness_nm: Option<f64>,
    model_resolution_nm_per_voxel: Option<f64>,
    model_pair_gap_nm: Option<f64>,
    model_antialias_samples: Option<usize>,

    slicer_thickness_vx: Option<usize>,
    slicer_blur_sigma_px: Option<f64>,
    slicer_mass_min_fraction: Option<f64>,
    slicer_crop_jitter_px: Option<i64>,
    slicer_max_retries: Option<usize>,

    segmenter_smooth_sigma_px: Option<f64>,
    segmenter_threshold_factor: Option<f64>,
    segmenter_erosion_radius_px: Option<usize>,
    segmenter_dilation_radius_px: Option<usize>,
    segmenter_min_area_px: Option<usize>,
    segmenter_connectivity: Option<u8>,
    segmenter_polarity: Option<Polarity>,

    sampler_grid_stride_px: Option<usize>,
    sampler_cover_min: Option<f64>,
    sampler_sigma_floor_relative: Option<f64>,
    sampler_sigma_floor_absolute: Option<f64>,
    sampler_weight_exponent: Option<f64>,

    composite_alpha: Option<f64>,
    composite_epsilon_min: Option<f64>,
    composite_epsilon_max: Option<f64>,
    composite_quantile: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl FlatConfig {
    fn apply(self, mut c: GenerationConfig) -> Result<GenerationConfig> {
        set(&mut c.n_train_patches, self.n_train_patches);
        set(&mut c.n_val_patches, self.n_val_patches);
        set(&mut c.n_test_patches, self.n_test_patches);
        set(&mut c.positive_fraction, self.positive_fraction);
        set(&mut c.neg_uniform_frac, self.neg_uniform_frac);
        set(
            &mut c.holdout_identity_fraction,
            self.holdout_identity_fraction,
        );
        set(&mut c.master_seed, self.master_seed);

        let m = &mut c.model;
        set(&mut m.diameter_nm, self.model_diameter_nm);
        set(&mut m.length_nm, self.model_length_nm);
        set(&mut m.wall_thickness_nm, self.model_wall_thickness_nm);
        set(
            &mut m.resolution_nm_per_voxel,
            self.model_resolution_nm_per_voxel,
        );
        set(&mut m.pair_gap_nm, self.model_pair_gap_nm);
        set(&mut m.antialias_samples, self.model_antialias_samples);

        let s = &mut c.slicer;
        set(&mut s.thickness_vx, self.slicer_thickness_vx);
        set(&mut s.blur_sigma_px, self.slicer_blur_sigma_px);
        set(&mut s.mass_min_fraction, self.slicer_mass_min_fraction);
        set(&mut s.crop_jitter_px, self.slicer_crop_jitter_px);
        set(&mut s.max_retries, self.slicer_max_retries);

        let g = &mut c.segmenter;
        set(&mut g.smooth_sigma_px, self.segmenter_smooth_sigma_px);
        set(&mut g.threshold_factor, self.segmenter_threshold_factor);
        set(&mut g.erosion_radius_px, self.segmenter_erosion_radius_px);
        set(&mut g.dilation_radius_px, self.segmenter_dilation_radius_px);
        set(&mut g.min_area_px, self.segmenter_min_area_px);
        set(&mut g.polarity, self.segmenter_polarity);
        match self.segmenter_connectivity {
            None => {}
            Some(4) => g.connectivity = Connectivity::Four,
            Some(8) => g.connectivity = Connectivity::Eight,
            Some(other) => {
                return Err(ForgeError::Config(format!(
                    "segmenter_connectivity must be 4 or 8, got {other}"
                )))
            }
        }

        let p = &mut c.sampler;
        set(&mut p.grid_stride_px, self.sampler_grid_stride_px);
        set(&mut p.cover_min, self.sampler_cover_min);
        set(&mut p.weight_exponent, self.sampler_weight_exponent);
        match (
            self.sampler_sigma_floor_relative,
            self.sampler_sigma_floor_absolute,
        ) {
            (Some(_), Some(_)) => {
                return Err(ForgeError::Config(
                    "set only one of sampler_sigma_floor_relative/absolute".into(),
                ))
            }
            (Some(r), None) => p.sigma_floor = SigmaFloor::Relative(r),
            (None, Some(a)) => p.sigma_floor = SigmaFloor::Absolute(a),
            (None, None) => {}
        }

        let k = &mut c.composite;
        set(&mut k.alpha, self.composite_alpha);
        set(&mut k.epsilon_range.0, self.composite_epsilon_min);
        set(&mut k.epsilon_range.1, self.composite_epsilon_max);
        set(&mut k.quantile, self.composite_quantile);

        let surrogate_keys_given = self.surrogate_count.is_some()
            || self.surrogate_width.is_some()
            || self.surrogate_seed.is_some()
            || self.surrogate_noise_amplitude.is_some();
        if let Some(dir) = self.background_dir {
            if surrogate_keys_given {
                return Err(ForgeError::Config(
                    "background_dir and surrogate_* keys are exclusive".into(),
                ));
            }
            c.background = BackgroundSource::Directory(dir);
        } else if let BackgroundSource::Surrogate { count, config } = &mut c.background {
            set(count, self.surrogate_count);
            set(&mut config.image_size.0, self.surrogate_width);
            set(&mut config.image_size.1, self.surrogate_height);
            set(&mut config.seed, self.surrogate_seed);
            set(&mut config.noise_amplitude, self.surrogate_noise_amplitude);
            set(
                &mut config.background_intensity,
                self.surrogate_background_intensity,
            );
            set(
                &mut config.cell_semi_axis_range.0,
                self.surrogate_cell_semi_axis_min,
            );
            set(
                &mut config.cell_semi_axis_range.1,
                self.surrogate_cell_semi_axis_max,
            );
            set(
                &mut config.nucleus_radius_range.0,
                self.surrogate_nucleus_radius_min,
            );
            set(
                &mut config.nucleus_radius_range.1,
                self.surrogate_nucleus_radius_max,
            );
            set(
                &mut config.n_distractors_range.0,
                self.surrogate_distractors_min,
            );
            set(
                &mut config.n_distractors_range.1,
                self.surrogate_distractors_max,
            );
            set(
                &mut config.n_partial_cells_range.0,
                self.surrogate_partial_cells_min,
            );
            set(
                &mut config.n_partial_cells_range.1,
                self.surrogate_partial_cells_max,
            );
        }
        Ok(c)
    }
}

impl From<&GenerationConfig> for FlatConfig {
    fn from(c: &GenerationConfig) -> Self {
        let (floor_rel, floor_abs) = match c.sampler.sigma_floor {
            SigmaFloor::Relative(r) => (Some(r), None),
            SigmaFloor::Absolute(a) => (None, Some(a)),
        };
        let mut flat = FlatConfig {
            n_train_patches: Some(c.n_train_patches),
            n_val_patches: Some(c.n_val_patches),
            n_test_patches: Some(c.n_test_patches),
            positive_fraction: Some(c.positive_fraction),
            neg_uniform_frac: Some(c.neg_uniform_frac),
            holdout_identity_fraction: Some(c.holdout_identity_fraction),
            master_seed: Some(c.master_seed),
            model_diameter_nm: Some(c.model.diameter_nm),
            model_length_nm: Some(c.model.length_nm),
            model_wall_thickness_nm: Some(c.model.wall_thickness_nm),
            model_resolution_nm_per_voxel: Some(c.model.resolution_nm_per_voxel),
            model_pair_gap_nm: Some(c.model.pair_gap_nm),
            model_antialias_samples: Some(c.model.antialias_samples),
            slicer_thickness_vx: Some(c.slicer.thickness_vx),
            slicer_blur_sigma_px: Some(c.slicer.blur_sigma_px),
            slicer_mass_min_fraction: Some(c.slicer.mass_min_fraction),
            slicer_crop_jitter_px: Some(c.slicer.crop_jitter_px),
            slicer_max_retries: Some(c.slicer.max_retries),
            segmenter_smooth_sigma_px: Some(c.segmenter.smooth_sigma_px),
            segmenter_threshold_factor: Some(c.segmenter.threshold_factor),
            segmenter_erosion_radius_px: Some(c.segmenter.erosion_radius_px),
            segmenter_dilation_radius_px: Some(c.segmenter.dilation_radius_px),
            segmenter_min_area_px: Some(c.segmenter.min_area_px),
            segmenter_connectivity: Some(match c.segmenter.connectivity {
                Connectivity::Four => 4,
                Connectivity::Eight => 8,
            }),
            segmenter_polarity: Some(c.segmenter.polarity),
            sampler_grid_stride_px: Some(c.sampler.grid_stride_px),
            sampler_cover_min: Some(c.sampler.cover_min),
            sampler_sigma_floor_relative: floor_rel,
            sampler_sigma_floor_absolute: floor_abs,
            sampler_weight_exponent: Some(c.sampler.weight_exponent),
            composite_alpha: Some(c.composite.alpha),
            composite_epsilon_min: Some(c.composite.epsilon_range.0),
            composite_epsilon_max: Some(c.composite.epsilon_range.1),
            composite_quantile: Some(c.composite.quantile),
            ..Default::default()
        };
        match &c.background {
            BackgroundSource::Directory(dir) => flat.background_dir = Some(dir.clone()),
            BackgroundSource::Surrogate { count, config } => {
                flat.surrogate_count = Some(*count);
                flat.surrogate_width = Some(config.image_size.0);
                flat.surrogate_height = Some(config.image_size.1);
                flat.surrogate_seed = Some(config.seed);
                flat.surrogate_noise_amplitude = Some(config.noise_amplitude);
                flat.surrogate_background_intensity = Some(config.background_intensity);
                flat.surrogate_cell_semi_axis_min = Some(config.cell_semi_axis_range.0);
                flat.surrogate_cell_semi_axis_max = Some(config.cell_semi_axis_range.1);
                flat.surrogate_nucleus_radius_min = Some(config.nucleus_radius_range.0);
                flat.surrogate_nucleus_radius_max = Some(config.nucleus_radius_range.1);
                flat.surrogate_distractors_min = Some(config.n_distractors_range.0);
                flat.surrogate_distractors_max = Some(config.n_distractors_range.1);
                flat.surrogate_partial_cells_min = Some(config.n_partial_cells_range.0);
                flat.surrogate_partial_cells_max = Some(config.n_partial_cells_range.1);
            }
        }
        flat
    }
}
