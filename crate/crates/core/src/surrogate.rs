//! Procedural stand-ins for negative screening images: bright resin, one
//! dark elliptical cell near the centre with a darker nucleus and organelle
//! distractors, optional partial cells at the border, additive noise.
//! Every image carries its ground-truth cell and distractor masks.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::image::GrayImage;
use crate::seed::{derive_seed, rng_from_seed, ForgeRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// `(width, height)`.
    pub image_size: (usize, usize),
    pub cell_semi_axis_range: (f64, f64),
    pub nucleus_radius_range: (f64, f64),
    /// Inclusive.
    pub n_distractors_range: (usize, usize),
    /// Inclusive.
    pub n_partial_cells_range: (usize, usize),
    /// Gaussian noise standard deviation as a fraction of the background.
    pub noise_amplitude: f64,
    pub background_intensity: f64,
    /// Levels relative to the background.
    pub cytoplasm_level: f64,
    pub nucleus_level: f64,
    pub organelle_level: f64,
    /// Peak amplitude of the low-frequency cytoplasm texture, relative.
    pub texture_amplitude: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            image_size: (512, 512),
            cell_semi_axis_range: (110.0, 160.0),
            nucleus_radius_range: (35.0, 60.0),
            n_distractors_range: (3, 8),
            n_partial_cells_range: (0, 2),
            noise_amplitude: 0.05,
            background_intensity: 44_000.0,
            cytoplasm_level: 0.6,
            nucleus_level: 0.45,
            organelle_level: 0.3,
            texture_amplitude: 0.03,
            seed: 0,
        }
    }
}

/// Margin kept between the central cell and the image border.
const BORDER_MARGIN: f64 = 20.0;
const CENTER_JITTER: f64 = 20.0;

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let ordered = |(a, b): (f64, f64)| a > 0.0 && a <= b;
        if !ordered(self.cell_semi_axis_range) || !ordered(self.nucleus_radius_range) {
            return Err(ForgeError::InvalidParams(
                "surrogate ranges must be positive and ordered".into(),
            ));
        }
        if self.n_distractors_range.0 > self.n_distractors_range.1
            || self.n_partial_cells_range.0 > self.n_partial_cells_range.1
        {
            return Err(ForgeError::InvalidParams(
                "count ranges must be ordered".into(),
            ));
        }
        let reach = self.cell_semi_axis_range.1 + CENTER_JITTER + BORDER_MARGIN;
        if 2.0 * reach > w.min(h) as f64 {
            return Err(ForgeError::InvalidParams(format!(
                "cell semi-axes up to {} do not fit a {w}x{h} image",
                self.cell_semi_axis_range.1
            )));
        }
        if self.nucleus_radius_range.1 >= self.cell_semi_axis_range.0 {
            return Err(ForgeError::InvalidParams(
                "nucleus must fit inside the cell".into(),
            ));
        }
        if !(self.noise_amplitude >= 0.0) || !(self.background_intensity > 0.0) {
            return Err(ForgeError::InvalidParams(
                "bad noise or background intensity".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateImage {
    pub id: String,
    pub image: GrayImage,
    pub cell_mask: Array2<bool>,
    /// Pixels covered by organelle distractors.
    pub distractor_mask: Array2<bool>,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    /// < 1 inside, 1 on the boundary.
    fn level(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.level(x, y) <= 1.0
    }
}

enum Organelle {
    Blob(Ellipse),
    /// Vesicle: dark membrane ring of the given width.
    Ring {
        cx: f64,
        cy: f64,
        r: f64,
        width: f64,
    },
}

impl Organelle {
    fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Organelle::Blob(e) => e.contains(x, y),
            Organelle::Ring { cx, cy, r, width } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                (d - r).abs() <= width / 2.0
            }
        }
    }
}

fn uniform(rng: &mut ForgeRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Generates image `index` of the series defined by `config.seed`.
pub fn generate_surrogate(config: &SurrogateConfig, index: usize) -> Result<SurrogateImage> {
    config.validate()?;
    let mut rng = rng_from_seed(derive_seed(config.seed, index as u64));
    let (w, h) = config.image_size;
    let (wf, hf) = (w as f64, h as f64);

    let a = uniform(&mut rng, config.cell_semi_axis_range);
    let b = uniform(&mut rng, config.cell_semi_axis_range);
    let cell = Ellipse {
        cx: (wf - 1.0) / 2.0 + rng.random_range(-CENTER_JITTER..=CENTER_JITTER),
        cy: (hf - 1.0) / 2.0 + rng.random_range(-CENTER_JITTER..=CENTER_JITTER),
        a,
        b,
        theta: rng.random_range(0.0..PI),
    };
    let minor = a.min(b);

    let nr = uniform(&mut rng, config.nucleus_radius_range);
    let slack = (minor - nr - 15.0).max(0.0) * 0.5;
    let (nphi, nd) = (rng.random_range(0.0..TAU), rng.random_range(0.0..=slack));
    let nucleus = Ellipse {
        cx: cell.cx + nd * nphi.cos(),
        cy: cell.cy + nd * nphi.sin(),
        a: nr,
        b: nr * rng.random_range(0.75..=1.0),
        theta: rng.random_range(0.0..PI),
    };

    let n_distractors =
        rng.random_range(config.n_distractors_range.0..=config.n_distractors_range.1);
    let mut organelles = Vec::with_capacity(n_distractors);
    for _ in 0..n_distractors {
        // Position by rejection: inside the cell, clear of its edge.
        let mut placed = None;
        for _ in 0..100 {
            let x = cell.cx + rng.random_range(-a..a);
            let y = cell.cy + rng.random_range(-b.max(a)..b.max(a));
            let shrunk = Ellipse {
                a: a - 25.0,
                b: b - 25.0,
                ..cell
            };
            if shrunk.a > 0.0 && shrunk.b > 0.0 && shrunk.contains(x, y) {
                placed = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = placed else { continue };
        let organelle = if rng.random_bool(0.6) {
            Organelle::Blob(Ellipse {
                cx: x,
                cy: y,
                a: rng.random_range(8.0..18.0),
                b: rng.random_range(5.0..9.0),
                theta: rng.random_range(0.0..PI),
            })
        } else {
            Organelle::Ring {
                cx: x,
                cy: y,
                r: rng.random_range(8.0..14.0),
                width: 3.0,
            }
        };
        organelles.push(organelle);
    }

    let n_partial =
        rng.random_range(config.n_partial_cells_range.0..=config.n_partial_cells_range.1);
    let mut partials = Vec::new();
    for _ in 0..n_partial {
        for _ in 0..50 {
            let r = rng.random_range(90.0..140.0);
            // Centre just beyond a random image edge.
            let t = rng.random_range(0.0..1.0);
            let out = rng.random_range(0.2..0.7) * r;
            let (px, py) = match rng.random_range(0..4) {
                0 => (t * wf, -out),
                1 => (t * wf, hf + out),
                2 => (-out, t * hf),
                _ => (wf + out, t * hf),
            };
            let dist = ((px - cell.cx).powi(2) + (py - cell.cy).powi(2)).sqrt();
            if dist >= r + a.max(b) + 40.0 {
                partials.push(Ellipse {
                    cx: px,
                    cy: py,
                    a: r,
                    b: r,
                    theta: 0.0,
                });
                break;
            }
        }
    }

    // Low-frequency cytoplasm texture: a few random plane waves.
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            let k = rng.random_range(0.02..0.06);
            let dir = rng.random_range(0.0..TAU);
            (k * dir.cos(), k * dir.sin(), rng.random_range(0.0..TAU))
        })
        .collect();
    let texture = |x: f64, y: f64| {
        waves
            .iter()
            .map(|&(kx, ky, ph)| (kx * x + ky * y + ph).sin())
            .sum::<f64>()
            / waves.len() as f64
    };

    let bg = config.background_intensity;
    let normal = Normal::new(0.0, config.noise_amplitude * bg).expect("finite noise level");
    let mut cell_mask = Array2::from_elem((h, w), false);
    let mut distractor_mask = Array2::from_elem((h, w), false);
    let mut pixels = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let mut level = 1.0;
            if partials.iter().any(|p| p.contains(xf, yf)) {
                level = config.cytoplasm_level + config.texture_amplitude * texture(xf, yf);
            }
            if cell.contains(xf, yf) {
                cell_mask[[y, x]] = true;
                level = config.cytoplasm_level + config.texture_amplitude * texture(xf, yf);
                if nucleus.contains(xf, yf) {
                    level = config.nucleus_level;
                }
                if organelles.iter().any(|o| o.covers(xf, yf)) {
                    distractor_mask[[y, x]] = true;
                    level = config.organelle_level;
                }
            }
            let noise = if config.noise_amplitude > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            pixels[[y, x]] = level * bg + noise;
        }
    }

    Ok(SurrogateImage {
        id: format!("surrogate-{index:04}"),
        image: GrayImage::new(pixels)?,
        cell_mask,
        distractor_mask,
    })
}

pub fn generate_surrogate_backgrounds(
    config: &SurrogateConfig,
    count: usize,
) -> Result<Vec<SurrogateImage>> {
    (0..count).map(|i| generate_surrogate(config, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{enumerate_boxes, sample_patch, sample_uniform, SamplerConfig};
    use crate::segment::{segment_central_cell, SegmenterConfig};

    fn clean() -> SurrogateConfig {
        SurrogateConfig {
            noise_amplitude: 0.0,
            n_distractors_range: (0, 0),
            n_partial_cells_range: (0, 0),
            ..Default::default()
        }
    }

    #[test]
    fn clean_single_cell_is_recovered() {
        for i in 0..3 {
            let s = generate_surrogate(&clean(), i).unwrap();
            let mask = segment_central_cell(&s.image, &SegmenterConfig::default()).unwrap();
            let iou = mask.iou(&s.cell_mask);
            assert!(iou >= 0.95, "image {i}: iou {iou}");
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SurrogateConfig {
            seed: 99,
            ..Default::default()
        };
        let a = generate_surrogate(&cfg, 4).unwrap();
        let b = generate_surrogate(&cfg, 4).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.cell_mask, b.cell_mask);
        let c = generate_surrogate(&cfg, 5).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SurrogateConfig {
            image_size: (200, 200),
            ..Default::default()
        };
        assert!(generate_surrogate(&cfg, 0).is_err());
    }

    #[test]
    fn sigma_weighting_avoids_distractors() {
        // With organelles present, σ⁻⁴ draws land on flatter, organelle-free
        // boxes more often than uniform draws do.
        let stats = |n: usize| {
            let cfg = SurrogateConfig {
                n_distractors_range: (n, n),
                seed: 3,
                ..Default::default()
            };
            let s = generate_surrogate(&cfg, 0).unwrap();
            let mask = segment_central_cell(&s.image, &SegmenterConfig::default()).unwrap();
            let cands = enumerate_boxes(&s.image, &mask, &SamplerConfig::default()).unwrap();
            let mut rng = rng_from_seed(8);
            let hit = |c: &crate::sampler::PatchCandidate| {
                c.bbox.view(&s.distractor_mask.mapv(f64::from)).sum() > 0.0
            };
            let (mut ws, mut us, mut wh, mut uh) = (0.0, 0.0, 0usize, 0usize);
            let draws = 1000;
            for _ in 0..draws {
                let w = sample_patch(&cands, &mut rng).unwrap();
                let u = sample_uniform(&cands, &mut rng).unwrap();
                ws += w.sigma;
                us += u.sigma;
                wh += usize::from(hit(&w));
                uh += usize::from(hit(&u));
            }
            (ws / draws as f64, us / draws as f64, wh, uh)
        };
        let (w10, u10, wh10, uh10) = stats(10);
        assert!(w10 < u10, "weighted σ {w10} vs uniform σ {u10}");
        assert!(wh10 < uh10, "weighted hits {wh10} vs uniform hits {uh10}");
        // Distractors raise the typical box σ; weighted draws absorb less of
        // that rise than uniform ones.
        let (w0, u0, _, _) = stats(0);
        assert!(u10 > u0, "uniform σ {u0} -> {u10}");
        assert!(
            w10 - w0 < u10 - u0,
            "weighted rise {} vs uniform rise {}",
            w10 - w0,
            u10 - u0
        );
    }
}
