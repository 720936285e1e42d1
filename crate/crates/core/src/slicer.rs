//! Simulated TEM sectioning of the voxel model: rotate, cut a slab, sum it
//! along depth, blur, crop and normalize.

use std::f64::consts::TAU;

use ndarray::{Array2, Array3, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::image::gaussian_blur;
use crate::model::VoxelModel;

/// Provenance of one model slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    /// Rotation angles in radians about x, then y, then z.
    pub angles: [f64; 3],
    pub offset_vx: usize,
    pub thickness_vx: usize,
    pub blur_sigma_px: f64,
    /// Top-left `[row, col]` of the crop window in projection coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_origin: Option<[i64; 2]>,
}

/// A non-negative 2D projection, indexed `[row, col]` = `[y, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSlice {
    pixels: Array2<f64>,
    max_value: f64,
    spec: SliceSpec,
}

impl ModelSlice {
    pub fn new(pixels: Array2<f64>, spec: SliceSpec) -> Self {
        let max_value = pixels.iter().copied().fold(0.0, f64::max);
        Self {
            pixels,
            max_value,
            spec,
        }
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn width(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn height(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn max_value(&self) -> f64 {
        self.max_value
    }

    pub fn spec(&self) -> &SliceSpec {
        &self.spec
    }

    pub fn total_mass(&self) -> f64 {
        self.pixels.sum()
    }

    /// Scales so the maximum is exactly 1. An all-zero slice is unchanged.
    pub fn normalize(mut self) -> Self {
        if self.max_value > 0.0 {
            let m = self.max_value;
            self.pixels.mapv_inplace(|v| v / m);
            self.max_value = self.pixels.iter().copied().fold(0.0, f64::max);
        }
        self
    }

    /// Intensity centroid `[row, col]`, or `None` when the slice is empty.
    pub fn centroid(&self) -> Option<[f64; 2]> {
        let total = self.total_mass();
        if total <= 0.0 {
            return None;
        }
        let (mut r, mut c) = (0.0, 0.0);
        for ((i, j), &v) in self.pixels.indexed_iter() {
            r += i as f64 * v;
            c += j as f64 * v;
        }
        Some([r / total, c / total])
    }

    /// Extracts a `size`×`size` window starting at `origin` (may lie partly
    /// outside; missing pixels are zero).
    pub fn crop(&self, origin: [i64; 2], size: usize) -> Self {
        let (h, w) = self.pixels.dim();
        let out = Array2::from_shape_fn((size, size), |(i, j)| {
            let r = origin[0] + i as i64;
            let c = origin[1] + j as i64;
            if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                self.pixels[[r as usize, c as usize]]
            } else {
                0.0
            }
        });
        let spec = SliceSpec {
            crop_origin: Some(origin),
            ..self.spec
        };
        Self::new(out, spec)
    }
}

/// `R = Rz(az) · Ry(ay) · Rx(ax)`: rotate about x first, then y, then z.
pub fn rotation_matrix(angles: [f64; 3]) -> [[f64; 3]; 3] {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sz, cz) = angles[2].sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

fn transpose(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

/// Trilinear interpolation at a continuous index; voxels outside the grid
/// count as zero.
#[inline]
pub(crate) fn trilinear(grid: &Array3<f64>, q: [f64; 3]) -> f64 {
    let n = grid.dim().0 as isize;
    let base = [q[0].floor(), q[1].floor(), q[2].floor()];
    let i0 = [base[0] as isize, base[1] as isize, base[2] as isize];
    if i0.iter().any(|&i| i < -1 || i >= n) {
        return 0.0;
    }
    let f = [q[0] - base[0], q[1] - base[1], q[2] - base[2]];
    let mut acc = 0.0;
    for (dx, wx) in [(0, 1.0 - f[0]), (1, f[0])] {
        let x = i0[0] + dx;
        if wx == 0.0 || x < 0 || x >= n {
            continue;
        }
        for (dy, wy) in [(0, 1.0 - f[1]), (1, f[1])] {
            let y = i0[1] + dy;
            if wy == 0.0 || y < 0 || y >= n {
                continue;
            }
            for (dz, wz) in [(0, 1.0 - f[2]), (1, f[2])] {
                let z = i0[2] + dz;
                if wz == 0.0 || z < 0 || z >= n {
                    continue;
                }
                acc += wx * wy * wz * grid[[x as usize, y as usize, z as usize]];
            }
        }
    }
    acc
}

/// Resamples the grid rotated about its centre by inverse mapping with
/// trilinear interpolation. Same shape as the input.
pub fn rotate_model(model: &VoxelModel, angles: [f64; 3]) -> VoxelModel {
    if angles == [0.0; 3] {
        return model.clone();
    }
    let inv = transpose(rotation_matrix(angles));
    let c = model.center_index();
    let src = model.grid();
    let mut out = Array3::zeros(src.raw_dim());
    Zip::indexed(&mut out).par_for_each(|(i, j, k), v| {
        let p = [i as f64 - c, j as f64 - c, k as f64 - c];
        *v = trilinear(src, apply(&inv, p, c));
    });
    model.with_grid(out)
}

#[inline]
fn apply(m: &[[f64; 3]; 3], p: [f64; 3], c: f64) -> [f64; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + c,
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + c,
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + c,
    ]
}

fn check_slab(side: usize, offset_vx: usize, thickness_vx: usize) -> Result<()> {
    if thickness_vx == 0 || thickness_vx > side {
        return Err(ForgeError::InvalidParams(format!(
            "slab thickness {thickness_vx} must be in 1..={side}"
        )));
    }
    let max = side - thickness_vx;
    if offset_vx > max {
        return Err(ForgeError::OffsetOutOfRange {
            offset: offset_vx,
            max,
        });
    }
    Ok(())
}

/// Sums the slab `z ∈ [offset, offset + thickness)` into a 2D image.
pub fn extract_and_project(
    model: &VoxelModel,
    offset_vx: usize,
    thickness_vx: usize,
) -> Result<ModelSlice> {
    let n = model.side();
    check_slab(n, offset_vx, thickness_vx)?;
    let grid = model.grid();
    let pixels = Array2::from_shape_fn((n, n), |(y, x)| {
        (offset_vx..offset_vx + thickness_vx)
            .map(|z| grid[[x, y, z]])
            .sum()
    });
    Ok(ModelSlice::new(
        pixels,
        SliceSpec {
            angles: [0.0; 3],
            offset_vx,
            thickness_vx,
            blur_sigma_px: 0.0,
            crop_origin: None,
        },
    ))
}

/// Equivalent to `extract_and_project(rotate_model(model, angles), ..)` but
/// only resamples the voxels inside the slab.
pub fn project_rotated_slab(
    model: &VoxelModel,
    angles: [f64; 3],
    offset_vx: usize,
    thickness_vx: usize,
) -> Result<ModelSlice> {
    let n = model.side();
    check_slab(n, offset_vx, thickness_vx)?;
    let inv = transpose(rotation_matrix(angles));
    let c = model.center_index();
    let grid = model.grid();
    // Stepping one voxel along output z moves the source point by inv · e_z.
    let step = [inv[0][2], inv[1][2], inv[2][2]];
    let z0 = offset_vx as f64 - c;
    let pixels = Array2::from_shape_fn((n, n), |(y, x)| {
        let mut q = apply(&inv, [x as f64 - c, y as f64 - c, z0], c);
        let mut acc = 0.0;
        for _ in 0..thickness_vx {
            acc += trilinear(grid, q);
            q = [q[0] + step[0], q[1] + step[1], q[2] + step[2]];
        }
        acc
    });
    Ok(ModelSlice::new(
        pixels,
        SliceSpec {
            angles,
            offset_vx,
            thickness_vx,
            blur_sigma_px: 0.0,
            crop_origin: None,
        },
    ))
}

/// Separable Gaussian blur of a slice; `sigma_px == 0` is the identity.
pub fn blur(slice: &ModelSlice, sigma_px: f64) -> ModelSlice {
    let spec = SliceSpec {
        blur_sigma_px: sigma_px,
        ..slice.spec
    };
    ModelSlice::new(gaussian_blur(&slice.pixels, sigma_px), spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicerConfig {
    pub thickness_vx: usize,
    pub blur_sigma_px: f64,
    /// Slices with total mass below this fraction of the model's densest
    /// axis-aligned slab are redrawn.
    pub mass_min_fraction: f64,
    pub crop_size: usize,
    /// Uniform jitter of the crop centre around the centroid, ± pixels.
    pub crop_jitter_px: i64,
    pub max_retries: usize,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        Self {
            thickness_vx: 10,
            blur_sigma_px: 1.0,
            mass_min_fraction: 0.05,
            crop_size: 60,
            crop_jitter_px: 10,
            max_retries: 100,
        }
    }
}

impl SlicerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thickness_vx == 0 {
            return Err(ForgeError::InvalidParams(
                "thickness_vx must be >= 1".into(),
            ));
        }
        if !(self.blur_sigma_px >= 0.0) {
            return Err(ForgeError::InvalidParams(
                "blur_sigma_px must be >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.mass_min_fraction) {
            return Err(ForgeError::InvalidParams(
                "mass_min_fraction must be in [0, 1)".into(),
            ));
        }
        if self.crop_size == 0 || self.crop_jitter_px < 0 {
            return Err(ForgeError::InvalidParams("bad crop settings".into()));
        }
        Ok(())
    }
}

/// Draws random slices from one model. Precomputes the rejection threshold
/// and the occupied bounding box.
#[derive(Debug, Clone)]
pub struct SliceSampler {
    model: VoxelModel,
    config: SlicerConfig,
    mass_min: f64,
    occupied: ([usize; 3], [usize; 3]),
}

impl SliceSampler {
    pub fn new(model: VoxelModel, config: SlicerConfig) -> Result<Self> {
        config.validate()?;
        if config.thickness_vx > model.side() {
            return Err(ForgeError::InvalidParams(format!(
                "slab thickness {} exceeds grid side {}",
                config.thickness_vx,
                model.side()
            )));
        }
        let occupied = model
            .occupied_bounds()
            .ok_or_else(|| ForgeError::InvalidParams("model grid is empty".into()))?;
        let mass_min = config.mass_min_fraction * model.max_slab_mass(config.thickness_vx);
        Ok(Self {
            model,
            config,
            mass_min,
            occupied,
        })
    }

    pub fn model(&self) -> &VoxelModel {
        &self.model
    }

    pub fn config(&self) -> &SlicerConfig {
        &self.config
    }

    /// Minimum total mass an accepted slice must carry.
    pub fn mass_min(&self) -> f64 {
        self.mass_min
    }

    /// Inclusive range of slab offsets whose slab meets the rotated occupied
    /// bounding box.
    pub fn offset_range(&self, angles: [f64; 3]) -> (usize, usize) {
        let rot = rotation_matrix(angles);
        let c = self.model.center_index();
        let (lo, hi) = self.occupied;
        let (mut zmin, mut zmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for corner in 0..8 {
            // One voxel of margin for the trilinear footprint.
            let pick = |d: usize| {
                if corner >> d & 1 == 0 {
                    lo[d] as f64 - 1.0
                } else {
                    hi[d] as f64 + 1.0
                }
            };
            let p = [pick(0) - c, pick(1) - c, pick(2) - c];
            let z = apply(&rot, p, c)[2];
            zmin = zmin.min(z);
            zmax = zmax.max(z);
        }
        let n = self.model.side();
        let t = self.config.thickness_vx;
        let max_offset = n - t;
        let a = (zmin.ceil() as i64 - t as i64 + 1).clamp(0, max_offset as i64) as usize;
        let b = (zmax.floor() as i64).clamp(0, max_offset as i64) as usize;
        (a, b.max(a))
    }

    /// Rotate, project, blur, crop around the intensity centroid and
    /// normalize to max 1. Near-empty slabs are redrawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ModelSlice> {
        let cfg = &self.config;
        for _ in 0..cfg.max_retries {
            let angles = [
                rng.random_range(0.0..TAU),
                rng.random_range(0.0..TAU),
                rng.random_range(0.0..TAU),
            ];
            let (a, b) = self.offset_range(angles);
            let offset = rng.random_range(a..=b);
            let projected = project_rotated_slab(&self.model, angles, offset, cfg.thickness_vx)?;
            if projected.total_mass() < self.mass_min || projected.total_mass() <= 0.0 {
                continue;
            }
            let blurred = blur(&projected, cfg.blur_sigma_px);
            let centroid = blurred.centroid().expect("nonzero mass");
            let j = cfg.crop_jitter_px;
            let jitter = [rng.random_range(-j..=j), rng.random_range(-j..=j)];
            let half = (cfg.crop_size / 2) as i64;
            let origin = [
                centroid[0].round() as i64 - half + jitter[0],
                centroid[1].round() as i64 - half + jitter[1],
            ];
            return Ok(blurred.crop(origin, cfg.crop_size).normalize());
        }
        Err(ForgeError::ExhaustedRetries(cfg.max_retries))
    }
}

/// Convenience wrapper building a sampler for a single draw.
pub fn sample_random_slice<R: Rng + ?Sized>(
    model: &VoxelModel,
    rng: &mut R,
    config: &SlicerConfig,
) -> Result<ModelSlice> {
    SliceSampler::new(model.clone(), *config)?.sample(rng)
}
