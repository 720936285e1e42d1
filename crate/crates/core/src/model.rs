//! Voxel model of a centriole pair: two orthogonal hollow cylinders.
//!
//! Model space is in nanometres. Cylinder A (mother) has its axis on the z
//! axis and is centred on the origin. Cylinder B (daughter) has its axis on
//! the x axis, pointing at A's midpoint, with its near end face `pair_gap_nm`
//! away from A's outer wall. Both axes lie in the plane `y = 0`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::image::save_unit_png8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub diameter_nm: f64,
    pub length_nm: f64,
    pub wall_thickness_nm: f64,
    pub resolution_nm_per_voxel: f64,
    /// Clearance between A's outer wall and B's near end face.
    pub pair_gap_nm: f64,
    /// Supersampling points per voxel edge.
    pub antialias_samples: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            diameter_nm: 250.0,
            length_nm: 500.0,
            wall_thickness_nm: 20.0,
            resolution_nm_per_voxel: 20.0,
            pair_gap_nm: 100.0,
            antialias_samples: 3,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("diameter_nm", self.diameter_nm),
            ("length_nm", self.length_nm),
            ("wall_thickness_nm", self.wall_thickness_nm),
            ("resolution_nm_per_voxel", self.resolution_nm_per_voxel),
            ("pair_gap_nm", self.pair_gap_nm),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ForgeError::InvalidParams(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if self.wall_thickness_nm > self.diameter_nm / 2.0 {
            return Err(ForgeError::InvalidParams(format!(
                "wall_thickness_nm {} exceeds radius {}",
                self.wall_thickness_nm,
                self.diameter_nm / 2.0
            )));
        }
        if self.diameter_nm / self.resolution_nm_per_voxel < 8.0 {
            return Err(ForgeError::InvalidParams(format!(
                "resolution {} nm/voxel leaves fewer than 8 voxels across the diameter",
                self.resolution_nm_per_voxel
            )));
        }
        if self.antialias_samples == 0 {
            return Err(ForgeError::InvalidParams(
                "antialias_samples must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn outer_radius(&self) -> f64 {
        self.diameter_nm / 2.0
    }

    pub fn inner_radius(&self) -> f64 {
        self.outer_radius() - self.wall_thickness_nm
    }

    /// Centre of cylinder B along the x axis.
    pub fn daughter_center_x(&self) -> f64 {
        self.outer_radius() + self.pair_gap_nm + self.length_nm / 2.0
    }

    /// Analytic volume of both shells, nm³.
    pub fn analytic_volume(&self) -> f64 {
        let (r_out, r_in) = (self.outer_radius(), self.inner_radius());
        2.0 * std::f64::consts::PI * (r_out * r_out - r_in * r_in) * self.length_nm
    }

    /// Axis-aligned bounding box of the pair in model space, `(min, max)`.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let r = self.outer_radius();
        let half_len = self.length_nm / 2.0;
        let xmax = self.daughter_center_x() + half_len;
        let zext = half_len.max(r);
        ([-r, -r, -zext], [xmax, r, zext])
    }

    /// Point-in-shell test against either cylinder.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let r_out2 = self.outer_radius().powi(2);
        let r_in = self.inner_radius();
        let r_in2 = if r_in > 0.0 { r_in * r_in } else { 0.0 };
        let half_len = self.length_nm / 2.0;
        let in_annulus = |d2: f64| d2 <= r_out2 && d2 >= r_in2;

        let [x, y, z] = p;
        if z.abs() <= half_len && in_annulus(x * x + y * y) {
            return true;
        }
        (x - self.daughter_center_x()).abs() <= half_len && in_annulus(y * y + z * z)
    }
}

/// Cube-shaped soft occupancy grid indexed `[x, y, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelModel {
    grid: Array3<f64>,
    resolution_nm_per_voxel: f64,
    /// Model-space position of the centre of voxel `(0, 0, 0)`.
    origin: [f64; 3],
}

impl VoxelModel {
    /// Wraps an existing cube grid. Values must lie in `[0, 1]`.
    pub fn from_grid(
        grid: Array3<f64>,
        resolution_nm_per_voxel: f64,
        origin: [f64; 3],
    ) -> Result<Self> {
        let (nx, ny, nz) = grid.dim();
        if nx != ny || ny != nz {
            return Err(ForgeError::InvalidParams(format!(
                "voxel grid must be cube-shaped, got {nx}x{ny}x{nz}"
            )));
        }
        if grid.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ForgeError::InvalidParams("occupancy outside [0, 1]".into()));
        }
        Ok(Self {
            grid,
            resolution_nm_per_voxel,
            origin,
        })
    }

    pub(crate) fn with_grid(&self, grid: Array3<f64>) -> Self {
        Self {
            grid,
            resolution_nm_per_voxel: self.resolution_nm_per_voxel,
            origin: self.origin,
        }
    }

    pub fn grid(&self) -> &Array3<f64> {
        &self.grid
    }

    pub fn side(&self) -> usize {
        self.grid.dim().0
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.grid.dim()
    }

    pub fn resolution_nm_per_voxel(&self) -> f64 {
        self.resolution_nm_per_voxel
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Continuous index of the grid centre, the rotation pivot.
    pub fn center_index(&self) -> f64 {
        (self.side() as f64 - 1.0) / 2.0
    }

    /// Continuous voxel index of a model-space point.
    pub fn index_of(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.resolution_nm_per_voxel;
        [
            (p[0] - self.origin[0]) / r,
            (p[1] - self.origin[1]) / r,
            (p[2] - self.origin[2]) / r,
        ]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.resolution_nm_per_voxel.powi(3)
    }

    /// Inclusive index bounds of nonzero voxels, or `None` for an empty grid.
    pub fn occupied_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for ((i, j, k), &v) in self.grid.indexed_iter() {
            if v > 0.0 {
                any = true;
                for (d, idx) in [i, j, k].into_iter().enumerate() {
                    lo[d] = lo[d].min(idx);
                    hi[d] = hi[d].max(idx);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Largest total occupancy of any `thickness`-voxel axis-aligned slab,
    /// over all three axes.
    pub fn max_slab_mass(&self, thickness: usize) -> f64 {
        let thickness = thickness.clamp(1, self.side());
        let mut best: f64 = 0.0;
        for axis in 0..3 {
            let plane: Vec<f64> = self.grid.axis_iter(Axis(axis)).map(|p| p.sum()).collect();
            for w in plane.windows(thickness) {
                best = best.max(w.iter().sum());
            }
        }
        best
    }

    /// Writes every z-plane as an 8-bit PNG plus a `header.txt` sidecar.
    pub fn export_debug(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (nx, ny, nz) = self.shape();
        for k in 0..nz {
            // rows = y, cols = x
            let plane: Array2<f64> = self.grid.index_axis(Axis(2), k).t().to_owned();
            save_unit_png8(plane.view(), &dir.join(format!("z{k:04}.png")))?;
        }
        let mut header = String::new();
        writeln!(header, "shape = {nx} {ny} {nz}").unwrap();
        writeln!(
            header,
            "resolution_nm_per_voxel = {}",
            self.resolution_nm_per_voxel
        )
        .unwrap();
        writeln!(
            header,
            "origin_nm = {} {} {}",
            self.origin[0], self.origin[1], self.origin[2]
        )
        .unwrap();
        fs::write(dir.join("header.txt"), header)?;
        Ok(())
    }
}

/// Builds the soft occupancy grid: each voxel holds the fraction of its
/// `s³` supersample points that fall inside either shell.
pub fn build_model(params: &ModelParams) -> Result<VoxelModel> {
    params.validate()?;
    let res = params.resolution_nm_per_voxel;
    let (lo, hi) = params.bounding_box();
    let max_extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max) / res;
    let side = (3f64.sqrt() * max_extent).ceil() as usize + 2;
    let c = (side as f64 - 1.0) / 2.0;
    let center = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let origin = [
        center[0] - c * res,
        center[1] - c * res,
        center[2] - c * res,
    ];

    let s = params.antialias_samples;
    let sub: Vec<f64> = (0..s)
        .map(|m| ((m as f64 + 0.5) / s as f64 - 0.5) * res)
        .collect();
    let norm = 1.0 / (s * s * s) as f64;

    // Only voxels whose cube can touch the bounding box need sampling.
    let index_range = |d: usize| {
        let a = ((lo[d] - origin[d]) / res - 1.0).floor().max(0.0) as usize;
        let b = (((hi[d] - origin[d]) / res + 1.0).ceil() as usize).min(side - 1);
        a..=b
    };

    let mut grid = Array3::zeros((side, side, side));
    for i in index_range(0) {
        let x0 = origin[0] + i as f64 * res;
        for j in index_range(1) {
            let y0 = origin[1] + j as f64 * res;
            for k in index_range(2) {
                let z0 = origin[2] + k as f64 * res;
                let mut hits = 0usize;
                for &dx in &sub {
                    for &dy in &sub {
                        for &dz in &sub {
                            if params.contains([x0 + dx, y0 + dy, z0 + dz]) {
                                hits += 1;
                            }
                        }
                    }
                }
                grid[[i, j, k]] = hits as f64 * norm;
            }
        }
    }
    Ok(VoxelModel {
        grid,
        resolution_nm_per_voxel: res,
        origin,
    })
}

/// Sum of occupancy times voxel volume, nm³.
pub fn occupancy_mass(model: &VoxelModel) -> f64 {
    model.grid.sum() * model.voxel_volume()
}
