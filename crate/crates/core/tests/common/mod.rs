//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

type Mat = [[f64; 3]; 3];

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `Rz · Ry · Rx`, built from the elementary rotations.
pub fn rotation(angles: [f64; 3]) -> Mat {
    let [a, b, g] = angles;
    let rx = [
        [1.0, 0.0, 0.0],
        [0.0, a.cos(), -a.sin()],
        [0.0, a.sin(), a.cos()],
    ];
    let ry = [
        [b.cos(), 0.0, b.sin()],
        [0.0, 1.0, 0.0],
        [-b.sin(), 0.0, b.cos()],
    ];
    let rz = [
        [g.cos(), -g.sin(), 0.0],
        [g.sin(), g.cos(), 0.0],
        [0.0, 0.0, 1.0],
    ];
    matmul(&rz, &matmul(&ry, &rx))
}

/// Trilinear sample; each out-of-range corner contributes zero.
pub fn sample(grid: &Array3<f64>, q: [f64; 3]) -> f64 {
    let dims = grid.shape();
    let base = q.map(f64::floor);
    let mut acc = 0.0;
    for corner in 0..8 {
        let mut idx = [0i64; 3];
        let mut w = 1.0;
        for axis in 0..3 {
            let hi = (corner >> axis) & 1 == 1;
            let f = q[axis] - base[axis];
            idx[axis] = base[axis] as i64 + hi as i64;
            w *= if hi { f } else { 1.0 - f };
        }
        let inside = (0..3).all(|a| idx[a] >= 0 && (idx[a] as usize) < dims[a]);
        if inside && w != 0.0 {
            acc += w * grid[[idx[0] as usize, idx[1] as usize, idx[2] as usize]];
        }
    }
    acc
}

/// Rotates the whole cube about its centre.
pub fn rotate_full(grid: &Array3<f64>, angles: [f64; 3]) -> Array3<f64> {
    let r = rotation(angles);
    let n = grid.shape()[0];
    let c = (n as f64 - 1.0) / 2.0;
    Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let p = [i as f64 - c, j as f64 - c, k as f64 - c];
        let mut q = [c; 3];
        for (a, qa) in q.iter_mut().enumerate() {
            // Rᵀ p
            *qa += r[0][a] * p[0] + r[1][a] * p[1] + r[2][a] * p[2];
        }
        sample(grid, q)
    })
}

/// `out[y, x] = Σ_{z ∈ slab} grid[x, y, z]`.
pub fn project(grid: &Array3<f64>, offset: usize, thickness: usize) -> Array2<f64> {
    let n = grid.shape()[0];
    let mut out = Array2::zeros((n, n));
    for x in 0..n {
        for y in 0..n {
            for z in offset..offset + thickness {
                out[[y, x]] += grid[[x, y, z]];
            }
        }
    }
    out
}

/// Linear-interpolation quantile over the sorted values (positions `p·(n−1)`).
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn iou(a: &Array2<bool>, b: &Array2<bool>) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean intensity per integer radius bin around `center = [row, col]`.
pub fn radial_profile(img: &Array2<f64>, center: [f64; 2], max_r: usize) -> Vec<f64> {
    let mut sum = vec![0.0; max_r + 1];
    let mut count = vec![0usize; max_r + 1];
    for ((r, c), &v) in img.indexed_iter() {
        let d = ((r as f64 - center[0]).powi(2) + (c as f64 - center[1]).powi(2)).sqrt();
        let bin = d.round() as usize;
        if bin <= max_r {
            sum[bin] += v;
            count[bin] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect()
}

/// Indices of strict local maxima, strongest first.
pub fn local_maxima(profile: &[f64]) -> Vec<usize> {
    let mut peaks: Vec<usize> = (1..profile.len().saturating_sub(1))
        .filter(|&i| profile[i] > profile[i - 1] && profile[i] >= profile[i + 1])
        .collect();
    peaks.sort_by(|&a, &b| profile[b].total_cmp(&profile[a]));
    peaks
}

/// Every file under `root`, keyed by relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).expect("readable file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
