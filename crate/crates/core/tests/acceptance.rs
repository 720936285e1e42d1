//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use centriole_forge::composite::{composite, CompositeConfig, PATCH_SIZE};
use centriole_forge::config::GenerationConfig;
use centriole_forge::dataset::{Generator, CONFIG_FILE, MANIFEST_FILE};
use centriole_forge::image::{quantize_u16, GrayImage};
use centriole_forge::manifest::read_manifest;
use centriole_forge::model::{build_model, ModelParams};
use centriole_forge::sampler::{
    enumerate_boxes, normalize_weights, sample_patch, PatchBox, PatchCandidate, SamplerConfig,
};
use centriole_forge::seed::rng_from_seed;
use centriole_forge::segment::{segment_central_cell, SegmenterConfig};
use centriole_forge::slicer::{
    blur, extract_and_project, project_rotated_slab, rotate_model, SliceSampler, SlicerConfig,
};
use centriole_forge::surrogate::{generate_surrogate, SurrogateConfig};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn projection_oracle() -> Outcome {
    let start = Instant::now();
    let model = build_model(&ModelParams::default()).unwrap();
    let n = model.side();
    let mut rng = rng_from_seed(101);
    let mut worst_fast = 0.0f64;
    let mut worst_full = 0.0f64;
    for _ in 0..10 {
        let angles = [
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
            rng.random_range(0.0..std::f64::consts::TAU),
        ];
        let thickness = rng.random_range(1..=20);
        let offset = rng.random_range(0..=n - thickness);
        let expected = common::project(
            &common::rotate_full(model.grid(), angles),
            offset,
            thickness,
        );
        let fast = project_rotated_slab(&model, angles, offset, thickness).unwrap();
        let full = extract_and_project(&rotate_model(&model, angles), offset, thickness).unwrap();
        for ((e, f), g) in expected.iter().zip(fast.pixels()).zip(full.pixels()) {
            worst_fast = worst_fast.max((e - f).abs());
            worst_full = worst_full.max((e - g).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let worst = worst_fast.max(worst_full);
    outcome(
        worst <= 1e-5 && secs < 30.0,
        format!("10 specs, max |Δ| = {worst:.2e} (slab path {worst_fast:.2e}, full rotation {worst_full:.2e}), {secs:.2} s"),
    )
}

fn appearance_spectrum() -> Outcome {
    let model = build_model(&ModelParams::default()).unwrap();
    let res = model.resolution_nm_per_voxel();
    let thickness = 10;
    let offset = (model.side() - thickness) / 2;
    let [ix, iy, _] = model.index_of([0.0, 0.0, 0.0]);

    let end_on = blur(
        &project_rotated_slab(&model, [0.0; 3], offset, thickness).unwrap(),
        1.0,
    );
    let profile = common::radial_profile(end_on.pixels(), [iy, ix], 10);
    let (peak_r, peak) = profile
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let ratio = profile[0] / peak;
    let ring_ok = (6..=7).contains(&peak_r) && ratio < 0.3;

    let side_on = blur(
        &project_rotated_slab(&model, [FRAC_PI_2, 0.0, 0.0], offset, thickness).unwrap(),
        1.0,
    );
    let px = side_on.pixels();
    let col0 = ix.round() as i64 - 15;
    let mut columns = vec![0.0; 31];
    for ((r, c), &v) in px.indexed_iter() {
        let along = (r as f64 - iy).abs() * res;
        let dc = c as i64 - col0;
        if along > 150.0 && along < 240.0 && (0..31).contains(&dc) {
            columns[dc as usize] += v;
        }
    }
    let peaks = common::local_maxima(&columns);
    let separation = match peaks.as_slice() {
        [a, b, ..] => a.abs_diff(*b),
        _ => 0,
    };
    let bands_ok = (10..=13).contains(&separation);
    outcome(
        ring_ok && bands_ok,
        format!(
            "end-on ring peak r = {peak_r} px, center/peak = {ratio:.3}; side-on band separation = {separation} px"
        ),
    )
}

fn compositing_bound() -> Outcome {
    let surrogate = SurrogateConfig::default();
    let mut pools = Vec::new();
    for i in 0..5 {
        let s = generate_surrogate(&surrogate, i).unwrap();
        let mask = segment_central_cell(&s.image, &SegmenterConfig::default()).unwrap();
        let cands = enumerate_boxes(&s.image, &mask, &SamplerConfig::default()).unwrap();
        pools.push((s.image, cands));
    }
    let slicer = SliceSampler::new(
        build_model(&ModelParams::default()).unwrap(),
        SlicerConfig::default(),
    )
    .unwrap();
    let mut rng = rng_from_seed(202);
    let mut violations = 0usize;
    let mut pixels = 0usize;
    let mut darkened = 0usize;
    for _ in 0..1000 {
        let (image, cands) = &pools[rng.random_range(0..pools.len())];
        let bbox = cands[rng.random_range(0..cands.len())].bbox;
        let bg = bbox.extract(image);
        let slice = slicer.sample(&mut rng).unwrap();
        let config = CompositeConfig {
            alpha: rng.random_range(0.1..3.0),
            ..CompositeConfig::default()
        };
        let patch = composite(&bg, &slice, &config, &mut rng).unwrap();
        let eps = patch.provenance.epsilon.unwrap();
        if !(0.9..1.1).contains(&eps) {
            violations += 1;
        }
        let q5 = common::quantile(bg.as_slice().unwrap(), 0.05);
        for (&i, &b) in patch.pixels.iter().zip(bg.iter()) {
            pixels += 1;
            darkened += (i < b) as usize;
            if i < q5 || i > q5.max(b) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0 && pixels == 1000 * PATCH_SIZE * PATCH_SIZE,
        format!("1000 draws, {pixels} pixels ({darkened} darkened), {violations} violations"),
    )
}

fn sigma_law() -> Outcome {
    let candidate = |i: usize, sigma: f64| PatchCandidate {
        bbox: PatchBox {
            x0: 30 * i,
            y0: 0,
            size: 60,
        },
        sigma,
        weight: 0.0,
        coverage: 1.0,
    };
    let draws = 100_000usize;

    let sigmas: Vec<f64> = (0..10).map(|i| 1.0 + 0.15 * i as f64).collect();
    let mut cands: Vec<_> = sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| candidate(i, s))
        .collect();
    normalize_weights(&mut cands, 4.0).unwrap();
    let raw: Vec<f64> = sigmas.iter().map(|s| s.powi(-4)).collect();
    let total: f64 = raw.iter().sum();
    let mut counts = [0usize; 10];
    let mut rng = rng_from_seed(1);
    for _ in 0..draws {
        let pick = sample_patch(&cands, &mut rng).unwrap();
        counts[pick.bbox.x0 / 30] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&raw)
        .map(|(&o, r)| {
            let e = draws as f64 * r / total;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(stat);

    let mut pair = vec![candidate(0, 1.0), candidate(1, 2.0)];
    normalize_weights(&mut pair, 4.0).unwrap();
    let hits = (0..draws)
        .filter(|_| sample_patch(&pair, &mut rng).unwrap().sigma == 1.0)
        .count();
    let freq = hits as f64 / draws as f64;
    let target = 16.0 / 17.0;
    outcome(
        p > 0.01 && (freq - target).abs() <= 0.005,
        format!("chi-square = {stat:.2} (9 dof), p = {p:.3}; σ={{1,2}} frequency = {freq:.4} (target {target:.4})"),
    )
}

fn segmentation() -> Outcome {
    let surrogate = SurrogateConfig {
        noise_amplitude: 0.10,
        ..SurrogateConfig::default()
    };
    let seg = SegmenterConfig::default();
    let mut good = 0usize;
    let mut worst = f64::INFINITY;
    let mut covariance_breaks = 0usize;
    for i in 0..50 {
        let s = generate_surrogate(&surrogate, i).unwrap();
        let mask = match segment_central_cell(&s.image, &seg) {
            Ok(m) => m,
            Err(_) => {
                worst = 0.0;
                continue;
            }
        };
        let score = common::iou(mask.bits(), &s.cell_mask);
        worst = worst.min(score);
        good += (score >= 0.9) as usize;
        for k in [0.25, 2.0, 1024.0] {
            let scaled = GrayImage::new(s.image.pixels() * k).unwrap();
            let same = segment_central_cell(&scaled, &seg)
                .map(|m| m.bits() == mask.bits())
                .unwrap_or(false);
            covariance_breaks += (!same) as usize;
        }
    }
    outcome(
        good >= 45 && covariance_breaks == 0,
        format!(
            "IoU ≥ 0.9 in {good}/50 (worst {worst:.3}) at 10% noise; scale ×{{0.25, 2, 1024}}: {covariance_breaks} mask changes"
        ),
    )
}

fn forge(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .output()
        .expect("forge runs")
}

fn generate_with(config: &Path, out: &Path, seed: u64) -> bool {
    let out_s = out.to_str().unwrap();
    let cfg_s = config.to_str().unwrap();
    let seed_s = seed.to_string();
    forge(&[
        "generate", "--config", cfg_s, "--out", out_s, "--seed", &seed_s,
    ])
    .status
    .success()
}

fn determinism(tmp: &Path) -> Outcome {
    let config = tmp.join("det.toml");
    fs::write(&config, "n_train_patches = 180\nn_test_patches = 20\n").unwrap();
    let (a, b) = (tmp.join("det-a"), tmp.join("det-b"));
    if !generate_with(&config, &a, 4242) || !generate_with(&config, &b, 4242) {
        return outcome(false, "forge generate failed".into());
    }
    let (ta, tb) = (common::read_tree(&a), common::read_tree(&b));
    let identical = ta == tb;

    let manifest = read_manifest(&a.join(MANIFEST_FILE)).unwrap();
    let generator = Generator::new(GenerationConfig::load(&a.join(CONFIG_FILE)).unwrap()).unwrap();
    let mut mismatched = 0usize;
    for record in &manifest.records {
        let stored = GrayImage::load_png(&a.join(&record.path)).unwrap();
        let fresh = generator.regenerate(record).unwrap();
        let same = fresh
            .iter()
            .zip(stored.pixels())
            .all(|(&f, &s)| quantize_u16(f) as f64 == s);
        mismatched += (!same) as usize;
    }
    outcome(
        identical && mismatched == 0 && manifest.len() == 200,
        format!(
            "{} files byte-identical across runs: {identical}; {}/{} records regenerate exactly",
            ta.len(),
            manifest.len() - mismatched,
            manifest.len()
        ),
    )
}

fn throughput(tmp: &Path) -> Outcome {
    let config = tmp.join("full.toml");
    fs::write(&config, "n_train_patches = 18000\nn_test_patches = 2000\n").unwrap();
    let out = tmp.join("full");
    let start = Instant::now();
    let ok = generate_with(&config, &out, 1);
    let secs = start.elapsed().as_secs_f64();
    let written = read_manifest(&out.join(MANIFEST_FILE))
        .map(|m| m.len())
        .unwrap_or(0);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    outcome(
        ok && written == 20_000 && secs < 600.0,
        format!("{written} patches in {secs:.1} s on {cores} core(s)"),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let checks: [Check; 7] = [
        ("projection oracle", Box::new(projection_oracle)),
        ("appearance spectrum", Box::new(appearance_spectrum)),
        ("compositing bound", Box::new(compositing_bound)),
        ("sigma^-4 sampling law", Box::new(sigma_law)),
        ("segmentation", Box::new(segmentation)),
        ("determinism", Box::new(|| determinism(tmp.path()))),
        ("throughput", Box::new(|| throughput(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, check) in checks.iter() {
        let result = check();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {}", result.detail);
        failed += (!result.pass) as usize;
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
