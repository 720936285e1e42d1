//! End-to-end patch dataset generation.
//!
//! Each record's pixels are a pure function of the configuration and the
//! record's derived seed, so records can be rendered in any order (or again
//! later, from the manifest) with identical output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::composite::{composite, make_negative, Label, Provenance, SyntheticPatch};
use crate::config::{BackgroundSource, GenerationConfig};
use crate::error::{ForgeError, Result};
use crate::image::{save_mask_png, save_png16, GrayImage};
use crate::manifest::{
    write_manifest, DatasetManifest, Record, RecordKind, Split, GENERATOR_VERSION,
};
use crate::model::build_model;
use crate::sampler::{enumerate_boxes, sample_patch, sample_uniform, PatchCandidate};
use crate::seed::{derive_named, derive_seed, rng_from_seed};
use crate::segment::{segment_central_cell, CellMask};
use crate::slicer::SliceSampler;
use crate::surrogate::generate_surrogate;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

/// A negative screening image, its selected cell and candidate boxes.
#[derive(Debug, Clone)]
pub struct Background {
    pub id: String,
    /// Patient or surrogate identity used for split assignment.
    pub identity: String,
    pub kind: RecordKind,
    pub image: GrayImage,
    pub mask: CellMask,
    pub candidates: Vec<PatchCandidate>,
}

/// One record to render: everything except the pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedRecord {
    pub index: usize,
    pub split: Split,
    /// Position within the split.
    pub ordinal: usize,
    pub label: Label,
    pub seed: u64,
}

impl PlannedRecord {
    pub fn id(&self) -> String {
        format!("{}-{:06}", self.split, self.ordinal)
    }

    pub fn relative_path(&self) -> String {
        format!("patches/{}/{}.png", self.split, self.id())
    }
}

pub struct Generator {
    config: GenerationConfig,
    slicer: SliceSampler,
    backgrounds: Vec<Background>,
    /// Indices into `backgrounds`, per split.
    pools: BTreeMap<Split, Vec<usize>>,
}

fn prepare_background(
    id: String,
    identity: String,
    kind: RecordKind,
    image: GrayImage,
    config: &GenerationConfig,
) -> Result<Background> {
    let wrap = |e: ForgeError| ForgeError::Background {
        image: id.clone(),
        source: Box::new(e),
    };
    let mask = segment_central_cell(&image, &config.segmenter).map_err(wrap)?;
    let candidates = enumerate_boxes(&image, &mask, &config.sampler).map_err(wrap)?;
    Ok(Background {
        id,
        identity,
        kind,
        image,
        mask,
        candidates,
    })
}

/// `(id, identity, path)` for every PNG under `dir`, sorted by path. Files
/// one level down take their subdirectory name as identity.
fn list_background_files(dir: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let is_png = |p: &Path| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
    };
    let stem = |p: &Path| {
        p.file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned()
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            let patient = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            for inner in fs::read_dir(&path)? {
                let p = inner?.path();
                if p.is_file() && is_png(&p) {
                    out.push((format!("{patient}/{}", stem(&p)), patient.clone(), p));
                }
            }
        } else if is_png(&path) {
            let s = stem(&path);
            out.push((s.clone(), s, path));
        }
    }
    out.sort_by(|a, b| a.2.cmp(&b.2));
    Ok(out)
}

fn load_backgrounds(config: &GenerationConfig) -> Result<Vec<Background>> {
    match &config.background {
        BackgroundSource::Surrogate { count, config: sc } => (0..*count)
            .into_par_iter()
            .map(|i| {
                let s = generate_surrogate(sc, i)?;
                prepare_background(
                    s.id.clone(),
                    s.id,
                    RecordKind::SurrogateImage,
                    s.image,
                    config,
                )
            })
            .collect(),
        BackgroundSource::Directory(dir) => {
            let files = list_background_files(dir)?;
            if files.is_empty() {
                return Err(ForgeError::Config(format!(
                    "no PNG images in {}",
                    dir.display()
                )));
            }
            files
                .into_par_iter()
                .map(|(id, identity, path)| {
                    let image = GrayImage::load_png(&path)?;
                    prepare_background(id, identity, RecordKind::RealImage, image, config)
                })
                .collect()
        }
    }
}

/// Partitions sorted identities into splits after a seeded shuffle. Every
/// split that will receive patches gets at least one identity.
pub fn assign_identity_splits(
    identities: &[String],
    holdout_fraction: f64,
    with_val: bool,
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    let mut ids: Vec<String> = identities.to_vec();
    ids.sort();
    ids.dedup();
    let needed = if with_val { 3 } else { 2 };
    if ids.len() < needed {
        return Err(ForgeError::Config(format!(
            "need at least {needed} background identities for disjoint splits, found {}",
            ids.len()
        )));
    }
    ids.shuffle(&mut rng_from_seed(seed));
    let held = ((ids.len() as f64 * holdout_fraction).round() as usize).max(1);
    let mut out = BTreeMap::new();
    let mut iter = ids.into_iter();
    for id in iter.by_ref().take(held) {
        out.insert(id, Split::Test);
    }
    if with_val {
        for id in iter.by_ref().take(held) {
            out.insert(id, Split::Val);
        }
    }
    for id in iter {
        out.insert(id, Split::Train);
    }
    if !out.values().any(|&s| s == Split::Train) {
        return Err(ForgeError::Config(
            "holdout leaves no training identities".into(),
        ));
    }
    Ok(out)
}

impl Generator {
    pub fn new(config: GenerationConfig) -> Result<Self> {
        config.validate()?;
        let model = build_model(&config.model)?;
        let slicer = SliceSampler::new(model, config.slicer)?;
        let backgrounds = load_backgrounds(&config)?;
        let identities: Vec<String> = backgrounds.iter().map(|b| b.identity.clone()).collect();
        let splits = assign_identity_splits(
            &identities,
            config.holdout_identity_fraction,
            config.n_val_patches > 0,
            derive_named(config.master_seed, "identity-splits"),
        )?;
        let mut pools: BTreeMap<Split, Vec<usize>> = BTreeMap::new();
        for (i, b) in backgrounds.iter().enumerate() {
            pools.entry(splits[&b.identity]).or_default().push(i);
        }
        Ok(Self {
            config,
            slicer,
            backgrounds,
            pools,
        })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    pub fn backgrounds(&self) -> &[Background] {
        &self.backgrounds
    }

    pub fn slicer(&self) -> &SliceSampler {
        &self.slicer
    }

    pub fn pool(&self, split: Split) -> &[usize] {
        self.pools.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All records in output order: train, val, test; positives first
    /// within each split.
    pub fn plan(&self) -> Vec<PlannedRecord> {
        let c = &self.config;
        let mut out = Vec::new();
        for (split, n) in [
            (Split::Train, c.n_train_patches),
            (Split::Val, c.n_val_patches),
            (Split::Test, c.n_test_patches),
        ] {
            let n_pos = positives_for(n, c.positive_fraction);
            for ordinal in 0..n {
                let index = out.len();
                out.push(PlannedRecord {
                    index,
                    split,
                    ordinal,
                    label: if ordinal < n_pos {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                    seed: derive_seed(c.master_seed, index as u64),
                });
            }
        }
        out
    }

    /// Renders one patch from its split, label and seed alone.
    pub fn render(
        &self,
        split: Split,
        label: Label,
        seed: u64,
    ) -> Result<(SyntheticPatch, &Background)> {
        let mut rng = rng_from_seed(seed);
        let pool = self.pool(split);
        if pool.is_empty() {
            return Err(ForgeError::Config(format!(
                "no background identities in {split} split"
            )));
        }
        let bg = &self.backgrounds[pool[rng.random_range(0..pool.len())]];
        let patch = match label {
            Label::Positive => {
                let cand = sample_patch(&bg.candidates, &mut rng)?;
                let slice = self.slicer.sample(&mut rng)?;
                composite(
                    &cand.bbox.extract(&bg.image),
                    &slice,
                    &self.config.composite,
                    &mut rng,
                )?
                .with_source(&bg.id, cand.bbox, seed)
            }
            Label::Negative => {
                let cand = if rng.random::<f64>() < self.config.neg_uniform_frac {
                    sample_uniform(&bg.candidates, &mut rng)?
                } else {
                    sample_patch(&bg.candidates, &mut rng)?
                };
                make_negative(&cand.bbox.extract(&bg.image))?.with_source(&bg.id, cand.bbox, seed)
            }
        };
        Ok((patch, bg))
    }

    /// Re-renders the pixels of a manifest record from its stored seed.
    pub fn regenerate(&self, record: &Record) -> Result<Array2<f64>> {
        Ok(self
            .render(record.split, record.label, record.seed)?
            .0
            .pixels)
    }

    /// Renders every planned record in parallel, writes the PNGs, the
    /// manifest and the effective config under `out_dir`.
    pub fn generate(&self, out_dir: &Path) -> Result<DatasetManifest> {
        for split in [Split::Train, Split::Val, Split::Test] {
            fs::create_dir_all(out_dir.join("patches").join(split.to_string()))?;
        }
        let records = self
            .plan()
            .into_par_iter()
            .map(|planned| {
                let (patch, bg) = self.render(planned.split, planned.label, planned.seed)?;
                let path = planned.relative_path();
                save_png16(patch.pixels.view(), &out_dir.join(&path))?;
                Ok(Record {
                    id: planned.id(),
                    path,
                    label: patch.label,
                    kind: RecordKind::SyntheticPatch,
                    identity: bg.identity.clone(),
                    split: planned.split,
                    seed: planned.seed,
                    generator_version: GENERATOR_VERSION.into(),
                    provenance: patch.provenance,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = DatasetManifest::new(records);
        check_balance(&manifest, &self.config)?;
        write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
        fs::write(out_dir.join(CONFIG_FILE), self.config.to_flat_string())?;
        Ok(manifest)
    }
}

fn positives_for(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Each split's positive count is within one record of the target fraction.
pub fn check_balance(manifest: &DatasetManifest, config: &GenerationConfig) -> Result<()> {
    for (split, (pos, neg)) in manifest.class_counts() {
        let target = (pos + neg) as f64 * config.positive_fraction;
        if (pos as f64 - target).abs() > 1.0 {
            return Err(ForgeError::Config(format!(
                "{split} split has {pos} positives of {}, target {target:.1}",
                pos + neg
            )));
        }
    }
    Ok(())
}

/// Builds the generator and writes the dataset.
pub fn generate_patch_dataset(config: GenerationConfig, out_dir: &Path) -> Result<DatasetManifest> {
    Generator::new(config)?.generate(out_dir)
}

/// Writes surrogate screening images, their ground-truth cell masks and a
/// manifest of `surrogate-image` records.
pub fn write_surrogate_set(
    config: &crate::surrogate::SurrogateConfig,
    count: usize,
    test_fraction: f64,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("masks"))?;
    let images: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = generate_surrogate(config, i)?;
            s.image
                .save_png16(&out_dir.join(format!("images/{}.png", s.id)))?;
            save_mask_png(
                s.cell_mask.view(),
                &out_dir.join(format!("masks/{}.png", s.id)),
            )?;
            Ok((i, s.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = images.iter().map(|(_, id)| id.clone()).collect();
    let splits = if count >= 2 {
        assign_identity_splits(
            &ids,
            test_fraction,
            false,
            derive_named(config.seed, "surrogate-splits"),
        )?
    } else {
        ids.iter().map(|id| (id.clone(), Split::Train)).collect()
    };
    let records = images
        .into_iter()
        .map(|(i, id)| Record {
            path: format!("images/{id}.png"),
            label: Label::Negative,
            kind: RecordKind::SurrogateImage,
            identity: id.clone(),
            split: splits[&id],
            seed: derive_seed(config.seed, i as u64),
            generator_version: GENERATOR_VERSION.into(),
            provenance: Provenance {
                source_id: Some(format!("masks/{id}.png")),
                seed: Some(config.seed),
                ..Provenance::default()
            },
            id,
        })
        .collect();
    let manifest = DatasetManifest::new(records);
    write_manifest(&manifest, &out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
