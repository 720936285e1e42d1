//! Dataset manifest: one JSON object per line, one line per file.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::composite::{Label, Provenance};
use crate::error::{ForgeError, Result};

pub const GENERATOR_VERSION: &str = concat!("centriole-forge/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    SyntheticPatch,
    RealImage,
    SurrogateImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    /// Relative to the manifest's directory.
    pub path: String,
    pub label: Label,
    pub kind: RecordKind,
    /// Patient id for real data, surrogate id otherwise.
    pub identity: String,
    pub split: Split,
    pub seed: u64,
    pub generator_version: String,
    #[serde(default)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
}

/// A structural problem found while validating records, with the index of
/// the offending record.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub message: String,
}

impl DatasetManifest {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Unique ids and no identity split across more than one split.
    pub fn check(&self) -> std::result::Result<(), Violation> {
        let mut ids = HashSet::new();
        let mut homes: HashMap<&str, Split> = HashMap::new();
        for (index, r) in self.records.iter().enumerate() {
            if !ids.insert(r.id.as_str()) {
                return Err(Violation {
                    index,
                    message: format!("duplicate id {:?}", r.id),
                });
            }
            match homes.get(r.identity.as_str()) {
                Some(&s) if s != r.split => {
                    return Err(Violation {
                        index,
                        message: format!(
                            "identity {:?} appears in both {s} and {}",
                            r.identity, r.split
                        ),
                    })
                }
                _ => {
                    homes.insert(&r.identity, r.split);
                }
            }
        }
        Ok(())
    }

    /// `(positives, negatives)` per split.
    pub fn class_counts(&self) -> BTreeMap<Split, (usize, usize)> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            let e = out.entry(r.split).or_insert((0, 0));
            match r.label {
                Label::Positive => e.0 += 1,
                Label::Negative => e.1 += 1,
            }
        }
        out
    }

    /// Distinct identities per split.
    pub fn identities(&self) -> BTreeMap<Split, Vec<String>> {
        let mut out: BTreeMap<Split, Vec<String>> = BTreeMap::new();
        for r in &self.records {
            let v = out.entry(r.split).or_default();
            if !v.contains(&r.identity) {
                v.push(r.identity.clone());
            }
        }
        out.values_mut().for_each(|v| v.sort());
        out
    }
}

/// Validates the records, checks that every referenced file exists next to
/// the manifest, then writes one JSON object per line.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let parse_err = |line: usize, message: String| ForgeError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    manifest
        .check()
        .map_err(|v| parse_err(v.index + 1, v.message))?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    for (i, r) in manifest.records.iter().enumerate() {
        if !root.join(&r.path).is_file() {
            return Err(parse_err(i + 1, format!("missing file {}", r.path)));
        }
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in &manifest.records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    let mut line_numbers = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| ForgeError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
        line_numbers.push(i + 1);
    }
    let manifest = DatasetManifest { records };
    manifest.check().map_err(|v| ForgeError::Parse {
        path: path.to_path_buf(),
        line: line_numbers[v.index],
        message: v.message,
    })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::PatchBox;
    use crate::slicer::SliceSpec;
    use proptest::prelude::*;

    fn record(id: &str, identity: &str, split: Split) -> Record {
        Record {
            id: id.into(),
            path: format!("{id}.png"),
            label: Label::Negative,
            kind: RecordKind::SyntheticPatch,
            identity: identity.into(),
            split,
            seed: 1,
            generator_version: GENERATOR_VERSION.into(),
            provenance: Provenance::default(),
        }
    }

    fn touch_all(dir: &Path, m: &DatasetManifest) {
        for r in &m.records {
            fs::write(dir.join(&r.path), b"").unwrap();
        }
    }

    #[test]
    fn empty_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&DatasetManifest::default(), &path).unwrap();
        assert!(read_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_fails_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let a = serde_json::to_string(&record("p1", "s0", Split::Train)).unwrap();
        let b = serde_json::to_string(&record("p2", "s0", Split::Train)).unwrap();
        fs::write(&path, format!("{a}\n{b}\n{a}\n")).unwrap();
        match read_manifest(&path) {
            Err(ForgeError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("duplicate"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn identity_straddling_splits_fails_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let a = serde_json::to_string(&record("p1", "s0", Split::Train)).unwrap();
        let b = serde_json::to_string(&record("p2", "s0", Split::Test)).unwrap();
        fs::write(&path, format!("{a}\n{b}\n")).unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(ForgeError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        let a = serde_json::to_string(&record("p1", "s0", Split::Train)).unwrap();
        fs::write(&path, format!("{a}\n{{not json\n")).unwrap();
        assert!(matches!(
            read_manifest(&path),
            Err(ForgeError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn write_requires_existing_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(vec![record("p1", "s0", Split::Train)]);
        assert!(write_manifest(&m, &dir.path().join("m.jsonl")).is_err());
        touch_all(dir.path(), &m);
        write_manifest(&m, &dir.path().join("m.jsonl")).unwrap();
    }

    #[test]
    fn class_counts_per_split() {
        let mut a = record("a", "s0", Split::Train);
        a.label = Label::Positive;
        let m = DatasetManifest::new(vec![
            a,
            record("b", "s0", Split::Train),
            record("c", "s1", Split::Test),
        ]);
        let counts = m.class_counts();
        assert_eq!(counts[&Split::Train], (1, 1));
        assert_eq!(counts[&Split::Test], (0, 1));
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        (
            any::<u64>(),
            prop::bool::ANY,
            0usize..3,
            prop::option::of((any::<[f64; 3]>(), 0usize..60, 1usize..12, 0.0f64..3.0)),
            prop::option::of((0usize..500, 0usize..500)),
            prop::option::of(0.9f64..1.1),
        )
            .prop_map(|(seed, positive, kind, slice, bbox, eps)| {
                let identity = format!("s{}", seed % 7);
                let split = match seed % 7 {
                    0 | 1 => Split::Test,
                    2 => Split::Val,
                    _ => Split::Train,
                };
                Record {
                    id: String::new(),
                    path: String::new(),
                    label: if positive {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                    kind: [
                        RecordKind::SyntheticPatch,
                        RecordKind::RealImage,
                        RecordKind::SurrogateImage,
                    ][kind],
                    identity,
                    split,
                    seed,
                    generator_version: GENERATOR_VERSION.into(),
                    provenance: Provenance {
                        source_id: Some(format!("img-{}", seed % 13)),
                        bbox: bbox.map(|(x0, y0)| PatchBox { x0, y0, size: 60 }),
                        slice: slice.map(|(angles, offset_vx, thickness_vx, blur)| SliceSpec {
                            angles: angles.map(|a| if a.is_finite() { a } else { 0.0 }),
                            offset_vx,
                            thickness_vx,
                            blur_sigma_px: blur,
                            crop_origin: Some([-3, 7]),
                        }),
                        alpha: eps.map(|_| 1.0),
                        epsilon: eps,
                        seed: Some(seed),
                    },
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn round_trip_preserves_every_field(mut records in prop::collection::vec(arb_record(), 0..100)) {
            for (i, r) in records.iter_mut().enumerate() {
                r.id = format!("rec-{i:05}");
                r.path = format!("{}.png", r.id);
            }
            let m = DatasetManifest::new(records);
            let dir = tempfile::tempdir().unwrap();
            touch_all(dir.path(), &m);
            let path = dir.path().join("manifest.jsonl");
            write_manifest(&m, &path).unwrap();
            prop_assert_eq!(read_manifest(&path).unwrap(), m);
        }
    }
}
