use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kfold_split, read_sequence, SkeletonSequence};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub subject: String,
    pub label: usize,
    #[serde(default)]
    pub exercise: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_joints: usize,
    pub class_names: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Labels in range and every class present.
    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        if k == 0 {
            return Err(Error::invalid("manifest", "no classes"));
        }
        if let Some(e) = self.entries.iter().find(|e| e.label >= k) {
            return Err(Error::invalid(
                "manifest",
                format!("entry {} has label {} but only {k} classes", e.path, e.label),
            ));
        }
        let seen: BTreeSet<usize> = self.entries.iter().map(|e| e.label).collect();
        if let Some(missing) = (0..k).find(|c| !seen.contains(c)) {
            return Err(Error::invalid(
                "manifest",
                format!("labels are not dense: class {missing} has no entries"),
            ));
        }
        Ok(())
    }

    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.subject.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A manifest together with its parsed sequences, in manifest order.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub n_joints: usize,
    pub sequences: Vec<SkeletonSequence>,
}

impl Dataset {
    pub fn new(class_names: Vec<String>, n_joints: usize, sequences: Vec<SkeletonSequence>) -> Result<Self> {
        if let Some((i, s)) = sequences.iter().enumerate().find(|(_, s)| s.joints() != n_joints) {
            return Err(Error::shape(
                "dataset",
                format!("sequence {i} has {} joints, dataset declares {n_joints}", s.joints()),
            ));
        }
        if let Some((i, s)) = sequences.iter().enumerate().find(|(_, s)| s.label >= class_names.len()) {
            return Err(Error::invalid(
                "dataset",
                format!("sequence {i} has label {} but only {} classes", s.label, class_names.len()),
            ));
        }
        Ok(Dataset {
            class_names,
            n_joints,
            sequences,
        })
    }

    /// Load every file listed in the manifest, in parallel.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(manifest_path)?;
        let dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let sequences = manifest
            .entries
            .par_iter()
            .map(|e| {
                let p = PathBuf::from(&e.path);
                let full = if p.is_absolute() { p } else { dir.join(p) };
                let mut s = read_sequence(&full)?;
                s.subject_id = e.subject.clone();
                s.label = e.label;
                s.exercise_id = e.exercise.clone();
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(manifest.class_names, manifest.n_joints, sequences)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.sequences.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Cross-subject split: subjects are dealt into `k` folds with `seed` and
    /// the subjects of `fold` form the test part. Returns sample indices.
    pub fn cross_subject_split(&self, k: usize, fold: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let folds = kfold_split(&self.subjects(), k, seed)?;
        let per_sample: Vec<&str> = self.sequences.iter().map(|s| s.subject_id.as_str()).collect();
        folds.split(&per_sample, fold)
    }

    /// New dataset holding the sequences at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            class_names: self.class_names.clone(),
            n_joints: self.n_joints,
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
        }
    }
}
