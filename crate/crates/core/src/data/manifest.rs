//! JSON manifests pointing at SFMT feature files.
//!
//! A manifest is a JSON array of objects:
//!
//! ```json
//! [{"id": "s1", "left_path": "s1_left.sfmt", "right_path": "s1_right.sfmt",
//!   "audiogram": [20, 25, 30, 40, 55, 60, 70, 80],
//!   "correctness": 62.5, "scene": "S1", "listener": "L1", "system": "E1",
//!   "partition": "p0", "split": "train"}]
//! ```
//!
//! Either `audiogram` (both ears) or `audiogram_left` + `audiogram_right`
//! must be present. `partition`, `split` and `difficulty` are optional.
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::sfmt::{read_tensor, write_tensor};
use crate::data::{Audiogram, Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub left_path: String,
    pub right_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audiogram: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audiogram_left: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audiogram_right: Option<Vec<f64>>,
    pub correctness: f64,
    pub scene: String,
    pub listener: String,
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

impl ManifestEntry {
    fn audiograms(&self) -> Result<(Audiogram, Audiogram)> {
        match (&self.audiogram, &self.audiogram_left, &self.audiogram_right) {
            (Some(a), None, None) => {
                let a = Audiogram::new(a)?;
                Ok((a, a))
            }
            (None, Some(l), Some(r)) => Ok((Audiogram::new(l)?, Audiogram::new(r)?)),
            _ => Err(Error::Validation(
                "give either audiogram or both audiogram_left and audiogram_right".into(),
            )),
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        what: "manifest".into(),
        msg: e.to_string(),
    })
}

/// Loads every sample of a manifest, validating files, shapes and value
/// ranges. All per-sample problems are collected into one error.
pub fn load_manifest<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries = parse_manifest(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::with_capacity(entries.len());
    let mut problems = Vec::new();
    for entry in entries {
        match load_entry(base, &entry) {
            Ok(s) => samples.push(s),
            Err(e) => problems.push(format!("sample {}: {e}", entry.id)),
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    Dataset::new(samples)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_entry<T: Scalar>(base: &Path, e: &ManifestEntry) -> Result<Sample<T>> {
    if !(0.0..=100.0).contains(&e.correctness) {
        return Err(Error::Validation(format!(
            "correctness {} outside [0, 100]",
            e.correctness
        )));
    }
    let (audiogram_left, audiogram_right) = e.audiograms()?;
    let left = read_tensor::<T>(resolve(base, &e.left_path))?;
    let right = read_tensor::<T>(resolve(base, &e.right_path))?;
    if left.rank() != 3 || left.shape() != right.shape() {
        return Err(Error::shape("left/right features", left.shape(), right.shape()));
    }
    Ok(Sample {
        id: e.id.clone(),
        left,
        right,
        audiogram_left,
        audiogram_right,
        correctness: e.correctness,
        scene: e.scene.clone(),
        listener: e.listener.clone(),
        system: e.system.clone(),
        partition: e.partition.clone(),
        split: e.split,
        difficulty: e.difficulty,
    })
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes every sample's features as SFMT files under `dir/features` and the
/// manifest as `dir/manifest.json`. Returns the manifest path.
pub fn save_dataset<T: Scalar>(dataset: &Dataset<T>, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let features = dir.join("features");
    std::fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for s in &dataset.samples {
        let stem = file_stem(&s.id);
        let left_path = format!("features/{stem}_left.sfmt");
        let right_path = format!("features/{stem}_right.sfmt");
        write_tensor(dir.join(&left_path), &s.left)?;
        write_tensor(dir.join(&right_path), &s.right)?;
        let (audiogram, audiogram_left, audiogram_right) = if s.audiogram_left == s.audiogram_right {
            (Some(s.audiogram_left.into()), None, None)
        } else {
            (None, Some(s.audiogram_left.into()), Some(s.audiogram_right.into()))
        };
        entries.push(ManifestEntry {
            id: s.id.clone(),
            left_path,
            right_path,
            audiogram,
            audiogram_left,
            audiogram_right,
            correctness: s.correctness,
            scene: s.scene.clone(),
            listener: s.listener.clone(),
            system: s.system.clone(),
            partition: s.partition.clone(),
            split: s.split,
            difficulty: s.difficulty,
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&entries).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
