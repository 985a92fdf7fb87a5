//! Image manifests: which images to explain, for which class, and which
//! other ground-truth labels they carry.
//!
//! ```json
//! {"images": [{"path": "images/img00.png", "target": 0, "other_labels": [1]}]}
//! ```
//!
//! Relative paths are resolved against the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub target: usize,
    #[serde(default)]
    pub other_labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImageManifest {
    pub images: Vec<ManifestEntry>,
}

impl ImageManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    /// Reads a manifest and joins relative image paths to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.images {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }

    /// Rejects empty manifests and labels outside `0..class_count`.
    pub fn validate(&self, class_count: usize) -> Result<()> {
        if self.images.is_empty() {
            return Err(Error::arg("manifest lists no images"));
        }
        for e in &self.images {
            if e.target >= class_count || e.other_labels.iter().any(|&l| l >= class_count) {
                return Err(Error::arg(format!(
                    "{}: labels must be below the class count {class_count}",
                    e.path.display()
                )));
            }
            if e.other_labels.contains(&e.target) {
                return Err(Error::arg(format!(
                    "{}: other labels include the target",
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}
