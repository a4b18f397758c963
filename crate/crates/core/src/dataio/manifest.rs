//! JSON dataset manifests.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Image path, relative to the manifest's directory.
    pub image: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub name: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
            metadata: BTreeMap::new(),
            root: root.into(),
        }
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.image)
    }

    pub fn mask_path(&self, entry: &ManifestEntry) -> Option<PathBuf> {
        entry.mask.as_ref().map(|m| self.root.join(m))
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Checks id uniqueness and, when `check_paths` is set, that every
    /// referenced file exists.
    pub fn validate(&self, check_paths: bool) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if e.id.is_empty() {
                return Err(Error::ManifestEntry {
                    id: e.id.clone(),
                    message: "empty id".into(),
                });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if check_paths {
                let img = self.image_path(e);
                if !img.is_file() {
                    return Err(Error::ManifestEntry {
                        id: e.id.clone(),
                        message: format!("image not found: {}", img.display()),
                    });
                }
                if let Some(mask) = self.mask_path(e) {
                    if !mask.is_file() {
                        return Err(Error::ManifestEntry {
                            id: e.id.clone(),
                            message: format!("mask not found: {}", mask.display()),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::parse("manifest", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate(true)?;
    Ok(manifest)
}
