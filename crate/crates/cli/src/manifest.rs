use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub gold_holdout: u64,
    #[serde(default)]
    pub train: Vec<u64>,
    #[serde(default)]
    pub random_baseline: Option<u64>,
    #[serde(default)]
    pub hits: Option<u64>,
}

/// Every artifact of one run. Paths are relative to the data directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub corpus: String,
    pub vocab: String,
    pub split: String,
    pub min_count: usize,
    pub dev_fraction: f64,
    /// Selected checkpoint per model tag.
    #[serde(default)]
    pub checkpoints: BTreeMap<String, String>,
    /// Explanation file per model tag (including `random`).
    #[serde(default)]
    pub explanations: BTreeMap<String, String>,
    #[serde(default)]
    pub hits: Option<String>,
    pub judgments: String,
    pub seeds: Seeds,
}

impl RunManifest {
    pub fn load(root: &Path) -> anyhow::Result<RunManifest> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| {
            format!(
                "no run manifest at {} (run `prepare` first)",
                path.display()
            )
        })?;
        serde_json::from_str(&text)
            .with_context(|| format!("malformed manifest {}", path.display()))
    }

    pub fn save(&self, root: &Path) -> anyhow::Result<()> {
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Resolves a manifest path and checks the file exists.
    pub fn existing(root: &Path, rel: &str) -> anyhow::Result<PathBuf> {
        let p = root.join(rel);
        if !p.exists() {
            bail!("{} is listed in the manifest but missing", p.display());
        }
        Ok(p)
    }

    pub fn checkpoint(&self, root: &Path, tag: &str) -> anyhow::Result<PathBuf> {
        match self.checkpoints.get(tag) {
            Some(rel) => Self::existing(root, rel),
            None => bail!("no `{tag}` checkpoint in the manifest (run `train --model {tag}`)"),
        }
    }

    pub fn explanation(&self, root: &Path, tag: &str) -> anyhow::Result<PathBuf> {
        match self.explanations.get(tag) {
            Some(rel) => Self::existing(root, rel),
            None => bail!("no `{tag}` explanations in the manifest (run `explain --model {tag}`)"),
        }
    }
}
