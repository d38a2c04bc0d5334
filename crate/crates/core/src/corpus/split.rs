use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Document;
use crate::{Error, Result};

/// Partition of a corpus into document-id lists.
///
/// `train`, `dev` and `gold_holdout` together hold exactly the annotated
/// documents; `test` holds exactly the unannotated ones. Every list keeps
/// corpus order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    /// Annotated documents reserved for gold questions and never trained
    /// on. Empty unless [`Split::carve_gold_holdout`] was applied.
    #[serde(default)]
    pub gold_holdout: Vec<String>,
}

/// Puts all unannotated documents in `test` and moves
/// `floor(dev_fraction * #annotated)` annotated documents, chosen by a
/// seeded shuffle, into `dev`.
pub fn make_split(docs: &[Document], dev_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&dev_fraction) {
        return Err(Error::Config(format!(
            "dev_fraction must lie in [0, 1), got {dev_fraction}"
        )));
    }
    let annotated: Vec<&str> = docs
        .iter()
        .filter(|d| d.annotated)
        .map(|d| d.id.as_str())
        .collect();
    let n_dev = (dev_fraction * annotated.len() as f64).floor() as usize;
    let dev = seeded_pick(&annotated, n_dev, seed);

    let mut split = Split::default();
    for doc in docs {
        let id = doc.id.clone();
        if !doc.annotated {
            split.test.push(id);
        } else if dev.contains(doc.id.as_str()) {
            split.dev.push(id);
        } else {
            split.train.push(id);
        }
    }
    Ok(split)
}

fn seeded_pick<'a>(ids: &[&'a str], count: usize, seed: u64) -> HashSet<&'a str> {
    let mut order = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.into_iter().take(count).collect()
}

impl Split {
    /// Moves `count` training documents, chosen by a seeded shuffle, into
    /// the gold-question holdout.
    pub fn carve_gold_holdout(&mut self, count: usize, seed: u64) -> Result<()> {
        if count > self.train.len() {
            return Err(Error::Config(format!(
                "gold holdout of {count} exceeds {} training documents",
                self.train.len()
            )));
        }
        let ids: Vec<&str> = self.train.iter().map(String::as_str).collect();
        let picked: HashSet<String> = seeded_pick(&ids, count, seed ^ 0x9e37_79b9_7f4a_7c15)
            .into_iter()
            .map(str::to_string)
            .collect();
        let (hold, keep): (Vec<String>, Vec<String>) =
            self.train.drain(..).partition(|id| picked.contains(id));
        self.train = keep;
        self.gold_holdout.extend(hold);
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Split> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(file)?)
    }
}
