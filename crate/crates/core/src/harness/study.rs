use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::vote::{majority_vote, Resolution, WorkerRecord, JUDGES_PER_HIT};
use super::{Hit, Judgment, SourceTag};

/// Why a judgment was refused. Refused judgments never reach the log.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("worker id is blank")]
    BlankWorker,
    #[error("unknown hit `{0}`")]
    UnknownHit(String),
    #[error("worker `{worker}` already judged hit `{hit}`")]
    Duplicate { hit: String, worker: String },
    #[error("worker `{0}` must answer a gold question first")]
    GoldRequired(String),
    #[error("worker `{0}` has already answered a gold question")]
    GoldAlreadyAnswered(String),
    #[error("worker `{0}` failed the gold question and is excluded")]
    Excluded(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unknown worker `{0}`")]
pub struct UnknownWorker(pub String);

/// Live state of a judgment collection, rebuilt exactly by replaying the
/// judgment log through [`Study::record`].
#[derive(Clone, Debug)]
pub struct Study {
    hits: Vec<Hit>,
    index: HashMap<String, usize>,
    gold: Vec<usize>,
    workers: BTreeMap<String, WorkerRecord>,
    seen: HashMap<String, HashSet<usize>>,
    by_hit: Vec<Vec<Judgment>>,
    log: Vec<Judgment>,
}

impl Study {
    pub fn new(hits: Vec<Hit>) -> crate::Result<Study> {
        let mut index = HashMap::new();
        for (i, h) in hits.iter().enumerate() {
            h.validate()?;
            if index.insert(h.hit_id.clone(), i).is_some() {
                return Err(crate::Error::Invalid(format!(
                    "hit id `{}` listed twice",
                    h.hit_id
                )));
            }
        }
        let gold = hits
            .iter()
            .enumerate()
            .filter(|(_, h)| h.is_gold)
            .map(|(i, _)| i)
            .collect();
        Ok(Study {
            by_hit: vec![Vec::new(); hits.len()],
            hits,
            index,
            gold,
            workers: BTreeMap::new(),
            seen: HashMap::new(),
            log: Vec::new(),
        })
    }

    /// Rebuilds state from a log; fails on the first entry the live
    /// service would have refused.
    pub fn replay(hits: Vec<Hit>, log: impl IntoIterator<Item = Judgment>) -> crate::Result<Study> {
        let mut study = Study::new(hits)?;
        for (i, j) in log.into_iter().enumerate() {
            study
                .record(j)
                .map_err(|e| crate::Error::Invalid(format!("judgment log entry {}: {e}", i + 1)))?;
        }
        Ok(study)
    }

    pub fn hits(&self) -> &[Hit] {
        &self.hits
    }

    pub fn hit(&self, id: &str) -> Option<&Hit> {
        self.index.get(id).map(|&i| &self.hits[i])
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.log
    }

    pub fn workers(&self) -> &BTreeMap<String, WorkerRecord> {
        &self.workers
    }

    pub fn register(&mut self, worker_id: &str) -> Result<(), Rejection> {
        if worker_id.trim().is_empty() {
            return Err(Rejection::BlankWorker);
        }
        self.workers
            .entry(worker_id.to_string())
            .or_insert_with(|| WorkerRecord::new(worker_id));
        Ok(())
    }

    fn needs_gold(&self, worker: &WorkerRecord) -> bool {
        !self.gold.is_empty() && worker.gold_outcomes.is_empty()
    }

    /// Checks a judgment against the current state without applying it.
    pub fn check(&self, j: &Judgment) -> Result<(), Rejection> {
        if j.worker_id.trim().is_empty() {
            return Err(Rejection::BlankWorker);
        }
        let &h = self
            .index
            .get(&j.hit_id)
            .ok_or_else(|| Rejection::UnknownHit(j.hit_id.clone()))?;
        if self.seen.get(&j.worker_id).is_some_and(|s| s.contains(&h)) {
            return Err(Rejection::Duplicate {
                hit: j.hit_id.clone(),
                worker: j.worker_id.clone(),
            });
        }
        let fresh = WorkerRecord::new(&j.worker_id);
        let worker = self.workers.get(&j.worker_id).unwrap_or(&fresh);
        if !worker.trusted {
            return Err(Rejection::Excluded(j.worker_id.clone()));
        }
        match (self.hits[h].is_gold, self.needs_gold(worker)) {
            (true, false) => Err(Rejection::GoldAlreadyAnswered(j.worker_id.clone())),
            (false, true) => Err(Rejection::GoldRequired(j.worker_id.clone())),
            _ => Ok(()),
        }
    }

    /// Applies a judgment, registering its worker if needed.
    pub fn record(&mut self, j: Judgment) -> Result<(), Rejection> {
        self.check(&j)?;
        let h = self.index[&j.hit_id];
        let hit = &self.hits[h];
        let worker = self
            .workers
            .entry(j.worker_id.clone())
            .or_insert_with(|| WorkerRecord::new(&j.worker_id));
        if hit.is_gold {
            worker.record_gold(hit.gold_expected == Some(j.choice));
        }
        self.seen.entry(j.worker_id.clone()).or_default().insert(h);
        self.by_hit[h].push(j.clone());
        self.log.push(j);
        Ok(())
    }

    fn trusted_count(&self, h: usize) -> usize {
        self.by_hit[h]
            .iter()
            .filter(|j| self.workers.get(&j.worker_id).is_some_and(|w| w.trusted))
            .count()
    }

    /// Whether a regular hit still needs another trusted judgment.
    pub fn wants_judgment(&self, h: usize) -> bool {
        let n = self.trusted_count(h);
        n < JUDGES_PER_HIT || self.resolution_at(h) == Resolution::NeedsFourth
    }

    fn resolution_at(&self, h: usize) -> Resolution {
        majority_vote(&self.by_hit[h], &self.workers)
    }

    pub fn resolution(&self, hit_id: &str) -> Option<Resolution> {
        self.index.get(hit_id).map(|&h| self.resolution_at(h))
    }

    /// Next hit for a worker: their gold question first, then the open
    /// hit with the fewest trusted judgments that they have not seen.
    pub fn assign_next_hit(&self, worker_id: &str) -> Result<Option<&Hit>, UnknownWorker> {
        let worker = self
            .workers
            .get(worker_id)
            .ok_or_else(|| UnknownWorker(worker_id.to_string()))?;
        if !worker.trusted {
            return Ok(None);
        }
        if self.needs_gold(worker) {
            let slot = worker_id
                .bytes()
                .fold(0usize, |a, b| a.wrapping_mul(31).wrapping_add(b.into()));
            return Ok(Some(&self.hits[self.gold[slot % self.gold.len()]]));
        }
        let seen = self.seen.get(worker_id);
        let next = (0..self.hits.len())
            .filter(|&h| !self.hits[h].is_gold)
            .filter(|&h| seen.is_none_or(|s| !s.contains(&h)))
            .filter(|&h| self.wants_judgment(h))
            .min_by_key(|&h| (self.trusted_count(h), h));
        Ok(next.map(|h| &self.hits[h]))
    }

    /// Resolution of every regular hit, in hit order.
    pub fn resolutions(&self) -> Vec<(&Hit, Resolution)> {
        (0..self.hits.len())
            .filter(|&h| !self.hits[h].is_gold)
            .map(|h| (&self.hits[h], self.resolution_at(h)))
            .collect()
    }

    /// Source pairs compared by the regular hits, in first-seen order.
    pub fn comparisons(&self) -> Vec<(SourceTag, SourceTag)> {
        let mut out = Vec::new();
        for h in self.hits.iter().filter(|h| !h.is_gold) {
            if !out.contains(&h.comparison()) {
                out.push(h.comparison());
            }
        }
        out
    }
}
