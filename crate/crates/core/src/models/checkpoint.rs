//! Checkpoint text format.
//!
//! ```text
//! ratattn-ckpt v1
//! descriptor {"kind":"ra-cnn","architecture":{...},"train_config":{...},"best_epoch":7}
//! history [{"epoch":1,"train_loss":0.69,"dev_acc":0.5}, ...]
//! vocab <size>
//! <token>\t<id>                      (size lines, id order)
//! params <count>
//! param <name> <rank> <dims...>      (count blocks, name order)
//! <values in shortest round-trip scientific notation>
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{encode_document, Network};
use super::train::argmax;
use super::{Architecture, EpochMetrics, ModelKind, Prediction, TrainConfig};
use crate::corpus::{Document, Label, Vocabulary};
use crate::tensor::{read_params, write_params, ParamSet};
use crate::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "ratattn-ckpt v1";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub kind: ModelKind,
    pub arch: Architecture,
    pub config: TrainConfig,
    pub params: ParamSet,
    pub vocab: Vocabulary,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    kind: ModelKind,
    architecture: Architecture,
    train_config: TrainConfig,
    best_epoch: usize,
}

impl ModelCheckpoint {
    pub fn network(&self) -> Result<Network> {
        Network::new(self.kind, self.arch.clone())
    }

    /// Deterministic inference without dropout. Unknown tokens map to the
    /// unknown id, so any document can be scored.
    pub fn predict(&self, doc: &Document) -> Result<Prediction> {
        let net = self.network()?;
        let enc = encode_document(doc, &self.vocab, &self.arch);
        let (probabilities, sentence_weights) = net.infer(&self.params, &enc)?;
        Ok(Prediction {
            doc_id: doc.id.clone(),
            label: Label::from_index(argmax(probabilities)).expect("binary classifier"),
            probabilities,
            sentence_weights,
        })
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        out.push_str(CHECKPOINT_HEADER);
        out.push('\n');
        let descriptor = Descriptor {
            kind: self.kind,
            architecture: self.arch.clone(),
            train_config: self.config.clone(),
            best_epoch: self.best_epoch,
        };
        let _ = writeln!(out, "descriptor {}", serde_json::to_string(&descriptor)?);
        let _ = writeln!(out, "history {}", serde_json::to_string(&self.history)?);
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        let mut vocab = Vec::new();
        self.vocab
            .write_to(&mut vocab)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.push_str(&String::from_utf8(vocab).map_err(|e| Error::Checkpoint(e.to_string()))?);
        write_params(&self.params, &mut out);
        out.push_str("end\n");
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<ModelCheckpoint> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("missing {what}")))
        };
        let (_, header) = next("header")?;
        if header != CHECKPOINT_HEADER {
            return Err(Error::Checkpoint(format!("unsupported header `{header}`")));
        }
        let (n, line) = next("descriptor")?;
        let descriptor: Descriptor = serde_json::from_str(field(n, line, "descriptor ")?)?;
        let (n, line) = next("history")?;
        let history: Vec<EpochMetrics> = serde_json::from_str(field(n, line, "history ")?)?;
        let (n, line) = next("vocab")?;
        let size: usize = field(n, line, "vocab ")?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("line {n}: bad vocabulary size")))?;
        let mut vocab_text = String::new();
        for _ in 0..size {
            let (_, entry) = next("vocabulary entry")?;
            vocab_text.push_str(entry);
            vocab_text.push('\n');
        }
        let vocab = Vocabulary::read_from(vocab_text.as_bytes())?;
        let params = read_params(&mut lines)?;
        match lines.next() {
            Some((_, "end")) => {}
            _ => return Err(Error::Checkpoint("missing `end` trailer".into())),
        }
        let checkpoint = ModelCheckpoint {
            kind: descriptor.kind,
            arch: descriptor.architecture,
            config: descriptor.train_config,
            params,
            vocab,
            history,
            best_epoch: descriptor.best_epoch,
        };
        checkpoint.check_shapes()?;
        Ok(checkpoint)
    }

    /// Verifies the parameters are exactly those the architecture needs.
    fn check_shapes(&self) -> Result<()> {
        let net = self.network()?;
        let expected = net.init_params(self.vocab.len(), &mut rand::rngs::mock::StepRng::new(0, 0));
        for (name, t) in expected.iter() {
            let got = self
                .params
                .get(name)
                .map_err(|_| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if got.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        if self.params.len() != expected.len() {
            return Err(Error::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ModelCheckpoint::from_text(&text)
    }

    /// Training history as JSON lines.
    pub fn history_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.history {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn field<'a>(line_no: usize, line: &'a str, prefix: &str) -> Result<&'a str> {
    line.strip_prefix(prefix).ok_or_else(|| {
        Error::Checkpoint(format!("line {line_no}: expected `{}`", prefix.trim_end()))
    })
}
