use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use super::network::EMBEDDING;
use crate::corpus::{Vocabulary, PAD_ID, UNK_ID};
use crate::tensor::ParamSet;
use crate::{Error, Result};

/// Word vectors in the word2vec text format: an optional `<count> <dim>`
/// header, then one `word v_1 ... v_dim` line per word.
#[derive(Clone, Debug, Default)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<PretrainedEmbeddings> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        PretrainedEmbeddings::read_from(file)
    }

    pub fn read_from(reader: impl Read) -> Result<PretrainedEmbeddings> {
        let mut out = PretrainedEmbeddings::default();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let bad = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| bad(e.to_string()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty()
                || (i == 0
                    && fields.len() == 2
                    && fields.iter().all(|f| f.parse::<usize>().is_ok()))
            {
                continue;
            }
            let values: Vec<f64> = fields[1..]
                .iter()
                .map(|v| v.parse().map_err(|_| bad(format!("bad value `{v}`"))))
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(bad("word without a vector".into()));
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(bad(format!(
                    "vector of {} values, expected {}",
                    values.len(),
                    out.dim
                )));
            }
            out.vectors
                .entry(fields[0].to_lowercase())
                .or_insert(values);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    /// Overwrites embedding rows of vocabulary words that have a vector.
    /// Returns how many rows were replaced.
    pub fn apply(&self, params: &mut ParamSet, vocab: &Vocabulary) -> Result<usize> {
        let table = params.get_mut(EMBEDDING)?;
        if !self.is_empty() && table.cols() != self.dim {
            return Err(Error::Config(format!(
                "pretrained vectors have {} dimensions, model embeds in {}",
                self.dim,
                table.cols()
            )));
        }
        let mut hits = 0;
        for (id, token) in vocab.tokens() {
            if id == PAD_ID || id == UNK_ID {
                continue;
            }
            if let Some(v) = self.vectors.get(token) {
                table.row_mut(id).copy_from_slice(v);
                hits += 1;
            }
        }
        Ok(hits)
    }
}
