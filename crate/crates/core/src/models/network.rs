use rand::Rng;

use super::{Architecture, ModelKind};
use crate::corpus::{Document, Vocabulary, PAD_ID};
use crate::tensor::{ParamSet, Tape, Tensor, Var};
use crate::{Error, Result};

pub const EMBEDDING: &str = "embedding";
pub const ATTENTION_WEIGHT: &str = "attention.weight";
pub const ATTENTION_BIAS: &str = "attention.bias";
pub const ATTENTION_CONTEXT: &str = "attention.context";
pub const RATIONALE_WEIGHT: &str = "rationale.weight";
pub const RATIONALE_BIAS: &str = "rationale.bias";
pub const CLASSIFIER_WEIGHT: &str = "classifier.weight";
pub const CLASSIFIER_BIAS: &str = "classifier.bias";

pub fn conv_name(width: usize) -> String {
    format!("conv.w{width}")
}

/// A document as token ids, ready for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDocument {
    /// One id sequence per sentence, truncated to the architecture's
    /// maximum length and right-padded to at least the widest filter.
    pub sentences: Vec<Vec<usize>>,
    /// Rationale targets (1.0 / 0.0) when the document is annotated.
    pub rationale_targets: Option<Vec<f64>>,
    pub label: usize,
}

pub fn encode_document(doc: &Document, vocab: &Vocabulary, arch: &Architecture) -> EncodedDocument {
    let min_len = arch.widths.iter().copied().max().unwrap_or(1);
    let sentences = doc
        .sentences
        .iter()
        .map(|s| {
            let mut ids: Vec<usize> = vocab
                .encode(&s.tokens)
                .into_iter()
                .take(arch.max_sentence_len)
                .collect();
            if ids.len() < min_len {
                ids.resize(min_len, PAD_ID);
            }
            ids
        })
        .collect();
    let rationale_targets = doc.annotated.then(|| {
        doc.sentences
            .iter()
            .map(|s| if s.rationale == Some(true) { 1.0 } else { 0.0 })
            .collect()
    });
    EncodedDocument {
        sentences,
        rationale_targets,
        label: doc.label.index(),
    }
}

/// What a training step minimizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Document cross-entropy only.
    Label,
    /// Document cross-entropy plus `weight` times the summed rationale
    /// cross-entropy (the latter only on annotated documents).
    Joint { weight: f64 },
    /// Summed rationale cross-entropy only; the classifier is not run.
    RationaleOnly,
}

/// Recorded forward pass of one document.
pub struct Forward {
    pub logits: Option<Var>,
    /// Attention weights (AT-CNN) or rationale probabilities (RA-CNN).
    pub sentence_weights: Option<Var>,
    pub rationale_logits: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub kind: ModelKind,
    pub arch: Architecture,
}

impl Network {
    pub fn new(kind: ModelKind, arch: Architecture) -> Result<Network> {
        arch.validate()?;
        Ok(Network { kind, arch })
    }

    /// Fresh parameters, uniform in `(-init_scale, init_scale)`, with the
    /// padding embedding row set to zero.
    pub fn init_params(&self, vocab_size: usize, rng: &mut impl Rng) -> ParamSet {
        let a = &self.arch;
        let scale = a.init_scale;
        let m = a.sentence_dim();
        let mut p = ParamSet::new();
        let mut embedding = Tensor::uniform(&[vocab_size, a.embed_dim], scale, rng);
        embedding.row_mut(PAD_ID).fill(0.0);
        p.insert(EMBEDDING, embedding);
        for &w in &a.widths {
            p.insert(
                conv_name(w),
                Tensor::uniform(&[a.feature_maps, w * a.embed_dim], scale, rng),
            );
        }
        match self.kind {
            ModelKind::DocCnn => {}
            ModelKind::AtCnn => {
                p.insert(
                    ATTENTION_WEIGHT,
                    Tensor::uniform(&[a.attention_dim, m], scale, rng),
                );
                p.insert(
                    ATTENTION_BIAS,
                    Tensor::uniform(&[a.attention_dim], scale, rng),
                );
                p.insert(
                    ATTENTION_CONTEXT,
                    Tensor::uniform(&[a.attention_dim], scale, rng),
                );
            }
            ModelKind::RaCnn => {
                p.insert(RATIONALE_WEIGHT, Tensor::uniform(&[m], scale, rng));
                p.insert(RATIONALE_BIAS, Tensor::uniform(&[1], scale, rng));
            }
        }
        p.insert(CLASSIFIER_WEIGHT, Tensor::uniform(&[2, m], scale, rng));
        p.insert(CLASSIFIER_BIAS, Tensor::uniform(&[2], scale, rng));
        p
    }

    /// Sentence vectors stacked as rows `[n, M]`.
    pub fn sentence_vectors(&self, tape: &mut Tape<'_>, doc: &EncodedDocument) -> Result<Var> {
        if doc.sentences.is_empty() {
            return Err(Error::Invalid("document has no sentences".into()));
        }
        let table = tape.param(EMBEDDING)?;
        let filters: Vec<Var> = self
            .arch
            .widths
            .iter()
            .map(|&w| tape.param(&conv_name(w)))
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(doc.sentences.len());
        for ids in &doc.sentences {
            let x = tape.embed(table, ids)?;
            rows.push(tape.conv_max(x, &filters, &self.arch.widths)?);
        }
        tape.stack(&rows)
    }

    /// Records the forward pass. `dropout` carries the rate and the
    /// generator for the mask; `None` means inference.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape<'_>,
        doc: &EncodedDocument,
        objective: Objective,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Forward> {
        let sentences = self.sentence_vectors(tape, doc)?;
        let n = doc.sentences.len();

        let (weights, rationale_logits) = match self.kind {
            ModelKind::DocCnn => (None, None),
            ModelKind::AtCnn => {
                let (w, b, u) = (
                    tape.param(ATTENTION_WEIGHT)?,
                    tape.param(ATTENTION_BIAS)?,
                    tape.param(ATTENTION_CONTEXT)?,
                );
                let hidden = tape.matmul_t(sentences, w)?;
                let hidden = tape.add_bias(hidden, b)?;
                let hidden = tape.tanh(hidden)?;
                let scores = tape.matvec(hidden, u)?;
                (Some(tape.softmax(scores)?), None)
            }
            ModelKind::RaCnn => {
                let (v, c) = (tape.param(RATIONALE_WEIGHT)?, tape.param(RATIONALE_BIAS)?);
                let z = tape.matvec(sentences, v)?;
                let z = tape.add_scalar(z, c)?;
                (Some(tape.sigmoid(z)?), Some(z))
            }
        };

        if objective == Objective::RationaleOnly {
            return Ok(Forward {
                logits: None,
                sentence_weights: weights,
                rationale_logits,
            });
        }

        let composition = match weights {
            Some(w) => w,
            None => tape.constant(Tensor::vector(vec![1.0; n])),
        };
        let mut doc_vec = tape.weighted_sum(sentences, composition)?;
        if let Some((rate, rng)) = dropout {
            if rate > 0.0 {
                let keep = 1.0 - rate;
                let mask = (0..self.arch.sentence_dim())
                    .map(|_| if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                doc_vec = tape.dropout(doc_vec, mask)?;
            }
        }
        let (cw, cb) = (tape.param(CLASSIFIER_WEIGHT)?, tape.param(CLASSIFIER_BIAS)?);
        let logits = tape.matvec(cw, doc_vec)?;
        let logits = tape.add_bias(logits, cb)?;
        Ok(Forward {
            logits: Some(logits),
            sentence_weights: weights,
            rationale_logits,
        })
    }

    /// Records the training loss for `objective` and returns its handle.
    pub fn loss<R: Rng>(
        &self,
        tape: &mut Tape<'_>,
        doc: &EncodedDocument,
        objective: Objective,
        dropout: Option<(f64, &mut R)>,
    ) -> Result<Var> {
        if objective != Objective::Label && self.kind != ModelKind::RaCnn {
            return Err(Error::Config(format!(
                "{} has no rationale objective",
                self.kind.display_name()
            )));
        }
        let fwd = self.forward(tape, doc, objective, dropout)?;
        let rationale_term = |tape: &mut Tape<'_>| -> Result<Option<Var>> {
            match (fwd.rationale_logits, &doc.rationale_targets) {
                (Some(z), Some(targets)) => Ok(Some(tape.bce_with_logits(z, targets)?)),
                _ => Ok(None),
            }
        };
        match objective {
            Objective::Label => tape.softmax_xent(fwd.logits.expect("classifier ran"), doc.label),
            Objective::Joint { weight } => {
                let ce = tape.softmax_xent(fwd.logits.expect("classifier ran"), doc.label)?;
                match rationale_term(tape)? {
                    Some(bce) => {
                        let scaled = tape.scale(bce, weight)?;
                        tape.add(ce, scaled)
                    }
                    None => Ok(ce),
                }
            }
            Objective::RationaleOnly => rationale_term(tape)?.ok_or_else(|| {
                Error::Invalid("rationale objective on an unannotated document".into())
            }),
        }
    }

    /// Objective used for ordinary (joint-phase) training of this kind.
    pub fn training_objective(&self, rationale_weight: f64) -> Objective {
        match self.kind {
            ModelKind::RaCnn => Objective::Joint {
                weight: rationale_weight,
            },
            _ => Objective::Label,
        }
    }

    /// Class probabilities and per-sentence weights, without dropout.
    pub fn infer(&self, params: &ParamSet, doc: &EncodedDocument) -> Result<([f64; 2], Vec<f64>)> {
        let mut tape = Tape::new(params);
        let fwd =
            self.forward::<rand_chacha::ChaCha8Rng>(&mut tape, doc, Objective::Label, None)?;
        let logits = tape.value(fwd.logits.expect("classifier ran")).data();
        let probs = crate::tensor::ops::softmax(logits);
        let n = doc.sentences.len();
        let weights = match fwd.sentence_weights {
            Some(w) => tape.value(w).data().to_vec(),
            None => vec![1.0 / n as f64; n],
        };
        Ok(([probs[0], probs[1]], weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, Label};
    use crate::tensor::ops::{sigmoid, softmax_xent, softplus};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_arch() -> Architecture {
        Architecture {
            embed_dim: 3,
            attention_dim: 2,
            widths: vec![1, 2],
            feature_maps: 2,
            max_sentence_len: 60,
            init_scale: 0.5,
        }
    }

    fn fixture() -> (Document, Vocabulary) {
        let doc = Document::new(
            "f",
            Label::Pos,
            [
                ("great acting".to_string(), Some(true)),
                ("the plot".to_string(), Some(false)),
            ],
        )
        .unwrap();
        let vocab = build_vocab(&[&doc], 1).unwrap();
        (doc, vocab)
    }

    #[test]
    fn rationale_weight_zero_is_pure_cross_entropy() {
        let (doc, vocab) = fixture();
        let net = Network::new(ModelKind::RaCnn, tiny_arch()).unwrap();
        let params = net.init_params(vocab.len(), &mut ChaCha8Rng::seed_from_u64(1));
        let enc = encode_document(&doc, &vocab, &net.arch);

        let mut t1 = Tape::new(&params);
        let joint = net
            .loss::<ChaCha8Rng>(&mut t1, &enc, Objective::Joint { weight: 0.0 }, None)
            .unwrap();
        let mut t2 = Tape::new(&params);
        let label = net
            .loss::<ChaCha8Rng>(&mut t2, &enc, Objective::Label, None)
            .unwrap();
        assert_eq!(t1.value(joint).item(), t2.value(label).item());
    }

    /// Hand-set parameters: every quantity follows from scalar formulas.
    #[test]
    fn joint_loss_matches_scalar_composition() {
        let (doc, vocab) = fixture();
        let arch = tiny_arch();
        let net = Network::new(ModelKind::RaCnn, arch.clone()).unwrap();
        let mut params = net.init_params(vocab.len(), &mut ChaCha8Rng::seed_from_u64(2));
        // Embeddings: token id k (k >= 2) gets (k/10, -k/20, 0.3).
        let emb = params.get_mut(EMBEDDING).unwrap();
        for k in 2..vocab.len() {
            emb.row_mut(k)
                .copy_from_slice(&[k as f64 / 10.0, -(k as f64) / 20.0, 0.3]);
        }
        params.insert(
            conv_name(1),
            Tensor::matrix(2, 3, vec![1.0, 0.0, 0.0, 0.0, -1.0, 1.0]).unwrap(),
        );
        params.insert(
            conv_name(2),
            Tensor::matrix(
                2,
                6,
                vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0],
            )
            .unwrap(),
        );
        params.insert(
            RATIONALE_WEIGHT,
            Tensor::vector(vec![0.5, -0.25, 1.0, 0.75]),
        );
        params.insert(RATIONALE_BIAS, Tensor::scalar(-0.1));
        params.insert(
            CLASSIFIER_WEIGHT,
            Tensor::matrix(2, 4, vec![0.2, 0.1, -0.3, 0.4, -0.2, 0.3, 0.5, -0.1]).unwrap(),
        );
        params.insert(CLASSIFIER_BIAS, Tensor::vector(vec![0.05, -0.05]));

        let enc = encode_document(&doc, &vocab, &arch);
        let mut tape = Tape::new(&params);
        let loss = net
            .loss::<ChaCha8Rng>(&mut tape, &enc, Objective::Joint { weight: 0.7 }, None)
            .unwrap();

        // Scalar oracle.
        let e = |k: usize| [k as f64 / 10.0, -(k as f64) / 20.0, 0.3];
        let relu = |x: f64| x.max(0.0);
        let mut sentence_vecs = Vec::new();
        for ids in &enc.sentences {
            let rows: Vec<[f64; 3]> = ids.iter().map(|&k| e(k)).collect();
            let f10 = rows.iter().map(|r| relu(r[0])).fold(0.0, f64::max);
            let f11 = rows.iter().map(|r| relu(-r[1] + r[2])).fold(0.0, f64::max);
            let f20 = rows
                .windows(2)
                .map(|w| relu(w[0][0] + w[1][0]))
                .fold(0.0, f64::max);
            let f21 = rows
                .windows(2)
                .map(|w| relu(w[0][2] - w[1][2]))
                .fold(0.0, f64::max);
            sentence_vecs.push([f10, f11, f20, f21]);
        }
        let v = [0.5, -0.25, 1.0, 0.75];
        let zs: Vec<f64> = sentence_vecs
            .iter()
            .map(|s| s.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() - 0.1)
            .collect();
        let ps: Vec<f64> = zs.iter().map(|&z| sigmoid(z)).collect();
        let mut d = [0.0; 4];
        for (s, p) in sentence_vecs.iter().zip(&ps) {
            for c in 0..4 {
                d[c] += p * s[c];
            }
        }
        let u = [[0.2, 0.1, -0.3, 0.4], [-0.2, 0.3, 0.5, -0.1]];
        let logits = [
            u[0].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() + 0.05,
            u[1].iter().zip(&d).map(|(a, b)| a * b).sum::<f64>() - 0.05,
        ];
        let ce = softmax_xent(&logits, Label::Pos.index()).unwrap().0;
        let targets = [1.0, 0.0];
        let bce: f64 = zs
            .iter()
            .zip(targets)
            .map(|(&z, t)| -(t * sigmoid(z).ln() + (1.0 - t) * (1.0 - sigmoid(z)).ln()))
            .sum();
        assert_relative_eq!(tape.value(loss).item(), ce + 0.7 * bce, epsilon = 1e-12);
        // Consistency of the stable form with the textbook one.
        assert_relative_eq!(
            softplus(zs[0]) - zs[0],
            -sigmoid(zs[0]).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn rationale_objective_requires_annotation() {
        let doc = Document::new("u", Label::Neg, [("dull".to_string(), None)]).unwrap();
        let vocab = build_vocab(&[&doc], 1).unwrap();
        let net = Network::new(ModelKind::RaCnn, tiny_arch()).unwrap();
        let params = net.init_params(vocab.len(), &mut ChaCha8Rng::seed_from_u64(3));
        let enc = encode_document(&doc, &vocab, &net.arch);
        let mut tape = Tape::new(&params);
        assert!(net
            .loss::<ChaCha8Rng>(&mut tape, &enc, Objective::RationaleOnly, None)
            .is_err());
        let mut tape = Tape::new(&params);
        assert!(net
            .loss::<ChaCha8Rng>(&mut tape, &enc, Objective::Joint { weight: 1.0 }, None)
            .is_ok());
    }

    #[test]
    fn rationale_term_vanishes_when_probabilities_match_labels() {
        // With p_i = r_i up to ~1e-12, the summed cross-entropy is ~1e-12.
        let (doc, vocab) = fixture();
        let net = Network::new(ModelKind::RaCnn, tiny_arch()).unwrap();
        let mut params = net.init_params(vocab.len(), &mut ChaCha8Rng::seed_from_u64(4));
        let enc = encode_document(&doc, &vocab, &net.arch);
        let s = {
            let mut tape = Tape::new(&params);
            let s = net.sentence_vectors(&mut tape, &enc).unwrap();
            tape.value(s).clone()
        };
        // Choose v along (s0 - s1) so z0 = +28, z1 = -28.
        let diff: Vec<f64> = s.row(0).iter().zip(s.row(1)).map(|(a, b)| a - b).collect();
        let norm2: f64 = diff.iter().map(|x| x * x).sum();
        let mid: Vec<f64> = s
            .row(0)
            .iter()
            .zip(s.row(1))
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        let scale = 56.0 / norm2;
        let v: Vec<f64> = diff.iter().map(|x| x * scale).collect();
        let c = -mid.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        params.insert(RATIONALE_WEIGHT, Tensor::vector(v));
        params.insert(RATIONALE_BIAS, Tensor::scalar(c));
        let mut tape = Tape::new(&params);
        let loss = net
            .loss::<ChaCha8Rng>(&mut tape, &enc, Objective::RationaleOnly, None)
            .unwrap();
        assert!(tape.value(loss).item() < 1e-11);
    }
}
