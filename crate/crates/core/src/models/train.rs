use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{encode_document, EncodedDocument, Network, Objective};
use super::{Architecture, ModelCheckpoint, ModelKind, PretrainedEmbeddings, TrainConfig};
use crate::corpus::{build_vocab, Corpus, Document, Split, Vocabulary};
use crate::tensor::{check_gradients, Adam, AdamConfig, GradCheckReport, ParamSet, Tape};
use crate::{Error, Result};

/// One line of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the split has no dev documents.
    pub dev_acc: Option<f64>,
}

pub fn train(
    config: &TrainConfig,
    arch: &Architecture,
    corpus: &Corpus,
    split: &Split,
    vocab: &Vocabulary,
    embeddings: Option<&PretrainedEmbeddings>,
) -> Result<ModelCheckpoint> {
    train_with_progress(config, arch, corpus, split, vocab, embeddings, |_| {})
}

/// Trains one model and returns the parameters of its best dev epoch.
///
/// RA-CNN first runs `rationale_epochs` epochs on the rationale term alone;
/// then every kind runs up to `epochs` epochs of its training objective,
/// one document per optimizer step, stopping after `patience` epochs
/// without a dev improvement. Without dev documents the last epoch wins.
pub fn train_with_progress(
    config: &TrainConfig,
    arch: &Architecture,
    corpus: &Corpus,
    split: &Split,
    vocab: &Vocabulary,
    embeddings: Option<&PretrainedEmbeddings>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<ModelCheckpoint> {
    config.validate()?;
    let net = Network::new(config.kind, arch.clone())?;
    let train_docs = corpus.resolve(&split.train)?;
    if train_docs.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if config.kind == ModelKind::RaCnn {
        if let Some(doc) = train_docs.iter().find(|d| !d.annotated) {
            return Err(Error::Config(format!(
                "RA-CNN needs rationale labels but training document `{}` is unannotated",
                doc.id
            )));
        }
    }
    let dev_docs = corpus.resolve(&split.dev)?;
    let train_enc: Vec<EncodedDocument> = train_docs
        .iter()
        .map(|d| encode_document(d, vocab, arch))
        .collect();
    let dev_enc: Vec<EncodedDocument> = dev_docs
        .iter()
        .map(|d| encode_document(d, vocab, arch))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = net.init_params(vocab.len(), &mut rng);
    if let Some(emb) = embeddings {
        emb.apply(&mut params, vocab)?;
    }
    let mut adam = Adam::new(AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    });

    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut epoch = 0;

    if config.kind == ModelKind::RaCnn {
        for _ in 0..config.rationale_epochs {
            epoch += 1;
            order.shuffle(&mut rng);
            let loss = run_epoch(
                &net,
                &mut params,
                &mut adam,
                &train_enc,
                &order,
                Objective::RationaleOnly,
                0.0,
                &mut rng,
            )?;
            let metrics = EpochMetrics {
                epoch,
                train_loss: loss,
                dev_acc: dev_accuracy(&net, &params, &dev_enc)?,
            };
            on_epoch(&metrics);
            history.push(metrics);
        }
    }

    let objective = net.training_objective(config.rationale_weight);
    let mut best: Option<(f64, usize, ParamSet)> = None;
    let mut stale = 0;
    for _ in 0..config.epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        let loss = run_epoch(
            &net,
            &mut params,
            &mut adam,
            &train_enc,
            &order,
            objective,
            config.dropout,
            &mut rng,
        )?;
        let dev_acc = dev_accuracy(&net, &params, &dev_enc)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss,
            dev_acc,
        };
        on_epoch(&metrics);
        history.push(metrics);

        match dev_acc {
            Some(acc) if best.as_ref().is_none_or(|(b, _, _)| acc > *b) => {
                best = Some((acc, epoch, params.clone()));
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            None => {}
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (epoch, params),
    };
    Ok(ModelCheckpoint {
        kind: config.kind,
        arch: arch.clone(),
        config: config.clone(),
        params,
        vocab: vocab.clone(),
        history,
        best_epoch,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_epoch(
    net: &Network,
    params: &mut ParamSet,
    adam: &mut Adam,
    docs: &[EncodedDocument],
    order: &[usize],
    objective: Objective,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in order {
        let grads = {
            let mut tape = Tape::new(params);
            let loss = net.loss(&mut tape, &docs[i], objective, Some((dropout, &mut *rng)))?;
            total += tape.value(loss).item();
            tape.backward(loss)?
        };
        adam.step(params, &grads)?;
    }
    Ok(total / order.len() as f64)
}

fn dev_accuracy(net: &Network, params: &ParamSet, dev: &[EncodedDocument]) -> Result<Option<f64>> {
    if dev.is_empty() {
        return Ok(None);
    }
    let mut correct = 0;
    for doc in dev {
        let (probs, _) = net.infer(params, doc)?;
        if argmax(probs) == doc.label {
            correct += 1;
        }
    }
    Ok(Some(correct as f64 / dev.len() as f64))
}

pub(crate) fn argmax(probs: [f64; 2]) -> usize {
    if probs[1] > probs[0] {
        1
    } else {
        0
    }
}

/// Finite-difference check of the full training loss of `kind` on one
/// document, with parameters drawn from `seed` at the architecture's scale.
///
/// Dropout is off. RA-CNN checks the joint objective with unit weight.
pub fn grad_check(
    kind: ModelKind,
    arch: &Architecture,
    doc: &Document,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let net = Network::new(kind, arch.clone())?;
    let vocab = build_vocab(&[doc], 1)?;
    let params = net.init_params(vocab.len(), &mut ChaCha8Rng::seed_from_u64(seed));
    let enc = encode_document(doc, &vocab, arch);
    let objective = net.training_objective(1.0);
    check_gradients(&params, epsilon, |p| {
        let mut tape = Tape::new(p);
        let loss = net.loss::<ChaCha8Rng>(&mut tape, &enc, objective, None)?;
        Ok((tape.value(loss).item(), tape.backward(loss)?))
    })
}
