//! Forward kernels. Each one is usable on its own; [`super::Tape`] wraps
//! them to record what the backward pass needs.

use ndarray::{Array2, ArrayView2};

use super::Tensor;
use crate::corpus::PAD_ID;
use crate::{Error, Result};

/// Gathers one embedding row per token. Padding ids yield zero rows.
pub fn embed(token_ids: &[usize], table: &Tensor) -> Result<Tensor> {
    if token_ids.is_empty() {
        return Err(Error::Shape("cannot embed an empty token sequence".into()));
    }
    let (vocab, dim) = (table.rows(), table.cols());
    let mut out = Vec::with_capacity(token_ids.len() * dim);
    for &id in token_ids {
        if id >= vocab {
            return Err(Error::TokenOutOfRange { id, size: vocab });
        }
        if id == PAD_ID {
            out.extend(std::iter::repeat_n(0.0, dim));
        } else {
            out.extend_from_slice(table.row(id));
        }
    }
    Tensor::matrix(token_ids.len(), dim, out)
}

/// Convolution with one filter bank per width, ReLU, then max over window
/// positions. Feature maps are concatenated in the order of `widths`.
///
/// The second return value holds, per output feature, the window position
/// that produced a positive maximum, or `None` when the feature is zero.
pub fn conv_max_with_positions(
    x: &Tensor,
    filters: &[&Tensor],
    widths: &[usize],
) -> Result<(Tensor, Vec<Option<usize>>)> {
    if filters.len() != widths.len() {
        return Err(Error::Shape(format!(
            "{} filter banks for {} widths",
            filters.len(),
            widths.len()
        )));
    }
    let (len, dim) = (x.rows(), x.cols());
    let mut out = Vec::new();
    let mut positions = Vec::new();
    for (bank, &w) in filters.iter().zip(widths) {
        if w == 0 || len < w {
            return Err(Error::Shape(format!(
                "sentence of {len} rows is shorter than filter width {w}"
            )));
        }
        if bank.cols() != w * dim {
            return Err(Error::Shape(format!(
                "width-{w} filters have {} columns, expected {}",
                bank.cols(),
                w * dim
            )));
        }
        let windows = len - w + 1;
        let scores = window_scores(x.data(), dim, w, windows, bank)?;
        for j in 0..bank.rows() {
            let column = scores.column(j);
            let mut best: Option<(usize, f64)> = None;
            for (t, &s) in column.iter().enumerate() {
                if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                    best = Some((t, s));
                }
            }
            out.push(best.map_or(0.0, |(_, s)| s));
            positions.push(best.map(|(t, _)| t));
        }
    }
    Ok((Tensor::vector(out), positions))
}

pub fn conv_max(x: &Tensor, filters: &[&Tensor], widths: &[usize]) -> Result<Tensor> {
    conv_max_with_positions(x, filters, widths).map(|(t, _)| t)
}

/// `windows × maps` matrix of filter responses. Window `t` is the
/// contiguous slice `x[t*dim .. (t+w)*dim]` of the row-major input.
fn window_scores(
    x: &[f64],
    dim: usize,
    w: usize,
    windows: usize,
    bank: &Tensor,
) -> Result<Array2<f64>> {
    let mut cols = Vec::with_capacity(windows * w * dim);
    for t in 0..windows {
        cols.extend_from_slice(&x[t * dim..(t + w) * dim]);
    }
    let patches = ArrayView2::from_shape((windows, w * dim), &cols)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let weights = ArrayView2::from_shape((bank.rows(), w * dim), bank.data())
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(patches.dot(&weights.t()))
}

pub fn sigmoid(x: f64) -> f64 {
    let p = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    // Keep the result strictly inside (0, 1) even where it saturates.
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hierarchical-attention weights `softmax_i(u · tanh(W s_i + b))` over the
/// rows of `sentences`.
pub fn attention_weights(
    sentences: &Tensor,
    projection: &Tensor,
    bias: &Tensor,
    context: &Tensor,
) -> Result<Tensor> {
    let att = projection.rows();
    if projection.cols() != sentences.cols() || bias.len() != att || context.len() != att {
        return Err(Error::Shape(format!(
            "attention shapes disagree: S {:?}, W {:?}, b {:?}, u {:?}",
            sentences.shape(),
            projection.shape(),
            bias.shape(),
            context.shape()
        )));
    }
    let scores: Vec<f64> = (0..sentences.rows())
        .map(|i| {
            let s = sentences.row(i);
            (0..att)
                .map(|k| context.data()[k] * (dot(projection.row(k), s) + bias.data()[k]).tanh())
                .sum()
        })
        .collect();
    Ok(Tensor::vector(softmax(&scores)))
}

/// Probability that a sentence is a rationale: `sigmoid(v · s + c)`.
pub fn rationale_prob(sentence: &[f64], weights: &[f64], bias: f64) -> f64 {
    sigmoid(dot(sentence, weights) + bias)
}

/// `Σ_i w_i · S_i` over the rows of `sentences`.
pub fn weighted_sum(sentences: &Tensor, weights: &[f64]) -> Result<Tensor> {
    if weights.len() != sentences.rows() {
        return Err(Error::Shape(format!(
            "{} weights for {} rows",
            weights.len(),
            sentences.rows()
        )));
    }
    let mut out = vec![0.0; sentences.cols()];
    for (i, &w) in weights.iter().enumerate() {
        for (o, s) in out.iter_mut().zip(sentences.row(i)) {
            *o += w * s;
        }
    }
    Ok(Tensor::vector(out))
}

/// Cross-entropy of `logits` against class `gold`, with the class
/// probabilities. Stable under any common shift of the logits.
pub fn softmax_xent(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= logits.len() {
        return Err(Error::Invalid(format!(
            "gold class {gold} out of range for {} logits",
            logits.len()
        )));
    }
    let top = (0..logits.len())
        .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
        .expect("non-empty logits");
    let max = logits[top];
    // log Σ exp(l - max) = log(1 + rest), with rest the non-maximal mass.
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != top)
        .map(|(_, l)| (l - max).exp())
        .sum();
    let log_norm = rest.ln_1p();
    let probs = logits.iter().map(|l| (l - max - log_norm).exp()).collect();
    Ok(((max - logits[gold]) + log_norm, probs))
}
