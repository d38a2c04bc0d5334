use std::fmt::Write as _;

use super::{ParamSet, Tensor};
use crate::{Error, Result};

/// Appends the parameter block of a checkpoint:
///
/// ```text
/// params <count>
/// param <name> <rank> <dim_1> ... <dim_rank>
/// <value> <value> ...
/// ```
///
/// Values are written in shortest round-trip scientific notation
/// (`-2.5e-2`), so reading them back reproduces every bit.
pub fn write_params(params: &ParamSet, out: &mut String) {
    let _ = writeln!(out, "params {}", params.len());
    for (name, tensor) in params.iter() {
        let dims: Vec<String> = tensor.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(
            out,
            "param {name} {} {}",
            tensor.shape().len(),
            dims.join(" ")
        );
        let mut first = true;
        for v in tensor.data() {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
}

/// Reads a block written by [`write_params`] from numbered lines.
pub fn read_params<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<ParamSet> {
    let bad = |line: usize, msg: &str| Error::Checkpoint(format!("line {line}: {msg}"));
    let (n, header) = lines
        .next()
        .ok_or_else(|| bad(0, "missing params header"))?;
    let count: usize = header
        .strip_prefix("params ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| bad(n, "expected `params <count>`"))?;

    let mut params = ParamSet::new();
    for _ in 0..count {
        let (n, head) = lines
            .next()
            .ok_or_else(|| bad(0, "truncated parameter block"))?;
        let mut fields = head.split(' ');
        if fields.next() != Some("param") {
            return Err(bad(n, "expected `param <name> <rank> <dims>`"));
        }
        let name = fields
            .next()
            .ok_or_else(|| bad(n, "missing parameter name"))?;
        let rank: usize = fields
            .next()
            .and_then(|r| r.parse().ok())
            .ok_or_else(|| bad(n, "bad rank"))?;
        let shape: Vec<usize> = fields
            .map(|d| d.parse().map_err(|_| bad(n, "bad dimension")))
            .collect::<Result<_>>()?;
        if shape.len() != rank {
            return Err(bad(n, "rank does not match dimension count"));
        }
        let (m, body) = lines.next().ok_or_else(|| bad(n, "missing values line"))?;
        let values: Vec<f64> = body
            .split(' ')
            .map(|v| v.parse::<f64>().map_err(|_| bad(m, "bad value")))
            .collect::<Result<_>>()?;
        let tensor = Tensor::new(shape, values).map_err(|e| bad(m, &e.to_string()))?;
        if params.contains(name) {
            return Err(bad(n, "duplicate parameter"));
        }
        params.insert(name, tensor);
    }
    Ok(params)
}
