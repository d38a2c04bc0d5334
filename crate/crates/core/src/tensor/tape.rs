use std::collections::BTreeMap;

use ndarray::ArrayView2;

use super::ops;
use super::{Gradients, ParamSet, Tensor};
use crate::corpus::PAD_ID;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Param,
    Constant,
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    ConvMax {
        input: Var,
        filters: Vec<Var>,
        widths: Vec<usize>,
        positions: Vec<Option<usize>>,
    },
    Stack(Vec<Var>),
    MatMulT {
        x: Var,
        w: Var,
    },
    AddBias {
        x: Var,
        b: Var,
    },
    AddScalar {
        x: Var,
        c: Var,
    },
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    MatVec {
        x: Var,
        v: Var,
    },
    WeightedSum {
        s: Var,
        w: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    SoftmaxXent {
        logits: Var,
        gold: usize,
        probs: Vec<f64>,
    },
    BceWithLogits {
        z: Var,
        targets: Vec<f64>,
    },
    Add(Var, Var),
    Scale(Var, f64),
    SumSquares(Var),
}

enum Value<'p> {
    Borrowed(&'p Tensor),
    Owned(Tensor),
}

struct Node<'p> {
    op: Op,
    value: Value<'p>,
}

/// Records a forward computation over a borrowed [`ParamSet`] so it can be
/// differentiated with [`Tape::backward`].
///
/// Parameters are never copied onto the tape; a tape lives for one forward
/// and backward pass.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node<'p>>,
    param_vars: BTreeMap<&'p str, Var>,
    recorded_ops: usize,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Tape<'p> {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
            recorded_ops: 0,
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }

    fn push(&mut self, op: Op, value: Tensor, what: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(what));
        }
        self.nodes.push(Node {
            op,
            value: Value::Owned(value),
        });
        self.recorded_ops += 1;
        Ok(Var(self.nodes.len() - 1))
    }

    /// Leaf for a named parameter. Repeated calls return the same handle.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(name) {
            return Ok(v);
        }
        let (key, tensor) = self
            .params
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        self.nodes.push(Node {
            op: Op::Param,
            value: Value::Borrowed(tensor),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(key, v);
        Ok(v)
    }

    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value: Value::Owned(tensor),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = ops::embed(ids, self.value(table))?;
        self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            out,
            "embed",
        )
    }

    pub fn conv_max(&mut self, input: Var, filters: &[Var], widths: &[usize]) -> Result<Var> {
        let banks: Vec<&Tensor> = filters.iter().map(|&f| self.value(f)).collect();
        let (out, positions) = ops::conv_max_with_positions(self.value(input), &banks, widths)?;
        let op = Op::ConvMax {
            input,
            filters: filters.to_vec(),
            widths: widths.to_vec(),
            positions,
        };
        self.push(op, out, "conv_max")
    }

    /// Stacks equally sized vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Shape("cannot stack zero rows".into()))?;
        let width = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let t = self.value(r);
            if t.len() != width {
                return Err(Error::Shape(format!(
                    "stack rows of {} and {width}",
                    t.len()
                )));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), width, data)?;
        self.push(Op::Stack(rows.to_vec()), out, "stack")
    }

    /// `x · wᵀ` for `x` of shape `[n, k]` (or `[k]`) and `w` of `[a, k]`.
    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.cols() != wv.cols() {
            return Err(Error::Shape(format!(
                "matmul_t of {:?} and {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let product = view(xv).dot(&view(wv).t());
        let data: Vec<f64> = product.iter().copied().collect();
        let out = if xv.shape().len() == 1 {
            Tensor::vector(data)
        } else {
            Tensor::matrix(xv.rows(), wv.rows(), data)?
        };
        self.push(Op::MatMulT { x, w }, out, "matmul_t")
    }

    /// Adds vector `b` to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if xv.cols() != bv.len() {
            return Err(Error::Shape(format!(
                "bias of {} for rows of {}",
                bv.len(),
                xv.cols()
            )));
        }
        let mut out = xv.clone();
        let c = bv.len();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % c];
        }
        self.push(Op::AddBias { x, b }, out, "add_bias")
    }

    /// Adds a one-element tensor `c` to every entry of `x`.
    pub fn add_scalar(&mut self, x: Var, c: Var) -> Result<Var> {
        let cv = self.value(c);
        if cv.len() != 1 {
            return Err(Error::Shape(format!("add_scalar with {:?}", cv.shape())));
        }
        let shift = cv.item();
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|o| *o += shift);
        self.push(Op::AddScalar { x, c }, out, "add_scalar")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|o| *o = o.tanh());
        self.push(Op::Tanh(x), out, "tanh")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|o| *o = ops::sigmoid(*o));
        self.push(Op::Sigmoid(x), out, "sigmoid")
    }

    /// Softmax over all entries of a vector.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::vector(ops::softmax(self.value(x).data()));
        self.push(Op::Softmax(x), out, "softmax")
    }

    /// `x · v` for `x` of shape `[n, k]` and `v` of `[k]`, giving `[n]`.
    pub fn matvec(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xv, vv) = (self.value(x), self.value(v));
        if xv.cols() != vv.len() {
            return Err(Error::Shape(format!(
                "matvec of {:?} and {:?}",
                xv.shape(),
                vv.shape()
            )));
        }
        let out: Vec<f64> = (0..xv.rows())
            .map(|i| ops::dot(xv.row(i), vv.data()))
            .collect();
        self.push(Op::MatVec { x, v }, Tensor::vector(out), "matvec")
    }

    /// `Σ_i w_i · s_i` over the rows of `s`.
    pub fn weighted_sum(&mut self, s: Var, w: Var) -> Result<Var> {
        let out = ops::weighted_sum(self.value(s), self.value(w).data())?;
        self.push(Op::WeightedSum { s, w }, out, "weighted_sum")
    }

    /// Multiplies `x` elementwise by a fixed mask (already scaled for
    /// inverted dropout).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let mut out = self.value(x).clone();
        if mask.len() != out.len() {
            return Err(Error::Shape(format!(
                "dropout mask of {} for {} values",
                mask.len(),
                out.len()
            )));
        }
        out.data_mut()
            .iter_mut()
            .zip(&mask)
            .for_each(|(o, m)| *o *= m);
        self.push(Op::Dropout { x, mask }, out, "dropout")
    }

    pub fn softmax_xent(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let (loss, probs) = ops::softmax_xent(self.value(logits).data(), gold)?;
        self.push(
            Op::SoftmaxXent {
                logits,
                gold,
                probs,
            },
            Tensor::scalar(loss),
            "softmax_xent",
        )
    }

    /// Summed binary cross-entropy of `sigmoid(z)` against `targets`,
    /// computed from the logits for stability.
    pub fn bce_with_logits(&mut self, z: Var, targets: &[f64]) -> Result<Var> {
        let zv = self.value(z);
        if zv.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} targets for {} logits",
                targets.len(),
                zv.len()
            )));
        }
        let loss: f64 = zv
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| ops::softplus(z) - t * z)
            .sum();
        let op = Op::BceWithLogits {
            z,
            targets: targets.to_vec(),
        };
        self.push(op, Tensor::scalar(loss), "bce_with_logits")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "add of {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = av.clone();
        out.data_mut()
            .iter_mut()
            .zip(bv.data())
            .for_each(|(o, b)| *o += b);
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|o| *o *= factor);
        self.push(Op::Scale(x, factor), out, "scale")
    }

    pub fn sum_squares(&mut self, x: Var) -> Result<Var> {
        let total = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Op::SumSquares(x), Tensor::scalar(total), "sum_squares")
    }

    /// Gradient of the scalar `loss` with respect to every parameter of the
    /// borrowed [`ParamSet`]. Parameters that do not influence the loss get
    /// zero tensors.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.recorded_ops == 0 {
            return Err(Error::EmptyTape);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }

        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = self.value(Var(i));
            match &self.nodes[i].op {
                Op::Param => {
                    grads[i] = Some(g);
                }
                Op::Constant => {}
                Op::Embed { table, ids } => {
                    let shape = self.value(*table).shape().to_vec();
                    let dt = slot(&mut grads, *table, &shape);
                    for (r, &id) in ids.iter().enumerate() {
                        if id == PAD_ID {
                            continue;
                        }
                        add_into(dt.row_mut(id), g.row(r), 1.0);
                    }
                }
                Op::ConvMax {
                    input,
                    filters,
                    widths,
                    positions,
                } => {
                    let xv = self.value(*input);
                    let dim = xv.cols();
                    let mut o = 0;
                    for (&f, &w) in filters.iter().zip(widths) {
                        let bank = self.value(f);
                        for j in 0..bank.rows() {
                            if let Some(t) = positions[o] {
                                let go = g.data()[o];
                                let window = &xv.data()[t * dim..(t + w) * dim];
                                add_into(slot(&mut grads, f, bank.shape()).row_mut(j), window, go);
                                let dx = slot(&mut grads, *input, xv.shape());
                                add_into(
                                    &mut dx.data_mut()[t * dim..(t + w) * dim],
                                    bank.row(j),
                                    go,
                                );
                            }
                            o += 1;
                        }
                    }
                }
                Op::Stack(rows) => {
                    for (r, &v) in rows.iter().enumerate() {
                        let shape = self.value(v).shape().to_vec();
                        add_into(slot(&mut grads, v, &shape).data_mut(), g.row(r), 1.0);
                    }
                }
                Op::MatMulT { x, w } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let gm = ArrayView2::from_shape((xv.rows(), wv.rows()), g.data())
                        .map_err(|e| Error::Shape(e.to_string()))?;
                    let dx = gm.dot(&view(wv));
                    let dw = gm.t().dot(&view(xv));
                    add_into(
                        slot(&mut grads, *x, xv.shape()).data_mut(),
                        dx.as_slice().unwrap(),
                        1.0,
                    );
                    add_into(
                        slot(&mut grads, *w, wv.shape()).data_mut(),
                        dw.as_slice().unwrap(),
                        1.0,
                    );
                }
                Op::AddBias { x, b } => {
                    let bv = self.value(*b);
                    let c = bv.len();
                    let db = slot(&mut grads, *b, bv.shape());
                    for (k, gv) in g.data().iter().enumerate() {
                        db.data_mut()[k % c] += gv;
                    }
                    let shape = self.value(*x).shape().to_vec();
                    add_into(slot(&mut grads, *x, &shape).data_mut(), g.data(), 1.0);
                }
                Op::AddScalar { x, c } => {
                    let total: f64 = g.data().iter().sum();
                    let cshape = self.value(*c).shape().to_vec();
                    slot(&mut grads, *c, &cshape).data_mut()[0] += total;
                    let shape = self.value(*x).shape().to_vec();
                    add_into(slot(&mut grads, *x, &shape).data_mut(), g.data(), 1.0);
                }
                Op::Tanh(x) => {
                    let dx = slot(&mut grads, *x, out.shape());
                    for ((d, gv), y) in dx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gv * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(x) => {
                    let dx = slot(&mut grads, *x, out.shape());
                    for ((d, gv), y) in dx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *d += gv * y * (1.0 - y);
                    }
                }
                Op::Softmax(x) => {
                    let inner = ops::dot(g.data(), out.data());
                    let dx = slot(&mut grads, *x, out.shape());
                    for ((d, gv), y) in dx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *d += y * (gv - inner);
                    }
                }
                Op::MatVec { x, v } => {
                    let (xv, vv) = (self.value(*x), self.value(*v));
                    {
                        let dx = slot(&mut grads, *x, xv.shape());
                        for (r, gv) in g.data().iter().enumerate() {
                            add_into(dx.row_mut(r), vv.data(), *gv);
                        }
                    }
                    let dv = slot(&mut grads, *v, vv.shape());
                    for (r, gv) in g.data().iter().enumerate() {
                        add_into(dv.data_mut(), xv.row(r), *gv);
                    }
                }
                Op::WeightedSum { s, w } => {
                    let (sv, wv) = (self.value(*s), self.value(*w));
                    {
                        let ds = slot(&mut grads, *s, sv.shape());
                        for (r, wr) in wv.data().iter().enumerate() {
                            add_into(ds.row_mut(r), g.data(), *wr);
                        }
                    }
                    let dw = slot(&mut grads, *w, wv.shape());
                    for r in 0..sv.rows() {
                        dw.data_mut()[r] += ops::dot(g.data(), sv.row(r));
                    }
                }
                Op::Dropout { x, mask } => {
                    let dx = slot(&mut grads, *x, out.shape());
                    for ((d, gv), m) in dx.data_mut().iter_mut().zip(g.data()).zip(mask) {
                        *d += gv * m;
                    }
                }
                Op::SoftmaxXent {
                    logits,
                    gold,
                    probs,
                } => {
                    let go = g.item();
                    let shape = self.value(*logits).shape().to_vec();
                    let dl = slot(&mut grads, *logits, &shape);
                    for (k, (d, p)) in dl.data_mut().iter_mut().zip(probs).enumerate() {
                        let onehot = if k == *gold { 1.0 } else { 0.0 };
                        *d += go * (p - onehot);
                    }
                }
                Op::BceWithLogits { z, targets } => {
                    let go = g.item();
                    let zv = self.value(*z);
                    let probs: Vec<f64> = zv.data().iter().map(|&v| logistic(v)).collect();
                    let dz = slot(&mut grads, *z, zv.shape());
                    for ((d, p), t) in dz.data_mut().iter_mut().zip(probs).zip(targets) {
                        *d += go * (p - t);
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, *a, out.shape()).data_mut(), g.data(), 1.0);
                    add_into(slot(&mut grads, *b, out.shape()).data_mut(), g.data(), 1.0);
                }
                Op::Scale(x, factor) => {
                    add_into(
                        slot(&mut grads, *x, out.shape()).data_mut(),
                        g.data(),
                        *factor,
                    );
                }
                Op::SumSquares(x) => {
                    let xv = self.value(*x);
                    add_into(
                        slot(&mut grads, *x, xv.shape()).data_mut(),
                        xv.data(),
                        2.0 * g.item(),
                    );
                }
            }
        }

        let mut result = Gradients::zeros_like(self.params);
        for (name, &v) in &self.param_vars {
            if let Some(g) = grads[v.0].take() {
                if !g.is_finite() {
                    return Err(Error::NonFinite("backward"));
                }
                if let Some(slot) = result.get_mut(name) {
                    *slot = g;
                }
            }
        }
        Ok(result)
    }
}

fn view(t: &Tensor) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((t.rows(), t.cols()), t.data()).expect("tensor is row-major")
}

/// Unclamped logistic; the gradient of the summed cross-entropy needs the
/// exact value rather than the interior-clamped probability.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("p", Tensor::vector(vec![1.5, -2.0, 0.25]));
        p.insert("unused", Tensor::vector(vec![4.0, 5.0]));
        p
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_value() {
        let p = params();
        let mut tape = Tape::new(&p);
        let x = tape.param("p").unwrap();
        let loss = tape.sum_squares(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("p").unwrap().data(), &[3.0, -4.0, 0.5]);
        assert_eq!(g.get("unused").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_without_forward_fails() {
        let p = params();
        let mut tape = Tape::new(&p);
        let x = tape.param("p").unwrap();
        assert!(matches!(tape.backward(x).unwrap_err(), Error::EmptyTape));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let p = params();
        let mut tape = Tape::new(&p);
        let x = tape.param("p").unwrap();
        let y = tape.tanh(x).unwrap();
        assert!(matches!(tape.backward(y).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn unknown_parameter_is_an_error() {
        let p = params();
        let mut tape = Tape::new(&p);
        assert!(matches!(
            tape.param("nope"),
            Err(Error::UnknownParameter(_))
        ));
    }

    /// Composes every recorded op and compares with central differences.
    #[test]
    fn composed_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = ParamSet::new();
        p.insert("emb", Tensor::uniform(&[6, 3], 1.0, &mut rng));
        p.insert("f2", Tensor::uniform(&[2, 6], 1.0, &mut rng));
        p.insert("w", Tensor::uniform(&[4, 2], 1.0, &mut rng));
        p.insert("b", Tensor::uniform(&[4], 1.0, &mut rng));
        p.insert("u", Tensor::uniform(&[4], 1.0, &mut rng));
        p.insert("v", Tensor::uniform(&[2], 1.0, &mut rng));
        p.insert("c", Tensor::uniform(&[1], 1.0, &mut rng));
        p.insert("cls", Tensor::uniform(&[2, 2], 1.0, &mut rng));

        let f = |p: &ParamSet| -> Result<(f64, Gradients)> {
            let mut t = Tape::new(p);
            let emb = t.param("emb")?;
            let f2 = t.param("f2")?;
            let mut rows = Vec::new();
            for ids in [[1usize, 2, 3, 0], [4, 5, 1, 2]] {
                let x = t.embed(emb, &ids)?;
                rows.push(t.conv_max(x, &[f2], &[2])?);
            }
            let s = t.stack(&rows)?;
            let (w, b, u, v, c) = (
                t.param("w")?,
                t.param("b")?,
                t.param("u")?,
                t.param("v")?,
                t.param("c")?,
            );
            let h = t.matmul_t(s, w)?;
            let h = t.add_bias(h, b)?;
            let h = t.tanh(h)?;
            let scores = t.matvec(h, u)?;
            let alpha = t.softmax(scores)?;
            let z = t.matvec(s, v)?;
            let z = t.add_scalar(z, c)?;
            let pr = t.sigmoid(z)?;
            let mix = t.add(alpha, pr)?;
            let d = t.weighted_sum(s, mix)?;
            let d = t.dropout(d, vec![2.0, 0.5])?;
            let cls = t.param("cls")?;
            let logits = t.matvec(cls, d)?;
            let ce = t.softmax_xent(logits, 1)?;
            let bce = t.bce_with_logits(z, &[1.0, 0.0])?;
            let bce = t.scale(bce, 0.7)?;
            let loss = t.add(ce, bce)?;
            Ok((t.value(loss).item(), t.backward(loss)?))
        };

        let report = crate::tensor::check_gradients(&p, 1e-5, f).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        assert!(report.checked > 30);

        let (_, g) = f(&p).unwrap();
        // Row 0 of the embedding is padding and row 3 is used only next to
        // padding; row 0 must stay exactly zero.
        assert!(g.get("emb").unwrap().row(0).iter().all(|&x| x == 0.0));
        assert!(g.get("cls").unwrap().data().iter().any(|&x| x != 0.0));
    }
}
