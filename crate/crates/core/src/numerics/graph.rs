//! Recording tape for reverse-mode gradients.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the nodes in reverse insertion order, which is a valid reverse
//! topological order because inputs always precede their consumers.

use std::collections::HashMap;

use rand::Rng;

use super::ops::{self, Mode, BCE_EPS};
use super::scalar::{gemm_acc, View};
use super::{Gradients, NumericsError, ParamSet, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<'p, T> {
    Owned(Tensor<T>),
    Borrowed(&'p Tensor<T>),
}

enum Op<T> {
    Leaf,
    Param,
    CausalConv { input: Var, kernel: Var, bias: Var, dilation: usize },
    Dense { input: Var, weights: Var, bias: Var },
    MatMul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Dropout { input: Var, mask: Vec<T> },
    SliceCols { input: Var, start: usize },
    SelectRow { input: Var, row: usize },
    MaxRows { input: Var, argmax: Vec<usize> },
    MeanRows { input: Var, count: usize },
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    Sum(Var),
    Bce { prob: Var, target: Vec<T> },
    Mse { pred: Var, target: Vec<T> },
}

struct Node<'p, T> {
    value: Value<'p, T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single forward computation, recorded for differentiation.
pub struct Tape<'p, T: Scalar> {
    params: Option<&'p ParamSet<T>>,
    param_nodes: HashMap<String, Var>,
    nodes: Vec<Node<'p, T>>,
}

impl<T: Scalar> Default for Tape<'static, T> {
    fn default() -> Self {
        Tape { params: None, param_nodes: HashMap::new(), nodes: Vec::new() }
    }
}

impl<T: Scalar> Tape<'static, T> {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn with_params(params: &'p ParamSet<T>) -> Self {
        Tape { params: Some(params), param_nodes: HashMap::new(), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value: Value::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Records a reference to a named parameter of the bound [`ParamSet`].
    pub fn param(&mut self, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.param_nodes.get(name) {
            return Ok(v);
        }
        let params = self.params.ok_or_else(|| NumericsError::Parameter(format!("tape has no parameter set (asked for {name})")))?;
        let value = params.require(name)?;
        self.nodes.push(Node { value: Value::Borrowed(value), op: Op::Param, requires_grad: true });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn causal_conv1d(&mut self, input: Var, kernel: Var, bias: Var, dilation: usize) -> Result<Var, NumericsError> {
        let out = ops::causal_conv1d(self.value(input), self.value(kernel), self.value(bias), dilation)?;
        Ok(self.push(out, Op::CausalConv { input, kernel, bias, dilation }, &[input, kernel, bias]))
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var, NumericsError> {
        let out = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(out, Op::Dense { input, weights, bias }, &[input, weights, bias]))
    }

    /// `[n, k] @ [k, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(NumericsError::shape("matmul", format!("{:?} @ {:?}", ta.shape(), tb.shape())));
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![T::zero(); n * m];
        gemm_acc(View::rows(ta.data(), 0, n, k), View::rows(tb.data(), 0, k, m), &mut out);
        let out = Tensor::new(vec![n, m], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = ops::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        self.push(out, Op::Tanh(x), &[x])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericsError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(NumericsError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("add", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    /// Inverted dropout; records nothing new in eval mode or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var, NumericsError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::Parameter(format!("dropout probability {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mask = ops::dropout_mask::<T, R>(self.value(x).len(), p, rng)?;
        let data = self.value(x).data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::new(self.value(x).shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { input: x, mask }, &[x]))
    }

    /// Columns `[start, end)` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if t.rank() != 2 || start >= end || end > t.shape()[1] {
            return Err(NumericsError::shape("slice_cols", format!("[{start}, {end}) of {:?}", t.shape())));
        }
        let rows = t.shape()[0];
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::new(vec![rows, end - start], data)?;
        Ok(self.push(out, Op::SliceCols { input: x, start }, &[x]))
    }

    /// Row `row` of a 2-D tensor as a `[1, cols]` tensor.
    pub fn select_row(&mut self, x: Var, row: usize) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if t.rank() != 2 || row >= t.shape()[0] {
            return Err(NumericsError::shape("select_row", format!("row {row} of {:?}", t.shape())));
        }
        let out = Tensor::new(vec![1, t.shape()[1]], t.row(row).to_vec())?;
        Ok(self.push(out, Op::SelectRow { input: x, row }, &[x]))
    }

    /// Column-wise maximum over rows `[0, count)`, as `[1, cols]`.
    pub fn max_rows(&mut self, x: Var, count: usize) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if t.rank() != 2 || count == 0 || count > t.shape()[0] {
            return Err(NumericsError::shape("max_rows", format!("{count} rows of {:?}", t.shape())));
        }
        let cols = t.shape()[1];
        let mut argmax = vec![0usize; cols];
        let mut best = t.row(0).to_vec();
        for r in 1..count {
            for (c, &v) in t.row(r).iter().enumerate() {
                if v > best[c] {
                    best[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let out = Tensor::new(vec![1, cols], best)?;
        Ok(self.push(out, Op::MaxRows { input: x, argmax }, &[x]))
    }

    /// Column-wise mean over rows `[0, count)`, as `[1, cols]`.
    pub fn mean_rows(&mut self, x: Var, count: usize) -> Result<Var, NumericsError> {
        let t = self.value(x);
        if t.rank() != 2 || count == 0 || count > t.shape()[0] {
            return Err(NumericsError::shape("mean_rows", format!("{count} rows of {:?}", t.shape())));
        }
        let out = Tensor::new(vec![1, t.shape()[1]], mean_of_rows(t, count))?;
        Ok(self.push(out, Op::MeanRows { input: x, count }, &[x]))
    }

    /// Concatenates `[1, c_i]` tensors into `[1, sum c_i]`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::shape("concat_cols", "no inputs".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != 1 {
                return Err(NumericsError::shape("concat_cols", format!("expected [1, c], got {:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![1, data.len()], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Stacks `[1, c]` tensors into `[n, c]`.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var, NumericsError> {
        let first = rows.first().ok_or_else(|| NumericsError::shape("stack_rows", "no inputs".into()))?;
        let cols = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            if t.len() != cols {
                return Err(NumericsError::shape("stack_rows", format!("row width {} vs {cols}", t.len())));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows.len(), cols], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rows))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x])
    }

    /// Mean binary cross-entropy; see [`ops::bce_loss`].
    pub fn bce(&mut self, prob: Var, target: &Tensor<T>) -> Result<Var, NumericsError> {
        let value = ops::bce_loss(self.value(prob), target)?;
        Ok(self.push(Tensor::scalar(value), Op::Bce { prob, target: target.data().to_vec() }, &[prob]))
    }

    pub fn mse(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var, NumericsError> {
        let value = ops::mse_loss(self.value(pred), target)?;
        Ok(self.push(Tensor::scalar(value), Op::Mse { pred, target: target.data().to_vec() }, &[pred]))
    }

    /// Gradient of the scalar `loss` with respect to every parameter recorded
    /// on this tape. Parameters that do not influence `loss` get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, NumericsError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumericsError::shape("backward", format!("loss must be scalar, got {:?}", lv.shape())));
        }
        lv.ensure_finite("backward")?;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Param = self.nodes[i].op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        let mut out = Gradients::new();
        let mut named: Vec<(&String, &Var)> = self.param_nodes.iter().collect();
        named.sort_by_key(|(_, v)| v.0);
        for (name, v) in named {
            let shape = self.value(*v).shape().to_vec();
            let data = grads[v.0].take().unwrap_or_else(|| vec![T::zero(); self.value(*v).len()]);
            out.insert(name.clone(), Tensor::new(shape, data)?);
        }
        Ok(out)
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::CausalConv { input, kernel, bias, dilation } => {
                let x = self.value(*input);
                let k = self.value(*kernel);
                let (time, in_ch) = (x.shape()[0], x.shape()[1]);
                let (taps, out_ch) = (k.shape()[0], k.shape()[2]);
                if self.wants(*input) {
                    let gx = slot(grads, *input, x.len());
                    for j in 0..taps {
                        let shift = ops::tap_shift(j, taps, *dilation);
                        if shift >= time {
                            continue;
                        }
                        let rows = time - shift;
                        let gy = View::rows(g, shift * out_ch, rows, out_ch);
                        let kt = View::rows(k.data(), j * in_ch * out_ch, in_ch, out_ch).t();
                        gemm_acc(gy, kt, &mut gx[..rows * in_ch]);
                    }
                }
                if self.wants(*kernel) {
                    let gk = slot(grads, *kernel, k.len());
                    for j in 0..taps {
                        let shift = ops::tap_shift(j, taps, *dilation);
                        if shift >= time {
                            continue;
                        }
                        let rows = time - shift;
                        let xt = View::rows(x.data(), 0, rows, in_ch).t();
                        let gy = View::rows(g, shift * out_ch, rows, out_ch);
                        gemm_acc(xt, gy, &mut gk[j * in_ch * out_ch..(j + 1) * in_ch * out_ch]);
                    }
                }
                if self.wants(*bias) {
                    col_sums(g, out_ch, slot(grads, *bias, out_ch));
                }
            }
            Op::Dense { input, weights, bias } => {
                let x = self.value(*input);
                let w = self.value(*weights);
                let (in_w, out_w) = (w.shape()[0], w.shape()[1]);
                let rows = x.len() / in_w;
                if self.wants(*input) {
                    let gx = slot(grads, *input, x.len());
                    gemm_acc(View::rows(g, 0, rows, out_w), View::rows(w.data(), 0, in_w, out_w).t(), gx);
                }
                if self.wants(*weights) {
                    let gw = slot(grads, *weights, w.len());
                    gemm_acc(View::rows(x.data(), 0, rows, in_w).t(), View::rows(g, 0, rows, out_w), gw);
                }
                if self.wants(*bias) {
                    col_sums(g, out_w, slot(grads, *bias, out_w));
                }
            }
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let ga = slot(grads, *a, ta.len());
                    gemm_acc(View::rows(g, 0, n, m), View::rows(tb.data(), 0, k, m).t(), ga);
                }
                if self.wants(*b) {
                    let gb = slot(grads, *b, tb.len());
                    gemm_acc(View::rows(ta.data(), 0, n, k).t(), View::rows(g, 0, n, m), gb);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let gx = slot(grads, *x, xv.len());
                for ((acc, &gi), &v) in gx.iter_mut().zip(g).zip(xv) {
                    if v > T::zero() {
                        *acc += gi;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = slot(grads, *x, g.len());
                for ((acc, &gi), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *acc += gi * y * (T::one() - y);
                }
            }
            Op::Tanh(x) => {
                let gx = slot(grads, *x, g.len());
                for ((acc, &gi), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                    *acc += gi * (T::one() - y * y);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(slot(grads, *v, g.len()), g);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let other = self.value(*b).data();
                    let ga = slot(grads, *a, g.len());
                    for ((acc, &gi), &o) in ga.iter_mut().zip(g).zip(other) {
                        *acc += gi * o;
                    }
                }
                if self.wants(*b) {
                    let other = self.value(*a).data();
                    let gb = slot(grads, *b, g.len());
                    for ((acc, &gi), &o) in gb.iter_mut().zip(g).zip(other) {
                        *acc += gi * o;
                    }
                }
            }
            Op::Scale(x, factor) => {
                let gx = slot(grads, *x, g.len());
                for (acc, &gi) in gx.iter_mut().zip(g) {
                    *acc += gi * *factor;
                }
            }
            Op::Dropout { input, mask } => {
                let gx = slot(grads, *input, g.len());
                for ((acc, &gi), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *acc += gi * m;
                }
            }
            Op::SliceCols { input, start } => {
                let xt = self.value(*input);
                let (rows, cols) = (xt.shape()[0], xt.shape()[1]);
                let width = out.shape()[1];
                let gx = slot(grads, *input, rows * cols);
                for r in 0..rows {
                    add_into(&mut gx[r * cols + start..r * cols + start + width], &g[r * width..(r + 1) * width]);
                }
            }
            Op::SelectRow { input, row } => {
                let xt = self.value(*input);
                let cols = xt.shape()[1];
                let gx = slot(grads, *input, xt.len());
                add_into(&mut gx[row * cols..(row + 1) * cols], g);
            }
            Op::MaxRows { input, argmax } => {
                let xt = self.value(*input);
                let cols = xt.shape()[1];
                let gx = slot(grads, *input, xt.len());
                for (c, &r) in argmax.iter().enumerate() {
                    gx[r * cols + c] += g[c];
                }
            }
            Op::MeanRows { input, count } => {
                let xt = self.value(*input);
                let cols = xt.shape()[1];
                let inv = T::one() / T::of(*count as f64);
                let gx = slot(grads, *input, xt.len());
                for r in 0..*count {
                    for c in 0..cols {
                        gx[r * cols + c] += g[c] * inv;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.wants(p) {
                        add_into(slot(grads, p, n), &g[offset..offset + n]);
                    }
                    offset += n;
                }
            }
            Op::StackRows(rows) => {
                let cols = out.shape()[1];
                for (r, &v) in rows.iter().enumerate() {
                    if self.wants(v) {
                        add_into(slot(grads, v, cols), &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::Sum(x) => {
                let gx = slot(grads, *x, self.value(*x).len());
                for acc in gx.iter_mut() {
                    *acc += g[0];
                }
            }
            Op::Bce { prob, target } => {
                let p = self.value(*prob).data();
                let n = T::of(p.len() as f64);
                let eps = T::of(BCE_EPS);
                let gp = slot(grads, *prob, p.len());
                for ((acc, &pi), &y) in gp.iter_mut().zip(p).zip(target) {
                    // the clamp is flat outside [eps, 1 - eps]
                    if pi > eps && pi < T::one() - eps {
                        *acc += g[0] * (-y / pi + (T::one() - y) / (T::one() - pi)) / n;
                    }
                }
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred).data();
                let n = T::of(p.len() as f64);
                let gp = slot(grads, *pred, p.len());
                for ((acc, &pi), &y) in gp.iter_mut().zip(p).zip(target) {
                    *acc += g[0] * T::of(2.0) * (pi - y) / n;
                }
            }
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &v) in acc.iter_mut().zip(g) {
        *a += v;
    }
}

fn col_sums<T: Scalar>(g: &[T], cols: usize, acc: &mut [T]) {
    for row in g.chunks_exact(cols) {
        add_into(acc, row);
    }
}

pub(crate) fn mean_of_rows<T: Scalar>(t: &Tensor<T>, count: usize) -> Vec<T> {
    let cols = t.cols();
    let mut acc = vec![T::zero(); cols];
    for r in 0..count {
        add_into(&mut acc, t.row(r));
    }
    let inv = T::one() / T::of(count as f64);
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::{check_gradients, GradCheck};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_gradient_is_input() {
        let mut params = ParamSet::new();
        params.insert("w", Tensor::from_rows(&[[0.3, -0.2], [0.5, 0.1], [0.0, 0.7]]).unwrap()).unwrap();
        params.insert_zeros("b", &[2]).unwrap();
        let mut tape = Tape::with_params(&params);
        let x = tape.constant(Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap());
        let (w, b) = (tape.param("w").unwrap(), tape.param("b").unwrap());
        let y = tape.dense(x, w, b).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads["w"].data(), &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(grads["b"].data(), &[1.0, 1.0]);
    }

    #[test]
    fn disconnected_parameter_gets_exact_zero() {
        let mut params = ParamSet::<f64>::new();
        params.insert("used", Tensor::scalar(2.0)).unwrap();
        params.insert("unused", Tensor::vector(vec![1.0, 2.0]).unwrap()).unwrap();
        let mut tape = Tape::with_params(&params);
        let u = tape.param("used").unwrap();
        let _ = tape.param("unused").unwrap();
        let sq = tape.mul(u, u).unwrap();
        let grads = tape.backward(sq).unwrap();
        assert_eq!(grads["used"].data(), &[4.0]);
        assert_eq!(grads["unused"].data(), &[0.0, 0.0]);
    }

    #[test]
    fn relu_gradient_matches_finite_differences() {
        let mut params = ParamSet::<f64>::new();
        params.insert("x", Tensor::vector(vec![0.8, -0.6, 1.5, -2.0]).unwrap()).unwrap();
        let report = check_gradients(&params, GradCheck::default(), |tape| {
            let x = tape.param("x")?;
            let y = tape.relu(x);
            let sq = tape.mul(y, y)?;
            Ok(tape.sum(sq))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
        let mut tape = Tape::with_params(&params);
        let x = tape.param("x").unwrap();
        let y = tape.relu(x);
        let loss = tape.sum(y);
        assert_eq!(tape.backward(loss).unwrap()["x"].data(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn every_layer_type_passes_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut params = ParamSet::<f64>::new();
        params.insert("x", random(&[9, 3], &mut rng)).unwrap();
        params.insert("k", random(&[3, 3, 4], &mut rng)).unwrap();
        params.insert("kb", random(&[4], &mut rng)).unwrap();
        params.insert("w", random(&[4, 6], &mut rng)).unwrap();
        params.insert("wb", random(&[6], &mut rng)).unwrap();
        params.insert("m", random(&[3, 3], &mut rng)).unwrap();
        let target = Tensor::from_rows(&[[1.0, 0.0, 1.0]]).unwrap();
        let report = check_gradients(&params, GradCheck::default(), |tape| {
            let x = tape.param("x")?;
            let (k, kb) = (tape.param("k")?, tape.param("kb")?);
            let h = tape.causal_conv1d(x, k, kb, 2)?;
            let h = tape.tanh(h);
            let (w, wb) = (tape.param("w")?, tape.param("wb")?);
            let z = tape.dense(h, w, wb)?;
            let a = tape.slice_cols(z, 0, 3)?;
            let b = tape.slice_cols(z, 3, 6)?;
            let gate = tape.sigmoid(b);
            let mixed = tape.mul(a, gate)?;
            let m = tape.param("m")?;
            let mixed = tape.matmul(mixed, m)?;
            let last = tape.select_row(mixed, 7)?;
            let peak = tape.max_rows(mixed, 8)?;
            let avg = tape.mean_rows(mixed, 5)?;
            let both = tape.add(last, peak)?;
            let both = tape.add(both, avg)?;
            let both = tape.scale(both, 0.5);
            let prob = tape.sigmoid(both);
            let bce = tape.bce(prob, &target)?;
            let cat = tape.concat_cols(&[last, avg])?;
            let stacked = tape.stack_rows(&[last, avg])?;
            let s1 = tape.sum(cat);
            let s2 = tape.sum(stacked);
            let s = tape.add(s1, s2)?;
            let sq = tape.mse(s, &Tensor::scalar(0.3))?;
            tape.add(bce, sq)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }
}
