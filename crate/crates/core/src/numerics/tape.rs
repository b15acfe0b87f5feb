//! Reverse-mode gradient tape over a fixed set of tensor primitives.
//!
//! A [`Tape`] records every primitive in execution order. Leaves are
//! either constants or trainable parameters; [`Tape::backward`] walks
//! the record in reverse and returns the gradient of a scalar root with
//! respect to every node. Nodes that do not reach the root get exact
//! zeros.

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    DivScalar(Var, Var),
    AddRow(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Abs(Var),
    NormalizeRows(Var),
    RowDot(Var, Var),
    LogSoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Mean(Var),
    Sum(Var),
    ConcatRows(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].trainable = true;
        v
    }

    pub fn params(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.trainable)
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = kernels::scale(self.value(a), s);
        self.push(out, Op::Scale(a, s))
    }

    /// `a / s` where `s` is a one-element node.
    pub fn div_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![1],
                got: sv.shape().to_vec(),
            });
        }
        let out = kernels::scale(self.value(a), 1.0 / sv.item());
        Ok(self.push(out, Op::DivScalar(a, s)))
    }

    /// Adds the row vector `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Result<Var> {
        let out = kernels::add_row(self.value(a), self.value(r))?;
        Ok(self.push(out, Op::AddRow(a, r)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul_t(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = kernels::transpose(self.value(a));
        self.push(out, Op::Transpose(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = kernels::tanh(self.value(a));
        self.push(out, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = kernels::abs(self.value(a));
        self.push(out, Op::Abs(a))
    }

    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let out = kernels::normalize_rows(self.value(a))?;
        Ok(self.push(out, Op::NormalizeRows(a)))
    }

    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::row_dot(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::RowDot(a, b)))
    }

    /// Row-wise cosine similarity, built from normalization and dot.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let na = self.normalize_rows(a)?;
        let nb = self.normalize_rows(b)?;
        self.row_dot(na, nb)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let out = kernels::log_softmax_rows(self.value(a));
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, table: Var, idx: Vec<usize>) -> Result<Var> {
        let out = kernels::gather_rows(self.value(table), &idx)?;
        Ok(self.push(out, Op::GatherRows(table, idx)))
    }

    pub fn pick(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let out = kernels::pick(self.value(a), &idx)?;
        Ok(self.push(out, Op::Pick(a, idx)))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(kernels::mean(self.value(a)));
        self.push(out, Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(kernels::sum(self.value(a)));
        self.push(out, Op::Sum(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::concat_rows(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::ConcatRows(a, b)))
    }

    /// Weighted sum `Σ wᵢ·xᵢ` of scalar nodes, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for &(w, x) in terms {
            let term = if w == 1.0 { x } else { self.scale(x, w) };
            acc = Some(match acc {
                None => term,
                Some(a) => self.add(a, term)?,
            });
        }
        acc.ok_or_else(|| Error::InvalidTensor("empty weighted sum".into()))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let seed = self.value(root);
        assert_eq!(seed.len(), 1, "backward root must be a scalar");
        grads[root.0] = Some(Tensor::from_parts(seed.shape().to_vec(), vec![1.0]));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let g = Tensor::from_parts(node.value.shape().to_vec(), g.into_data());
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.data());
                accumulate(grads, *b, g.data());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.data());
                let neg: Vec<f64> = g.data().iter().map(|x| -x).collect();
                accumulate(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.data().iter().zip(val(*b).data()).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).collect();
                accumulate(grads, *a, &ga);
                accumulate(grads, *b, &gb);
            }
            Op::Scale(a, s) => {
                let ga: Vec<f64> = g.data().iter().map(|x| x * s).collect();
                accumulate(grads, *a, &ga);
            }
            Op::DivScalar(a, s) => {
                let sv = val(*s).item();
                let ga: Vec<f64> = g.data().iter().map(|x| x / sv).collect();
                accumulate(grads, *a, &ga);
                let mut gs = 0.0;
                for (x, y) in g.data().iter().zip(val(*a).data()) {
                    gs += x * y;
                }
                accumulate(grads, *s, &[-gs / (sv * sv)]);
            }
            Op::AddRow(a, r) => {
                accumulate(grads, *a, g.data());
                let cols = g.cols();
                let mut gr = vec![0.0; cols];
                for row in g.iter_rows() {
                    for (o, x) in gr.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                accumulate(grads, *r, &gr);
            }
            Op::MatMulT(a, b) => {
                // y = a bᵀ: ∂a = G b, ∂b = Gᵀ a
                let ga = kernels::matmul(g, &as_matrix(val(*b))).expect("shape checked in forward");
                let gb = kernels::matmul(&kernels::transpose(g), &as_matrix(val(*a)))
                    .expect("shape checked in forward");
                accumulate(grads, *a, ga.data());
                accumulate(grads, *b, gb.data());
            }
            Op::Transpose(a) => {
                accumulate(grads, *a, kernels::transpose(g).data());
            }
            Op::Tanh(a) => {
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(x, y)| x * (1.0 - y * y))
                    .collect();
                accumulate(grads, *a, &ga);
            }
            Op::Abs(a) => {
                let ga: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(x, y)| if *y > 0.0 { *x } else if *y < 0.0 { -x } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &ga);
            }
            Op::NormalizeRows(a) => {
                // y = x/‖x‖: ∂x = (G − y (y·G)) / ‖x‖
                let x = val(*a);
                let y = &node.value;
                let mut ga = Vec::with_capacity(x.len());
                for i in 0..x.rows() {
                    let n = kernels::norm(x.row(i));
                    let yi = y.row(i);
                    let gi = &g.data()[i * x.cols()..(i + 1) * x.cols()];
                    let proj = kernels::dot(yi, gi);
                    for (gv, yv) in gi.iter().zip(yi) {
                        ga.push((gv - yv * proj) / n);
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let cols = av.cols();
                let mut ga = Vec::with_capacity(av.len());
                let mut gb = Vec::with_capacity(bv.len());
                for i in 0..av.rows() {
                    let gi = g.data()[i];
                    ga.extend(bv.row(i).iter().map(|y| gi * y));
                    gb.extend(av.row(i).iter().map(|x| gi * x));
                }
                debug_assert_eq!(ga.len(), av.rows() * cols);
                accumulate(grads, *a, &ga);
                accumulate(grads, *b, &gb);
            }
            Op::LogSoftmaxRows(a) => {
                // ∂x = G − softmax · ΣG
                let y = &node.value;
                let cols = y.cols();
                let mut ga = Vec::with_capacity(y.len());
                for i in 0..y.rows() {
                    let gi = &g.data()[i * cols..(i + 1) * cols];
                    let gsum = gi.iter().fold(0.0, |acc, x| acc + x);
                    for (gv, yv) in gi.iter().zip(y.row(i)) {
                        ga.push(gv - yv.exp() * gsum);
                    }
                }
                accumulate(grads, *a, &ga);
            }
            Op::GatherRows(t, idx) => {
                let tv = val(*t);
                let cols = tv.cols();
                let mut gt = vec![0.0; tv.len()];
                for (r, &src) in idx.iter().enumerate() {
                    for c in 0..cols {
                        gt[src * cols + c] += g.data()[r * cols + c];
                    }
                }
                accumulate(grads, *t, &gt);
            }
            Op::Pick(a, idx) => {
                let av = val(*a);
                let cols = av.cols();
                let mut ga = vec![0.0; av.len()];
                for (r, &j) in idx.iter().enumerate() {
                    ga[r * cols + j] += g.data()[r];
                }
                accumulate(grads, *a, &ga);
            }
            Op::Mean(a) => {
                let av = val(*a);
                let s = g.item() / av.len() as f64;
                accumulate(grads, *a, &vec![s; av.len()]);
            }
            Op::Sum(a) => {
                let av = val(*a);
                accumulate(grads, *a, &vec![g.item(); av.len()]);
            }
            Op::ConcatRows(a, b) => {
                let na = val(*a).len();
                accumulate(grads, *a, &g.data()[..na]);
                accumulate(grads, *b, &g.data()[na..]);
            }
        }

        fn accumulate(grads: &mut [Option<Tensor>], v: Var, contrib: &[f64]) {
            match &mut grads[v.0] {
                Some(t) => {
                    for (o, c) in t.data_mut().iter_mut().zip(contrib) {
                        *o += c;
                    }
                }
                slot @ None => {
                    // reshaped to the node's shape in Gradients::get
                    *slot = Some(Tensor::from_parts(vec![contrib.len()], contrib.to_vec()));
                }
            }
        }
    }
}

fn as_matrix(t: &Tensor) -> Tensor {
    Tensor::from_parts(vec![t.rows(), t.cols()], t.data().to_vec())
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`, shaped like `v`'s value; exact zeros
    /// when `v` does not influence the root.
    pub fn get(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match &self.grads[v.0] {
            Some(g) => Tensor::from_parts(shape, g.data().to_vec()),
            None => Tensor::zeros(&shape),
        }
    }
}
