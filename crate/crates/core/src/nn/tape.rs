//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] is an append-only arena: every op evaluates eagerly and records
//! its inputs, so node order is already a topological order. `backward`
//! walks the arena once in reverse.
//!
//! Broadcasting is limited to a row vector added to every row of a matrix
//! and to scalars; anything else needs an explicit reshape.

use std::borrow::Cow;

use super::tensor::{gemm_nt, gemm_tn, softmax_in_place, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    Gather(Var, Vec<usize>),
    SelectRows(Vec<bool>, Var, Var),
    CrossEntropy(Var, Vec<usize>, Vec<T>),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b) => vec![*a, *b],
            Op::SelectRows(_, a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softmax(a)
            | Op::Slice(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Gather(a, _)
            | Op::CrossEntropy(a, _, _) => vec![*a],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

struct Node<'p, T: Scalar> {
    value: Cow<'p, Tensor<T>>,
    op: Op<T>,
}

pub struct Tape<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    params: Vec<(String, Var)>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Named trainable leaf borrowing its value.
    pub fn param(&mut self, name: &str, value: &'p Tensor<T>) -> Var {
        let v = self.push_raw(Cow::Borrowed(value), Op::Leaf);
        self.params.push((name.to_string(), v));
        v
    }

    /// Trainable leaf owning its value (handy for tests and gradient checks).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        let v = self.push_raw(Cow::Owned(value), Op::Leaf);
        self.params.push((format!("leaf{}", v.0), v));
        v
    }

    /// Constant input; receives a gradient slot but is not listed as a parameter.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(Cow::Owned(value), Op::Leaf)
    }

    pub fn parameters(&self) -> &[(String, Var)] {
        &self.params
    }

    fn push_raw(&mut self, value: Cow<'p, Tensor<T>>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        if cfg!(debug_assertions) {
            let inputs_finite = op.inputs().iter().all(|&i| self.value(i).all_finite());
            debug_assert!(
                !inputs_finite || value.all_finite(),
                "non-finite output from finite inputs in {op:?}"
            );
        }
        self.push_raw(Cow::Owned(value), op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn bcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Bcast::Same)
        } else if sa.len() == 2 && sb.len() == 1 && sb[0] == sa[1] {
            Ok(Bcast::Row)
        } else if sb.is_empty() {
            Ok(Bcast::Scalar)
        } else {
            Err(Error::dim(op, sa, sb))
        }
    }

    fn binary(&mut self, a: Var, b: Var, kind: Bcast, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let av = self.value(a);
        let bv = self.value(b).data();
        let mut out = av.clone();
        match kind {
            Bcast::Same => {
                for (o, &y) in out.data_mut().iter_mut().zip(bv) {
                    *o = f(*o, y);
                }
            }
            Bcast::Row => {
                let c = bv.len();
                for row in out.data_mut().chunks_mut(c) {
                    for (o, &y) in row.iter_mut().zip(bv) {
                        *o = f(*o, y);
                    }
                }
            }
            Bcast::Scalar => {
                let y = bv[0];
                for o in out.data_mut() {
                    *o = f(*o, y);
                }
            }
        }
        out
    }

    /// `a + b`; `b` may be a row vector or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.bcast_kind("add", a, b)?;
        let out = self.binary(a, b, kind, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b, kind)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = self.bcast_kind("sub", a, b)?;
        let out = self.binary(a, b, kind, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b, kind)))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out = self.binary(a, b, Bcast::Same, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax();
        self.push(out, Op::Softmax(a))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let lead = self.shape(first)[..self.shape(first).len().saturating_sub(1)].to_vec();
        if self.shape(first).is_empty() {
            return Err(Error::dim("concat", &[], &[]));
        }
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::dim("concat", self.shape(first), s));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        let c = av.cols();
        if av.ndim() == 0 || start >= end || end > c {
            return Err(Error::dim("slice", av.shape(), &[start, end]));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(av.rows() * w);
        for r in 0..av.len() / c {
            data.extend_from_slice(&av.data()[r * c + start..r * c + end]);
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = w;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Slice(a, start, end)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum();
        let out = Tensor::scalar(s / T::of(v.len() as f64));
        self.push(out, Op::Mean(a))
    }

    /// Row `index` of a 2-D table, as a vector.
    pub fn embedding_lookup(&mut self, table: Var, index: usize) -> Result<Var> {
        let tv = self.value(table);
        if tv.ndim() != 2 {
            return Err(Error::dim("embedding_lookup", tv.shape(), &[index]));
        }
        if index >= tv.rows() {
            return Err(Error::Lookup {
                index,
                size: tv.rows(),
            });
        }
        let out = Tensor::vector(tv.row(index).to_vec());
        Ok(self.push(out, Op::Gather(table, vec![index])))
    }

    /// Stack rows `index[i]` of a 2-D table into a `[len(index), d]` matrix.
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.ndim() != 2 {
            return Err(Error::dim("gather_rows", tv.shape(), &[index.len()]));
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        if index.is_empty() {
            return Err(Error::Usage("gather_rows with no indices".into()));
        }
        let mut data = Vec::with_capacity(index.len() * d);
        for &i in index {
            if i >= v {
                return Err(Error::Lookup { index: i, size: v });
            }
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::new(vec![index.len(), d], data)?;
        Ok(self.push(out, Op::Gather(table, index.to_vec())))
    }

    /// Row `i` of the result is row `i` of `on` where `mask[i]`, else of `off`.
    pub fn select_rows(&mut self, mask: &[bool], on: Var, off: Var) -> Result<Var> {
        let (so, sf) = (self.shape(on), self.shape(off));
        if so != sf || so.len() != 2 || so[0] != mask.len() {
            return Err(Error::dim("select_rows", so, sf));
        }
        let c = so[1];
        let (ov, fv) = (self.value(on), self.value(off));
        let mut data = Vec::with_capacity(ov.len());
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { ov } else { fv };
            data.extend_from_slice(&src.data()[r * c..(r + 1) * c]);
        }
        let out = Tensor::new(so.to_vec(), data)?;
        Ok(self.push(out, Op::SelectRows(mask.to_vec(), on, off)))
    }

    /// Per-row `-log softmax(logits)[target]`, max-subtracted.
    ///
    /// `[B, C]` logits with `B` targets give a `[B]` vector; `[C]` logits with
    /// one target give a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let c = lv.cols();
        let rows = if lv.ndim() == 1 { 1 } else { lv.rows() };
        if lv.ndim() == 0 || lv.ndim() > 2 || targets.len() != rows || c < 2 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                lv.shape(),
                &[targets.len()],
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Label {
                target: t,
                classes: c,
            });
        }
        let mut probs = lv.data().to_vec();
        let mut losses = Vec::with_capacity(rows);
        for (r, row) in probs.chunks_mut(c).enumerate() {
            let x_t = row[targets[r]];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
            losses.push(max + sum.ln() - x_t);
            softmax_in_place(row);
        }
        let out = if lv.ndim() == 1 {
            Tensor::scalar(losses[0])
        } else {
            Tensor::vector(losses)
        };
        Ok(self.push(out, Op::CrossEntropy(logits, targets.to_vec(), probs)))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let rv = self.value(root);
        if rv.ndim() != 0 {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=root.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(gy);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    self.acc(&mut grads, *a, |g| {
                        gemm_nt(gy.data(), bv.data(), g, m, k, n)
                    });
                    self.acc(&mut grads, *b, |g| {
                        gemm_tn(av.data(), gy.data(), g, m, k, n)
                    });
                }
                Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                    let sign = if matches!(node.op, Op::Sub(..)) {
                        -T::one()
                    } else {
                        T::one()
                    };
                    self.acc(&mut grads, *a, |g| add_into(g, gy.data()));
                    self.acc(&mut grads, *b, |g| match kind {
                        Bcast::Same => {
                            for (o, &d) in g.iter_mut().zip(gy.data()) {
                                *o = *o + sign * d;
                            }
                        }
                        Bcast::Row => {
                            let c = g.len();
                            for row in gy.data().chunks(c) {
                                for (o, &d) in g.iter_mut().zip(row) {
                                    *o = *o + sign * d;
                                }
                            }
                        }
                        Bcast::Scalar => {
                            let s: T = gy.data().iter().copied().sum();
                            g[0] = g[0] + sign * s;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    self.acc(&mut grads, *a, |g| {
                        for ((o, &d), &y) in g.iter_mut().zip(gy.data()).zip(bv.data()) {
                            *o = *o + d * y;
                        }
                    });
                    self.acc(&mut grads, *b, |g| {
                        for ((o, &d), &x) in g.iter_mut().zip(gy.data()).zip(av.data()) {
                            *o = *o + d * x;
                        }
                    });
                }
                Op::Scale(a, k) => {
                    self.acc(&mut grads, *a, |g| {
                        for (o, &d) in g.iter_mut().zip(gy.data()) {
                            *o = *o + d * *k;
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    self.acc(&mut grads, *a, |g| {
                        for ((o, &d), &y) in g.iter_mut().zip(gy.data()).zip(y) {
                            *o = *o + d * (T::one() - y * y);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    self.acc(&mut grads, *a, |g| {
                        for ((o, &d), &y) in g.iter_mut().zip(gy.data()).zip(y) {
                            *o = *o + d * y * (T::one() - y);
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let c = y.cols();
                    self.acc(&mut grads, *a, |g| {
                        for ((gr, dr), yr) in g
                            .chunks_mut(c)
                            .zip(gy.data().chunks(c))
                            .zip(y.data().chunks(c))
                        {
                            let dot: T = dr.iter().zip(yr).map(|(&d, &y)| d * y).sum();
                            for ((o, &d), &y) in gr.iter_mut().zip(dr).zip(yr) {
                                *o = *o + y * (d - dot);
                            }
                        }
                    });
                }
                Op::Concat(parts) => {
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        self.acc(&mut grads, p, |g| {
                            for (gr, dr) in g.chunks_mut(w).zip(gy.data().chunks(total)) {
                                add_into(gr, &dr[offset..offset + w]);
                            }
                        });
                        offset += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let c = self.value(*a).cols();
                    let w = end - start;
                    self.acc(&mut grads, *a, |g| {
                        for (gr, dr) in g.chunks_mut(c).zip(gy.data().chunks(w)) {
                            add_into(&mut gr[*start..*end], dr);
                        }
                    });
                }
                Op::Sum(a) => {
                    let d = gy.item();
                    self.acc(&mut grads, *a, |g| g.iter_mut().for_each(|o| *o = *o + d));
                }
                Op::Mean(a) => {
                    let n = T::of(self.value(*a).len() as f64);
                    let d = gy.item() / n;
                    self.acc(&mut grads, *a, |g| g.iter_mut().for_each(|o| *o = *o + d));
                }
                Op::Gather(table, index) => {
                    let d = self.value(*table).cols();
                    self.acc(&mut grads, *table, |g| {
                        for (r, &ix) in index.iter().enumerate() {
                            add_into(&mut g[ix * d..(ix + 1) * d], &gy.data()[r * d..(r + 1) * d]);
                        }
                    });
                }
                Op::SelectRows(mask, on, off) => {
                    let c = node.value.cols();
                    for (target, want) in [(*on, true), (*off, false)] {
                        self.acc(&mut grads, target, |g| {
                            for (r, &m) in mask.iter().enumerate() {
                                if m == want {
                                    add_into(
                                        &mut g[r * c..(r + 1) * c],
                                        &gy.data()[r * c..(r + 1) * c],
                                    );
                                }
                            }
                        });
                    }
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let c = self.value(*logits).cols();
                    self.acc(&mut grads, *logits, |g| {
                        for (r, (gr, pr)) in g.chunks_mut(c).zip(probs.chunks(c)).enumerate() {
                            let d = gy.data()[r];
                            for (j, (o, &p)) in gr.iter_mut().zip(pr).enumerate() {
                                let onehot = if j == targets[r] { T::one() } else { T::zero() };
                                *o = *o + d * (p - onehot);
                            }
                        }
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.shape(v)));
        f(slot.data_mut());
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (o, &s) in dst.iter_mut().zip(src) {
        *o = *o + s;
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Gradients of every leaf reachable from the root.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    /// Gradient for `v`, zeros when `v` is not on any path to the root.
    pub fn wrt(&self, tape: &Tape<'_, T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
    }
}
