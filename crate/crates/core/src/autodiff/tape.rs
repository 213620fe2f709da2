use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng as _;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Dropout(Var, Vec<f64>),
    Embedding(Var, Vec<usize>),
    Row(Var, usize),
    Stack(Vec<Var>),
    Maximum(Var, Var),
    BceLogits(Var, f64),
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, [f64]>,
    shape: Vec<usize>,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of executed primitives.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Probability clamp applied inside the binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn last_axis(shape: &[usize]) -> (usize, usize) {
    let n = *shape.last().unwrap_or(&1);
    let rows = shape.iter().product::<usize>() / n.max(1);
    (rows, n)
}

/// Softmax over each `n`-wide row; entries with `mask[i] == false` get exactly 0.
fn softmax_rows(x: &[f64], n: usize, mask: Option<&[bool]>) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if n == 0 {
        return out;
    }
    for (r, (xs, ys)) in x.chunks(n).zip(out.chunks_mut(n)).enumerate() {
        let keep = |j: usize| mask.is_none_or(|m| m[r * n + j]);
        let max = (0..n).filter(|&j| keep(j)).map(|j| xs[j]).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut total = 0.0;
        for j in 0..n {
            if keep(j) {
                ys[j] = (xs[j] - max).exp();
                total += ys[j];
            }
        }
        for y in ys.iter_mut() {
            *y /= total;
        }
    }
    out
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, [f64]>, shape: Vec<usize>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            value,
            shape,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn op(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), shape, op, needs)
    }

    /// A trainable leaf that borrows its value.
    pub fn param(&mut self, id: ParamId, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t.data()), t.shape().to_vec(), Op::Param(id), true)
    }

    /// Every tensor of `store`, in id order.
    pub fn params(&mut self, store: &'a ParamStore) -> Vec<Var> {
        store.iter().map(|(id, _, t)| self.param(id, t)).collect()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(Cow::Owned(t.into_data()), shape, Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, shape: &[usize], data: &'a [f64]) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err("constant", shape, &[data.len()]));
        }
        Ok(self.push(Cow::Borrowed(data), shape.to_vec(), Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    // -- primitives ---------------------------------------------------------

    /// Matrix product. Supports `[m,k]x[k,n]`, `[k]x[k,n]`, `[m,k]x[k]` and
    /// `[k]x[k]` (dot product, shape `[1]`).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (av, bv) = (self.value(a), self.value(b));
        let (value, shape) = match (sa.as_slice(), sb.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let x = av[i * k + p];
                        if x != 0.0 {
                            for (o, w) in row.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                                *o += x * w;
                            }
                        }
                    }
                }
                (out, vec![m, n])
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; n];
                for p in 0..k {
                    let x = av[p];
                    if x != 0.0 {
                        for (o, w) in out.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                            *o += x * w;
                        }
                    }
                }
                (out, vec![n])
            }
            (&[m, k], &[k2]) if k == k2 => {
                let out = (0..m)
                    .map(|i| av[i * k..(i + 1) * k].iter().zip(bv).map(|(x, y)| x * y).sum())
                    .collect();
                (out, vec![m])
            }
            (&[k], &[k2]) if k == k2 => (vec![av.iter().zip(bv).map(|(x, y)| x * y).sum()], vec![1]),
            _ => return Err(shape_err("matmul", &sa, &sb)),
        };
        Ok(self.op(value, shape, Op::MatMul(a, b), &[a, b]))
    }

    /// Elementwise sum. `b` may also be a row vector broadcast over a matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa == sb {
            let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
            return Ok(self.op(value, sa, Op::Add(a, b), &[a, b]));
        }
        match (sa.as_slice(), sb.as_slice()) {
            (&[_, n], &[n2]) if n == n2 => {
                let bv = self.value(b);
                let value = self
                    .value(a)
                    .chunks(n)
                    .flat_map(|row| row.iter().zip(bv).map(|(x, y)| x + y))
                    .collect();
                Ok(self.op(value, sa, Op::AddRow(a, b), &[a, b]))
            }
            _ => Err(shape_err("add", &sa, &sb)),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(sa.to_vec())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.op(value, shape, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.op(value, shape, Op::Mul(a, b), &[a, b]))
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("maximum", a, b)?;
        let value = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x.max(*y)).collect();
        Ok(self.op(value, shape, Op::Maximum(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        self.op(value, shape, Op::Scale(a, c), &[a])
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.op(value, shape, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let (_, n) = last_axis(&shape);
        let value = softmax_rows(self.value(a), n, None);
        self.op(value, shape, Op::Softmax(a), &[a])
    }

    /// Softmax over the last axis where positions with `mask == false` are
    /// treated as `-inf`: they receive exactly zero weight and zero gradient.
    /// A fully masked row yields all zeros.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if mask.len() != self.value(a).len() {
            return Err(shape_err("masked_softmax", &shape, &[mask.len()]));
        }
        let (_, n) = last_axis(&shape);
        let value = softmax_rows(self.value(a), n, Some(mask));
        // Softmax's VJP reproduces the zeros at masked positions from y = 0.
        Ok(self.op(value, shape, Op::Softmax(a), &[a]))
    }

    /// Concatenate vectors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut value = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(shape_err("concat", self.shape(p), &[]));
            }
            value.extend_from_slice(self.value(p));
        }
        let n = value.len();
        Ok(self.op(value, vec![n], Op::Concat(parts.to_vec()), parts))
    }

    /// Stack equal-length vectors into a `[k, n]` matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::invalid("stack of zero rows"));
        };
        let s0 = self.shape(first).to_vec();
        let mut value = Vec::with_capacity(rows.len() * s0.iter().product::<usize>());
        for &r in rows {
            if self.shape(r) != s0.as_slice() || s0.len() != 1 {
                return Err(shape_err("stack", &s0, self.shape(r)));
            }
            value.extend_from_slice(self.value(r));
        }
        Ok(self.op(value, vec![rows.len(), s0[0]], Op::Stack(rows.to_vec()), rows))
    }

    /// Row `i` of a matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        match shape.as_slice() {
            &[m, n] if i < m => {
                let value = self.value(a)[i * n..(i + 1) * n].to_vec();
                Ok(self.op(value, vec![n], Op::Row(a, i), &[a]))
            }
            _ => Err(shape_err("row", &shape, &[i])),
        }
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.op(vec![s], vec![1], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.op(vec![s], vec![1], Op::Mean(a), &[a])
    }

    /// Inverted dropout: when `train` and `rate > 0`, each unit is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Otherwise returns `a` unchanged.
    pub fn dropout(&mut self, a: Var, rate: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate must lie in [0,1), got {rate}")));
        }
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let mut r = rng::rng_from_seed(seed);
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if r.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.op(value, shape, Op::Dropout(a, mask), &[a]))
    }

    /// Gather rows of a `[V, d]` table into an `[n, d]` matrix.
    pub fn embedding_lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let shape = self.shape(table).to_vec();
        let &[v, d] = shape.as_slice() else {
            return Err(shape_err("embedding_lookup", &shape, &[indices.len()]));
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(shape_err("embedding_lookup", &shape, &[bad]));
        }
        let tv = self.value(table);
        let mut value = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            value.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.op(value, vec![indices.len(), d], Op::Embedding(table, indices.to_vec()), &[table]))
    }

    /// Binary cross-entropy of `sigmoid(logit)` against `target`, with the
    /// probability clamped to `[1e-12, 1 - 1e-12]` before the log.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Result<Var> {
        if self.value(logit).len() != 1 {
            return Err(shape_err("bce_with_logits", self.shape(logit), &[1]));
        }
        let p = sigmoid(self.scalar(logit));
        let value = bce(p, target);
        Ok(self.op(vec![value], vec![1], Op::BceLogits(logit, target), &[logit]))
    }

    // -- reverse pass -------------------------------------------------------

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => self.matmul_vjp(*a, *b, &g, &mut grads),
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    self.acc(&mut grads, *b, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                }
                Op::AddRow(a, b) => {
                    self.acc(&mut grads, *a, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    let n = self.nodes[b.0].value.len();
                    self.acc(&mut grads, *b, |d| {
                        for row in g.chunks(n) {
                            d.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                        }
                    });
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                    self.acc(&mut grads, *b, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    self.acc(&mut grads, *a, |d| {
                        for ((x, gy), bb) in d.iter_mut().zip(&g).zip(bv.iter()) {
                            *x += gy * bb;
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for ((x, gy), aa) in d.iter_mut().zip(&g).zip(av.iter()) {
                            *x += gy * aa;
                        }
                    });
                }
                Op::Maximum(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    self.acc(&mut grads, *a, |d| {
                        for (j, x) in d.iter_mut().enumerate() {
                            if av[j] >= bv[j] {
                                *x += g[j];
                            }
                        }
                    });
                    self.acc(&mut grads, *b, |d| {
                        for (j, x) in d.iter_mut().enumerate() {
                            if av[j] < bv[j] {
                                *x += g[j];
                            }
                        }
                    });
                }
                Op::Scale(a, c) => {
                    self.acc(&mut grads, *a, |d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |d| {
                        for ((x, gy), yy) in d.iter_mut().zip(&g).zip(y.iter()) {
                            *x += gy * (1.0 - yy * yy);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    self.acc(&mut grads, *a, |d| {
                        for ((x, gy), yy) in d.iter_mut().zip(&g).zip(y.iter()) {
                            *x += gy * yy * (1.0 - yy);
                        }
                    });
                }
                Op::Relu(a) => {
                    let xv = &self.nodes[a.0].value;
                    self.acc(&mut grads, *a, |d| {
                        for ((x, gy), xx) in d.iter_mut().zip(&g).zip(xv.iter()) {
                            if *xx > 0.0 {
                                *x += gy;
                            }
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let (_, n) = last_axis(&node.shape);
                    self.acc(&mut grads, *a, |d| {
                        for ((dr, gr), yr) in d.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                            let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                            for ((x, gy), yy) in dr.iter_mut().zip(gr).zip(yr) {
                                *x += yy * (gy - dot);
                            }
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        let slice = &g[off..off + n];
                        self.acc(&mut grads, *p, |d| d.iter_mut().zip(slice).for_each(|(x, y)| *x += y));
                        off += n;
                    }
                }
                Op::Stack(rows) => {
                    let n = node.shape[1];
                    for (r, p) in rows.iter().enumerate() {
                        let slice = &g[r * n..(r + 1) * n];
                        self.acc(&mut grads, *p, |d| d.iter_mut().zip(slice).for_each(|(x, y)| *x += y));
                    }
                }
                Op::Row(a, i) => {
                    let n = g.len();
                    self.acc(&mut grads, *a, |d| {
                        d[i * n..(i + 1) * n].iter_mut().zip(&g).for_each(|(x, y)| *x += y)
                    });
                }
                Op::Sum(a) => {
                    self.acc(&mut grads, *a, |d| d.iter_mut().for_each(|x| *x += g[0]));
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.len().max(1) as f64;
                    self.acc(&mut grads, *a, |d| d.iter_mut().for_each(|x| *x += g[0] / n));
                }
                Op::Dropout(a, mask) => {
                    self.acc(&mut grads, *a, |d| {
                        for ((x, gy), m) in d.iter_mut().zip(&g).zip(mask) {
                            *x += gy * m;
                        }
                    });
                }
                Op::Embedding(table, idx) => {
                    let d_emb = node.shape[1];
                    self.acc(&mut grads, *table, |d| {
                        for (r, &i) in idx.iter().enumerate() {
                            for (x, y) in d[i * d_emb..(i + 1) * d_emb].iter_mut().zip(&g[r * d_emb..(r + 1) * d_emb]) {
                                *x += y;
                            }
                        }
                    });
                }
                Op::BceLogits(z, target) => {
                    let p = sigmoid(self.nodes[z.0].value[0]);
                    let slope = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) { p - target } else { 0.0 };
                    self.acc(&mut grads, *z, |d| d[0] += g[0] * slope);
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(slot);
    }

    fn matmul_vjp(&self, a: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        let (av, bv) = (&na.value, &nb.value);
        match (na.shape.as_slice(), nb.shape.as_slice()) {
            (&[m, k], &[_, n]) => {
                self.acc(grads, a, |d| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            d[i * k + p] += gr.iter().zip(&bv[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                self.acc(grads, b, |d| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x != 0.0 {
                                for (o, y) in d[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                    *o += x * y;
                                }
                            }
                        }
                    }
                });
            }
            (&[k], &[_, n]) => {
                self.acc(grads, a, |d| {
                    for p in 0..k {
                        d[p] += g.iter().zip(&bv[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum::<f64>();
                    }
                });
                self.acc(grads, b, |d| {
                    for p in 0..k {
                        let x = av[p];
                        if x != 0.0 {
                            for (o, y) in d[p * n..(p + 1) * n].iter_mut().zip(g) {
                                *o += x * y;
                            }
                        }
                    }
                });
            }
            (&[m, k], &[_]) => {
                self.acc(grads, a, |d| {
                    for i in 0..m {
                        for (o, x) in d[i * k..(i + 1) * k].iter_mut().zip(bv.iter()) {
                            *o += g[i] * x;
                        }
                    }
                });
                self.acc(grads, b, |d| {
                    for i in 0..m {
                        for (o, w) in d.iter_mut().zip(&av[i * k..(i + 1) * k]) {
                            *o += g[i] * w;
                        }
                    }
                });
            }
            _ => {
                // dot product
                self.acc(grads, a, |d| d.iter_mut().zip(bv.iter()).for_each(|(o, y)| *o += g[0] * y));
                self.acc(grads, b, |d| d.iter_mut().zip(av.iter()).for_each(|(o, x)| *o += g[0] * x));
            }
        }
    }
}

/// Clamped binary cross-entropy of probability `p` against `target`.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        match self.by_param.get_mut(&id) {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => {
                self.by_param.insert(id, g.to_vec());
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param.get(&id).map(Vec::as_slice)
    }

    /// Add `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (id, g) in &other.by_param {
            let slot = self.by_param.entry(*id).or_insert_with(|| vec![0.0; g.len()]);
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += scale * b);
        }
    }

    /// One gradient per parameter of `store`; absent parameters get zeros.
    pub fn to_dense(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        store
            .iter()
            .map(|(id, _, t)| self.by_param.get(&id).cloned().unwrap_or_else(|| vec![0.0; t.len()]))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.by_param.values().flatten().all(|v| v.is_finite())
    }
}
