//! Operation recording and reverse-mode differentiation.
//!
//! Every op appends one node holding its output tensor and the ids of its
//! inputs. Inputs always precede their consumers, so walking the node list
//! backwards from the loss is a valid topological order and visits each
//! node once.

use crate::error::{Error, Result};
use crate::numcore::{Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

#[derive(Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
        broadcast: bool,
    },
    Act {
        kind: Activation,
        a: Var,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatCols(Vec<Var>),
    Stack(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    BatchDot {
        query: Var,
        keys: Var,
    },
    WeightedSum {
        weights: Var,
        values: Var,
    },
    MaskFill {
        a: Var,
        keep: Vec<bool>,
    },
    Sum(Var),
    SparseCe {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<F>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`, row-major, i-k-j order.
pub(crate) fn matmul_acc<F: Real>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
}

fn transpose_buf<F: Real>(src: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        value.requires_grad = requires_grad;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    /// Records an input tensor; its `requires_grad` flag is kept.
    pub fn leaf(&mut self, tensor: Tensor<F>) -> Var {
        let rg = tensor.requires_grad;
        let mut t = tensor;
        t.zero_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Records a tensor that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor<F>) -> Var {
        self.push(tensor, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.nodes[v.0].value.grad()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let t = Tensor::new(&[m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::MatMul(a, b), rg))
    }

    /// Pointwise op. `b` may also be a row vector (`[d]` or `[1, d]`)
    /// broadcast over every row of `a`.
    pub fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let broadcast = if sa == sb {
            false
        } else {
            let d = *sa.last().unwrap();
            let row_like = matches!(sb.as_slice(), [n] if *n == d)
                || matches!(sb.as_slice(), [1, n] if *n == d);
            if !row_like {
                return Err(shape_err("elementwise", &sa, &sb));
            }
            true
        };
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let d = bv.len();
        let f = |x: F, y: F| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let out: Vec<F> = if broadcast {
            av.iter().enumerate().map(|(i, &x)| f(x, bv[i % d])).collect()
        } else {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        };
        let t = Tensor::new(&sa, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            t,
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let src = self.value(a);
        let out: Vec<F> = match kind {
            Activation::Sigmoid => src
                .data()
                .iter()
                .map(|&x| F::one() / (F::one() + (-x).exp()))
                .collect(),
            Activation::Tanh => src.data().iter().map(|&x| x.tanh()).collect(),
        };
        let t = Tensor::new(src.shape(), out).expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Act { kind, a }, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Tanh)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::contract(format!(
                "softmax axis {axis} invalid for shape {shape:?}"
            )));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![F::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len)
                    .map(|j| src[idx(j)])
                    .fold(F::neg_infinity(), F::max);
                let mut total = F::zero();
                for j in 0..len {
                    let e = (src[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[idx(j)] = out[idx(j)] / total;
                }
            }
        }
        let t = Tensor::new(&shape, out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Softmax { a, axis }, rg))
    }

    /// Row lookup: `out[i] = table[ids[i]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(shape_err("gather_rows", shape, &[]));
        }
        let (vocab, d) = (shape[0], shape[1]);
        if ids.is_empty() {
            return Err(Error::contract("gather_rows needs at least one id"));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index {
                    index: id,
                    size: vocab,
                });
            }
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let t = Tensor::new(&[ids.len(), d], out)?;
        let rg = self.rg(table);
        Ok(self.push(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| Error::contract("concat of nothing"))?);
        let rows = first[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(shape_err("concat_cols", self.shape(parts[0]), s));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let t = Tensor::new(&[rows, total], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks `T` tensors of shape `[B, d]` into `[B, T, d]`.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .shape(*parts.first().ok_or_else(|| Error::contract("stack of nothing"))?)
            .to_vec();
        if first.len() != 2 {
            return Err(shape_err("stack", &first, &[]));
        }
        for &p in parts {
            if self.shape(p) != first.as_slice() {
                return Err(shape_err("stack", &first, self.shape(p)));
            }
        }
        let (b, d, t_len) = (first[0], first[1], parts.len());
        let mut out = vec![F::zero(); b * t_len * d];
        for (t, &p) in parts.iter().enumerate() {
            let src = self.value(p).data();
            for row in 0..b {
                out[(row * t_len + t) * d..(row * t_len + t + 1) * d]
                    .copy_from_slice(&src[row * d..(row + 1) * d]);
            }
        }
        let tensor = Tensor::new(&[b, t_len, d], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(tensor, Op::Stack(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshaped(shape).map_err(|_| {
            shape_err("reshape", self.shape(a), shape)
        })?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Reshape(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(shape_err("transpose", s, &[]));
        }
        let (r, c) = (s[0], s[1]);
        let out = transpose_buf(self.value(a).data(), r, c);
        let t = Tensor::new(&[c, r], out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::Transpose(a), rg))
    }

    /// `out[b, t] = <query[b], keys[b, t]>` for `query: [B, d]`, `keys: [B, T, d]`.
    pub fn batch_dot(&mut self, query: Var, keys: Var) -> Result<Var> {
        let (sq, sk) = (self.shape(query), self.shape(keys));
        if sq.len() != 2 || sk.len() != 3 || sq[0] != sk[0] || sq[1] != sk[2] {
            return Err(shape_err("batch_dot", sq, sk));
        }
        let (b, t_len, d) = (sk[0], sk[1], sk[2]);
        let q = self.value(query).data();
        let k = self.value(keys).data();
        let mut out = vec![F::zero(); b * t_len];
        for row in 0..b {
            let qr = &q[row * d..(row + 1) * d];
            for t in 0..t_len {
                let kr = &k[(row * t_len + t) * d..(row * t_len + t + 1) * d];
                out[row * t_len + t] = qr.iter().zip(kr).fold(F::zero(), |s, (&x, &y)| s + x * y);
            }
        }
        let tensor = Tensor::new(&[b, t_len], out)?;
        let rg = self.rg(query) || self.rg(keys);
        Ok(self.push(tensor, Op::BatchDot { query, keys }, rg))
    }

    /// `out[b] = sum_t weights[b, t] * values[b, t]` for `values: [B, T, d]`.
    pub fn weighted_sum(&mut self, weights: Var, values: Var) -> Result<Var> {
        let (sw, sv) = (self.shape(weights), self.shape(values));
        if sw.len() != 2 || sv.len() != 3 || sw[0] != sv[0] || sw[1] != sv[1] {
            return Err(shape_err("weighted_sum", sw, sv));
        }
        let (b, t_len, d) = (sv[0], sv[1], sv[2]);
        let w = self.value(weights).data();
        let v = self.value(values).data();
        let mut out = vec![F::zero(); b * d];
        for row in 0..b {
            let o = &mut out[row * d..(row + 1) * d];
            for t in 0..t_len {
                let wt = w[row * t_len + t];
                let vr = &v[(row * t_len + t) * d..(row * t_len + t + 1) * d];
                for (x, &y) in o.iter_mut().zip(vr) {
                    *x = *x + wt * y;
                }
            }
        }
        let tensor = Tensor::new(&[b, d], out)?;
        let rg = self.rg(weights) || self.rg(values);
        Ok(self.push(tensor, Op::WeightedSum { weights, values }, rg))
    }

    /// Replaces entries whose `keep` flag is false with negative infinity.
    pub fn mask_fill(&mut self, a: Var, keep: &[bool]) -> Result<Var> {
        let src = self.value(a);
        if keep.len() != src.numel() {
            return Err(shape_err("mask_fill", src.shape(), &[keep.len()]));
        }
        let out = src
            .data()
            .iter()
            .zip(keep)
            .map(|(&x, &k)| if k { x } else { F::neg_infinity() })
            .collect();
        let t = Tensor::new(src.shape(), out)?;
        let rg = self.rg(a);
        Ok(self.push(
            t,
            Op::MaskFill {
                a,
                keep: keep.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Mean negative log-likelihood of `targets` under `softmax(logits)`
    /// over rows whose mask is true. `logits` is viewed as `[N, V]`.
    pub fn sparse_softmax_ce(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (rows, vocab) = self.value(logits).as_matrix_dims();
        if targets.len() != rows || mask.len() != rows {
            return Err(shape_err(
                "sparse_softmax_ce",
                self.shape(logits),
                &[targets.len(), mask.len()],
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::contract("cross-entropy over zero unmasked positions"));
        }
        let src = self.value(logits).data();
        let mut probs = vec![F::zero(); src.len()];
        let mut total = F::zero();
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let target = targets[r];
            if target >= vocab {
                return Err(Error::Index {
                    index: target,
                    size: vocab,
                });
            }
            let row = &src[r * vocab..(r + 1) * vocab];
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln() + max;
            total = total + lse - row[target];
            for (p, &x) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let loss = total / F::from_usize(count).unwrap();
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SparseCe {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, leaving gradients on every
    /// node that requires one. Earlier gradients are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.set_grad(g)?;
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [F])| {
            if !self.nodes[v.0].value.requires_grad {
                return;
            }
            let n = self.nodes[v.0].value.numel();
            let buf = grads[v.0].get_or_insert_with(|| vec![F::zero(); n]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                acc(*a, &mut |ga| {
                    let bt = transpose_buf(bv, k, n);
                    matmul_acc(g, &bt, ga, m, n, k);
                });
                acc(*b, &mut |gb| {
                    let at = transpose_buf(av, m, k);
                    matmul_acc(&at, g, gb, k, m, n);
                });
            }
            Op::Binary {
                kind,
                a,
                b,
                broadcast,
            } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let d = bv.len();
                let bidx = |j: usize| if *broadcast { j % d } else { j };
                acc(*a, &mut |ga| {
                    for (j, x) in ga.iter_mut().enumerate() {
                        *x = *x + match kind {
                            BinaryKind::Add | BinaryKind::Sub => g[j],
                            BinaryKind::Mul => g[j] * bv[bidx(j)],
                        };
                    }
                });
                acc(*b, &mut |gb| {
                    for (j, &gj) in g.iter().enumerate() {
                        let x = &mut gb[bidx(j)];
                        *x = *x + match kind {
                            BinaryKind::Add => gj,
                            BinaryKind::Sub => -gj,
                            BinaryKind::Mul => gj * av[j],
                        };
                    }
                });
            }
            Op::Act { kind, a } => acc(*a, &mut |ga| {
                for ((x, &y), &gj) in ga.iter_mut().zip(out).zip(g) {
                    let d = match kind {
                        Activation::Sigmoid => y * (F::one() - y),
                        Activation::Tanh => F::one() - y * y,
                    };
                    *x = *x + gj * d;
                }
            }),
            Op::Softmax { a, axis } => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                acc(*a, &mut |ga| {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + ii;
                            let dot = (0..len).fold(F::zero(), |s, j| s + g[idx(j)] * out[idx(j)]);
                            for j in 0..len {
                                let x = &mut ga[idx(j)];
                                *x = *x + out[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let d = self.shape(*table)[1];
                acc(*table, &mut |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (x, &y) in gt[id * d..(id + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                            *x = *x + y;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    acc(p, &mut |gp| {
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] = gp[r * w + c] + g[r * total + offset + c];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Stack(parts) => {
                let s = node.value.shape();
                let (b, t_len, d) = (s[0], s[1], s[2]);
                for (t, &p) in parts.iter().enumerate() {
                    acc(p, &mut |gp| {
                        for row in 0..b {
                            let src = &g[(row * t_len + t) * d..(row * t_len + t + 1) * d];
                            for (x, &y) in gp[row * d..(row + 1) * d].iter_mut().zip(src) {
                                *x = *x + y;
                            }
                        }
                    });
                }
            }
            Op::Reshape(a) => acc(*a, &mut |ga| {
                for (x, &y) in ga.iter_mut().zip(g) {
                    *x = *x + y;
                }
            }),
            Op::Transpose(a) => {
                let s = node.value.shape();
                let gt = transpose_buf(g, s[0], s[1]);
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(&gt) {
                        *x = *x + y;
                    }
                });
            }
            Op::BatchDot { query, keys } => {
                let sk = self.shape(*keys);
                let (b, t_len, d) = (sk[0], sk[1], sk[2]);
                let q = self.value(*query).data();
                let k = self.value(*keys).data();
                acc(*query, &mut |gq| {
                    for row in 0..b {
                        for t in 0..t_len {
                            let w = g[row * t_len + t];
                            let kr = &k[(row * t_len + t) * d..(row * t_len + t + 1) * d];
                            for (x, &y) in gq[row * d..(row + 1) * d].iter_mut().zip(kr) {
                                *x = *x + w * y;
                            }
                        }
                    }
                });
                acc(*keys, &mut |gk| {
                    for row in 0..b {
                        let qr = &q[row * d..(row + 1) * d];
                        for t in 0..t_len {
                            let w = g[row * t_len + t];
                            let base = (row * t_len + t) * d;
                            for (x, &y) in gk[base..base + d].iter_mut().zip(qr) {
                                *x = *x + w * y;
                            }
                        }
                    }
                });
            }
            Op::WeightedSum { weights, values } => {
                let sv = self.shape(*values);
                let (b, t_len, d) = (sv[0], sv[1], sv[2]);
                let w = self.value(*weights).data();
                let v = self.value(*values).data();
                acc(*weights, &mut |gw| {
                    for row in 0..b {
                        let gr = &g[row * d..(row + 1) * d];
                        for t in 0..t_len {
                            let vr = &v[(row * t_len + t) * d..(row * t_len + t + 1) * d];
                            let dot = gr.iter().zip(vr).fold(F::zero(), |s, (&x, &y)| s + x * y);
                            gw[row * t_len + t] = gw[row * t_len + t] + dot;
                        }
                    }
                });
                acc(*values, &mut |gv| {
                    for row in 0..b {
                        let gr = &g[row * d..(row + 1) * d];
                        for t in 0..t_len {
                            let wt = w[row * t_len + t];
                            let base = (row * t_len + t) * d;
                            for (x, &y) in gv[base..base + d].iter_mut().zip(gr) {
                                *x = *x + wt * y;
                            }
                        }
                    }
                });
            }
            Op::MaskFill { a, keep } => acc(*a, &mut |ga| {
                for ((x, &y), &k) in ga.iter_mut().zip(g).zip(keep) {
                    if k {
                        *x = *x + y;
                    }
                }
            }),
            Op::Sum(a) => acc(*a, &mut |ga| {
                for x in ga.iter_mut() {
                    *x = *x + g[0];
                }
            }),
            Op::SparseCe {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let vocab = *self.shape(*logits).last().unwrap();
                let scale = g[0] / F::from_usize(*count).unwrap();
                acc(*logits, &mut |gl| {
                    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        let row = &mut gl[r * vocab..(r + 1) * vocab];
                        for (x, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                            *x = *x + scale * p;
                        }
                        row[t] = row[t] - scale;
                    }
                });
            }
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let eye = tape.constant(t(&[2, 2], &[1., 0., 0., 1.]));
        let m = tape.constant(t(&[2, 2], &[3., 4., 5., 6.]));
        let out = tape.matmul(eye, m).unwrap();
        assert_eq!(tape.value(out).to_f64_vec(), vec![3., 4., 5., 6.]);

        let a = tape.constant(t(&[1, 1], &[2.]));
        let b = tape.constant(t(&[1, 1], &[3.]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).to_f64_vec(), vec![6.]);

        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[1., 1.]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.shape(out), &[2, 1]);
        assert_eq!(tape.value(out).to_f64_vec(), vec![3., 7.]);
    }

    #[test]
    fn matmul_dimension_mismatch_names_shapes() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Shape { left, right, .. }) => {
                assert_eq!(left, vec![2, 3]);
                assert_eq!(right, vec![2, 3]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn elementwise_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1., 2.]));
        let z = tape.constant(t(&[2], &[0., 0.]));
        let s = tape.add(a, z).unwrap();
        assert_eq!(tape.value(s).to_f64_vec(), vec![1., 2.]);

        let b = tape.constant(t(&[2], &[3., 4.]));
        let p = tape.mul(a, b).unwrap();
        assert_eq!(tape.value(p).to_f64_vec(), vec![3., 8.]);

        let m = tape.constant(t(&[2, 3], &[0., 0., 0., 1., 1., 1.]));
        let row = tape.constant(t(&[3], &[1., 2., 3.]));
        let shifted = tape.add(m, row).unwrap();
        assert_eq!(tape.value(shifted).to_f64_vec(), vec![1., 2., 3., 2., 3., 4.]);

        let bad = tape.constant(t(&[2], &[1., 1.]));
        assert!(matches!(tape.add(m, bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn broadcast_backward_sums_rows() {
        let mut tape = Tape::new();
        let m = tape.leaf(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]).with_grad());
        let row = tape.leaf(t(&[2], &[10., 20.]).with_grad());
        let prod = tape.mul(m, row).unwrap();
        let loss = tape.sum(prod);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(row).unwrap(), &[9., 12.]);
        assert_eq!(tape.grad(m).unwrap(), &[10., 20., 10., 20., 10., 20.]);
    }

    #[test]
    fn activation_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[0., 3f64.ln(), -2.]));
        let s = tape.sigmoid(x);
        let th = tape.tanh(x);
        let sv = tape.value(s).to_f64_vec();
        assert_eq!(sv[0], 0.5);
        assert!((sv[1] - 0.75).abs() < 1e-15);
        assert_eq!(tape.value(th).to_f64_vec()[0], 0.0);

        let big = tape.constant(t(&[2], &[1e4, -1e4]));
        let s = tape.sigmoid(big);
        let v = tape.value(s).to_f64_vec();
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[3], &[0., 0., 0.]));
        let y = tape.softmax(x, 0).unwrap();
        assert!(close(&tape.value(y).to_f64_vec(), &[1. / 3.; 3], 1e-15));

        let x = tape.constant(t(&[2], &[2f64.ln(), 0.]));
        let y = tape.softmax(x, 0).unwrap();
        assert!(close(&tape.value(y).to_f64_vec(), &[2. / 3., 1. / 3.], 1e-15));

        let x = tape.constant(t(&[2], &[1000., 1000.]));
        let y = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(y).to_f64_vec(), vec![0.5, 0.5]);

        assert!(tape.softmax(x, 1).is_err());
    }

    #[test]
    fn softmax_along_first_axis() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2, 2], &[0., 5., 0., 5.]));
        let y = tape.softmax(x, 0).unwrap();
        assert!(close(&tape.value(y).to_f64_vec(), &[0.5; 4], 1e-15));
    }

    #[test]
    fn gather_examples() {
        let mut tape = Tape::new();
        let table = tape.leaf(t(&[3, 2], &[1., 2., 3., 4., 5., 6.]).with_grad());
        let first = tape.gather_rows(table, &[0]).unwrap();
        assert_eq!(tape.value(first).to_f64_vec(), vec![1., 2.]);
        let rev = tape.gather_rows(table, &[1, 0]).unwrap();
        assert_eq!(tape.value(rev).to_f64_vec(), vec![3., 4., 1., 2.]);

        // "Row 2" in 1-based terms is id 1.
        let twice = tape.gather_rows(table, &[1, 1]).unwrap();
        assert_eq!(tape.value(twice).to_f64_vec(), vec![3., 4., 3., 4.]);
        let loss = tape.sum(twice);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(table).unwrap(), &[0., 0., 2., 2., 0., 0.]);

        match tape.gather_rows(table, &[3]) {
            Err(Error::Index { index: 3, size: 3 }) => {}
            other => panic!("expected index error, got {other:?}"),
        }
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1., 2., 3.]).with_grad());
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1., 1., 1.]);
        assert_eq!(tape.grad(loss).unwrap(), &[1.]);

        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]).with_grad());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2., 4.]);

        assert!(matches!(tape.backward(sq), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1., 2.]).with_grad());
        let c = tape.constant(t(&[2], &[5., 5.]));
        let y = tape.mul(x, c).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert!(tape.grad(c).is_none());
        assert_eq!(tape.grad(x).unwrap(), &[5., 5.]);
    }

    #[test]
    fn sparse_ce_examples() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::<f64>::zeros(&[1, 8]));
        let loss = tape.sparse_softmax_ce(logits, &[5], &[true]).unwrap();
        assert!((tape.value(loss).data()[0] - 8f64.ln()).abs() < 1e-12);

        let mut row = vec![0.0; 4];
        row[2] = 30.0;
        let logits = tape.constant(t(&[1, 4], &row));
        let loss = tape.sparse_softmax_ce(logits, &[2], &[true]).unwrap();
        assert!(tape.value(loss).data()[0] < 1e-9);

        let logits = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(tape.sparse_softmax_ce(logits, &[0, 1], &[false, false]).is_err());
        assert!(matches!(
            tape.sparse_softmax_ce(logits, &[0, 3], &[true, true]),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn masked_softmax_gives_zero_weight() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[1., 2., 3.]));
        let m = tape.mask_fill(x, &[true, false, true]).unwrap();
        let y = tape.softmax(m, 1).unwrap();
        let v = tape.value(y).to_f64_vec();
        assert_eq!(v[1], 0.0);
        assert!((v[0] + v[2] - 1.0).abs() < 1e-15);
    }
}
