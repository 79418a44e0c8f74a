//! Wengert-list reverse-mode differentiation.
//!
//! Every primitive records one node holding its forward value and enough
//! bookkeeping to replay the chain rule. Parameters are read straight from a
//! borrowed [`ParamStore`] so a forward pass never copies weight matrices.

use std::collections::BTreeMap;

use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug)]
enum Op<S> {
    Constant,
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Binary(Elementwise, Var, Var),
    Scale(Var, S),
    Unary(Activation, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    MaxOverTime { input: Var, argmax: Vec<usize> },
    Conv1d { seq: Var, weight: Var, bias: Var, width: usize },
    Embed { table: ParamId, ids: Vec<usize>, skip_row0: bool },
    Row { input: Var, index: usize },
    Sum(Var),
    Bce { probs: Var, targets: Vec<S>, eps: S },
}

#[derive(Debug)]
enum Storage<S> {
    Owned(Vec<S>),
    Param(ParamId),
}

#[derive(Debug)]
struct Node<S> {
    shape: Vec<usize>,
    storage: Storage<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Recorded computation graph for one forward pass.
pub struct Tape<'p, S> {
    params: &'p ParamStore<S>,
    nodes: Vec<Node<S>>,
}

/// Gradient of a parameter: dense part from direct use plus sparse rows from lookups.
#[derive(Debug, Clone, Default)]
pub struct ParamGrad<S> {
    pub dense: Option<Vec<S>>,
    pub rows: BTreeMap<usize, Vec<S>>,
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients<S> {
    nodes: Vec<Option<Vec<S>>>,
    params: BTreeMap<ParamId, ParamGrad<S>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient with respect to a recorded value; `None` when unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&[S]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&ParamGrad<S>> {
        self.params.get(&id)
    }

    /// Dense view of a parameter gradient, `None` when the parameter was not reached.
    pub fn param_dense(&self, id: ParamId, store: &ParamStore<S>) -> Option<Vec<S>> {
        let pg = self.params.get(&id)?;
        let t = store.get(id);
        let mut out = pg.dense.clone().unwrap_or_else(|| vec![S::zero(); t.len()]);
        let width = *t.shape().last().unwrap_or(&1);
        for (&row, delta) in &pg.rows {
            for (o, &d) in out[row * width..(row + 1) * width].iter_mut().zip(delta) {
                *o += d;
            }
        }
        Some(out)
    }

    pub fn reached_params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.params.keys().copied()
    }

    /// Accumulates `scale * grad` into each reached parameter's gradient slot.
    pub fn accumulate_into(&self, store: &mut ParamStore<S>, scale: S) {
        for (&id, pg) in &self.params {
            let t = store.get_mut(id);
            if let Some(d) = &pg.dense {
                t.accumulate_grad(d, scale);
            }
            for (&row, delta) in &pg.rows {
                t.accumulate_grad_row(row, delta, scale);
            }
        }
    }
}

fn bcast_index(i: usize, len: usize, out_len: usize) -> usize {
    if len == out_len {
        i
    } else if len == 1 {
        0
    } else {
        i % len
    }
}

fn add_into<S: Scalar>(slot: &mut Option<Vec<S>>, len: usize) -> &mut Vec<S> {
    slot.get_or_insert_with(|| vec![S::zero(); len])
}

impl<'p, S: Scalar> Tape<'p, S> {
    pub fn new(params: &'p ParamStore<S>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<S> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[S] {
        match &self.nodes[v.0].storage {
            Storage::Owned(data) => data,
            Storage::Param(id) => self.params.get(*id).values(),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Copies a recorded value out as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor<S> {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("recorded node shape matches its values")
    }

    fn push(&mut self, shape: Vec<usize>, values: Vec<S>, op: Op<S>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node {
            shape,
            storage: Storage::Owned(values),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor; it receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, t: &Tensor<S>) -> Var {
        let op = if t.requires_grad { Op::Leaf } else { Op::Constant };
        self.push(t.shape().to_vec(), t.values().to_vec(), op, t.requires_grad)
    }

    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<S>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != values.len() || n == 0 {
            return Err(Error::Dimension {
                op: "constant",
                lhs: shape,
                rhs: vec![values.len()],
            });
        }
        Ok(self.push(shape, values, Op::Constant, false))
    }

    pub fn zeros(&mut self, shape: Vec<usize>) -> Var {
        let n = shape.iter().product();
        self.push(shape, vec![S::zero(); n], Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let t = self.params.get(id);
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            storage: Storage::Param(id),
            op: Op::Param(id),
            needs_grad: t.requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product. A rank-1 left operand is treated as a single row and the
    /// result stays rank-1.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (m, k, row_vec) = match sa.as_slice() {
            [k] => (1, *k, true),
            [m, k] => (*m, *k, false),
            _ => return Err(Error::Dimension { op: "matmul", lhs: sa, rhs: sb }),
        };
        let n = match sb.as_slice() {
            [kb, n] if *kb == k => *n,
            _ => return Err(Error::Dimension { op: "matmul", lhs: sa, rhs: sb }),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == S::zero() {
                    continue;
                }
                for (o, &w) in orow.iter_mut().zip(&bv[p * n..(p + 1) * n]) {
                    *o += x * w;
                }
            }
        }
        let shape = if row_vec { vec![n] } else { vec![m, n] };
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(shape, out, Op::MatMul(a, b), ng))
    }

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Var) -> Result<Var> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let out_shape = if la >= lb { sa.clone() } else { sb.clone() };
        let out_len = la.max(lb);
        let small = la.min(lb);
        let last = *out_shape.last().unwrap_or(&1);
        let small_shape = if la >= lb { &sb } else { &sa };
        let row_ok = small == last
            && (small_shape.len() == 1 || small_shape.iter().rev().skip(1).all(|&d| d == 1));
        if !(la == lb && sa == sb) && small != 1 && !row_ok {
            return Err(Error::Dimension { op: "elementwise", lhs: sa, rhs: sb });
        }
        let (av, bv) = (self.value(a), self.value(b));
        let out: Vec<S> = (0..out_len)
            .map(|i| {
                let x = av[bcast_index(i, la, out_len)];
                let y = bv[bcast_index(i, lb, out_len)];
                match kind {
                    Elementwise::Add => x + y,
                    Elementwise::Sub => x - y,
                    Elementwise::Mul => x * y,
                }
            })
            .collect();
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(out_shape, out, Op::Binary(kind, a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let out = self.value(a).iter().map(|&x| x * c).collect();
        let ng = self.needs_grad(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, c), ng)
    }

    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        if kind == Activation::Identity {
            return a;
        }
        let out = self
            .value(a)
            .iter()
            .map(|&x| match kind {
                Activation::Sigmoid => x.sigmoid(),
                Activation::Tanh => x.tanh(),
                Activation::Relu => x.max(S::zero()),
                Activation::Identity => x,
            })
            .collect();
        let ng = self.needs_grad(a);
        self.push(self.shape(a).to_vec(), out, Op::Unary(kind, a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = match inputs {
            [] => return Err(Error::Precondition("concat of zero tensors".into())),
            [only] => return Ok(*only),
            [first, ..] => self.shape(*first).to_vec(),
        };
        if axis >= first.len() {
            return Err(Error::Dimension { op: "concat", lhs: first, rhs: vec![axis] });
        }
        let mut axis_total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Dimension { op: "concat", lhs: first, rhs: s.to_vec() });
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first;
        shape[axis] = axis_total;
        let ng = inputs.iter().any(|&v| self.needs_grad(v));
        Ok(self.push(shape, out, Op::Concat { inputs: inputs.to_vec(), axis }, ng))
    }

    /// Per-column maximum over the rows of a `[T x d]` sequence.
    pub fn max_over_time(&mut self, seq: Var) -> Result<Var> {
        let s = self.shape(seq).to_vec();
        let (t, d) = match s.as_slice() {
            [t, d] => (*t, *d),
            [d] => (1, *d),
            _ => return Err(Error::Dimension { op: "max_over_time", lhs: s, rhs: vec![] }),
        };
        if t == 0 {
            return Err(Error::Precondition("max_over_time of an empty sequence".into()));
        }
        let v = self.value(seq);
        let mut argmax = vec![0usize; d];
        let mut out = v[..d].to_vec();
        for row in 1..t {
            for c in 0..d {
                let x = v[row * d + c];
                if x > out[c] {
                    out[c] = x;
                    argmax[c] = row;
                }
            }
        }
        let ng = self.needs_grad(seq);
        Ok(self.push(vec![d], out, Op::MaxOverTime { input: seq, argmax }, ng))
    }

    /// Valid 1-D convolution of a `[T x d]` sequence with a `[(width*d) x f]`
    /// filter matrix plus bias `[f]`, giving `[(T-width+1) x f]`.
    pub fn conv1d(&mut self, seq: Var, weight: Var, bias: Var, width: usize) -> Result<Var> {
        let (ss, ws, bs) = (
            self.shape(seq).to_vec(),
            self.shape(weight).to_vec(),
            self.shape(bias).to_vec(),
        );
        let [t, d] = ss[..] else {
            return Err(Error::Dimension { op: "conv1d", lhs: ss, rhs: ws });
        };
        let f = match ws[..] {
            [rows, f] if rows == width * d && width > 0 => f,
            _ => return Err(Error::Dimension { op: "conv1d", lhs: ss, rhs: ws }),
        };
        if bs.iter().product::<usize>() != f {
            return Err(Error::Dimension { op: "conv1d bias", lhs: ws, rhs: bs });
        }
        if t < width {
            return Err(Error::Precondition(format!(
                "sequence of length {t} shorter than filter width {width}"
            )));
        }
        let positions = t - width + 1;
        let (sv, wv, bv) = (self.value(seq), self.value(weight), self.value(bias));
        let mut out = Vec::with_capacity(positions * f);
        for pos in 0..positions {
            out.extend_from_slice(bv);
            let orow = &mut out[pos * f..(pos + 1) * f];
            // the window rows are contiguous, so the window is one flat slice
            let window = &sv[pos * d..(pos + width) * d];
            for (r, &x) in window.iter().enumerate() {
                if x == S::zero() {
                    continue;
                }
                for (o, &w) in orow.iter_mut().zip(&wv[r * f..(r + 1) * f]) {
                    *o += x * w;
                }
            }
        }
        let ng = self.needs_grad(seq) || self.needs_grad(weight) || self.needs_grad(bias);
        Ok(self.push(vec![positions, f], out, Op::Conv1d { seq, weight, bias, width }, ng))
    }

    /// Row lookup in an embedding table. With `skip_row0`, row 0 never
    /// receives a gradient.
    pub fn embed(&mut self, table: ParamId, ids: &[usize], trainable: bool, skip_row0: bool) -> Result<Var> {
        let t = self.params.get(table);
        let [vocab, dim] = t.shape()[..] else {
            return Err(Error::Dimension { op: "embed", lhs: t.shape().to_vec(), rhs: vec![] });
        };
        if ids.is_empty() {
            return Err(Error::Precondition("embedding lookup of an empty sequence".into()));
        }
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index { what: "embedding table", index: id, size: vocab });
            }
            out.extend_from_slice(&t.values()[id * dim..(id + 1) * dim]);
        }
        let ng = trainable && t.requires_grad;
        Ok(self.push(
            vec![ids.len(), dim],
            out,
            Op::Embed { table, ids: ids.to_vec(), skip_row0 },
            ng,
        ))
    }

    /// Row `index` of a `[T x d]` tensor as a rank-1 `[d]` value.
    pub fn row(&mut self, input: Var, index: usize) -> Result<Var> {
        let s = self.shape(input).to_vec();
        let [t, d] = s[..] else {
            return Err(Error::Dimension { op: "row", lhs: s, rhs: vec![index] });
        };
        if index >= t {
            return Err(Error::Index { what: "sequence", index, size: t });
        }
        let out = self.value(input)[index * d..(index + 1) * d].to_vec();
        let ng = self.needs_grad(input);
        Ok(self.push(vec![d], out, Op::Row { input, index }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).iter().copied().sum();
        let ng = self.needs_grad(a);
        self.push(vec![1], vec![total], Op::Sum(a), ng)
    }

    /// Summed binary cross-entropy of probabilities against 0/1 targets, with
    /// probabilities clipped to `[eps, 1 - eps]`.
    pub fn bce(&mut self, probs: Var, targets: &[S], eps: S) -> Result<Var> {
        let p = self.value(probs);
        if p.len() != targets.len() {
            return Err(Error::Contract(format!(
                "cross-entropy over {} outputs with {} targets",
                p.len(),
                targets.len()
            )));
        }
        let one = S::one();
        let total: S = p
            .iter()
            .zip(targets)
            .map(|(&o, &y)| {
                let o = o.max(eps).min(one - eps);
                -(y * o.ln() + (one - y) * (one - o).ln())
            })
            .sum();
        let ng = self.needs_grad(probs);
        Ok(self.push(
            vec![1],
            vec![total],
            Op::Bce { probs, targets: targets.to_vec(), eps },
            ng,
        ))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: BTreeMap<ParamId, ParamGrad<S>> = BTreeMap::new();
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads, &mut params);
            grads[i] = Some(g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn propagate(
        &self,
        node: &Node<S>,
        g: &[S],
        grads: &mut [Option<Vec<S>>],
        params: &mut BTreeMap<ParamId, ParamGrad<S>>,
    ) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        match &node.op {
            Op::Constant | Op::Leaf => {}
            Op::Param(id) => {
                let pg = params.entry(*id).or_default();
                let dense = add_into(&mut pg.dense, g.len());
                for (d, &x) in dense.iter_mut().zip(g) {
                    *d += x;
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let sb = self.shape(*b);
                let (k, n) = (sb[0], sb[1]);
                let m = av.len() / k;
                if wants(*a) {
                    let ga = add_into(&mut grads[a.0], av.len());
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                }
                if wants(*b) {
                    let gb = add_into(&mut grads[b.0], bv.len());
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            if x == S::zero() {
                                continue;
                            }
                            for (o, &y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                let (la, lb) = (self.value(*a).len(), self.value(*b).len());
                let out_len = g.len();
                if wants(*a) {
                    let bv = self.value(*b);
                    let ga = add_into(&mut grads[a.0], la);
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match kind {
                            Elementwise::Add | Elementwise::Sub => gi,
                            Elementwise::Mul => gi * bv[bcast_index(i, lb, out_len)],
                        };
                        ga[bcast_index(i, la, out_len)] += d;
                    }
                }
                if wants(*b) {
                    let av = self.value(*a);
                    let gb = add_into(&mut grads[b.0], lb);
                    for (i, &gi) in g.iter().enumerate() {
                        let d = match kind {
                            Elementwise::Add => gi,
                            Elementwise::Sub => -gi,
                            Elementwise::Mul => gi * av[bcast_index(i, la, out_len)],
                        };
                        gb[bcast_index(i, lb, out_len)] += d;
                    }
                }
            }
            Op::Scale(a, c) => {
                if wants(*a) {
                    let ga = add_into(&mut grads[a.0], g.len());
                    for (o, &x) in ga.iter_mut().zip(g) {
                        *o += x * *c;
                    }
                }
            }
            Op::Unary(kind, a) => {
                if wants(*a) {
                    let y = match &node.storage {
                        Storage::Owned(v) => v,
                        Storage::Param(_) => unreachable!("activation output is owned"),
                    };
                    let ga = add_into(&mut grads[a.0], g.len());
                    let one = S::one();
                    for ((o, &x), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *o += match kind {
                            Activation::Sigmoid => x * yi * (one - yi),
                            Activation::Tanh => x * (one - yi * yi),
                            Activation::Relu => {
                                if yi > S::zero() {
                                    x
                                } else {
                                    S::zero()
                                }
                            }
                            Activation::Identity => x,
                        };
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let axis_total = node.shape[*axis];
                let inner: usize = node.shape[axis + 1..].iter().product();
                let outer: usize = node.shape[..*axis].iter().product();
                let mut offset = 0;
                for &v in inputs {
                    let extent = self.shape(v)[*axis] * inner;
                    if wants(v) {
                        let gv = add_into(&mut grads[v.0], outer * extent);
                        for o in 0..outer {
                            let src = &g[o * axis_total * inner + offset..][..extent];
                            for (d, &x) in gv[o * extent..(o + 1) * extent].iter_mut().zip(src) {
                                *d += x;
                            }
                        }
                    }
                    offset += extent;
                }
            }
            Op::MaxOverTime { input, argmax } => {
                if wants(*input) {
                    let len = self.value(*input).len();
                    let d = argmax.len();
                    let gi = add_into(&mut grads[input.0], len);
                    for (c, &row) in argmax.iter().enumerate() {
                        gi[row * d + c] += g[c];
                    }
                }
            }
            Op::Conv1d { seq, weight, bias, width } => {
                let d = self.shape(*seq)[1];
                let f = self.shape(*weight)[1];
                let positions = node.shape[0];
                let (sv, wv) = (self.value(*seq), self.value(*weight));
                if wants(*bias) {
                    let gb = add_into(&mut grads[bias.0], f);
                    for pos in 0..positions {
                        for (o, &x) in gb.iter_mut().zip(&g[pos * f..(pos + 1) * f]) {
                            *o += x;
                        }
                    }
                }
                if wants(*weight) {
                    let gw = add_into(&mut grads[weight.0], wv.len());
                    for pos in 0..positions {
                        let grow = &g[pos * f..(pos + 1) * f];
                        let window = &sv[pos * d..(pos + width) * d];
                        for (r, &x) in window.iter().enumerate() {
                            if x == S::zero() {
                                continue;
                            }
                            for (o, &y) in gw[r * f..(r + 1) * f].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                }
                if wants(*seq) {
                    let gs = add_into(&mut grads[seq.0], sv.len());
                    for pos in 0..positions {
                        let grow = &g[pos * f..(pos + 1) * f];
                        for r in 0..width * d {
                            let wrow = &wv[r * f..(r + 1) * f];
                            gs[pos * d + r] += grow.iter().zip(wrow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                }
            }
            Op::Embed { table, ids, skip_row0 } => {
                let dim = node.shape[1];
                let pg = params.entry(*table).or_default();
                for (t, &id) in ids.iter().enumerate() {
                    if *skip_row0 && id == 0 {
                        continue;
                    }
                    let row = pg.rows.entry(id).or_insert_with(|| vec![S::zero(); dim]);
                    for (o, &x) in row.iter_mut().zip(&g[t * dim..(t + 1) * dim]) {
                        *o += x;
                    }
                }
            }
            Op::Row { input, index } => {
                if wants(*input) {
                    let len = self.value(*input).len();
                    let d = g.len();
                    let gi = add_into(&mut grads[input.0], len);
                    for (o, &x) in gi[index * d..(index + 1) * d].iter_mut().zip(g) {
                        *o += x;
                    }
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    let len = self.value(*a).len();
                    let ga = add_into(&mut grads[a.0], len);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
            }
            Op::Bce { probs, targets, eps } => {
                if wants(*probs) {
                    let p = self.value(*probs);
                    let one = S::one();
                    let gp = add_into(&mut grads[probs.0], p.len());
                    for ((o, &pi), &y) in gp.iter_mut().zip(p).zip(targets) {
                        if pi < *eps || pi > one - *eps {
                            continue;
                        }
                        *o += g[0] * (-(y / pi) + (one - y) / (one - pi));
                    }
                }
            }
        }
    }
}
