//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation as a node in insertion order, so the
//! tape is a topological order by construction. Parameters are borrowed from
//! a [`ParamStore`] without copying; [`Graph::backward`] walks the tape in
//! reverse and accumulates gradients in place.

use std::borrow::Cow;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::tensor::{matmul_nt_into, matmul_tn_into};
use super::{ParamId, ParamStore, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

pub type GraphResult<T> = Result<T, GraphError>;

/// Index of a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// Right operand is `m×1`, repeated across columns.
    Col,
    /// Right operand is `1×n`, repeated across rows.
    Row,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId, Broadcast),
    Mul(NodeId, NodeId, Broadcast),
    Affine(NodeId, f64),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize),
    Column(NodeId, usize),
    StackColumns(Vec<NodeId>),
    TileColumns(NodeId),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    MaxOverCols(NodeId, Vec<Option<usize>>),
    SumAll(NodeId),
    SumOverCols(NodeId),
    SumOverRows(NodeId),
    Gather(NodeId, Vec<Option<usize>>),
    Dropout(NodeId, Vec<f64>),
    Ln(NodeId, f64),
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "hadamard",
            Op::Affine(..) => "scalar-affine",
            Op::ConcatRows(..) => "concat-rows",
            Op::SliceRows(..) => "slice-rows",
            Op::Column(..) => "column",
            Op::StackColumns(..) => "stack-columns",
            Op::TileColumns(..) => "tile-columns",
            Op::Transpose(..) => "transpose",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::SoftmaxRows(..) => "softmax",
            Op::MaxOverCols(..) => "max-over-cols",
            Op::SumAll(..) => "sum",
            Op::SumOverCols(..) => "sum-over-cols",
            Op::SumOverRows(..) => "sum-over-rows",
            Op::Gather(..) => "embedding-gather",
            Op::Dropout(..) => "dropout",
            Op::Ln(..) => "ln",
        }
    }
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

/// A single forward computation and its tape.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    params: Option<&'p ParamStore>,
    param_nodes: Vec<Option<NodeId>>,
    rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// An evaluation-mode graph: dropout is the identity.
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            nodes: Vec::new(),
            params: Some(params),
            param_nodes: vec![None; params.len()],
            rng: None,
        }
    }

    /// A training-mode graph: dropout masks are drawn from `rng`.
    pub fn training(params: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        let mut g = Graph::new(params);
        g.rng = Some(rng);
        g
    }

    /// A graph with no parameter store, for tests and constant-only maths.
    pub fn detached() -> Graph<'static> {
        Graph {
            nodes: Vec::new(),
            params: None,
            param_nodes: Vec::new(),
            rng: None,
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> [usize; 2] {
        self.nodes[id.0].value.shape()
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op) -> NodeId {
        debug_assert!(value.is_finite(), "non-finite output from {}", op.tag());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op });
        id
    }

    fn push_owned(&mut self, value: Tensor, op: Op) -> NodeId {
        self.push(Cow::Owned(value), op)
    }

    /// A leaf holding a copy of `value`.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_owned(value, Op::Leaf)
    }

    /// The leaf for a stored parameter, created on first use.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(node) = self.param_nodes[id.0] {
            return node;
        }
        let store = self.params.expect("graph has no parameter store");
        let node = self.push(Cow::Borrowed(store.get(id)), Op::Leaf);
        self.param_nodes[id.0] = Some(node);
        node
    }

    fn shape_err(op: &'static str, left: [usize; 2], right: [usize; 2]) -> GraphError {
        GraphError::Shape { op, left, right }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> GraphResult<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Self::shape_err("matmul", av.shape(), bv.shape()));
        }
        let out = av.matmul(bv);
        Ok(self.push_owned(out, Op::MatMul(a, b)))
    }

    fn broadcast_kind(&self, op: &'static str, a: NodeId, b: NodeId) -> GraphResult<Broadcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if sb == [sa[0], 1] {
            Ok(Broadcast::Col)
        } else if sb == [1, sa[1]] {
            Ok(Broadcast::Row)
        } else {
            Err(Self::shape_err(op, sa, sb))
        }
    }

    fn binary(&self, a: NodeId, b: NodeId, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let (rows, cols) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(rows, cols);
        let (ad, bd, od) = (av.data(), bv.data(), out.data_mut());
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                let bval = match kind {
                    Broadcast::Same => bd[i],
                    Broadcast::Col => bd[r],
                    Broadcast::Row => bd[c],
                };
                od[i] = f(ad[i], bval);
            }
        }
        out
    }

    /// `a + b`; `b` may also be an `m×1` column or `1×n` row broadcast over `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> GraphResult<NodeId> {
        let kind = self.broadcast_kind("add", a, b)?;
        let out = self.binary(a, b, kind, |x, y| x + y);
        Ok(self.push_owned(out, Op::Add(a, b, kind)))
    }

    /// Elementwise product with the same broadcasting rules as [`Graph::add`].
    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> GraphResult<NodeId> {
        let kind = self.broadcast_kind("hadamard", a, b)?;
        let out = self.binary(a, b, kind, |x, y| x * y);
        Ok(self.push_owned(out, Op::Mul(a, b, kind)))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let out = self.value(a).map(|v| scale * v + shift);
        self.push_owned(out, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.affine(a, s, 0.0)
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        self.affine(a, -1.0, 1.0)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> GraphResult<NodeId> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    /// Stacks tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> GraphResult<NodeId> {
        let first = *parts.first().ok_or_else(|| GraphError::Invalid {
            op: "concat-rows",
            msg: "no inputs".into(),
        })?;
        let cols = self.shape(first)[1];
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[1] != cols {
                return Err(Self::shape_err("concat-rows", self.shape(first), s));
            }
            rows += s[0];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(rows, cols, data);
        Ok(self.push_owned(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Rows `start..end` of `a`.
    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> GraphResult<NodeId> {
        let av = self.value(a);
        if start >= end || end > av.rows() {
            return Err(GraphError::Invalid {
                op: "slice-rows",
                msg: format!("range {start}..{end} out of {} rows", av.rows()),
            });
        }
        let cols = av.cols();
        let out = Tensor::from_vec(end - start, cols, av.data()[start * cols..end * cols].to_vec());
        Ok(self.push_owned(out, Op::SliceRows(a, start)))
    }

    /// Column `t` of `a` as an `m×1` tensor.
    pub fn column(&mut self, a: NodeId, t: usize) -> GraphResult<NodeId> {
        let av = self.value(a);
        if t >= av.cols() {
            return Err(GraphError::Invalid {
                op: "column",
                msg: format!("column {t} out of {}", av.cols()),
            });
        }
        let out = Tensor::column(&av.column_vec(t));
        Ok(self.push_owned(out, Op::Column(a, t)))
    }

    /// Places `m×1` columns side by side.
    pub fn stack_columns(&mut self, parts: &[NodeId]) -> GraphResult<NodeId> {
        let first = *parts.first().ok_or_else(|| GraphError::Invalid {
            op: "stack-columns",
            msg: "no inputs".into(),
        })?;
        let rows = self.shape(first)[0];
        let n = parts.len();
        let mut out = Tensor::zeros(rows, n);
        for (c, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            if pv.shape() != [rows, 1] {
                return Err(Self::shape_err("stack-columns", [rows, 1], pv.shape()));
            }
            for r in 0..rows {
                out.data_mut()[r * n + c] = pv.data()[r];
            }
        }
        Ok(self.push_owned(out, Op::StackColumns(parts.to_vec())))
    }

    /// Repeats an `m×1` column `n` times.
    pub fn tile_columns(&mut self, a: NodeId, n: usize) -> GraphResult<NodeId> {
        let av = self.value(a);
        if av.cols() != 1 || n == 0 {
            return Err(Self::shape_err("tile-columns", av.shape(), [av.rows(), n]));
        }
        let rows = av.rows();
        let mut data = Vec::with_capacity(rows * n);
        for r in 0..rows {
            data.extend(std::iter::repeat_n(av.data()[r], n));
        }
        let out = Tensor::from_vec(rows, n, data);
        Ok(self.push_owned(out, Op::TileColumns(a)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).transpose();
        self.push_owned(out, Op::Transpose(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(sigmoid);
        self.push_owned(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(f64::tanh);
        self.push_owned(out, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(|v| v.max(0.0));
        self.push_owned(out, Op::Relu(a))
    }

    /// Softmax within each row. `mask` (one flag per column) excludes
    /// columns; excluded entries are exactly zero. A row with no valid
    /// column is all zeros.
    pub fn softmax_rows(&mut self, a: NodeId, mask: Option<&[bool]>) -> GraphResult<NodeId> {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(Self::shape_err("softmax", av.shape(), [1, m.len()]));
            }
        }
        let valid = |c: usize| mask.is_none_or(|m| m[c]);
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let row = &av.data()[r * cols..(r + 1) * cols];
            let max = (0..cols)
                .filter(|&c| valid(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let o = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for c in 0..cols {
                if valid(c) {
                    o[c] = (row[c] - max).exp();
                    total += o[c];
                }
            }
            for v in o.iter_mut() {
                *v /= total;
            }
        }
        Ok(self.push_owned(out, Op::SoftmaxRows(a)))
    }

    /// Per-row maximum over the valid columns, as an `m×1` tensor. Rows with
    /// no valid column yield zero.
    pub fn max_over_cols(&mut self, a: NodeId, mask: Option<&[bool]>) -> GraphResult<NodeId> {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(Self::shape_err("max-over-cols", av.shape(), [1, m.len()]));
            }
        }
        let mut out = Tensor::zeros(rows, 1);
        let mut arg = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut best: Option<usize> = None;
            for c in 0..cols {
                if mask.is_none_or(|m| m[c]) && best.is_none_or(|b| av.get(r, c) > av.get(r, b)) {
                    best = Some(c);
                }
            }
            if let Some(b) = best {
                out.data_mut()[r] = av.get(r, b);
            }
            arg.push(best);
        }
        Ok(self.push_owned(out, Op::MaxOverCols(a, arg)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(a).sum());
        self.push_owned(out, Op::SumAll(a))
    }

    /// Sums each row across its columns, giving `m×1`.
    pub fn sum_over_cols(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let cols = av.cols();
        let data = av.data().chunks(cols.max(1)).map(|r| r.iter().sum()).collect();
        let out = Tensor::from_vec(av.rows(), 1, data);
        self.push_owned(out, Op::SumOverCols(a))
    }

    /// Sums each column across its rows, giving `1×n`.
    pub fn sum_over_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut out = Tensor::zeros(1, av.cols());
        for r in 0..av.rows() {
            for c in 0..av.cols() {
                out.data_mut()[c] += av.get(r, c);
            }
        }
        self.push_owned(out, Op::SumOverRows(a))
    }

    /// Selects columns of an embedding table (`v×V`); `None` yields a zero
    /// column.
    pub fn gather_columns(&mut self, table: NodeId, ids: &[Option<usize>]) -> GraphResult<NodeId> {
        let tv = self.value(table);
        let (v, vocab) = (tv.rows(), tv.cols());
        let mut out = Tensor::zeros(v, ids.len());
        for (t, id) in ids.iter().enumerate() {
            match *id {
                Some(i) if i >= vocab => {
                    return Err(GraphError::Invalid {
                        op: "embedding-gather",
                        msg: format!("index {i} out of vocabulary of {vocab}"),
                    })
                }
                Some(i) => {
                    for r in 0..v {
                        out.set(r, t, tv.get(r, i));
                    }
                }
                None => {}
            }
        }
        Ok(self.push_owned(out, Op::Gather(table, ids.to_vec())))
    }

    /// Inverted dropout: at train time each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`. In eval
    /// mode, or with `rate == 0`, returns `a` unchanged.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> NodeId {
        if rate <= 0.0 {
            return a;
        }
        let Some(rng) = self.rng.as_mut() else {
            return a;
        };
        let keep = 1.0 - rate;
        let n = self.nodes[a.0].value.len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let av = self.value(a);
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        self.push_owned(out, Op::Dropout(a, mask))
    }

    /// Natural log with inputs clamped below at `floor`; the gradient is zero
    /// where the clamp is active.
    pub fn ln(&mut self, a: NodeId, floor: f64) -> NodeId {
        let out = self.value(a).map(|v| v.max(floor).ln());
        self.push_owned(out, Op::Ln(a, floor))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> GraphResult<Gradients> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(GraphError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
        }
        grads[loss.0].get_or_insert_with(|| Tensor::scalar(1.0));
        Ok(Gradients {
            grads,
            param_nodes: self.param_nodes.clone(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &*node.value;
        let value = |id: NodeId| -> &Tensor { &self.nodes[id.0].value };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (value(*a), value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let ga = acc(grads, &self.nodes, *a);
                matmul_nt_into(g.data(), bv.data(), ga.data_mut(), m, n, k);
                let gb = acc(grads, &self.nodes, *b);
                matmul_tn_into(av.data(), g.data(), gb.data_mut(), m, k, n);
            }
            Op::Add(a, b, kind) => {
                acc(grads, &self.nodes, *a).add_assign(g);
                let gb = acc(grads, &self.nodes, *b);
                reduce_broadcast(g.data(), g.rows(), g.cols(), *kind, gb.data_mut(), |_| 1.0);
            }
            Op::Mul(a, b, kind) => {
                let (av, bv) = (value(*a), value(*b));
                let (rows, cols) = (g.rows(), g.cols());
                let ga = acc(grads, &self.nodes, *a);
                for r in 0..rows {
                    for c in 0..cols {
                        let idx = r * cols + c;
                        let bval = match kind {
                            Broadcast::Same => bv.data()[idx],
                            Broadcast::Col => bv.data()[r],
                            Broadcast::Row => bv.data()[c],
                        };
                        ga.data_mut()[idx] += g.data()[idx] * bval;
                    }
                }
                let gb = acc(grads, &self.nodes, *b);
                reduce_broadcast(g.data(), rows, cols, *kind, gb.data_mut(), |idx| av.data()[idx]);
            }
            Op::Affine(a, s) => acc(grads, &self.nodes, *a).add_scaled(g, *s),
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let n = value(p).len();
                    let gp = acc(grads, &self.nodes, p);
                    for (d, s) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                        *d += s;
                    }
                    offset += n;
                }
                debug_assert_eq!(offset, g.rows() * cols);
            }
            Op::SliceRows(a, start) => {
                let cols = g.cols();
                let ga = acc(grads, &self.nodes, *a);
                let dst = &mut ga.data_mut()[start * cols..start * cols + g.len()];
                for (d, s) in dst.iter_mut().zip(g.data()) {
                    *d += s;
                }
            }
            Op::Column(a, t) => {
                let ga = acc(grads, &self.nodes, *a);
                let cols = ga.cols();
                for r in 0..g.rows() {
                    ga.data_mut()[r * cols + t] += g.data()[r];
                }
            }
            Op::StackColumns(parts) => {
                let n = parts.len();
                for (c, &p) in parts.iter().enumerate() {
                    let gp = acc(grads, &self.nodes, p);
                    for r in 0..g.rows() {
                        gp.data_mut()[r] += g.data()[r * n + c];
                    }
                }
            }
            Op::TileColumns(a) => {
                let cols = g.cols();
                let ga = acc(grads, &self.nodes, *a);
                for r in 0..g.rows() {
                    ga.data_mut()[r] += g.data()[r * cols..(r + 1) * cols].iter().sum::<f64>();
                }
            }
            Op::Transpose(a) => acc(grads, &self.nodes, *a).add_assign(&g.transpose()),
            Op::Sigmoid(a) => {
                let ga = acc(grads, &self.nodes, *a);
                for ((d, gy), yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gy * yv * (1.0 - yv);
                }
            }
            Op::Tanh(a) => {
                let ga = acc(grads, &self.nodes, *a);
                for ((d, gy), yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gy * (1.0 - yv * yv);
                }
            }
            Op::Relu(a) => {
                let ga = acc(grads, &self.nodes, *a);
                for ((d, gy), yv) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    if *yv > 0.0 {
                        *d += gy;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let cols = y.cols();
                let ga = acc(grads, &self.nodes, *a);
                for r in 0..y.rows() {
                    let yr = &y.data()[r * cols..(r + 1) * cols];
                    let gr = &g.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    let dr = &mut ga.data_mut()[r * cols..(r + 1) * cols];
                    for c in 0..cols {
                        dr[c] += yr[c] * (gr[c] - dot);
                    }
                }
            }
            Op::MaxOverCols(a, arg) => {
                let ga = acc(grads, &self.nodes, *a);
                let cols = ga.cols();
                for (r, best) in arg.iter().enumerate() {
                    if let Some(c) = best {
                        ga.data_mut()[r * cols + c] += g.data()[r];
                    }
                }
            }
            Op::SumAll(a) => {
                let s = g.item();
                for d in acc(grads, &self.nodes, *a).data_mut() {
                    *d += s;
                }
            }
            Op::SumOverCols(a) => {
                let ga = acc(grads, &self.nodes, *a);
                let cols = ga.cols();
                for (idx, d) in ga.data_mut().iter_mut().enumerate() {
                    *d += g.data()[idx / cols];
                }
            }
            Op::SumOverRows(a) => {
                let ga = acc(grads, &self.nodes, *a);
                let cols = ga.cols();
                for (idx, d) in ga.data_mut().iter_mut().enumerate() {
                    *d += g.data()[idx % cols];
                }
            }
            Op::Gather(table, ids) => {
                let gt = acc(grads, &self.nodes, *table);
                let vocab = gt.cols();
                let t_cols = g.cols();
                for (t, id) in ids.iter().enumerate() {
                    if let Some(i) = id {
                        for r in 0..g.rows() {
                            gt.data_mut()[r * vocab + i] += g.data()[r * t_cols + t];
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                let ga = acc(grads, &self.nodes, *a);
                for ((d, gy), m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *d += gy * m;
                }
            }
            Op::Ln(a, floor) => {
                let x = value(*a);
                let ga = acc(grads, &self.nodes, *a);
                for ((d, gy), xv) in ga.data_mut().iter_mut().zip(g.data()).zip(x.data()) {
                    if *xv > *floor {
                        *d += gy / xv;
                    }
                }
            }
        }
    }
}

/// Adds `g ⊙ factor` into `out`, summing over the broadcast axis.
fn reduce_broadcast(
    g: &[f64],
    rows: usize,
    cols: usize,
    kind: Broadcast,
    out: &mut [f64],
    factor: impl Fn(usize) -> f64,
) {
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            let v = g[idx] * factor(idx);
            match kind {
                Broadcast::Same => out[idx] += v,
                Broadcast::Col => out[r] += v,
                Broadcast::Row => out[c] += v,
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The gradient buffer for `id`, allocated as zeros on first touch.
fn acc<'g>(grads: &'g mut [Option<Tensor>], nodes: &[Node<'_>], id: NodeId) -> &'g mut Tensor {
    let [r, c] = nodes[id.0].value.shape();
    grads[id.0].get_or_insert_with(|| Tensor::zeros(r, c))
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    param_nodes: Vec<Option<NodeId>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a leaf or the loss itself.
    /// Interior nodes are released during the reverse pass.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient for a parameter; `None` if the parameter never entered the
    /// graph or received no gradient.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.param_nodes[id.0].and_then(|n| self.grads[n.0].as_ref())
    }

    /// One gradient per parameter in store order, zero where unreachable.
    pub fn into_param_grads(mut self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, t)| {
                self.param_nodes[id.0]
                    .and_then(|n| self.grads[n.0].take())
                    .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn hadamard_elementwise() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::row(&[1.0, 2.0]));
        let b = g.constant(Tensor::row(&[3.0, 4.0]));
        let c = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 8.0]);
    }

    #[test]
    fn softmax_uniform_and_ln3() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::row(&[0.0, 0.0, 0.0]));
        let s = g.softmax_rows(a, None).unwrap();
        for &v in g.value(s).data() {
            assert!(close(v, 1.0 / 3.0, 1e-15));
        }
        let b = g.constant(Tensor::row(&[0.0, 3f64.ln()]));
        let s = g.softmax_rows(b, None).unwrap();
        assert!(close(g.value(s).data()[0], 0.25, 1e-15));
        assert!(close(g.value(s).data()[1], 0.75, 1e-15));
    }

    #[test]
    fn masked_softmax_zeroes_excluded() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::from_vec(2, 3, vec![1.0, 5.0, 2.0, -1.0, 0.5, 9.0]));
        let s = g.softmax_rows(a, Some(&[true, false, true])).unwrap();
        let v = g.value(s);
        assert_eq!(v.get(0, 1), 0.0);
        assert_eq!(v.get(1, 1), 0.0);
        assert!(close(v.get(0, 0) + v.get(0, 2), 1.0, 1e-12));
        let none = g.softmax_rows(a, Some(&[false, false, false])).unwrap();
        assert!(g.value(none).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut g = Graph::detached();
        let x = g.constant(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(g.value(y).item(), 0.5);
        assert!(close(grads.wrt(x).unwrap().item(), 0.25, 1e-15));
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::detached();
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        let sq = g.hadamard(x, x).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::detached();
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        assert_eq!(g.backward(x).err(), Some(GraphError::NonScalarLoss([1, 2])));
    }

    #[test]
    fn shape_errors_name_op_and_shapes() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            GraphError::Shape { op: "matmul", left: [2, 3], right: [2, 3] }
        );
        assert!(err.to_string().contains("matmul"));
        let c = g.constant(Tensor::zeros(3, 3));
        assert!(matches!(g.add(a, c), Err(GraphError::Shape { op: "add", .. })));
    }

    #[test]
    fn concat_rows_shape_algebra() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::zeros(2, 4));
        let b = g.constant(Tensor::zeros(3, 4));
        let c = g.concat_rows(&[a, b]).unwrap();
        assert_eq!(g.shape(c), [5, 4]);
        let bad = g.constant(Tensor::zeros(3, 2));
        assert!(g.concat_rows(&[a, bad]).is_err());
    }

    #[test]
    fn unreachable_params_get_zero_gradient() {
        let mut store = ParamStore::new();
        let used = store.insert("used", Tensor::row(&[1.0, 2.0]));
        let unused = store.insert("unused", Tensor::row(&[3.0]));
        let mut g = Graph::new(&store);
        let u = g.param(used);
        let s = g.sum(u);
        let grads = g.backward(s).unwrap();
        assert!(grads.param(unused).is_none());
        let all = grads.into_param_grads(&store);
        assert_eq!(all[0].data(), &[1.0, 1.0]);
        assert_eq!(all[1].data(), &[0.0]);
    }

    #[test]
    fn dropout_eval_identity_and_train_determinism() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::filled(4, 4, 1.0));
        assert_eq!(g.dropout(x, 0.5), x);

        let run = || {
            let mut g = Graph::training(&store, ChaCha8Rng::seed_from_u64(7));
            let x = g.constant(Tensor::filled(8, 8, 1.0));
            let y = g.dropout(x, 0.5);
            g.value(y).clone()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn gather_scatters_gradient() {
        let mut g = Graph::detached();
        let table = g.constant(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let e = g.gather_columns(table, &[Some(2), None, Some(2)]).unwrap();
        assert_eq!(g.value(e).data(), &[3.0, 0.0, 3.0, 6.0, 0.0, 6.0]);
        let s = g.sum(e);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(table).unwrap().data(), &[0.0, 0.0, 2.0, 0.0, 0.0, 2.0]);
        assert!(g.gather_columns(table, &[Some(3)]).is_err());
    }
}
