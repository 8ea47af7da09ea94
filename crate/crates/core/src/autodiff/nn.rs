//! LSTM, bidirectional LSTM and highway layers assembled from graph ops.

use rand::Rng;

use super::graph::{Graph, GraphError, GraphResult, NodeId};
use super::params::{xavier_uniform, ParamId, ParamStore};
use super::Tensor;

/// Weights of one LSTM direction. Gate rows are ordered input, forget,
/// candidate, output, each `hidden` rows tall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_ih = store.insert(format!("{prefix}/w_ih"), xavier_uniform(4 * hidden, input, rng));
        let w_hh = store.insert(format!("{prefix}/w_hh"), xavier_uniform(4 * hidden, hidden, rng));
        let bias = store.insert(format!("{prefix}/bias"), Tensor::zeros(4 * hidden, 1));
        LstmParams { w_ih, w_hh, bias, input, hidden }
    }

    fn check_input(&self, op: &'static str, shape: [usize; 2]) -> GraphResult<()> {
        if shape[0] != self.input {
            return Err(GraphError::Shape {
                op,
                left: [self.input, shape[1]],
                right: shape,
            });
        }
        Ok(())
    }
}

/// Forward and backward directions of a bi-LSTM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        BiLstmParams {
            forward: LstmParams::init(store, &format!("{prefix}/fwd"), input, hidden, rng),
            backward: LstmParams::init(store, &format!("{prefix}/bwd"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }
}

/// Cell state update from a precomputed `W_ih x + b` column.
fn lstm_cell(
    g: &mut Graph<'_>,
    p: &LstmParams,
    projected: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> GraphResult<(NodeId, NodeId)> {
    let d = p.hidden;
    let w_hh = g.param(p.w_hh);
    let recur = g.matmul(w_hh, h_prev)?;
    let z = g.add(projected, recur)?;
    let zi = g.slice_rows(z, 0, d)?;
    let zf = g.slice_rows(z, d, 2 * d)?;
    let zg = g.slice_rows(z, 2 * d, 3 * d)?;
    let zo = g.slice_rows(z, 3 * d, 4 * d)?;
    let i = g.sigmoid(zi);
    let f = g.sigmoid(zf);
    let cand = g.tanh(zg);
    let o = g.sigmoid(zo);
    let keep = g.hadamard(f, c_prev)?;
    let write = g.hadamard(i, cand)?;
    let c = g.add(keep, write)?;
    let squashed = g.tanh(c);
    let h = g.hadamard(o, squashed)?;
    Ok((h, c))
}

/// One LSTM step: `x_t` is `input×1`, states are `hidden×1`.
pub fn lstm_step(
    g: &mut Graph<'_>,
    p: &LstmParams,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> GraphResult<(NodeId, NodeId)> {
    let xs = g.shape(x_t);
    p.check_input("lstm_step", xs)?;
    for s in [g.shape(h_prev), g.shape(c_prev)] {
        if s != [p.hidden, 1] {
            return Err(GraphError::Shape { op: "lstm_step", left: [p.hidden, 1], right: s });
        }
    }
    let w_ih = g.param(p.w_ih);
    let bias = g.param(p.bias);
    let proj = g.matmul(w_ih, x_t)?;
    let proj = g.add(proj, bias)?;
    lstm_cell(g, p, proj, h_prev, c_prev)
}

/// Runs one direction over a `input×T` sequence from zero initial state.
/// Masked positions are skipped (state carried through) and emit a zero
/// column. Returns `hidden×T`.
pub fn lstm_sequence(
    g: &mut Graph<'_>,
    p: &LstmParams,
    seq: NodeId,
    mask: &[bool],
    reverse: bool,
) -> GraphResult<NodeId> {
    let shape = g.shape(seq);
    p.check_input("lstm", shape)?;
    let steps = shape[1];
    if steps == 0 {
        return Err(GraphError::Invalid { op: "lstm", msg: "empty sequence".into() });
    }
    if mask.len() != steps {
        return Err(GraphError::Shape { op: "lstm", left: shape, right: [1, mask.len()] });
    }
    let d = p.hidden;
    let w_ih = g.param(p.w_ih);
    let bias = g.param(p.bias);
    let proj = g.matmul(w_ih, seq)?;
    let proj = g.add(proj, bias)?;

    let zero = g.constant(Tensor::zeros(d, 1));
    let (mut h, mut c) = (zero, zero);
    let mut outputs = vec![zero; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        if !mask[t] {
            continue;
        }
        let x_t = g.column(proj, t)?;
        (h, c) = lstm_cell(g, p, x_t, h, c)?;
        outputs[t] = h;
    }
    g.stack_columns(&outputs)
}

/// Bidirectional encoding of `input×T` into `2·hidden×T`: rows `[0, d)` are
/// the forward pass, rows `[d, 2d)` the backward pass.
pub fn bilstm_encode(
    g: &mut Graph<'_>,
    p: &BiLstmParams,
    seq: NodeId,
    mask: &[bool],
) -> GraphResult<NodeId> {
    let fwd = lstm_sequence(g, &p.forward, seq, mask, false)?;
    let bwd = lstm_sequence(g, &p.backward, seq, mask, true)?;
    g.concat_rows(&[fwd, bwd])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HighwayLayer {
    pub transform_w: ParamId,
    pub transform_b: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
}

/// A stack of highway layers of constant width `dim`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HighwayParams {
    pub layers: Vec<HighwayLayer>,
    pub dim: usize,
}

impl HighwayParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        depth: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..depth)
            .map(|l| HighwayLayer {
                transform_w: store.insert(format!("{prefix}/{l}/transform_w"), xavier_uniform(dim, dim, rng)),
                transform_b: store.insert(format!("{prefix}/{l}/transform_b"), Tensor::zeros(dim, 1)),
                gate_w: store.insert(format!("{prefix}/{l}/gate_w"), xavier_uniform(dim, dim, rng)),
                gate_b: store.insert(format!("{prefix}/{l}/gate_b"), Tensor::zeros(dim, 1)),
            })
            .collect();
        HighwayParams { layers, dim }
    }
}

/// `y = g ⊙ relu(W_t x + b_t) + (1 − g) ⊙ x` with `g = σ(W_g x + b_g)`, per
/// layer, applied to every column of `x`. `dropout` is applied to each
/// layer's input.
pub fn highway_forward(
    g: &mut Graph<'_>,
    p: &HighwayParams,
    x: NodeId,
    dropout: f64,
) -> GraphResult<NodeId> {
    let shape = g.shape(x);
    if shape[0] != p.dim {
        return Err(GraphError::Shape { op: "highway", left: [p.dim, shape[1]], right: shape });
    }
    let mut cur = x;
    for layer in &p.layers {
        let input = g.dropout(cur, dropout);
        let tw = g.param(layer.transform_w);
        let tb = g.param(layer.transform_b);
        let gw = g.param(layer.gate_w);
        let gb = g.param(layer.gate_b);
        let t = g.matmul(tw, input)?;
        let t = g.add(t, tb)?;
        let t = g.relu(t);
        let z = g.matmul(gw, input)?;
        let z = g.add(z, gb)?;
        let gate = g.sigmoid(z);
        let carry = g.one_minus(gate);
        let a = g.hadamard(gate, t)?;
        let b = g.hadamard(carry, cur)?;
        cur = g.add(a, b)?;
    }
    Ok(cur)
}
