use std::collections::HashSet;

use super::{ModelError, ParamLayout};
use crate::autodiff::{bilstm_encode, highway_forward, BiLstmParams, Graph, GraphResult, NodeId, Tensor};
use crate::text::{TokenSeq, VectorTable};

/// `B̃`: 1 where the passage token equals (case-sensitively) some question
/// token, else 0. Shape `1×T`.
pub fn exact_match_channel(question: &TokenSeq, passage: &TokenSeq) -> Tensor {
    let words: HashSet<&str> = question.tokens().iter().map(String::as_str).collect();
    let flags = passage
        .tokens()
        .iter()
        .map(|t| if words.contains(t.as_str()) { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(1, passage.len(), flags)
}

/// Everything the network needs about one (question, passage) pair.
#[derive(Clone, Debug)]
pub struct PairInput {
    /// `v×J` question embeddings.
    pub question: Tensor,
    /// `v×T` passage embeddings.
    pub passage: Tensor,
    /// `1×T`.
    pub exact_match: Tensor,
    pub question_mask: Vec<bool>,
    pub passage_mask: Vec<bool>,
}

impl PairInput {
    pub fn new(question: &TokenSeq, passage: &TokenSeq, vectors: &VectorTable) -> Result<Self, ModelError> {
        if question.is_empty() {
            return Err(ModelError::EmptyInput("question"));
        }
        if passage.is_empty() {
            return Err(ModelError::EmptyInput("passage"));
        }
        Ok(PairInput {
            question: vectors.embed(question),
            passage: vectors.embed(passage),
            exact_match: exact_match_channel(question, passage),
            question_mask: vec![true; question.len()],
            passage_mask: vec![true; passage.len()],
        })
    }

    pub fn passage_len(&self) -> usize {
        self.passage.cols()
    }

    pub fn question_len(&self) -> usize {
        self.question.cols()
    }
}

/// Which output heads to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heads {
    Both,
    Comprehension,
    Retrieval,
}

impl Heads {
    fn comprehension(self) -> bool {
        self != Heads::Retrieval
    }

    fn retrieval(self) -> bool {
        self != Heads::Comprehension
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionFlow {
    /// `T×J` similarity matrix.
    pub s: NodeId,
    /// `2d×T` attended question vectors.
    pub u_tilde: NodeId,
    /// `1×T` query-to-context weights.
    pub b: NodeId,
    /// `2d×T`, the attended passage vector tiled over T.
    pub h_tilde: NodeId,
    /// `8d×T`.
    pub g: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct ComprehensionState {
    pub m1: NodeId,
    pub m1_tilde: NodeId,
    pub m2: NodeId,
    /// `1×T` start distribution.
    pub p1: NodeId,
    /// `1×T` end distribution.
    pub p2: NodeId,
}

#[derive(Clone, Copy, Debug)]
pub struct RetrievalState {
    pub b_tilde: NodeId,
    pub mr: NodeId,
    /// `1×T` self-attention weights.
    pub beta: NodeId,
    /// `2d×1` pooled vector.
    pub pooled: NodeId,
    /// `1×1` relevance.
    pub pr: NodeId,
}

#[derive(Clone, Debug)]
pub struct ForwardState {
    pub x: NodeId,
    pub q: NodeId,
    pub h: NodeId,
    pub u: NodeId,
    pub flow: AttentionFlow,
    pub m: NodeId,
    pub rc: Option<ComprehensionState>,
    pub ir: Option<RetrievalState>,
}

/// Bidirectional attention between `h` (`2d×T`) and `u` (`2d×J`);
/// `w_s` is `6d×1`.
pub fn attention_flow(
    g: &mut Graph<'_>,
    h: NodeId,
    u: NodeId,
    w_s: NodeId,
    passage_mask: &[bool],
    question_mask: &[bool],
) -> GraphResult<AttentionFlow> {
    let dd = g.shape(h)[0];
    let t_len = g.shape(h)[1];
    let w_h = g.slice_rows(w_s, 0, dd)?;
    let w_u = g.slice_rows(w_s, dd, 2 * dd)?;
    let w_hu = g.slice_rows(w_s, 2 * dd, 3 * dd)?;

    // S_tj = w_H·H_t + w_U·U_j + (w_HU ⊙ H_t)·U_j
    let ht = g.transpose(h);
    let from_h = g.matmul(ht, w_h)?;
    let ut = g.transpose(u);
    let from_u = g.matmul(ut, w_u)?;
    let from_u = g.transpose(from_u);
    let hw = g.hadamard(h, w_hu)?;
    let hwt = g.transpose(hw);
    let cross = g.matmul(hwt, u)?;
    let s = g.add(cross, from_h)?;
    let s = g.add(s, from_u)?;

    let a = g.softmax_rows(s, Some(question_mask))?;
    let at = g.transpose(a);
    let u_tilde = g.matmul(u, at)?;

    let smax = g.max_over_cols(s, Some(question_mask))?;
    let smax = g.transpose(smax);
    let b = g.softmax_rows(smax, Some(passage_mask))?;
    let bt = g.transpose(b);
    let pooled = g.matmul(h, bt)?;
    let h_tilde = g.tile_columns(pooled, t_len)?;

    let h_u = g.hadamard(h, u_tilde)?;
    let h_h = g.hadamard(h, h_tilde)?;
    let out = g.concat_rows(&[h, u_tilde, h_u, h_h])?;
    Ok(AttentionFlow { s, u_tilde, b, h_tilde, g: out })
}

fn encode(g: &mut Graph<'_>, p: &BiLstmParams, seq: NodeId, mask: &[bool], dropout: f64) -> GraphResult<NodeId> {
    let seq = g.dropout(seq, dropout);
    bilstm_encode(g, p, seq, mask)
}

/// Embedding, highway, contextual encoder, attention flow and modeling
/// layer. Head fields are left empty.
pub fn encode_shared(
    g: &mut Graph<'_>,
    layout: &ParamLayout,
    input: &PairInput,
    dropout: f64,
) -> Result<ForwardState, ModelError> {
    if input.question_len() == 0 {
        return Err(ModelError::EmptyInput("question"));
    }
    if input.passage_len() == 0 {
        return Err(ModelError::EmptyInput("passage"));
    }
    let expected = layout.highway.dim;
    for e in [&input.question, &input.passage] {
        if e.rows() != expected {
            return Err(ModelError::VectorDim { expected, found: e.rows() });
        }
    }
    let x = g.constant(input.passage.clone());
    let q = g.constant(input.question.clone());
    let xh = highway_forward(g, &layout.highway, x, dropout)?;
    let qh = highway_forward(g, &layout.highway, q, dropout)?;
    let h = encode(g, &layout.contextual, xh, &input.passage_mask, dropout)?;
    let u = encode(g, &layout.contextual, qh, &input.question_mask, dropout)?;
    let w_s = g.param(layout.w_s);
    let flow = attention_flow(g, h, u, w_s, &input.passage_mask, &input.question_mask)?;
    let m = encode(g, &layout.modeling, flow.g, &input.passage_mask, dropout)?;
    Ok(ForwardState { x, q, h, u, flow, m, rc: None, ir: None })
}

/// Start and end distributions from `G` (`8d×T`) and `M` (`2d×T`).
pub fn comprehension_head(
    g: &mut Graph<'_>,
    layout: &ParamLayout,
    g_att: NodeId,
    m: NodeId,
    mask: &[bool],
    dropout: f64,
) -> GraphResult<ComprehensionState> {
    let t_len = g.shape(m)[1];
    let m1 = encode(g, &layout.start, m, mask, dropout)?;
    let gm1 = g.concat_rows(&[g_att, m1])?;
    let gm1 = g.dropout(gm1, dropout);
    let w1 = g.param(layout.w_1);
    let w1t = g.transpose(w1);
    let logits1 = g.matmul(w1t, gm1)?;
    let p1 = g.softmax_rows(logits1, Some(mask))?;

    let p1t = g.transpose(p1);
    let pooled = g.matmul(m1, p1t)?;
    let m1_tilde = g.tile_columns(pooled, t_len)?;
    let prod = g.hadamard(m1, m1_tilde)?;
    let end_in = g.concat_rows(&[g_att, m1, m1_tilde, prod])?;
    let m2 = encode(g, &layout.end, end_in, mask, dropout)?;
    let gm2 = g.concat_rows(&[g_att, m2])?;
    let gm2 = g.dropout(gm2, dropout);
    let w2 = g.param(layout.w_2);
    let w2t = g.transpose(w2);
    let logits2 = g.matmul(w2t, gm2)?;
    let p2 = g.softmax_rows(logits2, Some(mask))?;
    Ok(ComprehensionState { m1, m1_tilde, m2, p1, p2 })
}

/// Relevance of the passage from `M` (`2d×T`) and `B̃` (`1×T`).
pub fn retrieval_head(
    g: &mut Graph<'_>,
    layout: &ParamLayout,
    m: NodeId,
    b_tilde: NodeId,
    mask: &[bool],
    dropout: f64,
) -> GraphResult<RetrievalState> {
    let input = g.concat_rows(&[m, b_tilde])?;
    let mr = encode(g, &layout.retrieval, input, mask, dropout)?;
    let w_a = g.param(layout.w_a);
    let b_a = g.param(layout.b_a);
    let proj = g.matmul(w_a, mr)?;
    let proj = g.add(proj, b_a)?;
    let w_c = g.param(layout.w_c);
    let w_ct = g.transpose(w_c);
    let scores = g.matmul(w_ct, proj)?;
    let beta = g.softmax_rows(scores, Some(mask))?;
    let beta_t = g.transpose(beta);
    let pooled = g.matmul(mr, beta_t)?;
    let dropped = g.dropout(pooled, dropout);
    let w_r = g.param(layout.w_r);
    let w_rt = g.transpose(w_r);
    let logit = g.matmul(w_rt, dropped)?;
    let pr = g.sigmoid(logit);
    Ok(RetrievalState { b_tilde, mr, beta, pooled, pr })
}

/// The full forward pass for one pair.
pub fn forward(
    g: &mut Graph<'_>,
    layout: &ParamLayout,
    input: &PairInput,
    heads: Heads,
    dropout: f64,
) -> Result<ForwardState, ModelError> {
    let mut state = encode_shared(g, layout, input, dropout)?;
    if heads.comprehension() {
        state.rc = Some(comprehension_head(g, layout, state.flow.g, state.m, &input.passage_mask, dropout)?);
    }
    if heads.retrieval() {
        let b = g.constant(input.exact_match.clone());
        state.ir = Some(retrieval_head(g, layout, state.m, b, &input.passage_mask, dropout)?);
    }
    Ok(state)
}
