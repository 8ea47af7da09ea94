use super::forward::{forward, Heads, PairInput};
use super::span::{extract_answer, select_span, Span};
use super::{ModelError, ModelParams};
use crate::autodiff::Graph;
use crate::text::{TokenSeq, VectorTable};

/// Output of reading one passage.
#[derive(Clone, Debug, PartialEq)]
pub struct Reading {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub span: Span,
    pub answer: String,
    pub relevance: f64,
}

/// Evaluation-mode inference over fixed weights (dropout off).
#[derive(Clone, Copy, Debug)]
pub struct Reader<'a> {
    pub params: &'a ModelParams,
    pub vectors: &'a VectorTable,
}

impl<'a> Reader<'a> {
    pub fn new(params: &'a ModelParams, vectors: &'a VectorTable) -> Result<Self, ModelError> {
        if vectors.dim() != params.config.vector_dim {
            return Err(ModelError::VectorDim { expected: params.config.vector_dim, found: vectors.dim() });
        }
        Ok(Reader { params, vectors })
    }

    /// Relevance `pʳ` of `passage` to `question`.
    pub fn relevance(&self, question: &TokenSeq, passage: &TokenSeq) -> Result<f64, ModelError> {
        let input = PairInput::new(question, passage, self.vectors)?;
        let mut g = Graph::new(&self.params.store);
        let state = forward(&mut g, &self.params.layout, &input, Heads::Retrieval, 0.0)?;
        Ok(g.value(state.ir.expect("retrieval head built").pr).item())
    }

    /// Both heads: span distributions, best span, its text and `pʳ`.
    pub fn read(&self, question: &TokenSeq, passage: &TokenSeq) -> Result<Reading, ModelError> {
        let input = PairInput::new(question, passage, self.vectors)?;
        let mut g = Graph::new(&self.params.store);
        let state = forward(&mut g, &self.params.layout, &input, Heads::Both, 0.0)?;
        let rc = state.rc.expect("comprehension head built");
        let p1 = g.value(rc.p1).data().to_vec();
        let p2 = g.value(rc.p2).data().to_vec();
        let span = select_span(&p1, &p2)?;
        let answer = extract_answer(passage, &span)?.to_string();
        let relevance = g.value(state.ir.expect("retrieval head built").pr).item();
        Ok(Reading { p1, p2, span, answer, relevance })
    }
}
