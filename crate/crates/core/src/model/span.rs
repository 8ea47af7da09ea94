use super::ModelError;
use crate::text::TokenSeq;

/// An answer span `[start, end]` (inclusive token indices) and its score
/// `p1[start] · p2[end]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

/// The span maximising `p1[s]·p2[e]` subject to `s ≤ e`, in linear time.
/// Among equal scores the smallest `s` wins, then the smallest `e`.
pub fn select_span(p1: &[f64], p2: &[f64]) -> Result<Span, ModelError> {
    let n = p1.len();
    if n == 0 {
        return Err(ModelError::EmptyInput("span distribution"));
    }
    if p2.len() != n {
        return Err(ModelError::BadSpan { start: n, end: p2.len(), len: n });
    }
    // Multiplication by a non-negative factor is monotone even in floating
    // point, so for a fixed start the best end is a suffix maximum of p2.
    let mut suffix = vec![0.0; n];
    let mut best = f64::NEG_INFINITY;
    for t in (0..n).rev() {
        best = best.max(p2[t]);
        suffix[t] = best;
    }
    let top = (0..n).map(|s| p1[s] * suffix[s]).fold(f64::NEG_INFINITY, f64::max);
    let start = (0..n).find(|&s| p1[s] * suffix[s] == top).unwrap_or(0);
    let end = (start..n).find(|&e| p1[start] * p2[e] == top).unwrap_or(start);
    Ok(Span { start, end, score: p1[start] * p2[end] })
}

/// The exact passage substring covered by a span.
pub fn extract_answer<'a>(passage: &'a TokenSeq, span: &Span) -> Result<&'a str, ModelError> {
    passage.span_text(span.start, span.end).ok_or(ModelError::BadSpan {
        start: span.start,
        end: span.end,
        len: passage.len(),
    })
}
