//! Relevance-weighted majority voting over per-passage answers.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::Span;
use crate::retriever::PassageId;

/// One passage's reading.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnswerCandidate {
    pub answer: String,
    #[serde(skip)]
    pub span: Span,
    pub passage: PassageId,
    /// `p1[start]·p2[end]`; reported but not used for voting.
    pub span_score: f64,
    pub relevance: f64,
}

/// Accumulated votes for one answer string.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Vote {
    pub answer: String,
    /// `ln Σ exp(pʳ/τ)` over the candidates with this answer.
    pub log_weight: f64,
    pub best_relevance: f64,
    pub count: usize,
}

impl Vote {
    /// `Σ exp(pʳ/τ)`; overflows to infinity for very small τ, which is why
    /// comparisons use `log_weight`.
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn rank_votes(a: &Vote, b: &Vote) -> Ordering {
    b.log_weight
        .total_cmp(&a.log_weight)
        .then(b.best_relevance.total_cmp(&a.best_relevance))
        .then_with(|| a.answer.cmp(&b.answer))
}

/// Tallies `(answer, pʳ)` pairs with weight `exp(pʳ/τ)` per raw answer
/// string. Returned best-first: highest total weight, then highest single
/// `pʳ`, then lexicographically smallest answer.
pub fn tally<'a, I>(candidates: I, tau: f64) -> Vec<Vote>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let mut table: BTreeMap<&str, Vote> = BTreeMap::new();
    for (answer, pr) in candidates {
        let lw = pr / tau;
        table
            .entry(answer)
            .and_modify(|v| {
                v.log_weight = log_add(v.log_weight, lw);
                v.best_relevance = v.best_relevance.max(pr);
                v.count += 1;
            })
            .or_insert(Vote { answer: answer.to_string(), log_weight: lw, best_relevance: pr, count: 1 });
    }
    let mut votes: Vec<Vote> = table.into_values().collect();
    votes.sort_by(rank_votes);
    votes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_wins() {
        let v = tally([("x", 0.01)], 0.05);
        assert_eq!(v[0].answer, "x");
    }

    #[test]
    fn two_weak_votes_lose_to_one_strong() {
        let v = tally([("a", 0.6), ("a", 0.5), ("b", 0.7)], 0.05);
        let a = v.iter().find(|v| v.answer == "a").unwrap();
        let expect = 12f64.exp() + 10f64.exp();
        assert!((a.weight() - expect).abs() / expect < 1e-12);
        assert_eq!(v[0].answer, "b");
        assert!((v[0].weight() - 14f64.exp()).abs() / 14f64.exp() < 1e-12);
    }

    #[test]
    fn ties_use_relevance_then_text() {
        let v = tally([("b", 0.5), ("a", 0.5)], 0.1);
        assert_eq!(v[0].answer, "a");
        // Equal totals, but "y" holds the single strongest vote.
        let vote = |answer: &str, best| Vote { answer: answer.into(), log_weight: 3.0, best_relevance: best, count: 1 };
        let mut v = [vote("x", 0.4), vote("y", 0.6)];
        v.sort_by(rank_votes);
        assert_eq!(v[0].answer, "y");
    }

    #[test]
    fn tiny_temperature_does_not_overflow() {
        let v = tally([("a", 0.3), ("a", 0.3), ("a", 0.3), ("b", 0.31)], 1e-6);
        assert_eq!(v[0].answer, "b");
        assert!(v[0].log_weight.is_finite());
    }
}
