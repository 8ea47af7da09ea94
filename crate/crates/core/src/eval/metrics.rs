//! Answer-string and ranking metrics.

use std::collections::HashMap;

use super::EvalError;
use crate::retriever::PassageId;

/// Lowercases, drops ASCII punctuation and the articles `a`, `an`, `the`,
/// and collapses whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 if the normalized prediction equals any normalized truth.
pub fn exact_match<S: AsRef<str>>(prediction: &str, truths: &[S]) -> f64 {
    let p = normalize_answer(prediction);
    if truths.iter().any(|t| normalize_answer(t.as_ref()) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_single(prediction: &str, truth: &str) -> f64 {
    let p = normalize_answer(prediction);
    let t = normalize_answer(truth);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let tt: Vec<&str> = t.split_whitespace().collect();
    if pt.is_empty() || tt.is_empty() {
        return if pt.is_empty() && tt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in &tt {
        *counts.entry(w).or_insert(0) += 1;
    }
    let mut same = 0usize;
    for w in &pt {
        if let Some(c) = counts.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pt.len() as f64;
    let recall = same as f64 / tt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-words F1 against the best-matching truth.
pub fn f1<S: AsRef<str>>(prediction: &str, truths: &[S]) -> f64 {
    truths.iter().map(|t| f1_single(prediction, t.as_ref())).fold(0.0, f64::max)
}

/// 1-based rank of the first relevant passage within the top `k`.
fn first_relevant(ranking: &[PassageId], relevant: &[PassageId], k: usize) -> Option<usize> {
    ranking.iter().take(k).position(|id| relevant.contains(id)).map(|p| p + 1)
}

fn check(rankings: &[Vec<PassageId>], relevant: &[Vec<PassageId>], k: usize) -> Result<(), EvalError> {
    if k < 1 {
        return Err(EvalError::BadK(k));
    }
    if rankings.len() != relevant.len() {
        return Err(EvalError::Mismatch { rankings: rankings.len(), labels: relevant.len() });
    }
    Ok(())
}

/// Fraction of queries with a relevant passage in the top `k`.
pub fn success_at_k(rankings: &[Vec<PassageId>], relevant: &[Vec<PassageId>], k: usize) -> Result<f64, EvalError> {
    check(rankings, relevant, k)?;
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let hits = rankings
        .iter()
        .zip(relevant)
        .filter(|(r, rel)| first_relevant(r, rel, k).is_some())
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Mean reciprocal rank of the first relevant passage, counting 0 when none
/// is in the top `k`.
pub fn mrr_at_k(rankings: &[Vec<PassageId>], relevant: &[Vec<PassageId>], k: usize) -> Result<f64, EvalError> {
    check(rankings, relevant, k)?;
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = rankings
        .iter()
        .zip(relevant)
        .map(|(r, rel)| first_relevant(r, rel, k).map_or(0.0, |rank| 1.0 / rank as f64))
        .sum();
    Ok(total / rankings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("  The  Denver, Broncos! "), "denver broncos");
        assert_eq!(normalize_answer("an apple a day"), "apple day");
        assert_eq!(normalize_answer("Theatre"), "theatre");
        assert_eq!(normalize_answer("東京"), "東京");
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("Denver Broncos", &["Denver Broncos"]), 1.0);
        assert_eq!(exact_match("the cat", &["cat"]), 1.0);
        assert_eq!(exact_match("dog", &["cat"]), 0.0);
        assert_eq!(exact_match("dog", &["cat", "Dog."]), 1.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1("big red dog", &["big red dog"]), 1.0);
        assert!((f1("x y", &["y z"]) - 0.5).abs() < 1e-12);
        assert_eq!(f1("x", &["y"]), 0.0);
        assert_eq!(f1("the", &["a"]), 1.0);
        assert_eq!(f1("the", &["cat"]), 0.0);
        // "a" is an article, so only "b" survives on the prediction side.
        assert!((f1("a b", &["b c"]) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_metrics() {
        let all_first = vec![vec![1, 2], vec![3, 4]];
        let rel = vec![vec![1], vec![3]];
        assert_eq!(success_at_k(&all_first, &rel, 1).unwrap(), 1.0);
        assert_eq!(mrr_at_k(&all_first, &rel, 5).unwrap(), 1.0);

        let third = vec![vec![9, 8, 7, 6]];
        let rel = vec![vec![7]];
        assert_eq!(success_at_k(&third, &rel, 1).unwrap(), 0.0);
        assert!((mrr_at_k(&third, &rel, 5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(success_at_k(&third, &rel, 2).unwrap(), 0.0);
        assert_eq!(mrr_at_k(&third, &rel, 2).unwrap(), 0.0);
        assert!(matches!(success_at_k(&third, &rel, 0), Err(EvalError::BadK(0))));
    }
}
