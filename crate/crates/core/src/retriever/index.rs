//! Hashed unigram+bigram TF-IDF index with cosine ranking.
//!
//! Weights: `w(b, p) = ln(1 + tf) · idf(b)` with
//! `idf(b) = max(0, ln((N − df + 0.5) / (df + 0.5)))`. Queries are weighted
//! the same way and ranked by cosine similarity.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use super::hashing::feature_counts;
use super::{Corpus, IndexError, PassageId, PassageRecord, DEFAULT_BUCKETS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Posting {
    /// Internal passage index.
    pub doc: u32,
    pub tf: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scored {
    pub id: PassageId,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RankWarning {
    /// The query produced no tokens.
    EmptyQuery,
}

/// Passages ordered by descending score, ties by ascending id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RankedList {
    pub entries: Vec<Scored>,
    pub warning: Option<RankWarning>,
}

impl RankedList {
    pub fn ids(&self) -> Vec<PassageId> {
        self.entries.iter().map(|s| s.id).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Orders by descending score, then ascending id.
pub fn rank_order(a: &Scored, b: &Scored) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.id.cmp(&b.id))
}

pub fn idf(n_docs: u32, df: u32) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

#[inline]
pub fn tf_weight(tf: u32) -> f64 {
    (tf as f64).ln_1p()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TfIdfIndex {
    pub(crate) buckets: u32,
    pub(crate) ids: Vec<PassageId>,
    pub(crate) by_id: HashMap<PassageId, u32>,
    pub(crate) postings: HashMap<u32, Vec<Posting>>,
    pub(crate) norms: Vec<f32>,
}

impl TfIdfIndex {
    pub fn build(corpus: &Corpus) -> Result<Self, IndexError> {
        Self::build_with_buckets(corpus, DEFAULT_BUCKETS)
    }

    /// Feature extraction runs in parallel; postings are merged in passage
    /// order so the result does not depend on thread scheduling.
    pub fn build_with_buckets(corpus: &Corpus, buckets: u32) -> Result<Self, IndexError> {
        if corpus.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        if buckets == 0 {
            return Err(IndexError::Format("bucket count must be positive".into()));
        }
        let counts: Vec<BTreeMap<u32, u32>> = corpus
            .passages()
            .par_iter()
            .map(|p| feature_counts(p.tokens.tokens(), buckets))
            .collect();

        let mut ids = Vec::with_capacity(corpus.len());
        let mut by_id = HashMap::with_capacity(corpus.len());
        let mut postings: HashMap<u32, Vec<Posting>> = HashMap::new();
        for (doc, (p, c)) in corpus.passages().iter().zip(&counts).enumerate() {
            let doc = doc as u32;
            if by_id.insert(p.id, doc).is_some() {
                return Err(IndexError::DuplicateId(p.id));
            }
            ids.push(p.id);
            for (&b, &tf) in c {
                postings.entry(b).or_default().push(Posting { doc, tf });
            }
        }
        let n_docs = ids.len() as u32;
        let norms = counts
            .par_iter()
            .map(|c| {
                c.iter()
                    .map(|(b, &tf)| {
                        let w = tf_weight(tf) * idf(n_docs, postings[b].len() as u32);
                        w * w
                    })
                    .sum::<f64>()
                    .sqrt() as f32
            })
            .collect();
        Ok(TfIdfIndex { buckets, ids, by_id, postings, norms })
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
    }

    pub fn n_docs(&self) -> u32 {
        self.ids.len() as u32
    }

    pub fn passage_ids(&self) -> &[PassageId] {
        &self.ids
    }

    pub fn contains(&self, id: PassageId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn df(&self, bucket: u32) -> u32 {
        self.postings.get(&bucket).map_or(0, |p| p.len() as u32)
    }

    pub fn idf(&self, bucket: u32) -> f64 {
        idf(self.n_docs(), self.df(bucket))
    }

    /// Euclidean norm of a passage's TF-IDF vector (stored at 32-bit).
    pub fn norm(&self, id: PassageId) -> Option<f32> {
        self.by_id.get(&id).map(|&d| self.norms[d as usize])
    }

    pub fn postings(&self, bucket: u32) -> &[Posting] {
        self.postings.get(&bucket).map_or(&[], Vec::as_slice)
    }

    /// Cosine of the query against every passage, by internal index.
    /// `passage_scale` multiplies every passage weight; cosine is invariant
    /// to it up to rounding.
    pub(crate) fn score_all<S: AsRef<str>>(&self, query: &[S], passage_scale: f64) -> Vec<f64> {
        let mut scores = vec![0.0; self.ids.len()];
        let counts = feature_counts(query, self.buckets);
        let n = self.n_docs();
        let mut q_norm2 = 0.0;
        for (b, &tf) in &counts {
            let Some(list) = self.postings.get(b) else { continue };
            let idf_b = idf(n, list.len() as u32);
            let qw = tf_weight(tf) * idf_b;
            if qw == 0.0 {
                continue;
            }
            q_norm2 += qw * qw;
            for post in list {
                scores[post.doc as usize] += qw * tf_weight(post.tf) * idf_b * passage_scale;
            }
        }
        let q_norm = q_norm2.sqrt();
        for (s, &pn) in scores.iter_mut().zip(&self.norms) {
            let denom = q_norm * pn as f64 * passage_scale;
            *s = if *s > 0.0 && denom > 0.0 { (*s / denom).min(1.0) } else { 0.0 };
        }
        scores
    }

    fn ranked(&self, scores: &[f64], keep: impl Fn(usize) -> bool, k: usize) -> Vec<Scored> {
        let mut hits: Vec<Scored> = scores
            .iter()
            .enumerate()
            .filter(|&(d, &s)| s > 0.0 && keep(d))
            .map(|(d, &s)| Scored { id: self.ids[d], score: s })
            .collect();
        hits.sort_by(rank_order);
        hits.truncate(k);
        hits
    }

    /// The `k` passages with the highest positive cosine to `query`.
    pub fn top_k<S: AsRef<str>>(&self, query: &[S], k: usize) -> RankedList {
        if query.is_empty() {
            return RankedList { entries: Vec::new(), warning: Some(RankWarning::EmptyQuery) };
        }
        let scores = self.score_all(query, 1.0);
        RankedList { entries: self.ranked(&scores, |_| true, k.max(1)), warning: None }
    }

    /// Cosine scores for a given candidate set, ranked, zero scores kept.
    pub fn rescore<S: AsRef<str>>(&self, query: &[S], candidates: &[PassageId]) -> Vec<Scored> {
        let scores = if query.is_empty() { vec![0.0; self.ids.len()] } else { self.score_all(query, 1.0) };
        let mut out: Vec<Scored> = candidates
            .iter()
            .filter_map(|id| self.by_id.get(id).map(|&d| Scored { id: *id, score: scores[d as usize] }))
            .collect();
        out.sort_by(rank_order);
        out
    }

    /// The `m` passages most similar to `passage`, excluding itself.
    ///
    /// Ranked by cosine; when fewer than `m` passages have a positive score,
    /// the list is filled with zero-score passages in ascending id order.
    pub fn similar_passages(&self, passage: &PassageRecord, m: usize) -> Result<RankedList, IndexError> {
        let Some(&self_doc) = self.by_id.get(&passage.id) else {
            return Err(IndexError::UnknownPassage(passage.id));
        };
        let scores = self.score_all(passage.tokens.tokens(), 1.0);
        let mut entries = self.ranked(&scores, |d| d != self_doc as usize, m);
        if entries.len() < m {
            let mut rest: Vec<Scored> = scores
                .iter()
                .enumerate()
                .filter(|&(d, &s)| s <= 0.0 && d != self_doc as usize)
                .map(|(d, _)| Scored { id: self.ids[d], score: 0.0 })
                .collect();
            rest.sort_by_key(|s| s.id);
            entries.extend(rest.into_iter().take(m - entries.len()));
        }
        Ok(RankedList { entries, warning: None })
    }
}
