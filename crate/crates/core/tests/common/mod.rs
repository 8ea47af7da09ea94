#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrieve_read::retriever::{bucket_of, bigram_key, Corpus, PassageId, PassageRecord};
use retrieve_read::text::tokenize;

/// An n-gram feature kept as strings, without hashing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    Uni(String),
    Bi(String, String),
}

impl Feature {
    pub fn bucket(&self, buckets: u32) -> u32 {
        match self {
            Feature::Uni(a) => bucket_of(a, buckets),
            Feature::Bi(a, b) => bucket_of(&bigram_key(a, b), buckets),
        }
    }
}

pub fn features(tokens: &[String]) -> BTreeMap<Feature, u32> {
    let mut out = BTreeMap::new();
    for t in tokens {
        *out.entry(Feature::Uni(t.clone())).or_insert(0) += 1;
    }
    for w in tokens.windows(2) {
        *out.entry(Feature::Bi(w[0].clone(), w[1].clone())).or_insert(0) += 1;
    }
    out
}

/// Explicit-vector TF-IDF cosine: `w = ln(1+tf)·idf`,
/// `idf = max(0, ln((N − df + 0.5)/(df + 0.5)))`.
pub struct OracleTfIdf {
    n: usize,
    df: HashMap<Feature, u32>,
    docs: Vec<(PassageId, HashMap<Feature, f64>)>,
}

impl OracleTfIdf {
    pub fn new(corpus: &Corpus) -> Self {
        let n = corpus.len();
        let mut df: HashMap<Feature, u32> = HashMap::new();
        let counts: Vec<_> = corpus.iter().map(|p| (p.id, features(p.tokens.tokens()))).collect();
        for (_, c) in &counts {
            for f in c.keys() {
                *df.entry(f.clone()).or_insert(0) += 1;
            }
        }
        let mut oracle = OracleTfIdf { n, df, docs: Vec::new() };
        oracle.docs = counts.into_iter().map(|(id, c)| (id, oracle.weigh(&c))).collect();
        oracle
    }

    fn idf(&self, f: &Feature) -> f64 {
        let df = *self.df.get(f).unwrap_or(&0) as f64;
        let n = self.n as f64;
        ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
    }

    fn weigh(&self, counts: &BTreeMap<Feature, u32>) -> HashMap<Feature, f64> {
        counts
            .iter()
            .filter(|(f, _)| self.df.contains_key(*f))
            .map(|(f, &tf)| (f.clone(), (tf as f64).ln_1p() * self.idf(f)))
            .collect()
    }

    /// Cosine of the query against every passage, in corpus order.
    pub fn scores(&self, query: &[String]) -> Vec<(PassageId, f64)> {
        let q = self.weigh(&features(query));
        let qn = q.values().map(|w| w * w).sum::<f64>().sqrt();
        self.docs
            .iter()
            .map(|(id, d)| {
                let dn = d.values().map(|w| w * w).sum::<f64>().sqrt();
                let dot: f64 = q.iter().map(|(f, w)| w * d.get(f).unwrap_or(&0.0)).sum();
                let s = if qn > 0.0 && dn > 0.0 { dot / (qn * dn) } else { 0.0 };
                (*id, s)
            })
            .collect()
    }

    fn sorted(mut v: Vec<(PassageId, f64)>) -> Vec<(PassageId, f64)> {
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        v
    }

    /// Positive-score passages, best first, ties by id.
    pub fn top_k(&self, query: &[String], k: usize) -> Vec<(PassageId, f64)> {
        let mut v = Self::sorted(self.scores(query).into_iter().filter(|s| s.1 > 0.0).collect());
        v.truncate(k);
        v
    }

    /// The `m` passages most similar to `id`, padded with zero-score
    /// passages in id order.
    pub fn similar(&self, corpus: &Corpus, id: PassageId, m: usize) -> Vec<PassageId> {
        let p = corpus.get(id).unwrap();
        let all: Vec<_> = self.scores(p.tokens.tokens()).into_iter().filter(|s| s.0 != id).collect();
        let mut pos = Self::sorted(all.iter().copied().filter(|s| s.1 > 0.0).collect());
        let mut zero: Vec<_> = all.into_iter().filter(|s| s.1 <= 0.0).collect();
        zero.sort_by_key(|s| s.0);
        pos.extend(zero);
        pos.into_iter().take(m).map(|s| s.0).collect()
    }

    /// Pairs of distinct features of the corpus sharing a bucket.
    pub fn collisions(&self, buckets: u32) -> usize {
        let mut seen: HashMap<u32, usize> = HashMap::new();
        for f in self.df.keys() {
            *seen.entry(f.bucket(buckets)).or_insert(0) += 1;
        }
        seen.values().map(|&c| c * (c - 1) / 2).sum()
    }

    pub fn vocabulary(&self) -> HashSet<Feature> {
        self.df.keys().cloned().collect()
    }
}

/// `n` passages of 15–40 words drawn with a skew towards frequent words.
pub fn random_corpus(n: usize, vocab: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    let passages = (0..n)
        .map(|i| {
            let len = rng.gen_range(15..=40);
            let text: Vec<&str> = (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    words[((r * r) * vocab as f64) as usize].as_str()
                })
                .collect();
            PassageRecord::new(i as u64 * 3 + 7, 0, text.join(" "))
        })
        .collect();
    Corpus::new(passages).unwrap()
}

/// Queries built from a passage fragment plus a few random words.
pub fn random_queries(corpus: &Corpus, count: usize, vocab: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = &corpus.passages()[rng.gen_range(0..corpus.len())];
            let toks = p.tokens.tokens();
            let start = rng.gen_range(0..toks.len());
            let end = (start + rng.gen_range(1..6)).min(toks.len());
            let mut q: Vec<String> = toks[start..end].to_vec();
            for _ in 0..rng.gen_range(0..3) {
                q.push(format!("w{}", rng.gen_range(0..vocab)));
            }
            tokenize(&q.join(" ")).tokens().to_vec()
        })
        .collect()
}
