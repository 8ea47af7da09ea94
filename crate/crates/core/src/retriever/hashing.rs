//! Unigram + bigram feature hashing.

use std::collections::BTreeMap;

/// Joins the two halves of a bigram key. Tokens never contain it because
/// the tokenizer splits on whitespace and the hashing input is the raw
/// token bytes; it is treated as reserved.
pub const BIGRAM_SEPARATOR: char = '\u{1F}';

/// Default number of hash buckets (2^24).
pub const DEFAULT_BUCKETS: u32 = 1 << 24;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// The bucket of an arbitrary feature key.
pub fn bucket_of(key: &str, buckets: u32) -> u32 {
    (fnv1a64(key.as_bytes()) % buckets as u64) as u32
}

/// Key string for the bigram `a b`.
pub fn bigram_key(a: &str, b: &str) -> String {
    let mut key = String::with_capacity(a.len() + b.len() + 1);
    key.push_str(a);
    key.push(BIGRAM_SEPARATOR);
    key.push_str(b);
    key
}

/// Hashed ids of every unigram followed by every adjacent bigram, with
/// repetition (a multiset in a `Vec`).
pub fn ngram_features<S: AsRef<str>>(tokens: &[S], buckets: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(tokens.len() * 2);
    out.extend(tokens.iter().map(|t| bucket_of(t.as_ref(), buckets)));
    out.extend(
        tokens
            .windows(2)
            .map(|w| bucket_of(&bigram_key(w[0].as_ref(), w[1].as_ref()), buckets)),
    );
    out
}

/// Bucket → count for a token sequence.
pub fn feature_counts<S: AsRef<str>>(tokens: &[S], buckets: u32) -> BTreeMap<u32, u32> {
    let mut counts = BTreeMap::new();
    for f in ngram_features(tokens, buckets) {
        *counts.entry(f).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn unigrams_then_bigrams() {
        let f = ngram_features(&["a", "b"], DEFAULT_BUCKETS);
        assert_eq!(f.len(), 3);
        assert_eq!(f[0], bucket_of("a", DEFAULT_BUCKETS));
        assert_eq!(f[1], bucket_of("b", DEFAULT_BUCKETS));
        assert_eq!(f[2], bucket_of("a\u{1F}b", DEFAULT_BUCKETS));
        assert_eq!(ngram_features(&["a"], DEFAULT_BUCKETS).len(), 1);
        assert!(ngram_features::<&str>(&[], DEFAULT_BUCKETS).is_empty());
    }

    #[test]
    fn colliding_features_share_a_bucket_count() {
        // Brute-force two distinct short tokens that collide at 2^10 buckets.
        let buckets = 1 << 10;
        let words: Vec<String> = (0..2000).map(|i| format!("w{i}")).collect();
        let mut seen = std::collections::HashMap::new();
        let (a, b) = words
            .iter()
            .find_map(|w| {
                let bk = bucket_of(w, buckets);
                seen.insert(bk, w.clone()).map(|prev| (prev, w.clone()))
            })
            .expect("a collision exists among 2000 keys in 1024 buckets");
        assert_ne!(a, b);
        let counts = feature_counts(&[a.as_str(), b.as_str()], buckets);
        assert_eq!(counts.get(&bucket_of(&a, buckets)), Some(&2));
    }
}
