mod common;

use proptest::prelude::*;
use retrieve_read::retriever::{Corpus, PassageRecord, TfIdfIndex, DEFAULT_BUCKETS};
use retrieve_read::text::tokenize;

use common::{random_corpus, random_queries, OracleTfIdf};

#[test]
fn top_k_matches_oracle_on_several_corpora() {
    for seed in 0..5 {
        let corpus = random_corpus(40 + 10 * seed as usize, 150, seed);
        let index = TfIdfIndex::build(&corpus).unwrap();
        let oracle = OracleTfIdf::new(&corpus);
        assert_eq!(oracle.collisions(DEFAULT_BUCKETS), 0);
        for q in random_queries(&corpus, 20, 150, seed + 100) {
            let got = index.top_k(&q, 10);
            let want = oracle.top_k(&q, 10);
            assert_eq!(got.ids(), want.iter().map(|w| w.0).collect::<Vec<_>>(), "query {q:?}");
            for (g, w) in got.entries.iter().zip(&want) {
                assert!((g.score - w.1).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn similar_passages_match_oracle() {
    let corpus = random_corpus(25, 60, 9);
    let index = TfIdfIndex::build(&corpus).unwrap();
    let oracle = OracleTfIdf::new(&corpus);
    for p in corpus.iter() {
        for m in [1, 5, 24, 30] {
            let got = index.similar_passages(p, m).unwrap().ids();
            assert_eq!(got, oracle.similar(&corpus, p.id, m), "passage {} m {m}", p.id);
        }
    }
}

#[test]
fn tiny_bucket_counts_collide_but_still_rank() {
    let corpus = random_corpus(30, 100, 3);
    let index = TfIdfIndex::build_with_buckets(&corpus, 64).unwrap();
    assert!(OracleTfIdf::new(&corpus).collisions(64) > 0);
    let q = random_queries(&corpus, 1, 100, 1).remove(0);
    let ranked = index.top_k(&q, 5);
    assert!(ranked.entries.windows(2).all(|w| w[0].score >= w[1].score));
}

#[test]
fn bigrams_break_bag_of_words_ties() {
    let corpus = Corpus::new(vec![
        PassageRecord::new(1, 0, "new york is big"),
        PassageRecord::new(2, 0, "york new is big"),
        PassageRecord::new(3, 0, "paris is old"),
        PassageRecord::new(4, 0, "rome is old"),
        PassageRecord::new(5, 0, "lima is far"),
    ])
    .unwrap();
    let index = TfIdfIndex::build(&corpus).unwrap();
    let ranked = index.top_k(tokenize("new york").tokens(), 2);
    assert_eq!(ranked.ids(), vec![1, 2]);
    assert!(ranked.entries[0].score > ranked.entries[1].score);
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "g", "h"]), 1..12)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_are_cosines(docs in prop::collection::vec(words(), 2..12), query in words()) {
        let corpus = Corpus::new(
            docs.iter().enumerate().map(|(i, d)| PassageRecord::new(i as u64, 0, d.join(" "))).collect(),
        ).unwrap();
        let index = TfIdfIndex::build(&corpus).unwrap();
        let ranked = index.top_k(&query, docs.len());
        let oracle = OracleTfIdf::new(&corpus).top_k(&query, docs.len());
        prop_assert_eq!(ranked.ids(), oracle.iter().map(|o| o.0).collect::<Vec<_>>());
        for s in &ranked.entries {
            prop_assert!(s.score > 0.0 && s.score <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn index_bytes_round_trip(docs in prop::collection::vec(words(), 1..8)) {
        let corpus = Corpus::new(
            docs.iter().enumerate().map(|(i, d)| PassageRecord::new(i as u64 * 2, 0, d.join(" "))).collect(),
        ).unwrap();
        let index = TfIdfIndex::build_with_buckets(&corpus, 1 << 10).unwrap();
        let bytes = index.to_bytes();
        prop_assert_eq!(TfIdfIndex::from_bytes(&bytes).unwrap().to_bytes(), bytes);
    }

    #[test]
    fn tokens_point_back_into_the_text(text in "[a-zA-Z0-9 ,.!?'()\u{e9}\u{2014}-]{0,60}") {
        let seq = tokenize(&text);
        prop_assert_eq!(seq.tokens().len(), seq.offsets().len());
        for (tok, &(s, e)) in seq.tokens().iter().zip(seq.offsets()) {
            prop_assert_eq!(&text[s..e], tok.as_str());
            prop_assert!(!tok.is_empty() && !tok.contains(char::is_whitespace));
        }
        prop_assert!(seq.offsets().windows(2).all(|w| w[0].1 <= w[1].0));
        let joined: String = text.split_whitespace().collect();
        prop_assert_eq!(seq.tokens().concat(), joined);
    }
}
