//! Exact-matching initial ranker: hashed TF-IDF over unigrams and bigrams.

mod corpus;
pub mod hashing;
mod index;
mod persist;

use std::io;

use thiserror::Error;

pub use corpus::{Corpus, PassageId, PassageLine, PassageRecord};
pub use hashing::{bigram_key, bucket_of, feature_counts, ngram_features, DEFAULT_BUCKETS};
pub use index::{idf, rank_order, tf_weight, Posting, RankWarning, RankedList, Scored, TfIdfIndex};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("index i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed index: {0}")]
    Format(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("duplicate passage id {0}")]
    DuplicateId(PassageId),
    #[error("passage {0} has no tokens")]
    EmptyPassage(PassageId),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("passage {0} is not in the index")]
    UnknownPassage(PassageId),
}
