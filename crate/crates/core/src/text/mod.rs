//! Tokenization and fixed word vectors.

mod tokenize;
mod vectors;

pub use tokenize::{is_punctuation, tokenize, TokenSeq};
pub use vectors::{embed, OovPolicy, VectorError, VectorTable};
