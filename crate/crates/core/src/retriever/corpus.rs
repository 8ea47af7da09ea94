use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::text::{tokenize, TokenSeq};

pub type PassageId = u64;

/// One retrievable unit of text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassageRecord {
    pub id: PassageId,
    pub article: u64,
    pub text: String,
    pub tokens: TokenSeq,
}

impl PassageRecord {
    pub fn new(id: PassageId, article: u64, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        PassageRecord { id, article, text, tokens }
    }
}

/// On-disk form of a passage (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassageLine {
    pub id: PassageId,
    pub article: u64,
    pub text: String,
}

/// Passages with unique ids, kept in insertion order.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    passages: Vec<PassageRecord>,
    by_id: HashMap<PassageId, usize>,
}

impl Corpus {
    pub fn new(passages: Vec<PassageRecord>) -> Result<Self, IndexError> {
        let mut by_id = HashMap::with_capacity(passages.len());
        for (i, p) in passages.iter().enumerate() {
            if p.tokens.is_empty() {
                return Err(IndexError::EmptyPassage(p.id));
            }
            if by_id.insert(p.id, i).is_some() {
                return Err(IndexError::DuplicateId(p.id));
            }
        }
        Ok(Corpus { passages, by_id })
    }

    pub fn from_lines(lines: Vec<PassageLine>) -> Result<Self, IndexError> {
        Corpus::new(
            lines
                .into_iter()
                .map(|l| PassageRecord::new(l.id, l.article, l.text))
                .collect(),
        )
    }

    /// Splits each article into passages at runs of one or more line breaks,
    /// numbering passages consecutively from `first_id`.
    pub fn from_articles<'a, I>(articles: I, first_id: PassageId) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (u64, &'a str)>,
    {
        let mut next = first_id;
        let mut passages = Vec::new();
        for (article, body) in articles {
            for para in body.split(['\n', '\r']).map(str::trim).filter(|p| !p.is_empty()) {
                passages.push(PassageRecord::new(next, article, para));
                next += 1;
            }
        }
        Corpus::new(passages)
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn get(&self, id: PassageId) -> Option<&PassageRecord> {
        self.by_id.get(&id).map(|&i| &self.passages[i])
    }

    pub fn passages(&self) -> &[PassageRecord] {
        &self.passages
    }

    pub fn iter(&self) -> impl Iterator<Item = &PassageRecord> {
        self.passages.iter()
    }

    pub fn to_lines(&self) -> Vec<PassageLine> {
        self.passages
            .iter()
            .map(|p| PassageLine { id: p.id, article: p.article, text: p.text.clone() })
            .collect()
    }
}
