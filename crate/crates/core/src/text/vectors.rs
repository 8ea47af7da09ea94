//! Fixed pretrained word vectors in the plain-text `.vec` layout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use super::TokenSeq;
use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("reading vectors: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("header declares {expected} vectors, file has {found}")]
    Count { expected: usize, found: usize },
}

/// What a lookup returns for a word not in the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovPolicy {
    Zero,
}

/// An immutable word → vector map with a fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorTable {
    dim: usize,
    index: HashMap<String, usize>,
    words: Vec<String>,
    data: Vec<f64>,
    oov: OovPolicy,
}

impl VectorTable {
    /// Builds a table from `(word, vector)` pairs; the first occurrence of a
    /// word wins.
    pub fn from_pairs<I, S>(dim: usize, pairs: I) -> Result<Self, VectorError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = VectorTable {
            dim,
            index: HashMap::new(),
            words: Vec::new(),
            data: Vec::new(),
            oov: OovPolicy::Zero,
        };
        for (n, (word, vec)) in pairs.into_iter().enumerate() {
            if vec.len() != dim {
                return Err(VectorError::Dimension { line: n + 1, expected: dim, found: vec.len() });
            }
            table.push(word.into(), &vec);
        }
        Ok(table)
    }

    fn push(&mut self, word: String, vec: &[f64]) {
        if self.index.contains_key(&word) {
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vec);
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    /// Parses `COUNT DIM` followed by `word v1 … vDIM` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self, VectorError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| VectorError::Malformed { line: 1, msg: "missing header".into() })??;
        let fields: Vec<&str> = header.split(' ').collect();
        let parse_usize = |s: &str| s.trim().parse::<usize>().ok();
        let (count, dim) = match fields.as_slice() {
            [c, d] => match (parse_usize(c), parse_usize(d)) {
                (Some(c), Some(d)) if d > 0 => (c, d),
                _ => return Err(VectorError::Malformed { line: 1, msg: format!("bad header {header:?}") }),
            },
            _ => return Err(VectorError::Malformed { line: 1, msg: format!("bad header {header:?}") }),
        };

        let mut table = VectorTable {
            dim,
            index: HashMap::with_capacity(count),
            words: Vec::with_capacity(count),
            data: Vec::with_capacity(count * dim),
            oov: OovPolicy::Zero,
        };
        let mut found = 0;
        let mut values = Vec::with_capacity(dim);
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let word = parts.next().unwrap_or_default();
            if word.is_empty() {
                return Err(VectorError::Malformed { line: line_no, msg: "empty word".into() });
            }
            values.clear();
            for p in parts.filter(|p| !p.is_empty()) {
                let v: f64 = p.parse().map_err(|_| VectorError::Malformed {
                    line: line_no,
                    msg: format!("not a number: {p:?}"),
                })?;
                values.push(v);
            }
            if values.len() != dim {
                return Err(VectorError::Dimension { line: line_no, expected: dim, found: values.len() });
            }
            table.push(word.to_string(), &values);
            found += 1;
        }
        if found != count {
            return Err(VectorError::Count { expected: count, found });
        }
        Ok(table)
    }

    /// Writes the table in the same text layout [`VectorTable::read`] accepts.
    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.words.len(), self.dim)?;
        for (i, w) in self.words.iter().enumerate() {
            write!(out, "{w}")?;
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Case-sensitive lookup. Absent words map to the zero vector.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        match self.index.get(word) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].to_vec(),
            None => vec![0.0; self.dim],
        }
    }

    /// `dim × T` matrix whose column `t` is the vector of token `t`.
    pub fn embed(&self, seq: &TokenSeq) -> Tensor {
        let cols: Vec<Vec<f64>> = seq.tokens().iter().map(|t| self.lookup(t)).collect();
        Tensor::from_columns(self.dim, &cols)
    }
}

/// Free-function form of [`VectorTable::embed`].
pub fn embed(seq: &TokenSeq, table: &VectorTable) -> Tensor {
    table.embed(seq)
}
