//! Question/answer examples and SQuAD-style JSON ingestion.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::retriever::{Corpus, IndexError, PassageId, PassageLine, PassageRecord};
use crate::text::{tokenize, TokenSeq};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{file}: at {at}: {msg}")]
    Json { file: String, at: String, msg: String },
    #[error(transparent)]
    Corpus(#[from] IndexError),
    #[error("example {id} refers to unknown passage {passage}")]
    UnknownPassage { id: String, passage: PassageId },
    #[error("example {id} has span ({start}, {end}) outside its passage of {len} tokens")]
    BadSpan { id: String, start: usize, end: usize, len: usize },
}

/// A question paired with one passage; `span` is the answer's inclusive
/// token range and is present exactly when the passage is relevant.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionExample {
    pub id: String,
    pub question: TokenSeq,
    pub passage: PassageId,
    pub relevant: bool,
    pub span: Option<(usize, usize)>,
    /// Every accepted answer string, for evaluation.
    pub answers: Vec<String>,
}

impl QuestionExample {
    pub fn positive(
        id: impl Into<String>,
        question: &str,
        passage: PassageId,
        span: (usize, usize),
        answers: Vec<String>,
    ) -> Self {
        QuestionExample {
            id: id.into(),
            question: tokenize(question),
            passage,
            relevant: true,
            span: Some(span),
            answers,
        }
    }

    /// The same question against a non-relevant passage.
    pub fn negative_of(&self, passage: PassageId) -> Self {
        QuestionExample { passage, relevant: false, span: None, ..self.clone() }
    }
}

/// On-disk form of an example (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleLine {
    pub id: String,
    pub question: String,
    pub passage: PassageId,
    pub start: usize,
    pub end: usize,
    pub answers: Vec<String>,
}

/// A corpus and the positive examples drawn from it.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub corpus: Corpus,
    pub examples: Vec<QuestionExample>,
    /// Answers dropped at ingestion because they did not align to token
    /// boundaries.
    pub dropped: usize,
}

impl Dataset {
    pub fn new(corpus: Corpus, examples: Vec<QuestionExample>) -> Result<Self, DataError> {
        for ex in &examples {
            let p = corpus
                .get(ex.passage)
                .ok_or_else(|| DataError::UnknownPassage { id: ex.id.clone(), passage: ex.passage })?;
            if let Some((s, e)) = ex.span {
                if s > e || e >= p.tokens.len() {
                    return Err(DataError::BadSpan { id: ex.id.clone(), start: s, end: e, len: p.tokens.len() });
                }
            }
        }
        Ok(Dataset { corpus, examples, dropped: 0 })
    }

    pub fn example_lines(&self) -> Vec<ExampleLine> {
        self.examples
            .iter()
            .filter_map(|ex| {
                let (start, end) = ex.span?;
                Some(ExampleLine {
                    id: ex.id.clone(),
                    question: ex.question.text().to_string(),
                    passage: ex.passage,
                    start,
                    end,
                    answers: ex.answers.clone(),
                })
            })
            .collect()
    }

    pub fn from_lines(passages: Vec<PassageLine>, examples: Vec<ExampleLine>) -> Result<Self, DataError> {
        let corpus = Corpus::from_lines(passages)?;
        let examples = examples
            .into_iter()
            .map(|l| QuestionExample::positive(l.id, &l.question, l.passage, (l.start, l.end), l.answers))
            .collect();
        Dataset::new(corpus, examples)
    }

    /// Writes `passages.jsonl`-style and `examples.jsonl`-style files.
    pub fn save(&self, passages: &Path, examples: &Path) -> Result<(), DataError> {
        write_jsonl(passages, &self.corpus.to_lines())?;
        write_jsonl(examples, &self.example_lines())
    }

    pub fn load(passages: &Path, examples: &Path) -> Result<Self, DataError> {
        Dataset::from_lines(read_jsonl(passages)?, read_jsonl(examples)?)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialize");
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = io::BufReader::new(fs::File::open(path).map_err(io_err(path))?);
    let mut items = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let item = serde_path_to_error::deserialize(de).map_err(|e| DataError::Json {
            file: path.display().to_string(),
            at: format!("line {} {}", n + 1, e.path()),
            msg: e.inner().to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    #[allow(dead_code)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

/// Byte range of `len` characters starting at character `start`.
fn char_span_to_bytes(text: &str, start: usize, len: usize) -> Option<(usize, usize)> {
    let mut bounds = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let begin = bounds.nth(start)?;
    let end = if len == 0 { begin } else { bounds.nth(len - 1)? };
    Some((begin, end))
}

/// Token span of an answer given by character offset, if it starts and
/// ends on token boundaries.
pub fn align_answer(passage: &TokenSeq, answer: &str, char_start: usize) -> Option<(usize, usize)> {
    let (b0, b1) = char_span_to_bytes(passage.text(), char_start, answer.chars().count())?;
    if passage.text().get(b0..b1)? != answer {
        return None;
    }
    let first = passage.token_starting_at(b0)?;
    let last = passage.token_ending_at(b1)?;
    (first <= last).then_some((first, last))
}

/// Parses a SQuAD-1.1-style document. Paragraphs become passages numbered
/// from 0 in document order; each question yields one positive example
/// aligned from its first answer. Questions whose first answer does not
/// align are dropped and counted.
pub fn parse_squad(json: &str, file: &str) -> Result<Dataset, DataError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let doc: SquadFile = serde_path_to_error::deserialize(de).map_err(|e| DataError::Json {
        file: file.to_string(),
        at: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    let mut passages = Vec::new();
    let mut examples = Vec::new();
    let mut dropped = 0;
    for (a, article) in doc.data.into_iter().enumerate() {
        for para in article.paragraphs {
            let id = passages.len() as PassageId;
            let record = PassageRecord::new(id, a as u64, para.context);
            for qa in para.qas {
                let aligned = qa
                    .answers
                    .first()
                    .and_then(|ans| align_answer(&record.tokens, &ans.text, ans.answer_start));
                match aligned {
                    Some(span) => {
                        let answers = qa.answers.iter().map(|a| a.text.clone()).collect();
                        examples.push(QuestionExample::positive(qa.id, &qa.question, id, span, answers));
                    }
                    None => {
                        log::debug!("dropping question {}: answer does not align to tokens", qa.id);
                        dropped += 1;
                    }
                }
            }
            passages.push(record);
        }
    }
    let mut ds = Dataset::new(Corpus::new(passages)?, examples)?;
    ds.dropped = dropped;
    Ok(ds)
}

pub fn load_squad(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_squad(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"version": "1.1", "data": [{"title": "T", "paragraphs": [
        {"context": "Denver won the game. It was cold.", "qas": [
            {"id": "q1", "question": "Who won?", "answers": [{"text": "Denver", "answer_start": 0}]},
            {"id": "q2", "question": "How was it?", "answers": [{"text": "cold", "answer_start": 28}]}]},
        {"context": "Résumé writing is hard.", "qas": [
            {"id": "q3", "question": "What is hard?", "answers": [{"text": "Résumé writing", "answer_start": 0}, {"text": "writing", "answer_start": 7}]},
            {"id": "q4", "question": "Split?", "answers": [{"text": "esum", "answer_start": 1}]}]}]}]}"#;

    #[test]
    fn ingest_fixture() {
        let ds = parse_squad(FIXTURE, "fixture").unwrap();
        assert_eq!(ds.corpus.len(), 2);
        assert_eq!(ds.examples.len(), 3);
        assert_eq!(ds.dropped, 1);
        assert_eq!(ds.examples[0].span, Some((0, 0)));
        assert_eq!(ds.examples[1].span, Some((7, 7)));
        // Character offsets count code points, not bytes.
        assert_eq!(ds.examples[2].span, Some((0, 1)));
        assert_eq!(ds.examples[2].answers, ["Résumé writing", "writing"]);
        assert!(ds.examples.iter().all(|e| e.relevant));
    }

    #[test]
    fn malformed_json_reports_a_path() {
        let bad = r#"{"data": [{"paragraphs": [{"context": "x", "qas": [{"id": "a", "question": "q", "answers": [{"text": "x"}]}]}]}]}"#;
        let err = parse_squad(bad, "f.json").unwrap_err().to_string();
        assert!(err.contains("data[0].paragraphs[0].qas[0].answers[0]"), "{err}");
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = parse_squad(FIXTURE, "fixture").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (p, e) = (dir.path().join("p.jsonl"), dir.path().join("e.jsonl"));
        ds.save(&p, &e).unwrap();
        let back = Dataset::load(&p, &e).unwrap();
        assert_eq!(back.examples, ds.examples);
        assert_eq!(back.corpus.to_lines(), ds.corpus.to_lines());
    }

    #[test]
    fn misaligned_answers() {
        let x = tokenize("the cat, sat");
        assert_eq!(align_answer(&x, "cat", 4), Some((1, 1)));
        assert_eq!(align_answer(&x, "cat,", 4), Some((1, 2)));
        assert_eq!(align_answer(&x, "ca", 4), None);
        assert_eq!(align_answer(&x, "dog", 4), None);
        assert_eq!(align_answer(&x, "cat", 99), None);
    }
}
