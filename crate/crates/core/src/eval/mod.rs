//! Telescoping retrieval, answer voting, metrics and evaluation reports.

mod chain;
mod metrics;
mod voting;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelError, Reader};
use crate::retriever::{rank_order, Corpus, PassageId, RankedList, Scored, TfIdfIndex};
use crate::text::TokenSeq;
use crate::training::QuestionExample;

pub use chain::{RankerChain, RankerKind, Stage};
pub use metrics::{exact_match, f1, mrr_at_k, normalize_answer, success_at_k};
pub use voting::{tally, AnswerCandidate, Vote};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid ranker chain: {0}")]
    Chain(String),
    #[error("k must be at least 1 (got {0})")]
    BadK(usize),
    #[error("{rankings} rankings but {labels} relevance labels")]
    Mismatch { rankings: usize, labels: usize },
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("chain has a neural stage but no model was loaded")]
    NeedsModel,
    #[error("passage {0} is not in the corpus")]
    UnknownPassage(PassageId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Everything needed to answer questions over a corpus.
#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a TfIdfIndex,
    pub reader: Option<Reader<'a>>,
}

/// The outcome of answering one question.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MrsAnswer {
    /// `None` when no passage was retrieved.
    pub answer: Option<String>,
    pub ranked: RankedList,
    pub candidates: Vec<AnswerCandidate>,
    pub votes: Vec<Vote>,
}

impl<'a> Pipeline<'a> {
    fn reader(&self) -> Result<&Reader<'a>, EvalError> {
        self.reader.as_ref().ok_or(EvalError::NeedsModel)
    }

    fn passage(&self, id: PassageId) -> Result<&'a TokenSeq, EvalError> {
        Ok(&self.corpus.get(id).ok_or(EvalError::UnknownPassage(id))?.tokens)
    }

    /// Runs each stage of `chain` on the survivors of the previous one.
    ///
    /// The first TF-IDF cut keeps passages with a positive score, unless the
    /// whole corpus fits within the cut, in which case every passage is
    /// kept. Neural stages order by `pʳ`; ties go to the smaller id.
    pub fn telescope(&self, question: &TokenSeq, chain: &RankerChain) -> Result<RankedList, EvalError> {
        if self.index.n_docs() == 0 {
            return Err(EvalError::EmptyCorpus);
        }
        let query = question.tokens();
        let mut stages = chain.stages().iter();
        let first = stages.next().expect("chains are non-empty");
        let mut current = if self.index.n_docs() as usize <= first.cut {
            RankedList { entries: self.index.rescore(query, self.index.passage_ids()), warning: None }
        } else {
            self.index.top_k(query, first.cut)
        };
        for stage in stages {
            let ids = current.ids();
            let mut entries = match stage.kind {
                RankerKind::Tfidf => self.index.rescore(query, &ids),
                RankerKind::Neural => {
                    let reader = self.reader()?;
                    let mut scored = ids
                        .par_iter()
                        .map(|&id| Ok(Scored { id, score: reader.relevance(question, self.passage(id)?)? }))
                        .collect::<Result<Vec<_>, EvalError>>()?;
                    scored.sort_by(rank_order);
                    scored
                }
            };
            entries.truncate(stage.cut);
            current.entries = entries;
        }
        Ok(current)
    }

    /// Reads the top `k` passages of the chain and votes on their answers
    /// with weights `exp(pʳ/τ)`.
    pub fn answer_question(&self, question: &TokenSeq, chain: &RankerChain, k: usize, tau: f64) -> Result<MrsAnswer, EvalError> {
        if k < 1 {
            return Err(EvalError::BadK(k));
        }
        let reader = self.reader()?;
        let ranked = self.telescope(question, chain)?;
        let candidates = ranked
            .entries
            .iter()
            .take(k)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|s| {
                let r = reader.read(question, self.passage(s.id)?)?;
                Ok(AnswerCandidate {
                    answer: r.answer,
                    span: r.span,
                    passage: s.id,
                    span_score: r.span.score,
                    relevance: r.relevance,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?;
        let votes = tally(candidates.iter().map(|c| (c.answer.as_str(), c.relevance)), tau);
        let answer = votes.first().map(|v| v.answer.clone());
        Ok(MrsAnswer { answer, ranked, candidates, votes })
    }
}

/// One evaluated question.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRecord {
    pub id: String,
    pub retrieved: Vec<PassageId>,
    pub answer: Option<String>,
    pub em: Option<f64>,
    pub f1: Option<f64>,
}

/// Metrics over all questions; fields that a given evaluation does not
/// measure are `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub queries: usize,
    pub success_at_1: Option<f64>,
    pub success_at_5: Option<f64>,
    pub mrr_at_5: Option<f64>,
    pub em: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: Vec<QueryRecord>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    fn build(queries: Vec<QueryRecord>, relevant: &[Vec<PassageId>], ranking: bool) -> Result<Self, EvalError> {
        let mean = |f: fn(&QueryRecord) -> Option<f64>| -> Option<f64> {
            let vals: Vec<f64> = queries.iter().filter_map(f).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let mut aggregate = Aggregate { queries: queries.len(), em: mean(|q| q.em), f1: mean(|q| q.f1), ..Aggregate::default() };
        if ranking {
            let rankings: Vec<Vec<PassageId>> = queries.iter().map(|q| q.retrieved.clone()).collect();
            aggregate.success_at_1 = Some(success_at_k(&rankings, relevant, 1)?);
            aggregate.success_at_5 = Some(success_at_k(&rankings, relevant, 5)?);
            aggregate.mrr_at_5 = Some(mrr_at_k(&rankings, relevant, 5)?);
        }
        Ok(EvalReport { queries, aggregate })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

fn positives(examples: &[QuestionExample]) -> Vec<&QuestionExample> {
    examples.iter().filter(|e| e.relevant).collect()
}

/// Passage ranking quality of `chain` over the positive examples.
pub fn evaluate_ir(p: &Pipeline<'_>, examples: &[QuestionExample], chain: &RankerChain) -> Result<EvalReport, EvalError> {
    let qs = positives(examples);
    let queries = qs
        .par_iter()
        .map(|ex| {
            Ok(QueryRecord {
                id: ex.id.clone(),
                retrieved: p.telescope(&ex.question, chain)?.ids(),
                answer: None,
                em: None,
                f1: None,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let relevant: Vec<Vec<PassageId>> = qs.iter().map(|e| vec![e.passage]).collect();
    EvalReport::build(queries, &relevant, true)
}

/// Reading comprehension given the gold passage.
pub fn evaluate_rc(p: &Pipeline<'_>, examples: &[QuestionExample]) -> Result<EvalReport, EvalError> {
    let reader = p.reader()?;
    let queries = positives(examples)
        .par_iter()
        .map(|ex| {
            let r = reader.read(&ex.question, p.passage(ex.passage)?)?;
            Ok(QueryRecord {
                id: ex.id.clone(),
                retrieved: vec![ex.passage],
                em: Some(exact_match(&r.answer, &ex.answers)),
                f1: Some(f1(&r.answer, &ex.answers)),
                answer: Some(r.answer),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    EvalReport::build(queries, &[], false)
}

/// End-to-end question answering over the whole corpus.
pub fn evaluate_mrs(
    p: &Pipeline<'_>,
    examples: &[QuestionExample],
    chain: &RankerChain,
    k: usize,
    tau: f64,
) -> Result<EvalReport, EvalError> {
    let qs = positives(examples);
    let queries = qs
        .par_iter()
        .map(|ex| {
            let out = p.answer_question(&ex.question, chain, k, tau)?;
            let (em, f) = match &out.answer {
                Some(a) => (exact_match(a, &ex.answers), f1(a, &ex.answers)),
                None => (0.0, 0.0),
            };
            Ok(QueryRecord { id: ex.id.clone(), retrieved: out.ranked.ids(), answer: out.answer, em: Some(em), f1: Some(f) })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let relevant: Vec<Vec<PassageId>> = qs.iter().map(|e| vec![e.passage]).collect();
    EvalReport::build(queries, &relevant, true)
}
