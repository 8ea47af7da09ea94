//! Multi-task training: negative sampling, the joint loss, SGD with
//! momentum, learning-rate decay and an EMA shadow of the weights.

mod data;
mod loss;
mod optim;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Graph, ParamStore, Tensor};
use crate::model::{forward, Checkpoint, Heads, Hyperparams, ModelError, ModelParams, PairInput};
use crate::retriever::{Corpus, IndexError, PassageId, TfIdfIndex};
use crate::text::VectorTable;

pub use data::{align_answer, load_squad, parse_squad, read_jsonl, write_jsonl, DataError, Dataset, ExampleLine, QuestionExample};
pub use loss::{bce, example_loss, joint_loss, span_nll, ExampleOutput, LossWeights, Target, LOG_FLOOR};
pub use optim::{ema_update, sgd_momentum_step};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("batch has no positive examples")]
    NoPositives,
    #[error("positive example has no answer span")]
    MissingSpan,
    #[error("non-finite gradient for {0}")]
    NonFinite(String),
    #[error("dataset has no examples")]
    EmptyDataset,
    #[error("example refers to passage {0}, which is not in the corpus")]
    UnknownPassage(PassageId),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl From<crate::autodiff::GraphError> for TrainError {
    fn from(e: crate::autodiff::GraphError) -> Self {
        TrainError::Model(ModelError::Graph(e))
    }
}

/// Which objective to optimise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainMode {
    /// `L_RC + λ·L_IR`.
    #[serde(rename = "mtl")]
    Mtl,
    /// `L_IR` only.
    #[serde(rename = "stl-ir")]
    StlIr,
    /// `L_RC` only, on positives.
    #[serde(rename = "stl-rc")]
    StlRc,
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mtl" => Ok(TrainMode::Mtl),
            "stl-ir" => Ok(TrainMode::StlIr),
            "stl-rc" => Ok(TrainMode::StlRc),
            _ => Err(format!("unknown mode {s:?} (expected mtl, stl-ir or stl-rc)")),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Mtl => "mtl",
            TrainMode::StlIr => "stl-ir",
            TrainMode::StlRc => "stl-rc",
        })
    }
}

/// A minibatch.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub examples: Vec<QuestionExample>,
}

impl Batch {
    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn n_pos(&self) -> usize {
        self.examples.iter().filter(|e| e.relevant).count()
    }
}

/// Pairs the question of `positive` with a passage drawn uniformly from the
/// `pool` passages most similar to its relevant passage. `None` when the
/// corpus has no other passage.
pub fn make_negative<R: Rng + ?Sized>(
    positive: &QuestionExample,
    corpus: &Corpus,
    index: &TfIdfIndex,
    pool: usize,
    rng: &mut R,
) -> Result<Option<QuestionExample>, TrainError> {
    let record = corpus.get(positive.passage).ok_or(TrainError::UnknownPassage(positive.passage))?;
    let similar = index.similar_passages(record, pool)?;
    let candidates: Vec<PassageId> = similar.ids().into_iter().filter(|&id| id != positive.passage).collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    Ok(Some(positive.negative_of(candidates[rng.gen_range(0..candidates.len())])))
}

/// SplitMix64 finaliser, used to derive independent seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| mix(acc ^ p))
}

/// Summary of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over batches of the batch loss.
    pub loss: f64,
    pub batches: usize,
    pub examples: usize,
    pub skipped_negatives: usize,
}

/// Returned by the per-epoch callback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochControl {
    Continue,
    Stop,
}

/// Examples whose gradients are computed concurrently before being added
/// in order; a constant so results do not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Optimiser state for one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub params: ModelParams,
    pub ema: ParamStore,
    velocity: Vec<Tensor>,
    pub hyper: Hyperparams,
    pub mode: TrainMode,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    steps: u64,
}

impl Trainer {
    pub fn new(params: ModelParams, hyper: Hyperparams, mode: TrainMode, seed: u64) -> Result<Self, TrainError> {
        hyper.validate()?;
        let ema = params.store.clone();
        let velocity = params.store.zeros_like();
        Ok(Trainer { params, ema, velocity, hyper, mode, seed, epoch: 0, steps: 0 })
    }

    /// The weights used for evaluation.
    pub fn ema_params(&self) -> ModelParams {
        self.params.with_store(self.ema.clone())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            hyper: self.hyper.clone(),
            epoch: self.epoch,
            params: self.params.clone(),
            ema: Some(self.ema.clone()),
        }
    }

    fn heads_for(&self, ex: &QuestionExample) -> Heads {
        match self.mode {
            TrainMode::Mtl if ex.relevant => Heads::Both,
            TrainMode::Mtl | TrainMode::StlIr => Heads::Retrieval,
            TrainMode::StlRc => Heads::Comprehension,
        }
    }

    fn weights_for(&self, batch: &Batch) -> Result<LossWeights, TrainError> {
        let w = LossWeights::for_batch(batch.n(), batch.n_pos(), self.hyper.lambda)?;
        Ok(match self.mode {
            TrainMode::Mtl => w,
            TrainMode::StlIr => LossWeights { ir: 1.0 / batch.n() as f64, rc: 0.0 },
            TrainMode::StlRc => LossWeights { ir: 0.0, rc: w.rc },
        })
    }

    /// Loss and parameter gradients of one example under the training
    /// graph seeded by `seed`.
    fn example_gradients(
        &self,
        ex: &QuestionExample,
        corpus: &Corpus,
        vectors: &VectorTable,
        weights: &LossWeights,
        seed: u64,
    ) -> Result<(f64, Option<Vec<Tensor>>), TrainError> {
        let passage = corpus.get(ex.passage).ok_or(TrainError::UnknownPassage(ex.passage))?;
        let input = PairInput::new(&ex.question, &passage.tokens, vectors)?;
        let store = &self.params.store;
        let mut g = Graph::training(store, ChaCha8Rng::seed_from_u64(seed));
        let state = forward(&mut g, &self.params.layout, &input, self.heads_for(ex), self.hyper.dropout)?;
        let target = Target { relevant: ex.relevant, span: ex.span };
        if ex.relevant && ex.span.is_none() {
            return Err(TrainError::MissingSpan);
        }
        let Some(loss) = example_loss(&mut g, &state, &target, weights)? else {
            return Ok((0.0, None));
        };
        let value = g.value(loss).item();
        let grads = g.backward(loss)?.into_param_grads(store);
        Ok((value, Some(grads)))
    }

    /// Batch loss and summed gradients. Per-example work runs in parallel;
    /// the sum is taken in example order.
    pub fn batch_gradients(
        &self,
        batch: &Batch,
        corpus: &Corpus,
        vectors: &VectorTable,
        seed: u64,
    ) -> Result<(f64, Vec<Tensor>), TrainError> {
        let weights = self.weights_for(batch)?;
        let mut total = self.params.store.zeros_like();
        let mut loss = 0.0;
        for (c, chunk) in batch.examples.chunks(GRAD_CHUNK).enumerate() {
            let results: Vec<_> = chunk
                .par_iter()
                .enumerate()
                .map(|(i, ex)| {
                    let s = derive_seed(&[seed, (c * GRAD_CHUNK + i) as u64]);
                    self.example_gradients(ex, corpus, vectors, &weights, s)
                })
                .collect();
            for r in results {
                let (l, grads) = r?;
                loss += l;
                if let Some(grads) = grads {
                    for (t, g) in total.iter_mut().zip(&grads) {
                        t.add_assign(g);
                    }
                }
            }
        }
        Ok((loss, total))
    }

    /// One optimiser step on `batch` at learning rate `lr`, followed by the
    /// EMA update. Returns the batch loss before the step.
    pub fn step(&mut self, batch: &Batch, corpus: &Corpus, vectors: &VectorTable, lr: f64) -> Result<f64, TrainError> {
        let seed = derive_seed(&[self.seed, 1, self.steps]);
        let (loss, grads) = self.batch_gradients(batch, corpus, vectors, seed)?;
        sgd_momentum_step(&mut self.params.store, &grads, &mut self.velocity, lr, self.hyper.momentum)?;
        ema_update(&mut self.ema, &self.params.store, self.hyper.ema_decay);
        self.steps += 1;
        Ok(loss)
    }

    /// Shuffles the positives, splits them into batches and adds freshly
    /// sampled negatives to each.
    pub fn epoch_batches(&self, data: &Dataset, index: &TfIdfIndex, epoch: usize) -> Result<(Vec<Batch>, usize), TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[self.seed, 2, epoch as u64]));
        let mut order: Vec<usize> = (0..data.examples.len()).filter(|&i| data.examples[i].relevant).collect();
        if order.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        order.shuffle(&mut rng);
        let negatives = if self.mode == TrainMode::StlRc { 0 } else { self.hyper.batch_negatives };
        let mut skipped = 0;
        let mut batches = Vec::new();
        for chunk in order.chunks(self.hyper.batch_positives) {
            let mut examples: Vec<QuestionExample> = chunk.iter().map(|&i| data.examples[i].clone()).collect();
            let n_pos = examples.len();
            for j in 0..negatives {
                let pos = &data.examples[chunk[j % n_pos]];
                match make_negative(pos, &data.corpus, index, self.hyper.negative_pool, &mut rng)? {
                    Some(neg) => examples.push(neg),
                    None => skipped += 1,
                }
            }
            batches.push(Batch { examples });
        }
        if skipped > 0 {
            log::warn!("epoch {epoch}: {skipped} negatives skipped (no candidate passage)");
        }
        Ok((batches, skipped))
    }

    /// Runs the next epoch.
    pub fn run_epoch(&mut self, data: &Dataset, index: &TfIdfIndex, vectors: &VectorTable) -> Result<EpochReport, TrainError> {
        let epoch = self.epoch + 1;
        let lr = self.hyper.lr_at(epoch);
        let (batches, skipped) = self.epoch_batches(data, index, epoch)?;
        let mut loss = 0.0;
        let mut examples = 0;
        for batch in &batches {
            loss += self.step(batch, &data.corpus, vectors, lr)?;
            examples += batch.n();
        }
        self.epoch = epoch;
        let report = EpochReport {
            epoch,
            lr,
            loss: loss / batches.len() as f64,
            batches: batches.len(),
            examples,
            skipped_negatives: skipped,
        };
        log::info!("epoch {epoch}: loss {:.6} lr {lr:.4}", report.loss);
        Ok(report)
    }

    /// Trains for the configured number of epochs, calling `on_epoch` after
    /// each one; the callback may stop training early.
    pub fn train<F>(&mut self, data: &Dataset, index: &TfIdfIndex, vectors: &VectorTable, mut on_epoch: F) -> Result<Vec<EpochReport>, TrainError>
    where
        F: FnMut(&EpochReport, &Trainer) -> Result<EpochControl, TrainError>,
    {
        if data.examples.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let mut history = Vec::new();
        while self.epoch < self.hyper.epochs {
            let report = self.run_epoch(data, index, vectors)?;
            let control = on_epoch(&report, self)?;
            history.push(report);
            if control == EpochControl::Stop {
                break;
            }
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::retriever::PassageRecord;

    fn tiny() -> (Dataset, TfIdfIndex, VectorTable) {
        let corpus = Corpus::new(vec![
            PassageRecord::new(0, 0, "alice lives in paris"),
            PassageRecord::new(1, 0, "bob lives in rome"),
        ])
        .unwrap();
        let examples = vec![
            QuestionExample::positive("a", "where does alice live", 0, (3, 3), vec!["paris".into()]),
            QuestionExample::positive("b", "where does bob live", 1, (3, 3), vec!["rome".into()]),
        ];
        let words = ["alice", "bob", "lives", "in", "paris", "rome", "where", "does", "live"];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vectors = VectorTable::from_pairs(
            4,
            words.iter().map(|w| (*w, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>())),
        )
        .unwrap();
        let index = TfIdfIndex::build_with_buckets(&corpus, 1 << 10).unwrap();
        (Dataset::new(corpus, examples).unwrap(), index, vectors)
    }

    fn hyper() -> Hyperparams {
        Hyperparams {
            hidden: 3,
            context: 3,
            lr: 0.1,
            batch_positives: 2,
            batch_negatives: 2,
            epochs: 2,
            ..Hyperparams::default()
        }
    }

    #[test]
    fn two_passage_negative_is_the_other_one() {
        let (data, index, _) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let neg = make_negative(&data.examples[0], &data.corpus, &index, 15, &mut rng).unwrap().unwrap();
            assert_eq!(neg.passage, 1);
            assert!(!neg.relevant && neg.span.is_none());
        }
    }

    #[test]
    fn single_passage_corpus_has_no_negative() {
        let corpus = Corpus::new(vec![PassageRecord::new(0, 0, "only one")]).unwrap();
        let index = TfIdfIndex::build(&corpus).unwrap();
        let ex = QuestionExample::positive("q", "one", 0, (1, 1), vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_negative(&ex, &corpus, &index, 15, &mut rng).unwrap().is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let (data, index, vectors) = tiny();
        let run = || {
            let params = ModelParams::new(ModelConfig::new(4, 3, 3), 7);
            let mut t = Trainer::new(params, hyper(), TrainMode::Mtl, 42).unwrap();
            t.run_epoch(&data, &index, &vectors).unwrap();
            t.checkpoint().to_bytes()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn stl_rc_matches_mtl_without_relevance_weight() {
        let (data, _, vectors) = tiny();
        let batch = Batch { examples: data.examples.clone() };
        let params = ModelParams::new(ModelConfig::new(4, 3, 3), 7);
        let hp = Hyperparams { lambda: 0.0, ..hyper() };
        let mtl = Trainer::new(params.clone(), hp.clone(), TrainMode::Mtl, 1).unwrap();
        let rc = Trainer::new(params, hp, TrainMode::StlRc, 1).unwrap();
        let (a, _) = mtl.batch_gradients(&batch, &data.corpus, &vectors, 5).unwrap();
        let (b, _) = rc.batch_gradients(&batch, &data.corpus, &vectors, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mode_names() {
        for m in [TrainMode::Mtl, TrainMode::StlIr, TrainMode::StlRc] {
            assert_eq!(m.to_string().parse::<TrainMode>().unwrap(), m);
        }
        assert!("both".parse::<TrainMode>().is_err());
    }
}
