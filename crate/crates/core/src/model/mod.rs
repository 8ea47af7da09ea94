//! The joint reader/re-ranker network: shared encoder, attention flow,
//! pointer-style span head and relevance head.

mod checkpoint;
mod forward;
mod infer;
mod span;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{xavier_uniform, BiLstmParams, GraphError, HighwayParams, ParamId, ParamStore, Tensor};

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, EMA_PREFIX};
pub use forward::{
    attention_flow, comprehension_head, encode_shared, exact_match_channel, forward, retrieval_head,
    AttentionFlow, ForwardState, Heads, PairInput,
};
pub use infer::{Reader, Reading};
pub use span::{extract_answer, select_span, Span};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("span ({start}, {end}) is invalid for a passage of {len} tokens")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("word vectors have dimension {found}, model expects {expected}")]
    VectorDim { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
}

/// Network dimensions: word-vector size `v`, LSTM hidden size `d` and
/// self-attention context size `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vector_dim: usize,
    pub hidden: usize,
    pub context: usize,
    #[serde(default = "default_highway_layers")]
    pub highway_layers: usize,
}

fn default_highway_layers() -> usize {
    2
}

impl ModelConfig {
    pub fn new(vector_dim: usize, hidden: usize, context: usize) -> Self {
        ModelConfig { vector_dim, hidden, context, highway_layers: default_highway_layers() }
    }
}

/// Training and inference hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub hidden: usize,
    pub context: usize,
    pub dropout: f64,
    /// Weight of the relevance loss.
    pub lambda: f64,
    /// Voting temperature.
    pub tau: f64,
    pub lr: f64,
    pub momentum: f64,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub epochs: usize,
    pub ema_decay: f64,
    pub batch_positives: usize,
    pub batch_negatives: usize,
    /// Size of the similar-passage pool negatives are drawn from.
    pub negative_pool: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            hidden: 100,
            context: 100,
            dropout: 0.2,
            lambda: 1.0,
            tau: 0.05,
            lr: 1.0,
            momentum: 0.9,
            lr_decay: 0.9,
            epochs: 15,
            ema_decay: 0.99,
            batch_positives: 30,
            batch_negatives: 30,
            negative_pool: 15,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Hyper(m.to_string()));
        if self.hidden == 0 || self.context == 0 {
            return bad("hidden and context sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_positives == 0 {
            return bad("a batch needs at least one positive");
        }
        if self.negative_pool == 0 {
            return bad("negative_pool must be positive");
        }
        Ok(())
    }

    /// Learning rate for 1-based epoch `e`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch.saturating_sub(1) as i32)
    }
}

/// Where each weight of the network lives in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub highway: HighwayParams,
    pub contextual: BiLstmParams,
    /// `6d×1`, split as `[w_H; w_U; w_HU]`.
    pub w_s: ParamId,
    pub modeling: BiLstmParams,
    pub start: BiLstmParams,
    pub end: BiLstmParams,
    /// `10d×1`.
    pub w_1: ParamId,
    pub w_2: ParamId,
    pub retrieval: BiLstmParams,
    /// `c×2d`.
    pub w_a: ParamId,
    pub b_a: ParamId,
    pub w_c: ParamId,
    /// `2d×1`.
    pub w_r: ParamId,
}

impl ParamLayout {
    /// Registers every weight in `store`: Xavier-uniform matrices, zero
    /// biases.
    pub fn init(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let (v, d, c) = (cfg.vector_dim, cfg.hidden, cfg.context);
        ParamLayout {
            highway: HighwayParams::init(store, "highway", v, cfg.highway_layers, rng),
            contextual: BiLstmParams::init(store, "contextual", v, d, rng),
            w_s: store.insert("attention/w_s", xavier_uniform(6 * d, 1, rng)),
            modeling: BiLstmParams::init(store, "modeling", 8 * d, d, rng),
            start: BiLstmParams::init(store, "rc/start", 2 * d, d, rng),
            end: BiLstmParams::init(store, "rc/end", 14 * d, d, rng),
            w_1: store.insert("rc/w_1", xavier_uniform(10 * d, 1, rng)),
            w_2: store.insert("rc/w_2", xavier_uniform(10 * d, 1, rng)),
            retrieval: BiLstmParams::init(store, "ir/lstm", 2 * d + 1, d, rng),
            w_a: store.insert("ir/w_a", xavier_uniform(c, 2 * d, rng)),
            b_a: store.insert("ir/b_a", Tensor::zeros(c, 1)),
            w_c: store.insert("ir/w_c", xavier_uniform(c, 1, rng)),
            w_r: store.insert("ir/w_r", xavier_uniform(2 * d, 1, rng)),
        }
    }
}

/// A configured network: layout plus the weights it indexes.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub store: ParamStore,
}

impl ModelParams {
    pub fn new(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layout = ParamLayout::init(&mut store, &config, &mut rng);
        ModelParams { config, layout, store }
    }

    /// The same network with a different weight set (e.g. the EMA shadow).
    pub fn with_store(&self, store: ParamStore) -> Self {
        assert!(self.store.same_layout(&store), "weight store does not match the model layout");
        ModelParams { config: self.config, layout: self.layout.clone(), store }
    }

    /// Rounds every weight to the nearest 32-bit float, which is what a
    /// checkpoint stores.
    pub fn round_to_f32(&mut self) {
        for t in self.store.tensors_mut() {
            for x in t.data_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}
