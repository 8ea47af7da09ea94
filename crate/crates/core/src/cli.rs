//! The `rnr` command line: ingestion, indexing, training, evaluation and
//! one-shot questions.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use thiserror::Error;

use crate::eval::{evaluate_ir, evaluate_mrs, evaluate_rc, EvalError, EvalReport, Pipeline, RankerChain};
use crate::model::{Checkpoint, CheckpointError, Hyperparams, ModelConfig, ModelError, ModelParams, Reader};
use crate::retriever::{Corpus, IndexError, TfIdfIndex, DEFAULT_BUCKETS};
use crate::text::{tokenize, VectorError, VectorTable};
use crate::training::{load_squad, read_jsonl, DataError, Dataset, EpochControl, TrainError, TrainMode, Trainer};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Missing(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Vectors(#[from] VectorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    /// Process exit status: 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Missing(_) => 4,
            CliError::Data(_) | CliError::Vectors(_) | CliError::Io { .. } => 5,
            CliError::Index(IndexError::Version { .. }) | CliError::Checkpoint(CheckpointError::Version { .. }) => 6,
            CliError::Index(_) | CliError::Checkpoint(_) => 5,
            CliError::Model(_) | CliError::Eval(_) => 7,
            CliError::Train(_) => 8,
        }
    }

    pub fn category(&self) -> &'static str {
        match self.exit_code() {
            3 => "config error",
            4 => "missing input",
            5 => "bad input",
            6 => "version mismatch",
            7 => "evaluation error",
            _ => "training error",
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "rnr", version, about = "Retrieve passages and read answers out of them")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Ranker chain such as `tfidf:200,neural:5`.
    #[arg(long, global = true, value_name = "CHAIN")]
    pub chain: Option<String>,
    /// Passages read per question.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Voting temperature.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[command(flatten)]
    pub paths: PathArgs,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse()
}

#[derive(Args, Debug, Default, Clone)]
pub struct PathArgs {
    /// SQuAD-style JSON dataset.
    #[arg(long, global = true, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Passage store (JSON lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub corpus: Option<PathBuf>,
    /// Example store (JSON lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub examples: Option<PathBuf>,
    /// Word vectors: a `COUNT DIM` header, then one `word v1 … vDIM` per line.
    #[arg(long, global = true, value_name = "PATH")]
    pub vectors: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub index: Option<PathBuf>,
    #[arg(long, global = true, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Directory for per-epoch checkpoints.
    #[arg(long, global = true, value_name = "DIR")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Where to write the JSON evaluation report.
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Output directory for `ingest`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert a SQuAD-style dataset into passage and example stores.
    Ingest,
    /// Build the TF-IDF index of a passage store.
    BuildIndex {
        #[arg(long, default_value_t = DEFAULT_BUCKETS)]
        buckets: u32,
    },
    /// Train the network; writes one checkpoint per epoch.
    Train,
    /// Passage retrieval quality (S@k, MRR@k) of a ranker chain.
    EvalIr,
    /// Answer quality given the gold passage.
    EvalRc,
    /// End-to-end answer quality over the whole corpus.
    EvalMrs,
    /// Answer one question.
    Ask {
        /// The question; read from standard input when omitted.
        question: Option<String>,
    },
}

/// Paths of a [`RunConfig`].
#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigPaths {
    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// A JSON run configuration.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: ConfigPaths,
    pub hyper: Hyperparams,
    pub chain: String,
    pub seed: u64,
    pub k: usize,
    pub mode: TrainMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: ConfigPaths::default(),
            hyper: Hyperparams::default(),
            chain: "tfidf:200,neural:5".into(),
            seed: 0,
            k: 5,
            mode: TrainMode::Mtl,
        }
    }
}

impl RunConfig {
    pub fn parse(json: &str, origin: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(json);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Config(format!("{origin}: at {}: {}", e.path(), e.inner())))
    }

    /// Reads `common.config` (if any) and applies every flag on top.
    pub fn resolve(common: &Common) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
                RunConfig::parse(&text, &path.display().to_string())?
            }
            None => RunConfig::default(),
        };
        let p = &common.paths;
        let slots = [
            (&mut cfg.paths.dataset, &p.dataset),
            (&mut cfg.paths.corpus, &p.corpus),
            (&mut cfg.paths.examples, &p.examples),
            (&mut cfg.paths.vectors, &p.vectors),
            (&mut cfg.paths.index, &p.index),
            (&mut cfg.paths.checkpoint, &p.checkpoint),
            (&mut cfg.paths.checkpoint_dir, &p.checkpoint_dir),
            (&mut cfg.paths.report, &p.report),
            (&mut cfg.paths.out_dir, &p.out_dir),
        ];
        for (slot, flag) in slots {
            if let Some(v) = flag {
                *slot = Some(v.clone());
            }
        }
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if let Some(c) = &common.chain {
            cfg.chain = c.clone();
        }
        if let Some(k) = common.k {
            cfg.k = k;
        }
        if let Some(t) = common.tau {
            cfg.hyper.tau = t;
        }
        if let Some(m) = common.mode {
            cfg.mode = m;
        }
        if let Some(e) = common.epochs {
            cfg.hyper.epochs = e;
        }
        cfg.hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn chain(&self) -> Result<RankerChain, CliError> {
        self.chain.parse().map_err(|e: EvalError| CliError::Config(e.to_string()))
    }
}

/// An input file that must exist.
fn input<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Missing(format!("--{flag} is required (or paths.{} in the config)", flag.replace('-', "_"))))?;
    if !p.is_file() {
        return Err(CliError::Missing(format!("{} (--{flag}) does not exist; create it first", p.display())));
    }
    Ok(p)
}

fn output<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Missing(format!("--{flag} is required (or paths.{} in the config)", flag.replace('-', "_"))))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    Ok(Corpus::from_lines(read_jsonl(path)?)?)
}

struct Loaded {
    corpus: Corpus,
    index: TfIdfIndex,
}

fn load_corpus_and_index(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let corpus = load_corpus(input(&cfg.paths.corpus, "corpus")?)?;
    let index = match &cfg.paths.index {
        Some(_) => TfIdfIndex::load(input(&cfg.paths.index, "index")?)?,
        None => TfIdfIndex::build(&corpus)?,
    };
    if index.n_docs() as usize != corpus.len() || corpus.iter().any(|p| !index.contains(p.id)) {
        return Err(CliError::Config("index was not built from this corpus; rebuild it with build-index".into()));
    }
    Ok(Loaded { corpus, index })
}

fn load_model(cfg: &RunConfig) -> Result<(ModelParams, VectorTable), CliError> {
    let ck = Checkpoint::load(input(&cfg.paths.checkpoint, "checkpoint")?)?;
    let vectors = VectorTable::load(input(&cfg.paths.vectors, "vectors")?)?;
    Ok((ck.inference_params(), vectors))
}

fn write_report(cfg: &RunConfig, report: &EvalReport, out: &mut dyn Write) -> Result<(), CliError> {
    let a = &report.aggregate;
    let mut line = |name: &str, v: Option<f64>| -> io::Result<()> {
        match v {
            Some(v) => writeln!(out, "{name} {v:.4}"),
            None => Ok(()),
        }
    };
    let stdout = Path::new("<stdout>");
    (|| {
        line("S@1", a.success_at_1)?;
        line("S@5", a.success_at_5)?;
        line("MRR@5", a.mrr_at_5)?;
        line("EM", a.em)?;
        line("F1", a.f1)
    })()
    .map_err(io_err(stdout))?;
    if let Some(path) = &cfg.paths.report {
        fs::write(path, report.to_json() + "\n").map_err(io_err(path))?;
    }
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let src = input(&cfg.paths.dataset, "dataset")?;
    let dir = output(&cfg.paths.out_dir, "out-dir")?;
    let ds = load_squad(src)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    ds.save(&dir.join("passages.jsonl"), &dir.join("examples.jsonl"))?;
    writeln!(out, "passages {}\nexamples {}\ndropped {}", ds.corpus.len(), ds.examples.len(), ds.dropped)
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(())
}

fn cmd_build_index(cfg: &RunConfig, buckets: u32, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus = load_corpus(input(&cfg.paths.corpus, "corpus")?)?;
    let dest = output(&cfg.paths.index, "index")?;
    if buckets == 0 {
        return Err(CliError::Config("--buckets must be positive".into()));
    }
    let index = TfIdfIndex::build_with_buckets(&corpus, buckets)?;
    index.save(dest)?;
    writeln!(out, "indexed {} passages into {}", index.n_docs(), dest.display()).map_err(io_err(dest))?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let corpus_path = input(&cfg.paths.corpus, "corpus")?;
    let examples_path = input(&cfg.paths.examples, "examples")?;
    let vectors = VectorTable::load(input(&cfg.paths.vectors, "vectors")?)?;
    let dir = output(&cfg.paths.checkpoint_dir, "checkpoint-dir")?;
    let data = Dataset::load(corpus_path, examples_path)?;
    let Loaded { index, .. } = load_corpus_and_index(cfg)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let hp = &cfg.hyper;
    let model_cfg = ModelConfig::new(vectors.dim(), hp.hidden, hp.context);
    let params = ModelParams::new(model_cfg, cfg.seed);
    let mut trainer = Trainer::new(params, hp.clone(), cfg.mode, cfg.seed)?;
    let mut failure = None;
    trainer.train(&data, &index, &vectors, |report, t| {
        let path = dir.join(format!("epoch-{:03}.ckpt", report.epoch));
        if let Err(e) = t.checkpoint().save(&path) {
            failure = Some(e);
            return Ok(EpochControl::Stop);
        }
        let _ = writeln!(out, "epoch {} loss {:.6} lr {:.6} -> {}", report.epoch, report.loss, report.lr, path.display());
        Ok(EpochControl::Continue)
    })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_eval(cfg: &RunConfig, which: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    let chain = cfg.chain()?;
    let corpus_path = input(&cfg.paths.corpus, "corpus")?;
    let examples_path = input(&cfg.paths.examples, "examples")?;
    let data = Dataset::load(corpus_path, examples_path)?;
    let Loaded { corpus, index } = load_corpus_and_index(cfg)?;
    let needs_model = !matches!(which, Command::EvalIr) || chain.has_neural();
    let model = if needs_model { Some(load_model(cfg)?) } else { None };
    let reader = model.as_ref().map(|(p, v)| Reader::new(p, v)).transpose()?;
    let p = Pipeline { corpus: &corpus, index: &index, reader };
    let report = match which {
        Command::EvalIr => evaluate_ir(&p, &data.examples, &chain)?,
        Command::EvalRc => evaluate_rc(&p, &data.examples)?,
        _ => evaluate_mrs(&p, &data.examples, &chain, cfg.k, cfg.hyper.tau)?,
    };
    write_report(cfg, &report, out)
}

fn cmd_ask(cfg: &RunConfig, question: Option<&str>, out: &mut dyn Write) -> Result<(), CliError> {
    let chain = cfg.chain()?;
    let Loaded { corpus, index } = load_corpus_and_index(cfg)?;
    let (params, vectors) = load_model(cfg)?;
    let text = match question {
        Some(q) => q.to_string(),
        None => {
            let mut s = String::new();
            io::stdin().read_line(&mut s).map_err(io_err(Path::new("<stdin>")))?;
            s
        }
    };
    let q = tokenize(text.trim());
    let p = Pipeline { corpus: &corpus, index: &index, reader: Some(Reader::new(&params, &vectors)?) };
    let ans = p.answer_question(&q, &chain, cfg.k, cfg.hyper.tau)?;
    let stdout = Path::new("<stdout>");
    for (rank, c) in ans.candidates.iter().enumerate() {
        let text = &corpus.get(c.passage).expect("retrieved passages exist").text;
        writeln!(out, "{}. passage {} pr={:.4} answer={:?}\n   {}", rank + 1, c.passage, c.relevance, c.answer, text)
            .map_err(io_err(stdout))?;
    }
    match &ans.answer {
        Some(a) => writeln!(out, "answer: {a}"),
        None => writeln!(out, "answer: (no passage retrieved)"),
    }
    .map_err(io_err(stdout))?;
    Ok(())
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match &cli.command {
        Command::Ingest => cmd_ingest(&cfg, out),
        Command::BuildIndex { buckets } => cmd_build_index(&cfg, *buckets, out),
        Command::Train => cmd_train(&cfg, out),
        c @ (Command::EvalIr | Command::EvalRc | Command::EvalMrs) => cmd_eval(&cfg, c, out),
        Command::Ask { question } => cmd_ask(&cfg, question.as_deref(), out),
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rnr: {}: {e}", e.category());
            e.exit_code()
        }
    }
}
