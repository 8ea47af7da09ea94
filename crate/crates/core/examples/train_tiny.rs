//! Trains the multi-task network on a small generated corpus until it fits
//! the training questions, printing retrieval and reading accuracy.
//!
//!     cargo run --release --example train_tiny -- [mtl|stl-ir|stl-rc] [max-epochs]
//!
//! Runs in well under a minute on one core.

use std::time::Instant;

use retrieve_read::eval::{evaluate_ir, evaluate_rc, Pipeline, RankerChain};
use retrieve_read::model::{Hyperparams, ModelConfig, ModelParams, Reader};
use retrieve_read::retriever::TfIdfIndex;
use retrieve_read::synthetic::Fixture;
use retrieve_read::training::{EpochControl, TrainMode, Trainer};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let mode: TrainMode = args.next().as_deref().unwrap_or("mtl").parse().map_err(anyhow::Error::msg)?;
    let max_epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(150);

    let fx = Fixture::generate(20, 50, 16, 1);
    let index = TfIdfIndex::build(&fx.dataset.corpus)?;
    let hyper = Hyperparams {
        hidden: 20,
        context: 20,
        lr: 0.1,
        lr_decay: 1.0,
        epochs: max_epochs,
        batch_positives: 10,
        batch_negatives: 10,
        ..Hyperparams::default()
    };
    let params = ModelParams::new(ModelConfig::new(16, hyper.hidden, hyper.context), 0);
    let mut trainer = Trainer::new(params, hyper, mode, 0)?;
    let chain: RankerChain = "tfidf:20,neural:1".parse()?;
    let start = Instant::now();

    trainer.train(&fx.dataset, &index, &fx.vectors, |report, t| {
        if report.epoch % 10 != 0 {
            return Ok(EpochControl::Continue);
        }
        let ema = t.ema_params();
        let reader = Reader::new(&ema, &fx.vectors)?;
        let p = Pipeline { corpus: &fx.dataset.corpus, index: &index, reader: Some(reader) };
        let s1 = match mode {
            TrainMode::StlRc => None,
            _ => evaluate_ir(&p, &fx.dataset.examples, &chain).ok().and_then(|r| r.aggregate.success_at_1),
        };
        let em = match mode {
            TrainMode::StlIr => None,
            _ => evaluate_rc(&p, &fx.dataset.examples).ok().and_then(|r| r.aggregate.em),
        };
        let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "epoch {:>3}  loss {:.4}  S@1 {}  EM {}  {:.1}s",
            report.epoch,
            report.loss,
            show(s1),
            show(em),
            start.elapsed().as_secs_f64()
        );
        let done = s1.is_none_or(|s| s >= 0.9) && em.is_none_or(|e| e >= 0.95);
        Ok(if done { EpochControl::Stop } else { EpochControl::Continue })
    })?;
    Ok(())
}
