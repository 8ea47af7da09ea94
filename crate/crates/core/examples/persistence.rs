//! Writes a corpus store, word vectors, an index and a checkpoint to disk,
//! reloads them and checks that answers are unchanged.
//!
//!     cargo run --release --example persistence -- [dir]

use std::fs;
use std::path::PathBuf;

use retrieve_read::eval::{Pipeline, RankerChain};
use retrieve_read::model::{Checkpoint, Hyperparams, ModelConfig, ModelParams, Reader};
use retrieve_read::retriever::TfIdfIndex;
use retrieve_read::synthetic::Fixture;
use retrieve_read::text::VectorTable;
use retrieve_read::training::{Dataset, TrainMode, Trainer};

fn main() -> anyhow::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rnr-example"));
    fs::create_dir_all(&dir)?;

    let fx = Fixture::generate(10, 20, 8, 3);
    fs::write(dir.join("squad.json"), fx.to_squad_json())?;
    fx.dataset.save(&dir.join("passages.jsonl"), &dir.join("examples.jsonl"))?;
    let mut buf = Vec::new();
    fx.vectors.write(&mut buf)?;
    fs::write(dir.join("vectors.txt"), buf)?;

    let index = TfIdfIndex::build(&fx.dataset.corpus)?;
    index.save(dir.join("corpus.idx"))?;

    let hyper = Hyperparams { hidden: 6, context: 6, lr: 0.1, batch_positives: 10, batch_negatives: 10, ..Hyperparams::default() };
    let mut trainer = Trainer::new(ModelParams::new(ModelConfig::new(8, 6, 6), 1), hyper, TrainMode::Mtl, 1)?;
    let report = trainer.run_epoch(&fx.dataset, &index, &fx.vectors)?;
    println!("epoch {} loss {:.4}", report.epoch, report.loss);
    trainer.checkpoint().save(dir.join("model.ckpt"))?;

    let data = Dataset::load(&dir.join("passages.jsonl"), &dir.join("examples.jsonl"))?;
    let vectors = VectorTable::load(dir.join("vectors.txt"))?;
    let index2 = TfIdfIndex::load(dir.join("corpus.idx"))?;
    let ck = Checkpoint::load(dir.join("model.ckpt"))?;
    println!("reloaded {} passages, {} examples, checkpoint at epoch {}", data.corpus.len(), data.examples.len(), ck.epoch);

    // Checkpoints store 32-bit floats, so compare against rounded weights.
    let mut original = trainer.checkpoint();
    original.params.store = original.ema.take().expect("trainer keeps an EMA");
    original.params.round_to_f32();
    let before = original.params;
    let after = ck.inference_params();
    let chain: RankerChain = "tfidf:10,neural:3".parse()?;
    let q = &fx.dataset.examples[0].question;
    let a = Pipeline { corpus: &fx.dataset.corpus, index: &index, reader: Some(Reader::new(&before, &fx.vectors)?) }
        .answer_question(q, &chain, 3, 0.05)?;
    let b = Pipeline { corpus: &data.corpus, index: &index2, reader: Some(Reader::new(&after, &vectors)?) }
        .answer_question(q, &chain, 3, 0.05)?;
    println!("answer before {:?}, after {:?}, identical: {}", a.answer, b.answer, a == b);
    println!("files in {}", dir.display());
    Ok(())
}
