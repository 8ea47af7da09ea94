//! Answers questions end to end: TF-IDF narrows the corpus, the trained
//! network re-ranks the survivors, reads the top k and votes.
//!
//!     cargo run --release --example telescoping_qa

use retrieve_read::eval::{evaluate_mrs, Pipeline, RankerChain};
use retrieve_read::model::{Hyperparams, ModelConfig, ModelParams, Reader};
use retrieve_read::retriever::TfIdfIndex;
use retrieve_read::synthetic::Fixture;
use retrieve_read::training::{TrainMode, Trainer};

fn main() -> anyhow::Result<()> {
    let fx = Fixture::generate(20, 50, 16, 1);
    let index = TfIdfIndex::build(&fx.dataset.corpus)?;
    let hyper = Hyperparams {
        hidden: 20,
        context: 20,
        lr: 0.1,
        lr_decay: 1.0,
        epochs: 80,
        batch_positives: 10,
        batch_negatives: 10,
        ..Hyperparams::default()
    };
    let mut trainer = Trainer::new(ModelParams::new(ModelConfig::new(16, 20, 20), 0), hyper, TrainMode::Mtl, 0)?;
    println!("training 80 epochs...");
    trainer.train(&fx.dataset, &index, &fx.vectors, |_, _| Ok(retrieve_read::training::EpochControl::Continue))?;

    let ema = trainer.ema_params();
    let p = Pipeline { corpus: &fx.dataset.corpus, index: &index, reader: Some(Reader::new(&ema, &fx.vectors)?) };
    let chain: RankerChain = "tfidf:10,neural:3".parse()?;
    for ex in fx.dataset.examples.iter().take(3) {
        let ans = p.answer_question(&ex.question, &chain, 3, 0.05)?;
        println!("\nQ: {}", ex.question.text());
        for c in &ans.candidates {
            println!("  passage {:>2} pr={:.3} span={:.3} -> {}", c.passage, c.relevance, c.span_score, c.answer);
        }
        for v in &ans.votes {
            println!("  vote {:<12} x{} log-weight {:.2}", v.answer, v.count, v.log_weight);
        }
        println!("A: {}  (gold: {})", ans.answer.as_deref().unwrap_or("-"), ex.answers[0]);
    }

    let report = evaluate_mrs(&p, &fx.dataset.examples, &chain, 3, 0.05)?;
    let a = &report.aggregate;
    println!("\nover {} questions: EM {:.3} F1 {:.3}", a.queries, a.em.unwrap_or(0.0), a.f1.unwrap_or(0.0));
    Ok(())
}
