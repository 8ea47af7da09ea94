mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retrieve_read::autodiff::{gradient_check, Graph, ParamStore, Tensor};
use retrieve_read::model::{forward, Heads, Hyperparams, ModelConfig, ModelParams, PairInput};
use retrieve_read::retriever::TfIdfIndex;
use retrieve_read::synthetic::Fixture;
use retrieve_read::training::{
    ema_update, example_loss, joint_loss, make_negative, sgd_momentum_step, Batch, ExampleOutput, LossWeights,
    QuestionExample, Target, TrainMode, Trainer,
};

use common::{random_corpus, OracleTfIdf};

fn small_hyper() -> Hyperparams {
    Hyperparams {
        hidden: 4,
        context: 4,
        dropout: 0.0,
        lr: 0.1,
        batch_positives: 6,
        batch_negatives: 6,
        ..Hyperparams::default()
    }
}

#[test]
fn negatives_come_from_the_oracle_pool() {
    let corpus = random_corpus(20, 80, 31);
    let index = TfIdfIndex::build(&corpus).unwrap();
    let oracle = OracleTfIdf::new(&corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ids: Vec<u64> = corpus.iter().map(|p| p.id).collect();
    let mut counts: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for i in 0..10_000 {
        let id = ids[i % ids.len()];
        let pos = QuestionExample::positive("q", "w1 w2", id, (0, 0), vec!["x".into()]);
        let neg = make_negative(&pos, &corpus, &index, 15, &mut rng).unwrap().unwrap();
        assert!(!neg.relevant && neg.span.is_none());
        assert_eq!(neg.question, pos.question);
        assert_ne!(neg.passage, id);
        assert!(oracle.similar(&corpus, id, 15).contains(&neg.passage), "{} not in pool of {id}", neg.passage);
        *counts.entry((id, neg.passage)).or_insert(0) += 1;
    }
    // 500 draws per passage over 15 candidates: every candidate shows up.
    assert_eq!(counts.len(), 20 * 15);
    assert!(counts.values().all(|&c| c > 10));
}

#[test]
fn single_passage_corpus_has_no_negative() {
    let corpus = random_corpus(1, 10, 1);
    let index = TfIdfIndex::build(&corpus).unwrap();
    let id = corpus.passages()[0].id;
    let pos = QuestionExample::positive("q", "w1", id, (0, 0), vec!["x".into()]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(make_negative(&pos, &corpus, &index, 15, &mut rng).unwrap().is_none());
}

fn fixed_batch(fx: &Fixture, index: &TfIdfIndex) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut examples: Vec<QuestionExample> = fx.dataset.examples[..4].to_vec();
    for p in &fx.dataset.examples[..4] {
        examples.push(make_negative(p, &fx.dataset.corpus, index, 5, &mut rng).unwrap().unwrap());
    }
    Batch { examples }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let fx = Fixture::generate(6, 10, 8, 3);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let batch = fixed_batch(&fx, &index);
    let params = ModelParams::new(ModelConfig::new(8, 4, 4), 1);
    let mut t = Trainer::new(params, small_hyper(), TrainMode::Mtl, 1).unwrap();
    let losses: Vec<f64> = (0..6).map(|_| t.step(&batch, &fx.dataset.corpus, &fx.vectors, 0.1).unwrap()).collect();
    assert!(losses[5] < losses[0], "{losses:?}");
}

#[test]
fn graph_loss_matches_the_numeric_objective() {
    let fx = Fixture::generate(6, 10, 8, 3);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let batch = fixed_batch(&fx, &index);
    let params = ModelParams::new(ModelConfig::new(8, 4, 4), 2);
    let weights = LossWeights::for_batch(batch.n(), batch.n_pos(), 0.7).unwrap();
    let mut outputs = Vec::new();
    let mut targets = Vec::new();
    let mut graph_total = 0.0;
    for ex in &batch.examples {
        let passage = fx.dataset.corpus.get(ex.passage).unwrap();
        let input = PairInput::new(&ex.question, &passage.tokens, &fx.vectors).unwrap();
        let mut g = Graph::new(&params.store);
        let state = forward(&mut g, &params.layout, &input, Heads::Both, 0.0).unwrap();
        let target = Target { relevant: ex.relevant, span: ex.span };
        let rc = state.rc.unwrap();
        outputs.push(ExampleOutput {
            p1: g.value(rc.p1).data().to_vec(),
            p2: g.value(rc.p2).data().to_vec(),
            pr: g.value(state.ir.unwrap().pr).item(),
        });
        targets.push(target);
        let l = example_loss(&mut g, &state, &target, &weights).unwrap().unwrap();
        graph_total += g.value(l).item();
    }
    let numeric = joint_loss(&outputs, &targets, 0.7).unwrap();
    assert!((graph_total - numeric).abs() < 1e-12, "{graph_total} vs {numeric}");
}

#[test]
fn batch_gradient_matches_finite_differences() {
    let fx = Fixture::generate(4, 4, 4, 9);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pos = fx.dataset.examples[0].clone();
    let neg = make_negative(&pos, &fx.dataset.corpus, &index, 3, &mut rng).unwrap().unwrap();
    let mut params = ModelParams::new(ModelConfig::new(4, 2, 2), 4);
    let weights = LossWeights::for_batch(2, 1, 1.0).unwrap();
    let layout = params.layout.clone();
    let inputs: Vec<(PairInput, Target)> = [&pos, &neg]
        .iter()
        .map(|ex| {
            let p = fx.dataset.corpus.get(ex.passage).unwrap();
            (
                PairInput::new(&ex.question, &p.tokens, &fx.vectors).unwrap(),
                Target { relevant: ex.relevant, span: ex.span },
            )
        })
        .collect();
    let report = gradient_check(&mut params.store, 3, |g| {
        let mut total = None;
        for (input, target) in &inputs {
            let heads = if target.relevant { Heads::Both } else { Heads::Retrieval };
            let state = forward(g, &layout, input, heads, 0.2).unwrap();
            let l = example_loss(g, &state, target, &weights)?.unwrap();
            total = Some(match total {
                None => l,
                Some(a) => g.add(a, l)?,
            });
        }
        Ok(total.unwrap())
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn gradients_do_not_depend_on_thread_count() {
    let fx = Fixture::generate(6, 12, 8, 3);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let params = ModelParams::new(ModelConfig::new(8, 4, 4), 1);
    let hyper = Hyperparams { dropout: 0.2, batch_positives: 12, batch_negatives: 12, ..small_hyper() };
    let t = Trainer::new(params, hyper, TrainMode::Mtl, 5).unwrap();
    let (batches, _) = t.epoch_batches(&fx.dataset, &index, 1).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| t.batch_gradients(&batches[0], &fx.dataset.corpus, &fx.vectors, 11).unwrap())
    };
    let (l1, g1) = run(1);
    let (l4, g4) = run(4);
    assert_eq!(l1.to_bits(), l4.to_bits());
    assert_eq!(g1, g4);
}

#[test]
fn stl_rc_batches_have_no_negatives() {
    let fx = Fixture::generate(6, 12, 8, 3);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let t = Trainer::new(ModelParams::new(ModelConfig::new(8, 4, 4), 1), small_hyper(), TrainMode::StlRc, 5).unwrap();
    let (batches, _) = t.epoch_batches(&fx.dataset, &index, 1).unwrap();
    assert!(batches.iter().all(|b| b.n() == b.n_pos()));
    let t = Trainer::new(ModelParams::new(ModelConfig::new(8, 4, 4), 1), small_hyper(), TrainMode::Mtl, 5).unwrap();
    let (batches, _) = t.epoch_batches(&fx.dataset, &index, 1).unwrap();
    assert_eq!(batches.iter().map(|b| b.n_pos()).sum::<usize>(), 12);
    assert!(batches.iter().all(|b| b.n() == 2 * b.n_pos()));
}

#[test]
fn training_is_reproducible() {
    let fx = Fixture::generate(6, 12, 8, 3);
    let index = TfIdfIndex::build(&fx.dataset.corpus).unwrap();
    let run = || {
        let hyper = Hyperparams { dropout: 0.2, ..small_hyper() };
        let mut t = Trainer::new(ModelParams::new(ModelConfig::new(8, 4, 4), 1), hyper, TrainMode::Mtl, 5).unwrap();
        t.run_epoch(&fx.dataset, &index, &fx.vectors).unwrap();
        t.run_epoch(&fx.dataset, &index, &fx.vectors).unwrap();
        t.ema
    };
    assert_eq!(run().tensors(), run().tensors());
}

#[test]
fn momentum_matches_hand_recurrence() {
    let mut p = ParamStore::new();
    p.insert("w", Tensor::row(&[1.0]));
    let mut v = p.zeros_like();
    let grads = [3.0, -1.0, 0.5];
    let (lr, mu) = (0.1, 0.9);
    let (mut w, mut vel) = (1.0, 0.0);
    for g in grads {
        sgd_momentum_step(&mut p, &[Tensor::row(&[g])], &mut v, lr, mu).unwrap();
        vel = mu * vel + g;
        w -= lr * vel;
        assert!((p.tensors()[0].item() - w).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn ema_is_a_convex_combination(
        old in prop::collection::vec(-10.0f64..10.0, 1..20),
        shift in -10.0f64..10.0,
        decay in 0.0f64..=1.0,
    ) {
        let new: Vec<f64> = old.iter().map(|x| x + shift).collect();
        let mut shadow = ParamStore::new();
        shadow.insert("w", Tensor::row(&old));
        let mut params = ParamStore::new();
        params.insert("w", Tensor::row(&new));
        ema_update(&mut shadow, &params, decay);
        for ((s, o), n) in shadow.tensors()[0].data().iter().zip(&old).zip(&new) {
            prop_assert!(*s >= o.min(*n) - 1e-12 && *s <= o.max(*n) + 1e-12);
            prop_assert!((s - (decay * o + (1.0 - decay) * n)).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_nonnegative_and_ignores_negative_spans(
        pr in 0.0f64..=1.0,
        p1 in prop::collection::vec(0.01f64..1.0, 3),
        p2 in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<f64>>() };
        let pos = ExampleOutput { p1: vec![0.2, 0.5, 0.3], p2: vec![0.1, 0.6, 0.3], pr: 0.8 };
        let neg = ExampleOutput { p1: norm(&p1), p2: norm(&p2), pr };
        let flat = ExampleOutput { p1: vec![1.0 / 3.0; 3], p2: vec![1.0 / 3.0; 3], pr };
        let t = [Target { relevant: true, span: Some((1, 2)) }, Target { relevant: false, span: None }];
        let a = joint_loss(&[pos.clone(), neg], &t, 1.0).unwrap();
        let b = joint_loss(&[pos, flat], &t, 1.0).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert_eq!(a, b);
    }
}
