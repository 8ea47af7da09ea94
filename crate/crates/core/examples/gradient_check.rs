//! Checks reverse-mode gradients of a small network against central
//! differences.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retrieve_read::autodiff::{gradient_check, GraphError, Tensor};
use retrieve_read::model::{forward, Heads, ModelConfig, ModelParams, PairInput};
use retrieve_read::training::{example_loss, LossWeights, Target};

fn main() -> anyhow::Result<()> {
    let (v, d, c, t, j) = (6, 3, 3, 5, 3);
    let mut params = ModelParams::new(ModelConfig::new(v, d, c), 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut random = |rows, cols| Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let input = PairInput {
        question: random(v, j),
        passage: random(v, t),
        exact_match: Tensor::row(&[0.0, 1.0, 0.0, 0.0, 1.0]),
        question_mask: vec![true; j],
        passage_mask: vec![true; t],
    };
    let target = Target { relevant: true, span: Some((1, 2)) };
    let weights = LossWeights::for_batch(1, 1, 1.0)?;
    let layout = params.layout.clone();

    let report = gradient_check(&mut params.store, 7, |g| {
        // Dropout is on; the checker replays the same masks on every pass.
        let state = forward(g, &layout, &input, Heads::Both, 0.2).map_err(|e| GraphError::Invalid {
            op: "forward",
            msg: e.to_string(),
        })?;
        Ok(example_loss(g, &state, &target, &weights)?.expect("positive example has a loss"))
    })?;

    println!("checked {} weights", report.checked);
    println!("max relative error {:.3e}", report.max_rel_error);
    if let Some((name, i)) = &report.worst {
        println!("worst entry {name}[{i}]: analytic {:.6e}, numeric {:.6e}", report.worst_analytic, report.worst_numeric);
    }
    Ok(())
}
