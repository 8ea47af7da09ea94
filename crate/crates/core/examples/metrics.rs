//! Answer and ranking metrics on hand-made predictions.
//!
//!     cargo run --example metrics

use retrieve_read::eval::{exact_match, f1, mrr_at_k, normalize_answer, success_at_k, tally};

fn main() -> anyhow::Result<()> {
    let pairs = [
        ("Denver Broncos", vec!["Denver Broncos"]),
        ("the Broncos", vec!["Denver Broncos", "Broncos"]),
        ("Carolina", vec!["Denver Broncos"]),
    ];
    for (pred, golds) in &pairs {
        println!(
            "{pred:?} vs {golds:?}: normalized {:?}, EM {}, F1 {:.3}",
            normalize_answer(pred),
            exact_match(pred, golds),
            f1(pred, golds)
        );
    }

    let rankings = vec![vec![4, 9, 2], vec![7, 1, 3, 8], vec![5, 6]];
    let relevant = vec![vec![4], vec![3], vec![0]];
    println!("S@1 {:.3}", success_at_k(&rankings, &relevant, 1)?);
    println!("S@5 {:.3}", success_at_k(&rankings, &relevant, 5)?);
    println!("MRR@5 {:.3}", mrr_at_k(&rankings, &relevant, 5)?);

    // Two weak votes for one answer lose to one confident vote at small τ
    // and win at large τ.
    let cands = [("Paris", 0.60), ("Paris", 0.58), ("Lyon", 0.70)];
    for tau in [0.01, 1.0] {
        let votes = tally(cands.iter().copied(), tau);
        println!("τ={tau}: {} wins ({} votes)", votes[0].answer, votes[0].count);
    }
    Ok(())
}
