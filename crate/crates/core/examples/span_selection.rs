//! Picks the best answer span from start and end distributions.
//!
//!     cargo run --example span_selection

use retrieve_read::model::{extract_answer, select_span};
use retrieve_read::text::tokenize;

fn main() -> anyhow::Result<()> {
    let passage = tokenize("The mayor of Kalo is Renvo Belmar , elected in 1999 .");
    let n = passage.len();
    let mut p1 = vec![0.02; n];
    let mut p2 = vec![0.02; n];
    // Mass on "Renvo" as a start and "Belmar" as an end, plus a decoy end
    // before the start that must never be chosen.
    p1[5] = 0.6;
    p2[6] = 0.45;
    p2[3] = 0.5;
    let total1: f64 = p1.iter().sum();
    let total2: f64 = p2.iter().sum();
    p1.iter_mut().for_each(|x| *x /= total1);
    p2.iter_mut().for_each(|x| *x /= total2);

    let span = select_span(&p1, &p2)?;
    println!("span {}..={} score {:.4}", span.start, span.end, span.score);
    println!("answer: {}", extract_answer(&passage, &span)?);
    Ok(())
}
