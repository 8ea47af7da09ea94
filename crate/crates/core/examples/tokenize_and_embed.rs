//! Tokenizes text, writes a word-vector file and embeds a sentence with it.
//!
//!     cargo run --example tokenize_and_embed -- "Where is Paris located?"

use std::fs;

use retrieve_read::text::{tokenize, OovPolicy, VectorTable};

fn main() -> anyhow::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "The \"Eiffel Tower\" (1889) is in Paris, France.".into());
    let seq = tokenize(&text);
    for (tok, (s, e)) in seq.tokens().iter().zip(seq.offsets()) {
        println!("{s:>3}..{e:<3} {tok}");
    }

    // A throwaway three-dimensional table covering a few words.
    let table = VectorTable::from_pairs(
        3,
        [("Paris", vec![1.0, 0.0, 0.0]), ("France", vec![0.0, 1.0, 0.0]), ("is", vec![0.0, 0.0, 1.0])],
    )?;
    let path = std::env::temp_dir().join("rnr-example-vectors.txt");
    let mut buf = Vec::new();
    table.write(&mut buf)?;
    fs::write(&path, buf)?;
    let table = VectorTable::load(&path)?;
    println!("loaded {} vectors of dimension {} from {}", table.len(), table.dim(), path.display());

    let emb = table.embed(&seq);
    let oov = seq.tokens().iter().filter(|t| !table.contains(t)).count();
    println!("embedding is {}x{}; {oov} tokens out of vocabulary", emb.rows(), emb.cols());
    if table.oov_policy() == OovPolicy::Zero {
        println!("out-of-vocabulary tokens embed as zero vectors");
    }
    Ok(())
}
