//! Builds a hashed unigram+bigram TF-IDF index over generated passages and
//! runs a query against it.
//!
//!     cargo run --release --example tfidf_search -- "mayor of Kalo"

use retrieve_read::retriever::TfIdfIndex;
use retrieve_read::synthetic::Fixture;
use retrieve_read::text::tokenize;

fn main() -> anyhow::Result<()> {
    let fx = Fixture::generate(200, 0, 4, 11);
    let corpus = &fx.dataset.corpus;
    let index = TfIdfIndex::build(corpus)?;
    println!("{} passages, {} buckets", index.n_docs(), index.buckets());

    let query = match std::env::args().nth(1) {
        Some(q) => q,
        None => {
            let city = corpus.passages()[42].tokens.tokens()[0].clone();
            format!("Who is the mayor of {city} ?")
        }
    };
    let q = tokenize(&query);
    println!("query: {query}");
    let ranked = index.top_k(q.tokens(), 5);
    if let Some(w) = &ranked.warning {
        println!("warning: {w:?}");
    }
    for (i, hit) in ranked.entries.iter().enumerate() {
        let text = &corpus.get(hit.id).expect("indexed").text;
        println!("{}. [{:.4}] {}: {}", i + 1, hit.score, hit.id, text);
    }

    let first = &corpus.passages()[0];
    let similar = index.similar_passages(first, 3)?;
    println!("passages most like {}: {:?}", first.id, similar.ids());
    Ok(())
}
