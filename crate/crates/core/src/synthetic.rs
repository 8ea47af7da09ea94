//! Small generated corpora with unambiguous answers, for demos and tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::retriever::{Corpus, PassageRecord};
use crate::text::VectorTable;
use crate::training::{align_answer, Dataset, QuestionExample};

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "tas", "vo", "bel", "dor", "fi", "gan", "hu", "jor", "ki", "lun", "mar", "nes", "pol",
    "qui", "ros", "sel", "tor", "ul", "vin", "wes", "yar", "zel",
];

const REGIONS: &[&str] = &["Norland", "Estmark", "Sudria", "Westfall", "Midvale"];

/// `(id, question, answer, char offset)`.
type Qa = (String, String, String, usize);

/// A generated corpus, its questions and random word vectors covering
/// every token.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub dataset: Dataset,
    pub vectors: VectorTable,
    /// Paragraph text and its questions, in passage order.
    paragraphs: Vec<(String, Vec<Qa>)>,
}

fn fresh_name(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>, syllables: usize) -> String {
    loop {
        let word: String = (0..syllables).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        let mut chars = word.chars();
        let name: String = match chars.next() {
            Some(c) => c.to_uppercase().chain(chars).collect(),
            None => continue,
        };
        if used.insert(name.clone()) {
            return name;
        }
    }
}

impl Fixture {
    /// `passages` city descriptions and `questions` questions about them
    /// (at most three per passage), with `vector_dim`-dimensional vectors.
    pub fn generate(passages: usize, questions: usize, vector_dim: usize, seed: u64) -> Fixture {
        assert!(questions <= 3 * passages, "at most three questions per passage");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used: BTreeSet<String> = REGIONS.iter().map(|s| s.to_string()).collect();
        let mut slots: Vec<(usize, usize)> = (0..passages).flat_map(|p| (0..3).map(move |k| (p, k))).collect();
        slots.shuffle(&mut rng);
        slots.truncate(questions);
        slots.sort_unstable();

        let mut paragraphs = Vec::with_capacity(passages);
        for p in 0..passages {
            let city = fresh_name(&mut rng, &mut used, 2);
            let person = fresh_name(&mut rng, &mut used, 3);
            let product = fresh_name(&mut rng, &mut used, 2).to_lowercase();
            let region = REGIONS[p % REGIONS.len()];
            let text = format!(
                "{city} is a city in {region} . The mayor of {city} is {person} . {city} is famous for its {product} ."
            );
            let qas: Vec<Qa> = slots
                .iter()
                .filter(|(sp, _)| *sp == p)
                .map(|&(_, k)| {
                    let (q, a) = match k {
                        0 => (format!("Who is the mayor of {city} ?"), person.clone()),
                        1 => (format!("What is {city} famous for ?"), product.clone()),
                        _ => (format!("Where is {city} located ?"), region.to_string()),
                    };
                    let byte = text.find(&format!(" {a} ")).expect("answer occurs in passage") + 1;
                    let chars = text[..byte].chars().count();
                    (format!("p{p}q{k}"), q, a, chars)
                })
                .collect();
            paragraphs.push((text, qas));
        }

        let records: Vec<PassageRecord> = paragraphs
            .iter()
            .enumerate()
            .map(|(i, (t, _))| PassageRecord::new(i as u64, 0, t.as_str()))
            .collect();
        let mut examples = Vec::new();
        for (i, (_, qas)) in paragraphs.iter().enumerate() {
            for (id, q, a, chars) in qas {
                let span = align_answer(&records[i].tokens, a, *chars).expect("answers align");
                examples.push(QuestionExample::positive(id.clone(), q, i as u64, span, vec![a.clone()]));
            }
        }
        let corpus = Corpus::new(records).expect("generated passages are valid");

        let mut vocab = BTreeSet::new();
        for p in corpus.iter() {
            vocab.extend(p.tokens.tokens().iter().cloned());
        }
        for ex in &examples {
            vocab.extend(ex.question.tokens().iter().cloned());
        }
        let limit = (3.0 / vector_dim as f64).sqrt();
        let vectors = VectorTable::from_pairs(
            vector_dim,
            vocab.into_iter().map(|w| {
                let v: Vec<f64> = (0..vector_dim)
                    .map(|_| rng.gen_range(-limit..limit) as f32 as f64)
                    .collect();
                (w, v)
            }),
        )
        .expect("vectors have the configured dimension");

        Fixture { dataset: Dataset::new(corpus, examples).expect("spans are valid"), vectors, paragraphs }
    }

    /// The fixture as a SQuAD-1.1-style JSON document.
    pub fn to_squad_json(&self) -> String {
        let paragraphs: Vec<_> = self
            .paragraphs
            .iter()
            .map(|(text, qas)| {
                json!({
                    "context": text,
                    "qas": qas.iter().map(|(id, q, a, c)| json!({
                        "id": id,
                        "question": q,
                        "answers": [{"text": a, "answer_start": c}],
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::to_string_pretty(&json!({
            "version": "1.1",
            "data": [{"title": "Cities", "paragraphs": paragraphs}],
        }))
        .expect("fixture serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::parse_squad;

    #[test]
    fn fixture_shape_and_answers() {
        let f = Fixture::generate(20, 50, 8, 1);
        assert_eq!(f.dataset.corpus.len(), 20);
        assert_eq!(f.dataset.examples.len(), 50);
        for ex in &f.dataset.examples {
            let p = f.dataset.corpus.get(ex.passage).unwrap();
            let (s, e) = ex.span.unwrap();
            assert_eq!(p.tokens.span_text(s, e).unwrap(), ex.answers[0]);
        }
        for p in f.dataset.corpus.iter() {
            assert!(p.tokens.tokens().iter().all(|t| f.vectors.contains(t)));
        }
    }

    #[test]
    fn squad_export_round_trips() {
        let f = Fixture::generate(6, 10, 4, 3);
        let ds = parse_squad(&f.to_squad_json(), "fixture").unwrap();
        assert_eq!(ds.dropped, 0);
        assert_eq!(ds.examples, f.dataset.examples);
    }

    #[test]
    fn generation_is_seeded() {
        let a = Fixture::generate(5, 5, 4, 9);
        let b = Fixture::generate(5, 5, 4, 9);
        assert_eq!(a.to_squad_json(), b.to_squad_json());
        assert_eq!(a.vectors.lookup("is"), b.vectors.lookup("is"));
    }
}
