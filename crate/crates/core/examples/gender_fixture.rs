//! Regenerates `fixtures/gender_table.json`.
//!
//! `female` and `male` sit 3e-4 apart in dimension 0. Every attribute word
//! lies within 3e-4 of both anchors in dimensions 0 and 1 and shares the
//! anchors' remaining coordinates; the first 30 lie strictly inside, the
//! rest exactly on the boundary. Neutral words are at least 0.05 away.
//!
//! cargo run -p zonofair --example gender_fixture

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonofair::embed::EmbeddingTable;
use zonofair::io::read_word_list;
use zonofair::vocab::Vocab;

const DIM: usize = 8;
const RADIUS: f64 = 3e-4;
const NEUTRAL: [&str; 20] = [
    "person", "works", "doctor", "engineer", "nurse", "teacher", "the", "is", "a", "and",
    "hours", "week", "private", "education", "occupation", "married", "white", "country",
    "kind", "strong",
];

fn main() -> zonofair::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let female = read_word_list(&dir.join("female_words.txt"))?;
    let male = read_word_list(&dir.join("male_words.txt"))?;
    let mut gendered = Vec::new();
    for i in 0..female.len().max(male.len()) {
        gendered.extend(female.get(i).cloned());
        gendered.extend(male.get(i).cloned());
    }
    let mut words: Vec<String> = vec!["female".into(), "male".into()];
    words.extend(gendered.iter().cloned());
    words.extend(NEUTRAL.iter().map(|s| s.to_string()));
    let vocab = Vocab::from_words(words);

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let base: Vec<f64> = (0..DIM).map(|j| if j < 2 { 0.0 } else { rng.random_range(-0.5..0.5) }).collect();
    let mut w = Array2::zeros((vocab.len(), DIM));
    let mut set = |token: &str, row: Vec<f64>| {
        let id = vocab.id(token).expect("token in vocab");
        w.row_mut(id).assign(&ndarray::Array1::from(row));
    };
    set("female", base.clone());
    let mut m = base.clone();
    m[0] = RADIUS;
    set("male", m);
    for (k, word) in gendered.iter().enumerate() {
        let mut row = base.clone();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        if k < 30 {
            row[0] = rng.random_range(0.5e-4..2.5e-4);
            row[1] = sign * rng.random_range(0.0..2e-4);
        } else {
            row[0] = rng.random_range(0.0..RADIUS);
            row[1] = sign * RADIUS;
        }
        set(word, row);
    }
    for word in NEUTRAL {
        let mut row: Vec<f64> = base.iter().map(|b| b + rng.random_range(-0.5..0.5)).collect();
        let j = rng.random_range(0..DIM);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        row[j] = base[j] + sign * rng.random_range(0.05..0.5);
        set(word, row);
    }
    let table = EmbeddingTable::new(vocab, w)?;
    let out = dir.join("gender_table.json");
    table.save(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}
