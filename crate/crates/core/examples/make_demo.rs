//! Writes the synthetic demo corpus: two texts by one generator and one by a
//! contrasting generator, dressed up as sentences with a recurring name.
//!
//! ```text
//! cargo run -p seqstyle --example make_demo -- demo/corpus
//! ```

use std::fs;
use std::path::PathBuf;

use rand::Rng;
use seqstyle::seed::{derive_seed, rng_from_seed, tag};
use seqstyle::synth::contrasting_sources;

const TOKENS: usize = 6000;
const SENTENCE: usize = 14;

fn prose(tokens: &[String], name: &str, seed: u64) -> String {
    let mut rng = rng_from_seed(seed);
    let mut out = String::new();
    let mut capital = true;
    for (i, sentence) in tokens.chunks(SENTENCE).enumerate() {
        let mut words: Vec<String> = sentence.to_vec();
        if rng.random_bool(0.3) {
            words.insert(rng.random_range(0..words.len()), name.to_string());
        }
        if capital {
            words[0][..1].make_ascii_uppercase();
        }
        out.push_str(&words.join(" "));
        let comma = rng.random_bool(0.2) && i % 8 != 7;
        out.push_str(if comma { ", " } else { ". " });
        capital = !comma;
        if i % 8 == 7 {
            out.push_str("\n\n");
        }
    }
    out.trim_end().to_string() + "\n"
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo/corpus".into()));
    fs::create_dir_all(&dir).expect("create output directory");
    let (north, south) = contrasting_sources(300, 0.4, 1.1).expect("valid sources");
    let texts = [
        ("north_a", &north, "Ansel"),
        ("north_b", &north, "Ansel"),
        ("south", &south, "Brisa"),
    ];
    for (id, source, name) in texts {
        let seed = derive_seed(2024, &[tag(id)]);
        let stream = source.tokens(TOKENS, id, seed);
        let body = prose(&stream.tokens, name, derive_seed(seed, &[tag("prose")]));
        fs::write(dir.join(format!("{id}.txt")), body).expect("write text");
    }
    println!("demo corpus written to {}", dir.display());
}
