//! Synthetic texts with known structure, used by the end-to-end checks and
//! the bundled demo.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::corpus::{TokenStream, UnitSequence};
use crate::error::{Error, Result};
use crate::labels::LabelSequence;
use crate::seed::{derive_seed, rng_from_seed, tag};

/// Words `{prefix}000`, `{prefix}001`, ...
pub fn vocabulary(size: usize, prefix: &str) -> Vec<String> {
    let width = size.saturating_sub(1).to_string().len().max(3);
    (0..size).map(|i| format!("{prefix}{i:0width$}")).collect()
}

/// Unnormalized Zipf weights `1 / rank^exponent`.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// An i.i.d. unigram generator.
#[derive(Debug, Clone)]
pub struct UnigramSource {
    words: Vec<String>,
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl UnigramSource {
    pub fn new(words: Vec<String>, weights: &[f64]) -> Result<Self> {
        if words.len() != weights.len() || words.is_empty() {
            return Err(Error::Config("word and weight lists must match and be non-empty".into()));
        }
        let sampler = WeightedIndex::new(weights)
            .map_err(|e| Error::Config(format!("invalid unigram weights: {e}")))?;
        let total: f64 = weights.iter().sum();
        Ok(UnigramSource {
            probs: weights.iter().map(|w| w / total).collect(),
            words,
            sampler,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn tokens(&self, count: usize, source_id: &str, seed: u64) -> TokenStream {
        let mut rng = rng_from_seed(seed);
        TokenStream {
            source_id: source_id.to_string(),
            tokens: (0..count)
                .map(|_| self.words[self.sampler.sample(&mut rng)].clone())
                .collect(),
        }
    }
}

/// Two sources over one vocabulary at total-variation distance `tv`.
///
/// The vocabulary is cut in half; the first source puts mass `(1 + tv) / 2`
/// on the first half and the rest on the second, the second source the
/// reverse. Within each half words follow a Zipf law with `exponent`.
pub fn contrasting_sources(
    vocab_size: usize,
    tv: f64,
    exponent: f64,
) -> Result<(UnigramSource, UnigramSource)> {
    if vocab_size < 2 || !vocab_size.is_multiple_of(2) {
        return Err(Error::Config(format!("vocabulary size must be even and >= 2, got {vocab_size}")));
    }
    if !(0.0..=1.0).contains(&tv) {
        return Err(Error::Config(format!("total variation must be in [0, 1], got {tv}")));
    }
    let half = vocab_size / 2;
    let z = zipf_weights(half, exponent);
    let zsum: f64 = z.iter().sum();
    let heavy = (1.0 + tv) / 2.0;
    let light = 1.0 - heavy;
    let shaped = |first: f64, second: f64| -> Vec<f64> {
        z.iter()
            .map(|w| first * w / zsum)
            .chain(z.iter().map(|w| second * w / zsum))
            .collect()
    };
    let words = vocabulary(vocab_size, "w");
    Ok((
        UnigramSource::new(words.clone(), &shaped(heavy, light))?,
        UnigramSource::new(words, &shaped(light, heavy))?,
    ))
}

/// Cuts a stream at its midpoint into two streams with new ids.
pub fn split_stream(stream: &TokenStream, first_id: &str, second_id: &str) -> (TokenStream, TokenStream) {
    let mid = stream.tokens.len() / 2;
    (
        TokenStream {
            source_id: first_id.to_string(),
            tokens: stream.tokens[..mid].to_vec(),
        },
        TokenStream {
            source_id: second_id.to_string(),
            tokens: stream.tokens[mid..].to_vec(),
        },
    )
}

/// Layout of a single-author text whose topic alternates in blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopicBlockSpec {
    pub units: usize,
    pub unit_length: usize,
    pub block_units: usize,
    /// Probability that a token comes from the block's topic vocabulary
    /// rather than the shared style distribution.
    pub topic_share: f64,
}

/// One source whose units alternate between two topic vocabularies in
/// blocks of `block_units`. The returned labels mark the topic of each unit.
pub fn topic_block_document(
    style: &UnigramSource,
    topics: [&UnigramSource; 2],
    spec: TopicBlockSpec,
    seed: u64,
) -> Result<(UnitSequence, LabelSequence)> {
    if spec.units == 0 || spec.unit_length == 0 || spec.block_units == 0 {
        return Err(Error::Config("topic block sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.topic_share) {
        return Err(Error::Config(format!("topic share must be in [0, 1], got {}", spec.topic_share)));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[tag("topic-mix")]));
    let mut units = Vec::with_capacity(spec.units);
    let mut labels = Vec::with_capacity(spec.units);
    for u in 0..spec.units {
        let topic = (u / spec.block_units) % 2;
        let unit_seed = derive_seed(seed, &[tag("unit"), u as u64]);
        let from_style = style.tokens(spec.unit_length, "", derive_seed(unit_seed, &[0]));
        let from_topic = topics[topic].tokens(spec.unit_length, "", derive_seed(unit_seed, &[1]));
        let unit = (0..spec.unit_length)
            .map(|i| {
                if rng.random_bool(spec.topic_share) {
                    from_topic.tokens[i].clone()
                } else {
                    from_style.tokens[i].clone()
                }
            })
            .collect();
        units.push(unit);
        labels.push(topic as u8);
    }
    Ok((
        UnitSequence {
            unit_length: spec.unit_length,
            origin: vec!["topic-blocks".to_string(); spec.units],
            units,
        },
        LabelSequence::new(labels)?,
    ))
}
