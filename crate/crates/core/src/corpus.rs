//! Corpus loading, normalization, segmentation and commingling.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSequence;
use crate::seed::rng_from_seed;

/// Default Poisson mean for commingling run lengths, in text units.
pub const DEFAULT_LAMBDA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawText {
    pub id: String,
    pub author: String,
    #[serde(default)]
    pub genre_tags: Vec<String>,
    pub body: String,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    author: String,
    #[serde(default)]
    genre_tags: Vec<String>,
    file: PathBuf,
}

/// Reads a JSON manifest of `{id, author, genre_tags, file}` entries.
///
/// Relative `file` paths are resolved against the manifest's directory.
pub fn load_corpus(manifest_path: &Path) -> Result<Vec<RawText>> {
    let raw = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let entries: Vec<ManifestEntry> =
        serde_json::from_str(&raw).map_err(|e| Error::MalformedManifest(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut texts = Vec::with_capacity(entries.len());
    for entry in entries {
        if !seen.insert(entry.id.clone()) {
            return Err(Error::DuplicateId(entry.id));
        }
        let path = if entry.file.is_absolute() {
            entry.file
        } else {
            base.join(entry.file)
        };
        let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        texts.push(RawText {
            id: entry.id,
            author: entry.author,
            genre_tags: entry.genre_tags,
            body,
        });
    }
    Ok(texts)
}

/// Lowercase tokens to drop during preprocessing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLexicon {
    tokens: HashSet<String>,
}

impl EntityLexicon {
    /// Each entry is normalized like body text; multi-word entries contribute
    /// every one of their tokens.
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens = entries
            .into_iter()
            .flat_map(|e| normalize(e.as_ref()))
            .collect();
        EntityLexicon { tokens }
    }

    /// One entry per line, UTF-8.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_entries(raw.lines()))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub source_id: String,
    pub tokens: Vec<String>,
}

fn strip_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Unicode punctuation plus the ASCII symbols that `char::is_ascii_punctuation`
    // reports. Digits are kept.
    RE.get_or_init(|| Regex::new(r"[\p{P}!-/:-@\[-`{-~]").expect("valid regex"))
}

fn normalize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    strip_pattern()
        .replace_all(&lowered, " ")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Lowercases, replaces punctuation with spaces, splits on whitespace and
/// drops lexicon entities.
pub fn preprocess(raw: &RawText, entities: Option<&EntityLexicon>) -> Result<TokenStream> {
    let mut tokens = normalize(&raw.body);
    if let Some(lexicon) = entities {
        tokens.retain(|t| !lexicon.contains(t));
    }
    if tokens.is_empty() {
        return Err(Error::DegenerateInput(format!(
            "text {:?} has no tokens after preprocessing",
            raw.id
        )));
    }
    Ok(TokenStream {
        source_id: raw.id.clone(),
        tokens,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSequence {
    pub unit_length: usize,
    pub units: Vec<Vec<String>>,
    /// Source text id of each unit.
    pub origin: Vec<String>,
}

impl UnitSequence {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// Splits a token stream into consecutive units of exactly `unit_length`
/// tokens; a trailing partial unit is dropped.
pub fn segment(tokens: &TokenStream, unit_length: usize) -> Result<UnitSequence> {
    if unit_length == 0 {
        return Err(Error::Config("unit length must be positive".into()));
    }
    if tokens.tokens.len() < unit_length {
        return Err(Error::InsufficientTokens {
            have: tokens.tokens.len(),
            need: unit_length,
        });
    }
    let units: Vec<Vec<String>> = tokens
        .tokens
        .chunks_exact(unit_length)
        .map(<[String]>::to_vec)
        .collect();
    let origin = vec![tokens.source_id.clone(); units.len()];
    Ok(UnitSequence {
        unit_length,
        units,
        origin,
    })
}

/// Replay information for a commingled document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommingleRecord {
    pub seed: u64,
    pub lambda: f64,
    /// Index in the final document at which each run of the second text starts.
    pub insertion_positions: Vec<usize>,
    pub run_lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommingledDocument {
    pub units: UnitSequence,
    /// 0 for units of the first text, 1 for units of the second.
    pub truth: LabelSequence,
    pub record: CommingleRecord,
}

fn draw_run_lengths<R: Rng>(total: usize, lambda: f64, rng: &mut R) -> Result<Vec<usize>> {
    let poisson =
        Poisson::new(lambda).map_err(|e| Error::Config(format!("invalid lambda {lambda}: {e}")))?;
    let mut runs = Vec::new();
    let mut left = total;
    while left > 0 {
        let len = loop {
            let k: f64 = poisson.sample(rng);
            if k >= 1.0 {
                break k as usize;
            }
        };
        let len = len.min(left);
        runs.push(len);
        left -= len;
    }
    Ok(runs)
}

/// Interleaves runs of `b`'s units into `a`.
///
/// `b` is cut, in order, into runs whose lengths are Poisson(`lambda`) draws
/// redrawn on zero (the final run is clipped to what is left). Each run gets
/// a gap of `a` (one of `|a| + 1` slots) drawn uniformly, distinct gaps
/// whenever there are enough of them; runs are placed in gap order so both
/// sources keep their internal order.
pub fn commingle(
    a: &UnitSequence,
    b: &UnitSequence,
    lambda: f64,
    seed: u64,
) -> Result<CommingledDocument> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("cannot commingle an empty unit sequence".into()));
    }
    if a.unit_length != b.unit_length {
        return Err(Error::Config(format!(
            "unit length mismatch: {} vs {}",
            a.unit_length, b.unit_length
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }

    let mut rng = rng_from_seed(seed);
    let run_lengths = draw_run_lengths(b.len(), lambda, &mut rng)?;

    let slots = a.len() + 1;
    let mut gaps: Vec<usize> = if run_lengths.len() <= slots {
        index::sample(&mut rng, slots, run_lengths.len()).into_vec()
    } else {
        (0..run_lengths.len())
            .map(|_| rng.random_range(0..slots))
            .collect()
    };
    gaps.sort_unstable();

    let total = a.len() + b.len();
    let mut units = Vec::with_capacity(total);
    let mut origin = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let mut insertion_positions = Vec::with_capacity(run_lengths.len());

    let mut next_a = 0;
    let mut next_b = 0;
    for (&gap, &run) in gaps.iter().zip(&run_lengths) {
        while next_a < gap {
            units.push(a.units[next_a].clone());
            origin.push(a.origin[next_a].clone());
            truth.push(0);
            next_a += 1;
        }
        insertion_positions.push(units.len());
        for _ in 0..run {
            units.push(b.units[next_b].clone());
            origin.push(b.origin[next_b].clone());
            truth.push(1);
            next_b += 1;
        }
    }
    while next_a < a.len() {
        units.push(a.units[next_a].clone());
        origin.push(a.origin[next_a].clone());
        truth.push(0);
        next_a += 1;
    }

    Ok(CommingledDocument {
        units: UnitSequence {
            unit_length: a.unit_length,
            units,
            origin,
        },
        truth: LabelSequence::new(truth)?,
        record: CommingleRecord {
            seed,
            lambda,
            insertion_positions,
            run_lengths,
        },
    })
}

/// Rebuilds a commingled document from its record without touching the RNG.
pub fn replay_commingle(
    a: &UnitSequence,
    b: &UnitSequence,
    record: &CommingleRecord,
) -> Result<CommingledDocument> {
    if record.insertion_positions.len() != record.run_lengths.len()
        || record.run_lengths.iter().sum::<usize>() != b.len()
    {
        return Err(Error::Config("commingling record does not match input".into()));
    }
    let total = a.len() + b.len();
    let mut truth = vec![0u8; total];
    for (&start, &run) in record.insertion_positions.iter().zip(&record.run_lengths) {
        if start + run > total {
            return Err(Error::Config("commingling record out of range".into()));
        }
        truth[start..start + run].iter_mut().for_each(|t| *t = 1);
    }
    let (mut ia, mut ib) = (a.units.iter().zip(&a.origin), b.units.iter().zip(&b.origin));
    let mut units = Vec::with_capacity(total);
    let mut origin = Vec::with_capacity(total);
    for &t in &truth {
        let (u, o) = if t == 1 { ib.next() } else { ia.next() }
            .ok_or_else(|| Error::Config("commingling record does not match input".into()))?;
        units.push(u.clone());
        origin.push(o.clone());
    }
    Ok(CommingledDocument {
        units: UnitSequence {
            unit_length: a.unit_length,
            units,
            origin,
        },
        truth: LabelSequence::new(truth)?,
        record: record.clone(),
    })
}

/// Distinct source ids in a unit sequence, sorted.
pub fn sources(units: &UnitSequence) -> BTreeSet<&str> {
    units.origin.iter().map(String::as_str).collect()
}
