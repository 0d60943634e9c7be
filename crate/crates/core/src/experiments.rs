//! Grid orchestration: per-cell batch subsampling, classification,
//! surrogate testing and FDR aggregation.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{cosine_classify, gi_classify, two_means, GI_ROUNDS, GI_SUBSAMPLE_RATIO};
use crate::corpus::{
    commingle, load_corpus, preprocess, segment, CommingleRecord, CommingledDocument,
    EntityLexicon, TokenStream, DEFAULT_LAMBDA,
};
use crate::error::{Error, Result};
use crate::features::{
    count_matrix, ranked_features, read_matrix, tfidf, zscore, FeatureMatrix, FeatureMode,
    FeatureSpec, MatrixKind, Vocabulary,
};
use crate::labels::LabelSequence;
use crate::nullmodel::{bh_fdr, mcc, normalized_mcc, p_value, NullSampler, DEFAULT_NULL_DRAWS};
use crate::seed::{derive_seed, rng_from_seed, tag};

pub const DEFAULT_FRACTION: f64 = 0.2;
pub const DEFAULT_BATCHES: usize = 100;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
/// Repairs larger than this are flagged in reports.
pub const REPAIR_FLAG_THRESHOLD: f64 = 1e-8;
/// Smallest subsample a batch may classify.
pub const MIN_BATCH_UNITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    Tfidf,
    Zscore,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Kmeans,
    Gi,
    Cosine,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrScope {
    /// Adjust within each cell's batch p-values.
    #[default]
    PerCell,
    /// Adjust over every batch p-value of the grid at once.
    Global,
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}
fn default_batches() -> usize {
    DEFAULT_BATCHES
}
fn default_null_draws() -> usize {
    DEFAULT_NULL_DRAWS
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_gi_rounds() -> usize {
    GI_ROUNDS
}
fn default_gi_ratio() -> f64 {
    GI_SUBSAMPLE_RATIO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Text ids; the first text is label 0.
    pub pair: (String, String),
    pub embedding: Embedding,
    pub classifier: Classifier,
    pub mode: FeatureMode,
    /// n-gram or k-mer orders.
    #[serde(rename = "n", default)]
    pub orders: Vec<usize>,
    pub unit_lengths: Vec<usize>,
    #[serde(rename = "f", default)]
    pub feature_counts: Vec<usize>,
    /// Subsample fraction for k-means, train fraction for GI and cosine.
    #[serde(default = "default_fraction")]
    pub c: f64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_null_draws")]
    pub null_draws: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub genre_differs: Option<bool>,
    #[serde(default)]
    pub fdr_scope: FdrScope,
    #[serde(default = "default_gi_rounds")]
    pub gi_rounds: usize,
    #[serde(default = "default_gi_ratio")]
    pub gi_ratio: f64,
    /// Corpus manifest; relative paths resolve against the config file.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub entities: Option<PathBuf>,
    /// Interchange files keyed by text id, then unit length.
    #[serde(default)]
    pub external: BTreeMap<String, BTreeMap<usize, PathBuf>>,
}

impl ExperimentConfig {
    /// Config with defaults for everything but the grid.
    pub fn new(
        pair: (String, String),
        embedding: Embedding,
        classifier: Classifier,
        mode: FeatureMode,
        orders: Vec<usize>,
        unit_lengths: Vec<usize>,
        feature_counts: Vec<usize>,
    ) -> Self {
        ExperimentConfig {
            pair,
            embedding,
            classifier,
            mode,
            orders,
            unit_lengths,
            feature_counts,
            c: DEFAULT_FRACTION,
            batches: DEFAULT_BATCHES,
            null_draws: DEFAULT_NULL_DRAWS,
            lambda: DEFAULT_LAMBDA,
            master_seed: 0,
            genre_differs: None,
            fdr_scope: FdrScope::PerCell,
            gi_rounds: GI_ROUNDS,
            gi_ratio: GI_SUBSAMPLE_RATIO,
            manifest: None,
            entities: None,
            external: BTreeMap::new(),
        }
    }

    pub fn pair_id(&self) -> String {
        format!("{}__{}", self.pair.0, self.pair.1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.pair.0 == self.pair.1 {
            return fail(format!("pair names the same text twice: {}", self.pair.0));
        }
        if self.unit_lengths.is_empty() {
            return fail("unit_lengths is empty".into());
        }
        if self.unit_lengths.contains(&0) {
            return fail("unit lengths must be positive".into());
        }
        if self.embedding == Embedding::External {
            for id in [&self.pair.0, &self.pair.1] {
                for l in &self.unit_lengths {
                    if self.external.get(id).and_then(|m| m.get(l)).is_none() {
                        return fail(format!("no external embedding for text {id} at unit length {l}"));
                    }
                }
            }
        } else {
            if self.orders.is_empty() {
                return fail("n is empty".into());
            }
            if self.feature_counts.is_empty() {
                return fail("f is empty".into());
            }
            for &n in &self.orders {
                for &f in &self.feature_counts {
                    FeatureSpec::new(self.mode, n, f)?;
                }
            }
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return fail(format!("c must be in (0, 1], got {}", self.c));
        }
        if self.batches == 0 {
            return fail("batches must be at least 1".into());
        }
        if self.null_draws == 0 {
            return fail("null_draws must be at least 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.classifier == Classifier::Gi {
            if self.gi_rounds == 0 {
                return fail("gi_rounds must be at least 1".into());
            }
            if !(self.gi_ratio > 0.0 && self.gi_ratio <= 1.0) {
                return fail(format!("gi_ratio must be in (0, 1], got {}", self.gi_ratio));
            }
        }
        Ok(())
    }

    /// Grid cells in canonical order (n, then unit length, then f).
    /// External embeddings have a single cell per unit length with n = 0
    /// and f taken from the file.
    pub fn cell_keys(&self) -> Vec<CellKey> {
        let mut keys = Vec::new();
        if self.embedding == Embedding::External {
            for &l in &self.unit_lengths {
                keys.push(CellKey { n: 0, unit_length: l, f: 0 });
            }
        } else {
            for &n in &self.orders {
                for &l in &self.unit_lengths {
                    for &f in &self.feature_counts {
                        keys.push(CellKey { n, unit_length: l, f });
                    }
                }
            }
        }
        keys.sort();
        keys.dedup();
        keys
    }

    fn params(&self) -> CellParams {
        CellParams {
            classifier: self.classifier,
            c: self.c,
            batches: self.batches,
            null_draws: self.null_draws,
            gi_rounds: self.gi_rounds,
            gi_ratio: self.gi_ratio,
        }
    }

    fn cell_seed(&self, key: CellKey) -> u64 {
        derive_seed(
            self.master_seed,
            &[
                tag("cell"),
                tag(self.mode.as_str()),
                key.n as u64,
                key.unit_length as u64,
                key.f as u64,
                tag(embedding_name(self.embedding)),
                tag(classifier_name(self.classifier)),
            ],
        )
    }
}

pub fn embedding_name(e: Embedding) -> &'static str {
    match e {
        Embedding::Tfidf => "tfidf",
        Embedding::Zscore => "zscore",
        Embedding::External => "external",
    }
}

pub fn classifier_name(c: Classifier) -> &'static str {
    match c {
        Classifier::Kmeans => "kmeans",
        Classifier::Gi => "gi",
        Classifier::Cosine => "cosine",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub n: usize,
    pub unit_length: usize,
    pub f: usize,
}

/// Per-cell knobs shared by every batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub classifier: Classifier,
    pub c: f64,
    pub batches: usize,
    pub null_draws: usize,
    pub gi_rounds: usize,
    pub gi_ratio: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        CellParams {
            classifier: Classifier::Kmeans,
            c: DEFAULT_FRACTION,
            batches: DEFAULT_BATCHES,
            null_draws: DEFAULT_NULL_DRAWS,
            gi_rounds: GI_ROUNDS,
            gi_ratio: GI_SUBSAMPLE_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mean_mcc_norm: Option<f64>,
    pub mean_p_fdr: Option<f64>,
    pub wilson_hi_max: Option<f64>,
    pub significant: bool,
    pub batch_count: usize,
    pub repair_max: Option<f64>,
    pub repair_flag: bool,
    /// Reason the cell could not be evaluated.
    pub skipped: Option<String>,
}

impl CellResult {
    pub fn skipped(reason: impl Into<String>) -> Self {
        CellResult {
            mean_mcc_norm: None,
            mean_p_fdr: None,
            wilson_hi_max: None,
            significant: false,
            batch_count: 0,
            repair_max: None,
            repair_flag: false,
            skipped: Some(reason.into()),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

/// Raw per-batch statistics of one cell, before FDR adjustment.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub scores: Vec<f64>,
    pub p_values: Vec<f64>,
    pub wilson_hi: Vec<f64>,
    pub repairs: Vec<f64>,
}

impl BatchStats {
    /// Aggregates with already adjusted p-values.
    pub fn finish(&self, adjusted: &[f64]) -> CellResult {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mean_p = mean(adjusted);
        let repair_max = self.repairs.iter().copied().fold(0.0, f64::max);
        CellResult {
            mean_mcc_norm: Some(mean(&self.scores)),
            mean_p_fdr: Some(mean_p),
            wilson_hi_max: Some(self.wilson_hi.iter().copied().fold(0.0, f64::max)),
            significant: mean_p < SIGNIFICANCE_LEVEL,
            batch_count: self.scores.len(),
            repair_max: Some(repair_max),
            repair_flag: repair_max > REPAIR_FLAG_THRESHOLD,
            skipped: None,
        }
    }
}

/// Errors that make a cell infeasible rather than the run broken.
pub fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateClustering
            | Error::DegenerateGeometry(_)
            | Error::InsufficientData(_)
            | Error::InsufficientTokens { .. }
            | Error::DegenerateInput(_)
    )
}

/// Draws `floor(c * min(m0, m1))` units from each source without
/// replacement and returns their union in ascending order.
pub fn subsample_units(labels: &LabelSequence, c: f64, seed: u64) -> Result<Vec<usize>> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Config(format!("c must be in (0, 1], got {c}")));
    }
    let pos0 = labels.positions(0);
    let pos1 = labels.positions(1);
    let per_source = per_source_count(pos0.len(), pos1.len(), c);
    if 2 * per_source < MIN_BATCH_UNITS {
        return Err(Error::InsufficientData(format!(
            "subsample of {} units is below {MIN_BATCH_UNITS}",
            2 * per_source
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, pos0.len(), per_source)
        .into_iter()
        .map(|i| pos0[i])
        .collect();
    picked.extend(
        index::sample(&mut rng, pos1.len(), per_source)
            .into_iter()
            .map(|i| pos1[i]),
    );
    picked.sort_unstable();
    Ok(picked)
}

fn per_source_count(m0: usize, m1: usize, c: f64) -> usize {
    // the small offset keeps products like 0.29 * 100 from flooring to 28
    ((c * m0.min(m1) as f64) + 1e-9).floor() as usize
}

/// Indices of `0..m` not in the ascending list `taken`.
fn complement_indices(m: usize, taken: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(m.saturating_sub(taken.len()));
    let mut t = taken.iter().peekable();
    for i in 0..m {
        if t.peek() == Some(&&i) {
            t.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Train/test split for the supervised classifiers: training units are a
/// per-source subsample, the test set is every other unit in order.
pub fn train_test_split(labels: &LabelSequence, c: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let train = subsample_units(labels, c, seed)?;
    let test = complement_indices(labels.len(), &train);
    if test.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} test units remain after training",
            test.len()
        )));
    }
    Ok((train, test))
}

struct BatchOutcome {
    score: f64,
    p_value: f64,
    wilson_hi: f64,
    repair: f64,
}

fn run_batch(
    matrix: &FeatureMatrix,
    truth: &LabelSequence,
    params: &CellParams,
    cell_seed: u64,
    batch: usize,
) -> Result<BatchOutcome> {
    let b = batch as u64;
    let split_seed = derive_seed(cell_seed, &[tag("subsample"), b]);
    let classify_seed = derive_seed(cell_seed, &[tag("classify"), b]);
    let null_seed = derive_seed(cell_seed, &[tag("null"), b]);

    let (predicted, reference) = match params.classifier {
        Classifier::Kmeans => {
            let idx = subsample_units(truth, params.c, split_seed)?;
            let predicted = two_means(&matrix.select_rows(&idx), classify_seed)?;
            (predicted, truth.select(&idx))
        }
        Classifier::Gi | Classifier::Cosine => {
            let (train, test) = train_test_split(truth, params.c, split_seed)?;
            let train_m = matrix.select_rows(&train);
            let test_m = matrix.select_rows(&test);
            let train_l = truth.select(&train);
            let predicted = if params.classifier == Classifier::Gi {
                gi_classify(
                    &train_m,
                    &train_l,
                    &test_m,
                    params.gi_rounds,
                    params.gi_ratio,
                    classify_seed,
                )?
            } else {
                cosine_classify(&train_m, &train_l, &test_m)?
            };
            (predicted, truth.select(&test))
        }
    };

    let sampler = NullSampler::fit(&predicted)?;
    let test = p_value(&predicted, &reference, &sampler, params.null_draws, null_seed)?;
    debug_assert_eq!(
        test.observed_mcc_norm,
        normalized_mcc(mcc(&predicted, &reference)?)
    );
    Ok(BatchOutcome {
        score: test.observed_mcc_norm,
        p_value: test.p_value,
        wilson_hi: test.wilson_hi,
        repair: sampler.repair_log(),
    })
}

/// Runs every batch of one cell. Any infeasible batch makes the whole cell
/// infeasible; that surfaces as a skippable error.
pub fn run_cell_batches(
    matrix: &FeatureMatrix,
    truth: &LabelSequence,
    params: &CellParams,
    cell_seed: u64,
) -> Result<BatchStats> {
    if matrix.nrows() != truth.len() {
        return Err(Error::Contract(format!(
            "{} matrix rows for {} labels",
            matrix.nrows(),
            truth.len()
        )));
    }
    if params.batches == 0 {
        return Err(Error::Config("batches must be at least 1".into()));
    }
    let outcomes: Vec<BatchOutcome> = (0..params.batches)
        .into_par_iter()
        .map(|b| run_batch(matrix, truth, params, cell_seed, b))
        .collect::<Result<_>>()?;
    Ok(BatchStats {
        scores: outcomes.iter().map(|o| o.score).collect(),
        p_values: outcomes.iter().map(|o| o.p_value).collect(),
        wilson_hi: outcomes.iter().map(|o| o.wilson_hi).collect(),
        repairs: outcomes.iter().map(|o| o.repair).collect(),
    })
}

/// One cell with per-cell FDR; infeasible cells come back skipped.
pub fn run_cell(
    matrix: &FeatureMatrix,
    truth: &LabelSequence,
    params: &CellParams,
    cell_seed: u64,
) -> Result<CellResult> {
    match run_cell_batches(matrix, truth, params, cell_seed) {
        Ok(stats) => Ok(stats.finish(&bh_fdr(&stats.p_values)?)),
        Err(e) if is_skippable(&e) => Ok(CellResult::skipped(e.to_string())),
        Err(e) => Err(e),
    }
}

/// The two texts of a pair after preprocessing.
#[derive(Debug, Clone)]
pub struct PairInput {
    pub first: TokenStream,
    pub second: TokenStream,
    pub same_author: Option<bool>,
    /// External matrices keyed by unit length, one per text.
    pub external: BTreeMap<usize, (FeatureMatrix, FeatureMatrix)>,
}

impl PairInput {
    pub fn new(first: TokenStream, second: TokenStream) -> Self {
        PairInput {
            first,
            second,
            same_author: None,
            external: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceMap {
    pub pair_id: String,
    pub mode: String,
    pub embedding: Embedding,
    pub classifier: Classifier,
    pub same_author: Option<bool>,
    pub genre_differs: Option<bool>,
    pub cells: BTreeMap<CellKey, CellResult>,
    /// Commingling replay record per unit length.
    pub commingling: BTreeMap<usize, CommingleRecord>,
}

impl SignificanceMap {
    pub fn evaluated(&self) -> impl Iterator<Item = (&CellKey, &CellResult)> {
        self.cells.iter().filter(|(_, c)| !c.is_skipped())
    }
}

/// Loads the pair named by `config` from its manifest (and external files).
pub fn load_pair(config: &ExperimentConfig, base: &std::path::Path) -> Result<PairInput> {
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    let manifest = config
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("config has no manifest".into()))?;
    let texts = load_corpus(&resolve(manifest))?;
    let lexicon = config
        .entities
        .as_ref()
        .map(|p| EntityLexicon::load(&resolve(p)))
        .transpose()?;
    let find = |id: &str| {
        texts
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("text {id:?} is not in the manifest")))
    };
    let a = find(&config.pair.0)?;
    let b = find(&config.pair.1)?;
    let mut input = PairInput::new(
        preprocess(a, lexicon.as_ref())?,
        preprocess(b, lexicon.as_ref())?,
    );
    input.same_author = Some(a.author == b.author);
    if config.embedding == Embedding::External {
        for &l in &config.unit_lengths {
            let load = |id: &str| -> Result<FeatureMatrix> {
                let path = config
                    .external
                    .get(id)
                    .and_then(|m| m.get(&l))
                    .ok_or_else(|| Error::Config(format!("no external embedding for {id} at {l}")))?;
                read_matrix(&resolve(path))
            };
            input.external.insert(l, (load(&a.id)?, load(&b.id)?));
        }
    }
    Ok(input)
}

/// Arranges per-source rows in commingled order.
fn commingled_rows(doc: &CommingledDocument, a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    let counts = [doc.truth.len() - doc.truth.count_ones(), doc.truth.count_ones()];
    for (m, want) in [(a, counts[0]), (b, counts[1])] {
        if m.nrows() != want {
            return Err(Error::Format(format!(
                "external matrix for {} has {} rows, expected {want} units",
                m.source,
                m.nrows()
            )));
        }
        if m.unit_length != 0 && m.unit_length != doc.units.unit_length {
            return Err(Error::Format(format!(
                "external matrix for {} has unit length {}, expected {}",
                m.source, m.unit_length, doc.units.unit_length
            )));
        }
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Format("external matrices differ in width".into()));
    }
    let mut next = [0usize, 0usize];
    let mut rows = Vec::with_capacity(doc.truth.len());
    for &l in doc.truth.as_slice() {
        let src = if l == 0 { a } else { b };
        rows.push(src.row(next[l as usize]).to_vec());
        next[l as usize] += 1;
    }
    let mut m = FeatureMatrix::from_rows(rows, MatrixKind::External)?;
    m.unit_length = doc.units.unit_length;
    m.source = format!("{}+{}", a.source, b.source);
    m.row_origin = (0..doc.truth.len()).collect();
    Ok(m)
}

fn embed(counts: &FeatureMatrix, embedding: Embedding) -> Result<FeatureMatrix> {
    match embedding {
        Embedding::Tfidf => tfidf(counts),
        Embedding::Zscore => zscore(counts),
        Embedding::External => Err(Error::Contract("count matrix cannot become external".into())),
    }
}

/// Runs the full grid of `config` on an already loaded pair.
pub fn run_grid_on(config: &ExperimentConfig, input: &PairInput) -> Result<SignificanceMap> {
    config.validate()?;
    let params = config.params();
    let keys = config.cell_keys();
    let mut stats: StatsMap = BTreeMap::new();
    let mut commingling = BTreeMap::new();
    let mut ext_width = BTreeMap::new();

    for &l in &config.unit_lengths {
        let row_keys: Vec<CellKey> = keys.iter().copied().filter(|k| k.unit_length == l).collect();
        let doc = segment(&input.first, l).and_then(|a| {
            let b = segment(&input.second, l)?;
            commingle(&a, &b, config.lambda, derive_seed(config.master_seed, &[tag("commingle"), l as u64]))
        });
        let doc = match doc {
            Ok(d) => d,
            Err(e) if is_skippable(&e) => {
                for k in row_keys {
                    stats.insert(k, Err(e.to_string()));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        commingling.insert(l, doc.record.clone());

        // (key, matrix) per cell at this unit length
        let mut jobs: Vec<(CellKey, std::result::Result<FeatureMatrix, String>)> = Vec::new();
        if config.embedding == Embedding::External {
            let (a, b) = input
                .external
                .get(&l)
                .ok_or_else(|| Error::Config(format!("no external embeddings at unit length {l}")))?;
            let m = commingled_rows(&doc, a, b)?;
            ext_width.insert(l, m.ncols());
            jobs.push((row_keys[0], Ok(m)));
        } else {
            for &n in &config.orders {
                let ranked = ranked_features(&doc.units, config.mode, n);
                for &f in &config.feature_counts {
                    let key = CellKey { n, unit_length: l, f };
                    let built = FeatureSpec::new(config.mode, n, f)
                        .and_then(|spec| {
                            if ranked.is_empty() {
                                return Err(Error::DegenerateInput(format!(
                                    "no {} features of order {n}",
                                    config.mode
                                )));
                            }
                            let vocab = Vocabulary::from_ranked(&ranked, spec)?;
                            if vocab.truncated {
                                log::warn!(
                                    "only {} distinct features for n={n} l={l}, wanted {f}",
                                    vocab.len()
                                );
                            }
                            embed(&count_matrix(&doc.units, &vocab)?, config.embedding)
                        });
                    match built {
                        Ok(m) => jobs.push((key, Ok(m))),
                        Err(e) if is_skippable(&e) => jobs.push((key, Err(e.to_string()))),
                        Err(e) => return Err(e),
                    }
                }
            }
        }

        let results: Vec<(CellKey, Result<BatchStats>)> = jobs
            .par_iter()
            .map(|(key, m)| {
                let r = match m {
                    Ok(m) => run_cell_batches(m, &doc.truth, &params, config.cell_seed(*key)),
                    Err(reason) => Err(Error::InsufficientData(reason.clone())),
                };
                (*key, r)
            })
            .collect();
        for (key, r) in results {
            match r {
                Ok(s) => {
                    stats.insert(key, Ok(s));
                }
                Err(e) if is_skippable(&e) => {
                    stats.insert(key, Err(e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
    }

    let adjusted = adjust(&stats, config.fdr_scope)?;
    let mut cells = BTreeMap::new();
    for (key, s) in &stats {
        let result = match s {
            Ok(s) => s.finish(&adjusted[key]),
            Err(reason) => CellResult::skipped(reason.clone()),
        };
        let mut key = *key;
        if config.embedding == Embedding::External {
            key.f = ext_width.get(&key.unit_length).copied().unwrap_or(0);
        }
        cells.insert(key, result);
    }

    Ok(SignificanceMap {
        pair_id: config.pair_id(),
        mode: if config.embedding == Embedding::External {
            "external".into()
        } else {
            config.mode.as_str().into()
        },
        embedding: config.embedding,
        classifier: config.classifier,
        same_author: input.same_author,
        genre_differs: config.genre_differs,
        cells,
        commingling,
    })
}

type StatsMap = BTreeMap<CellKey, std::result::Result<BatchStats, String>>;

/// Adjusted p-values of every evaluated cell.
fn adjust(stats: &StatsMap, scope: FdrScope) -> Result<BTreeMap<CellKey, Vec<f64>>> {
    let evaluated: Vec<(&CellKey, &BatchStats)> = stats
        .iter()
        .filter_map(|(k, s)| s.as_ref().ok().map(|s| (k, s)))
        .collect();
    let mut out = BTreeMap::new();
    match scope {
        FdrScope::PerCell => {
            for (k, s) in evaluated {
                out.insert(*k, bh_fdr(&s.p_values)?);
            }
        }
        FdrScope::Global => {
            let all: Vec<f64> = evaluated
                .iter()
                .flat_map(|(_, s)| s.p_values.iter().copied())
                .collect();
            let adjusted = bh_fdr(&all)?;
            let mut at = 0;
            for (k, s) in evaluated {
                let n = s.p_values.len();
                out.insert(*k, adjusted[at..at + n].to_vec());
                at += n;
            }
        }
    }
    Ok(out)
}

/// Loads the pair from the config's manifest and runs the grid.
pub fn run_grid(config: &ExperimentConfig, base: &std::path::Path) -> Result<SignificanceMap> {
    config.validate()?;
    let input = load_pair(config, base)?;
    run_grid_on(config, &input)
}

/// Confusion contributions of one pair; binary entries are 0 or 1, total
/// entries are fractions of evaluated cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
}

impl Contribution {
    fn from_positive_share(share: f64, same_author: bool) -> Self {
        if same_author {
            Contribution { fp: share, tn: 1.0 - share, ..Default::default() }
        } else {
            Contribution { tp: share, fn_: 1.0 - share, ..Default::default() }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub pair_id: String,
    pub same_author: bool,
    pub genre_differs: Option<bool>,
    pub binary_positive: bool,
    pub significant_cells: usize,
    pub evaluated_cells: usize,
    pub skipped_cells: usize,
    /// Significant share of evaluated cells; absent when none were evaluated.
    pub total_positive_rate: Option<f64>,
    pub binary: Contribution,
    pub total: Option<Contribution>,
}

/// Positive means at least one cell's classification is not explained by
/// sequential correlation.
pub fn outcome(map: &SignificanceMap, same_author: bool) -> PairOutcome {
    let evaluated = map.evaluated().count();
    let significant = map.evaluated().filter(|(_, c)| c.significant).count();
    let binary_positive = significant > 0;
    let rate = (evaluated > 0).then(|| significant as f64 / evaluated as f64);
    PairOutcome {
        pair_id: map.pair_id.clone(),
        same_author,
        genre_differs: map.genre_differs,
        binary_positive,
        significant_cells: significant,
        evaluated_cells: evaluated,
        skipped_cells: map.cells.len() - evaluated,
        total_positive_rate: rate,
        binary: Contribution::from_positive_share(f64::from(u8::from(binary_positive)), same_author),
        total: rate.map(|r| Contribution::from_positive_share(r, same_author)),
    }
}
