//! Feature extraction and weighting.
//!
//! Units are turned into word n-gram or character k-mer multisets, the most
//! frequent features of the whole document form the vocabulary, and the
//! resulting count matrix is reweighted as tf-idf or column Z-scores
//! (the Burrows-Delta style embedding). Externally computed embeddings enter
//! through a small text interchange format.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::UnitSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    WordNgram,
    CharKmer,
}

impl FeatureMode {
    /// Inclusive range of supported orders.
    pub fn order_range(self) -> std::ops::RangeInclusive<usize> {
        match self {
            FeatureMode::WordNgram => 1..=4,
            FeatureMode::CharKmer => 1..=6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::WordNgram => "word_ngram",
            FeatureMode::CharKmer => "char_kmer",
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word_ngram" | "word" => Ok(FeatureMode::WordNgram),
            "char_kmer" | "char" => Ok(FeatureMode::CharKmer),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub mode: FeatureMode,
    pub order: usize,
    pub f: usize,
}

impl FeatureSpec {
    pub fn new(mode: FeatureMode, order: usize, f: usize) -> Result<Self> {
        let spec = FeatureSpec { mode, order, f };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mode.order_range().contains(&self.order) {
            return Err(Error::Config(format!(
                "order {} outside {:?} for {}",
                self.order,
                self.mode.order_range(),
                self.mode
            )));
        }
        if self.f == 0 {
            return Err(Error::Config("feature count f must be at least 1".into()));
        }
        Ok(())
    }
}

/// All features of one unit, with multiplicity, in text order.
///
/// Word mode yields the `len - n + 1` contiguous n-grams joined by single
/// spaces. Character mode joins the tokens with single spaces and yields
/// every k-character window, so k-mers may straddle a word boundary.
pub fn extract_features(unit: &[String], mode: FeatureMode, order: usize) -> Vec<String> {
    if order == 0 {
        return Vec::new();
    }
    match mode {
        FeatureMode::WordNgram => {
            if order > unit.len() {
                return Vec::new();
            }
            unit.windows(order).map(|w| w.join(" ")).collect()
        }
        FeatureMode::CharKmer => {
            let joined = unit.join(" ");
            let chars: Vec<char> = joined.chars().collect();
            if order > chars.len() {
                return Vec::new();
            }
            chars.windows(order).map(|w| w.iter().collect()).collect()
        }
    }
}

/// Every distinct feature with its total count, most frequent first, ties
/// in lexicographic order.
pub fn ranked_features(units: &UnitSequence, mode: FeatureMode, order: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for unit in &units.units {
        for feat in extract_features(unit, mode, order) {
            *counts.entry(feat).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub spec: FeatureSpec,
    pub features: Vec<String>,
    /// Set when fewer than `spec.f` distinct features exist.
    pub truncated: bool,
}

impl Vocabulary {
    /// Takes the first `spec.f` entries of an already ranked feature list.
    pub fn from_ranked(ranked: &[(String, usize)], spec: FeatureSpec) -> Result<Self> {
        spec.validate()?;
        if ranked.is_empty() {
            return Err(Error::DegenerateInput(format!(
                "no {} features of order {} occur",
                spec.mode, spec.order
            )));
        }
        let truncated = ranked.len() < spec.f;
        let features = ranked.iter().take(spec.f).map(|(s, _)| s.clone()).collect();
        Ok(Vocabulary {
            spec,
            features,
            truncated,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Top-`f` features over all units of the document.
pub fn build_vocabulary(units: &UnitSequence, spec: FeatureSpec) -> Result<Vocabulary> {
    spec.validate()?;
    let ranked = ranked_features(units, spec.mode, spec.order);
    let vocab = Vocabulary::from_ranked(&ranked, spec)?;
    if vocab.truncated {
        log::warn!(
            "only {} distinct {} features of order {}; requested f = {}",
            vocab.len(),
            spec.mode,
            spec.order,
            spec.f
        );
    }
    Ok(vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Count,
    Tfidf,
    Zscore,
    External,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Count => "count",
            MatrixKind::Tfidf => "tfidf",
            MatrixKind::Zscore => "zscore",
            MatrixKind::External => "external",
        }
    }
}

impl FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(MatrixKind::Count),
            "tfidf" => Ok(MatrixKind::Tfidf),
            "zscore" => Ok(MatrixKind::Zscore),
            "external" => Ok(MatrixKind::External),
            other => Err(Error::Format(format!("unknown matrix kind {other:?}"))),
        }
    }
}

/// Dense row-major unit-by-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub kind: MatrixKind,
    /// Unit index of each row in the originating sequence.
    pub row_origin: Vec<usize>,
    pub unit_length: usize,
    pub source: String,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, kind: MatrixKind) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Format("rows have differing lengths".into()));
        }
        let n = rows.len();
        Ok(FeatureMatrix {
            rows: n,
            cols,
            values: rows.into_iter().flatten().collect(),
            kind,
            row_origin: (0..n).collect(),
            unit_length: 0,
            source: String::new(),
        })
    }

    pub fn from_flat(rows: usize, cols: usize, values: Vec<f64>, kind: MatrixKind) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Format(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            kind,
            row_origin: (0..rows).collect(),
            unit_length: 0,
            source: String::new(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// New matrix holding the given rows in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            cols: self.cols,
            values,
            kind: self.kind,
            row_origin: indices.iter().map(|&i| self.row_origin[i]).collect(),
            unit_length: self.unit_length,
            source: self.source.clone(),
        }
    }

    pub fn scaled(&self, c: f64) -> FeatureMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    fn with_values(&self, values: Vec<f64>, kind: MatrixKind) -> FeatureMatrix {
        FeatureMatrix {
            rows: self.rows,
            cols: self.cols,
            values,
            kind,
            row_origin: self.row_origin.clone(),
            unit_length: self.unit_length,
            source: self.source.clone(),
        }
    }
}

/// Occurrences of each vocabulary feature in each unit.
pub fn count_matrix(units: &UnitSequence, vocab: &Vocabulary) -> Result<FeatureMatrix> {
    if vocab.is_empty() {
        return Err(Error::DegenerateInput("empty vocabulary".into()));
    }
    let column: HashMap<&str, usize> = vocab
        .features
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let f = vocab.len();
    let rows: Vec<Vec<f64>> = units
        .units
        .par_iter()
        .map(|unit| {
            let mut row = vec![0.0; f];
            for feat in extract_features(unit, vocab.spec.mode, vocab.spec.order) {
                if let Some(&j) = column.get(feat.as_str()) {
                    row[j] += 1.0;
                }
            }
            row
        })
        .collect();
    let mut m = FeatureMatrix::from_flat(units.len(), f, rows.concat(), MatrixKind::Count)?;
    m.unit_length = units.unit_length;
    m.source = format!("{}:{}:{}", vocab.spec.mode, vocab.spec.order, f);
    Ok(m)
}

/// Smoothed inverse document frequency, `ln((1 + m) / (1 + df)) + 1`.
pub fn smoothed_idf(m: usize, df: usize) -> f64 {
    ((1.0 + m as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Raw counts times smoothed idf, rows scaled to unit L2 norm.
pub fn tfidf(counts: &FeatureMatrix) -> Result<FeatureMatrix> {
    if counts.kind != MatrixKind::Count {
        return Err(Error::Contract("tfidf expects a count matrix".into()));
    }
    let (m, f) = (counts.nrows(), counts.ncols());
    let idf: Vec<f64> = (0..f)
        .map(|j| {
            let df = (0..m).filter(|&i| counts.get(i, j) > 0.0).count();
            smoothed_idf(m, df)
        })
        .collect();
    let mut values = Vec::with_capacity(m * f);
    for row in counts.rows() {
        let weighted: Vec<f64> = row.iter().zip(&idf).map(|(c, w)| c * w).collect();
        let norm = weighted.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.extend(weighted.iter().map(|v| v / norm));
        } else {
            values.extend(weighted);
        }
    }
    Ok(counts.with_values(values, MatrixKind::Tfidf))
}

/// Column-wise standardization with the population standard deviation;
/// constant columns become zero.
pub fn zscore(counts: &FeatureMatrix) -> Result<FeatureMatrix> {
    if counts.kind != MatrixKind::Count {
        return Err(Error::Contract("zscore expects a count matrix".into()));
    }
    let (m, f) = (counts.nrows(), counts.ncols());
    if m < 2 {
        return Err(Error::DegenerateInput(format!(
            "zscore needs at least two rows, got {m}"
        )));
    }
    let mut values = vec![0.0; m * f];
    for j in 0..f {
        let col = counts.column(j);
        let mean = col.iter().sum::<f64>() / m as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m as f64;
        let sd = var.sqrt();
        if sd > 0.0 {
            for (i, x) in col.iter().enumerate() {
                values[i * f + j] = (x - mean) / sd;
            }
        }
    }
    Ok(counts.with_values(values, MatrixKind::Zscore))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub m: usize,
    pub f: usize,
    pub kind: String,
    pub unit_length: usize,
    pub source: String,
}

/// Writes the interchange format: a JSON header line, then one line of
/// tab-separated decimals per row.
pub fn write_matrix(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    if let Some(v) = matrix.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Format(format!("non-finite value {v}")));
    }
    let header = MatrixHeader {
        m: matrix.nrows(),
        f: matrix.ncols(),
        kind: matrix.kind.as_str().to_owned(),
        unit_length: matrix.unit_length,
        source: matrix.source.clone(),
    };
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, &header)?;
        out.write_all(b"\n")?;
        for row in matrix.rows() {
            let mut first = true;
            for v in row {
                if !first {
                    out.write_all(b"\t")?;
                }
                first = false;
                write!(out, "{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix(&raw)
}

pub fn parse_matrix(raw: &str) -> Result<FeatureMatrix> {
    let mut lines = raw.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header: MatrixHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let kind: MatrixKind = header.kind.parse()?;

    let mut values = Vec::with_capacity(header.m * header.f);
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        if rows == header.m {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Format(format!(
                "more than the {} rows declared in the header",
                header.m
            )));
        }
        let before = values.len();
        for field in line.split('\t') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("row {}: cannot parse {field:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("row {}: non-finite value", lineno + 1)));
            }
            values.push(v);
        }
        let width = values.len() - before;
        if width != header.f {
            return Err(Error::Format(format!(
                "row {} has {width} values, header declares f = {}",
                lineno + 1,
                header.f
            )));
        }
        rows += 1;
    }
    if rows != header.m {
        return Err(Error::Format(format!(
            "header declares m = {} rows, found {rows}",
            header.m
        )));
    }
    let mut m = FeatureMatrix::from_flat(header.m, header.f, values, kind)?;
    m.unit_length = header.unit_length;
    m.source = header.source;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment, TokenStream};
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn seq(units: &[&[&str]]) -> UnitSequence {
        let len = units[0].len();
        UnitSequence {
            unit_length: len,
            units: units.iter().map(|u| toks(u)).collect(),
            origin: vec!["s".into(); units.len()],
        }
    }

    /// Independent substring enumeration over byte offsets of an ASCII string.
    fn all_substrings(s: &str, k: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut start = 0;
        while start + k <= s.len() {
            out.push(s[start..start + k].to_string());
            start += 1;
        }
        out
    }

    #[test]
    fn word_bigrams() {
        let f = extract_features(&toks(&["the", "old", "man"]), FeatureMode::WordNgram, 2);
        assert_eq!(f, ["the old", "old man"]);
    }

    #[test]
    fn char_kmers() {
        assert_eq!(extract_features(&toks(&["ab"]), FeatureMode::CharKmer, 2), ["ab"]);
        let got = extract_features(&toks(&["to", "be"]), FeatureMode::CharKmer, 3);
        assert_eq!(got, all_substrings("to be", 3));
        assert_eq!(got, ["to ", "o b", " be"]);
    }

    #[test]
    fn order_longer_than_unit_is_empty() {
        assert!(extract_features(&toks(&["a", "b"]), FeatureMode::WordNgram, 3).is_empty());
        assert!(extract_features(&toks(&["ab"]), FeatureMode::CharKmer, 3).is_empty());
    }

    #[test]
    fn vocabulary_top_f_with_tiebreak() {
        let s = seq(&[&["a", "a", "a", "a", "a", "b", "b", "b", "c"]]);
        let v = build_vocabulary(&s, FeatureSpec::new(FeatureMode::WordNgram, 1, 2).unwrap()).unwrap();
        assert_eq!(v.features, ["a", "b"]);
        assert!(!v.truncated);

        let s = seq(&[&["b", "b", "b", "a", "a", "a"]]);
        let v = build_vocabulary(&s, FeatureSpec::new(FeatureMode::WordNgram, 1, 1).unwrap()).unwrap();
        assert_eq!(v.features, ["a"]);
    }

    #[test]
    fn vocabulary_truncates_with_flag() {
        let words: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
        let ts = TokenStream {
            source_id: "s".into(),
            tokens: words,
        };
        let s = segment(&ts, 50).unwrap();
        let v = build_vocabulary(&s, FeatureSpec::new(FeatureMode::WordNgram, 1, 100).unwrap()).unwrap();
        assert_eq!(v.len(), 50);
        assert!(v.truncated);
    }

    #[test]
    fn spec_rejects_out_of_range_orders() {
        assert!(FeatureSpec::new(FeatureMode::WordNgram, 5, 10).is_err());
        assert!(FeatureSpec::new(FeatureMode::CharKmer, 6, 10).is_ok());
        assert!(FeatureSpec::new(FeatureMode::CharKmer, 7, 10).is_err());
        assert!(FeatureSpec::new(FeatureMode::CharKmer, 2, 0).is_err());
    }

    #[test]
    fn counting() {
        let s = seq(&[&["a", "a", "b"], &["c", "c", "c"], &["b", "a", "b"]]);
        let vocab = Vocabulary {
            spec: FeatureSpec::new(FeatureMode::WordNgram, 1, 2).unwrap(),
            features: toks(&["a", "b"]),
            truncated: false,
        };
        let m = count_matrix(&s, &vocab).unwrap();
        assert_eq!(m.row(0), &[2.0, 1.0]);
        assert_eq!(m.row(1), &[0.0, 0.0]);
        // naive scan
        for (i, unit) in s.units.iter().enumerate() {
            for (j, feat) in vocab.features.iter().enumerate() {
                let naive = unit.iter().filter(|t| *t == feat).count() as f64;
                assert_eq!(m.get(i, j), naive);
            }
        }
    }

    #[test]
    fn tfidf_single_row_is_normalized_counts() {
        let c = FeatureMatrix::from_rows(vec![vec![3.0, 4.0, 0.0]], MatrixKind::Count).unwrap();
        let t = tfidf(&c).unwrap();
        assert_eq!(smoothed_idf(1, 1), 1.0);
        assert!((t.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((t.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(t.get(0, 2), 0.0);
    }

    #[test]
    fn tfidf_two_by_two_matches_formula() {
        // Oracle by hand: m = 2. Column 0 has df = 2 -> idf = 1.
        // Column 1 has df = 1 -> idf = ln(3/2) + 1.
        let c = FeatureMatrix::from_rows(vec![vec![1.0, 0.0], vec![1.0, 1.0]], MatrixKind::Count)
            .unwrap();
        let t = tfidf(&c).unwrap();
        let w = (1.5f64).ln() + 1.0;
        let norm = (1.0 + w * w).sqrt();
        assert_eq!(t.row(0), &[1.0, 0.0]);
        assert!((t.get(1, 0) - 1.0 / norm).abs() < 1e-15);
        assert!((t.get(1, 1) - w / norm).abs() < 1e-15);
    }

    #[test]
    fn ubiquitous_feature_keeps_unit_idf() {
        assert_eq!(smoothed_idf(7, 7), 1.0);
    }

    #[test]
    fn zscore_examples() {
        let c = FeatureMatrix::from_rows(vec![vec![2.0, 5.0], vec![4.0, 5.0]], MatrixKind::Count)
            .unwrap();
        let z = zscore(&c).unwrap();
        assert_eq!(z.column(0), vec![-1.0, 1.0]);
        assert_eq!(z.column(1), vec![0.0, 0.0]);

        let c = FeatureMatrix::from_rows(vec![vec![5.0], vec![5.0], vec![5.0]], MatrixKind::Count)
            .unwrap();
        assert_eq!(zscore(&c).unwrap().column(0), vec![0.0; 3]);

        let one = FeatureMatrix::from_rows(vec![vec![1.0]], MatrixKind::Count).unwrap();
        assert!(matches!(zscore(&one), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn round_trip_and_shape_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        let m = FeatureMatrix::from_rows(
            vec![
                vec![0.1, -2.5, 3.0, 1e-7],
                vec![0.0, 1.0 / 3.0, 12345.678, -0.0],
                vec![7.0, 8.0, 9.0, 10.0],
            ],
            MatrixKind::Tfidf,
        )
        .unwrap();
        write_matrix(&m, &path).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.values(), m.values());
        assert_eq!(back.kind, MatrixKind::Tfidf);

        let bad = "{\"m\":1,\"f\":4,\"kind\":\"external\",\"unit_length\":10,\"source\":\"x\"}\n1\t2\t3\n";
        assert!(matches!(parse_matrix(bad), Err(Error::Format(_))));
        let short = "{\"m\":2,\"f\":1,\"kind\":\"external\",\"unit_length\":10,\"source\":\"x\"}\n1\n";
        assert!(matches!(parse_matrix(short), Err(Error::Format(_))));
        let nan = "{\"m\":1,\"f\":1,\"kind\":\"external\",\"unit_length\":10,\"source\":\"x\"}\nNaN\n";
        assert!(matches!(parse_matrix(nan), Err(Error::Format(_))));

        let inf = FeatureMatrix::from_rows(vec![vec![f64::INFINITY]], MatrixKind::Count).unwrap();
        assert!(matches!(write_matrix(&inf, &path), Err(Error::Format(_))));
    }

    #[test]
    fn external_header_drives_shape() {
        let mut raw = String::from(
            "{\"m\":16,\"f\":768,\"kind\":\"external\",\"unit_length\":250,\"source\":\"star\"}\n",
        );
        for i in 0..16 {
            let row: Vec<String> = (0..768).map(|j| format!("{}", (i * 768 + j) as f64 * 1e-3)).collect();
            raw.push_str(&row.join("\t"));
            raw.push('\n');
        }
        let m = parse_matrix(&raw).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (16, 768));
        assert_eq!(m.kind, MatrixKind::External);
        assert_eq!(m.unit_length, 250);
    }

    proptest! {
        #[test]
        fn word_feature_count(len in 1usize..30, n in 1usize..5) {
            let unit: Vec<String> = (0..len).map(|i| format!("t{i}")).collect();
            let got = extract_features(&unit, FeatureMode::WordNgram, n);
            prop_assert_eq!(got.len(), (len + 1).saturating_sub(n));
        }

        #[test]
        fn tfidf_rows_unit_or_zero(rows in proptest::collection::vec(
            proptest::collection::vec(0u8..5, 6), 1..12)) {
            let c = FeatureMatrix::from_rows(
                rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect(),
                MatrixKind::Count).unwrap();
            let t = tfidf(&c).unwrap();
            for row in t.rows() {
                let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn idf_nonincreasing_in_df(m in 1usize..200, df in 0usize..200) {
            let df = df.min(m - 1);
            prop_assert!(smoothed_idf(m, df + 1) <= smoothed_idf(m, df));
            prop_assert!(smoothed_idf(m, df) >= 1.0);
        }

        #[test]
        fn zscore_columns_standardized(rows in proptest::collection::vec(
            proptest::collection::vec(0u8..9, 4), 2..20)) {
            let c = FeatureMatrix::from_rows(
                rows.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect(),
                MatrixKind::Count).unwrap();
            let z = zscore(&c).unwrap();
            let m = c.nrows() as f64;
            for j in 0..c.ncols() {
                let col = c.column(j);
                let constant = col.iter().all(|&x| x == col[0]);
                let zc = z.column(j);
                if constant {
                    prop_assert!(zc.iter().all(|&v| v == 0.0));
                } else {
                    let s: f64 = zc.iter().sum();
                    let ss: f64 = zc.iter().map(|v| v * v).sum::<f64>() / m;
                    prop_assert!(s.abs() < 1e-9);
                    prop_assert!((ss - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn matrix_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 1..40), cols in 1usize..5) {
            let rows = vals.len() / cols;
            prop_assume!(rows > 0);
            let m = FeatureMatrix::from_flat(rows, cols, vals[..rows * cols].to_vec(), MatrixKind::External).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x");
            write_matrix(&m, &p).unwrap();
            let back = read_matrix(&p).unwrap();
            prop_assert_eq!(back.values(), m.values());
        }

        #[test]
        fn vocabulary_is_deterministic(words in proptest::collection::vec("[a-e]{1,2}", 8..60)) {
            let ts = TokenStream { source_id: "s".into(), tokens: words };
            let s = segment(&ts, 4).unwrap();
            let spec = FeatureSpec::new(FeatureMode::CharKmer, 2, 5).unwrap();
            prop_assert_eq!(build_vocabulary(&s, spec).unwrap(), build_vocabulary(&s, spec).unwrap());
        }
    }
}
