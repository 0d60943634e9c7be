//! Significance CSVs and heatmaps, corpus-level confusion tables and
//! discriminative feature listings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{CellKey, CellResult, PairOutcome, SignificanceMap};
use crate::features::FeatureMatrix;
use crate::labels::LabelSequence;

/// One CSV row; the first eleven columns are the stable public layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub pair_id: String,
    pub mode: String,
    pub n: usize,
    pub unit_length: usize,
    pub f: usize,
    pub mean_mcc_norm: Option<f64>,
    pub mean_p_fdr: Option<f64>,
    pub wilson_hi_max: Option<f64>,
    pub significant: bool,
    pub skipped: bool,
    pub repair_flag: bool,
    pub batch_count: usize,
    pub repair_max: Option<f64>,
    pub note: String,
}

impl CsvRow {
    pub fn new(pair_id: &str, mode: &str, key: CellKey, cell: &CellResult) -> Self {
        CsvRow {
            pair_id: pair_id.to_string(),
            mode: mode.to_string(),
            n: key.n,
            unit_length: key.unit_length,
            f: key.f,
            mean_mcc_norm: cell.mean_mcc_norm,
            mean_p_fdr: cell.mean_p_fdr,
            wilson_hi_max: cell.wilson_hi_max,
            significant: cell.significant,
            skipped: cell.is_skipped(),
            repair_flag: cell.repair_flag,
            batch_count: cell.batch_count,
            repair_max: cell.repair_max,
            note: cell.skipped.clone().unwrap_or_default(),
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            n: self.n,
            unit_length: self.unit_length,
            f: self.f,
        }
    }

    pub fn cell(&self) -> CellResult {
        CellResult {
            mean_mcc_norm: self.mean_mcc_norm,
            mean_p_fdr: self.mean_p_fdr,
            wilson_hi_max: self.wilson_hi_max,
            significant: self.significant,
            batch_count: self.batch_count,
            repair_max: self.repair_max,
            repair_flag: self.repair_flag,
            skipped: self.skipped.then(|| self.note.clone()),
        }
    }
}

pub fn csv_rows(map: &SignificanceMap) -> Vec<CsvRow> {
    map.cells
        .iter()
        .map(|(k, c)| CsvRow::new(&map.pair_id, &map.mode, *k, c))
        .collect()
}

pub fn significance_csv(map: &SignificanceMap) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in csv_rows(map) {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// One row per cell, ordered by n, then unit length, then f.
pub fn write_significance_csv(map: &SignificanceMap, path: &Path) -> Result<()> {
    let bytes = significance_csv(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_significance_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_significance_csv(&raw)
}

pub fn parse_significance_csv(raw: &[u8]) -> Result<Vec<CsvRow>> {
    csv::Reader::from_reader(raw)
        .deserialize()
        .collect::<std::result::Result<Vec<CsvRow>, _>>()
        .map_err(|e| Error::Format(format!("significance CSV: {e}")))
}

/// Lower and upper ends of the heatmap color scale, in percent.
pub const COLOR_SCALE: (f64, f64) = (50.0, 100.0);
const CELL_PX: u32 = 16;
const MARGIN_PX: u32 = 12;
const BAR_PX: u32 = 10;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);

const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

/// Viridis-like color for a normalized MCC, clamped to the scale.
pub fn scale_color(value: f64) -> Rgb<u8> {
    let (lo, hi) = COLOR_SCALE;
    let t = ((value - lo) / (hi - lo)).clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let frac = t - i as f64;
    let mix = |k: usize| (STOPS[i][k] + (STOPS[i + 1][k] - STOPS[i][k]) * frac).round() as u8;
    Rgb([mix(0), mix(1), mix(2)])
}

/// Pixel geometry of a heatmap: columns are (n, unit length) pairs, rows
/// are feature counts, largest f at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapLayout {
    pub columns: Vec<(usize, usize)>,
    pub rows: Vec<usize>,
}

impl HeatmapLayout {
    pub fn of(map: &SignificanceMap) -> Self {
        let mut columns: Vec<(usize, usize)> = map.cells.keys().map(|k| (k.n, k.unit_length)).collect();
        columns.dedup();
        let mut rows: Vec<usize> = map.cells.keys().map(|k| k.f).collect();
        rows.sort_unstable();
        rows.dedup();
        rows.reverse();
        HeatmapLayout { columns, rows }
    }

    pub fn width(&self) -> u32 {
        2 * MARGIN_PX + self.columns.len() as u32 * CELL_PX + 2 * BAR_PX
    }

    pub fn height(&self) -> u32 {
        2 * MARGIN_PX + (self.rows.len() as u32 * CELL_PX).max(CELL_PX)
    }

    /// Top-left pixel of the cell for `key`.
    pub fn cell_origin(&self, key: &CellKey) -> Option<(u32, u32)> {
        let c = self.columns.iter().position(|&x| x == (key.n, key.unit_length))?;
        let r = self.rows.iter().position(|&f| f == key.f)?;
        Some((MARGIN_PX + c as u32 * CELL_PX, MARGIN_PX + r as u32 * CELL_PX))
    }

    pub fn cell_center(&self, key: &CellKey) -> Option<(u32, u32)> {
        self.cell_origin(key).map(|(x, y)| (x + CELL_PX / 2, y + CELL_PX / 2))
    }
}

pub fn heatmap_image(map: &SignificanceMap) -> RgbImage {
    let layout = HeatmapLayout::of(map);
    let (w, h) = (layout.width(), layout.height());
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let grid_w = layout.columns.len() as u32 * CELL_PX;
    let grid_h = layout.rows.len() as u32 * CELL_PX;

    for (key, cell) in &map.cells {
        let Some((x0, y0)) = layout.cell_origin(key) else { continue };
        if let (true, Some(v)) = (cell.significant && !cell.is_skipped(), cell.mean_mcc_norm) {
            let color = scale_color(v);
            for y in y0..y0 + CELL_PX {
                for x in x0..x0 + CELL_PX {
                    img.put_pixel(x, y, color);
                }
            }
        }
    }
    for c in 1..layout.columns.len() as u32 {
        let x = MARGIN_PX + c * CELL_PX;
        for y in MARGIN_PX..MARGIN_PX + grid_h {
            if img.get_pixel(x, y) == &WHITE {
                img.put_pixel(x, y, GRID);
            }
        }
    }
    // axes on the left and bottom, with a tick under every column
    for y in MARGIN_PX - 1..=MARGIN_PX + grid_h {
        img.put_pixel(MARGIN_PX - 1, y, AXIS);
    }
    for x in MARGIN_PX - 1..=MARGIN_PX + grid_w {
        img.put_pixel(x, MARGIN_PX + grid_h, AXIS);
    }
    for c in 0..layout.columns.len() as u32 {
        let x = MARGIN_PX + c * CELL_PX + CELL_PX / 2;
        for y in MARGIN_PX + grid_h..MARGIN_PX + grid_h + 4 {
            img.put_pixel(x, y, AXIS);
        }
    }
    for r in 0..layout.rows.len() as u32 {
        let y = MARGIN_PX + r * CELL_PX + CELL_PX / 2;
        for x in MARGIN_PX - 4..MARGIN_PX {
            img.put_pixel(x, y, AXIS);
        }
    }
    // color bar, bottom = 50%, top = 100%
    let bar_x = MARGIN_PX + grid_w + BAR_PX;
    let bar_h = grid_h.max(CELL_PX);
    for dy in 0..bar_h {
        let (lo, hi) = COLOR_SCALE;
        let v = lo + (hi - lo) * (1.0 - dy as f64 / (bar_h - 1).max(1) as f64);
        for x in bar_x..bar_x + BAR_PX.min(w - bar_x) {
            img.put_pixel(x, MARGIN_PX + dy, scale_color(v));
        }
    }
    img
}

/// Raster significance map; only significant cells are colored.
pub fn render_heatmap(map: &SignificanceMap, path: &Path) -> Result<()> {
    heatmap_image(map).save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    })
}

/// Genre annotation for a pair: differing, consistent, or unknown ("?").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GenreAnnotation {
    Known(bool),
    Unknown(UnknownMark),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnknownMark {
    #[serde(rename = "?")]
    Unknown,
}

impl GenreAnnotation {
    /// Only explicitly differing genres are excluded; unknown is kept.
    pub fn excludes(self) -> bool {
        self == GenreAnnotation::Known(true)
    }
}

/// Confusion rates in percent; absent when no pair backs them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tp: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_: Option<f64>,
    pub fp: Option<f64>,
    pub tn: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub pairs: usize,
    pub different_author_pairs: usize,
    pub same_author_pairs: usize,
    pub binary: Rates,
    pub total: Rates,
    /// Rates over the pair set without genre-differing same-author pairs.
    pub bracketed: Option<BracketedRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketedRates {
    pub excluded_pairs: Vec<String>,
    pub binary: Rates,
    pub total: Rates,
}

fn rates(outcomes: &[&PairOutcome]) -> (Rates, Rates) {
    let pct = |num: f64, den: f64| (den > 0.0).then(|| 100.0 * num / den);
    let mut binary = Rates::default();
    let mut total = Rates::default();
    for same in [false, true] {
        let group: Vec<&&PairOutcome> = outcomes.iter().filter(|o| o.same_author == same).collect();
        let pos = group.iter().filter(|o| o.binary_positive).count() as f64;
        let n = group.len() as f64;
        let sig: usize = group.iter().map(|o| o.significant_cells).sum();
        let eval: usize = group.iter().map(|o| o.evaluated_cells).sum();
        let (bp, bn) = (pct(pos, n), pct(n - pos, n));
        let (tp, tn) = (
            pct(sig as f64, eval as f64),
            pct((eval - sig) as f64, eval as f64),
        );
        if same {
            (binary.fp, binary.tn, total.fp, total.tn) = (bp, bn, tp, tn);
        } else {
            (binary.tp, binary.fn_, total.tp, total.fn_) = (bp, bn, tp, tn);
        }
    }
    (binary, total)
}

/// Corpus-level confusion rates. Positives are pairs (binary) or cells
/// (total) whose classification survived the surrogate test; truth is
/// "different authors". With `bracketed`, every same-author pair needs a
/// genre annotation, taken from `annotations` first and the outcome record
/// second.
pub fn confusion_summary(
    outcomes: &[PairOutcome],
    annotations: &BTreeMap<String, GenreAnnotation>,
    bracketed: bool,
) -> Result<ConfusionSummary> {
    if outcomes.is_empty() {
        return Err(Error::InsufficientData("no pair outcomes to summarize".into()));
    }
    let all: Vec<&PairOutcome> = outcomes.iter().collect();
    let (binary, total) = rates(&all);
    let bracketed = if bracketed {
        let mut excluded = Vec::new();
        for o in outcomes.iter().filter(|o| o.same_author) {
            let genre = annotations
                .get(&o.pair_id)
                .copied()
                .or(o.genre_differs.map(GenreAnnotation::Known))
                .ok_or_else(|| {
                    Error::Config(format!("same-author pair {} has no genre annotation", o.pair_id))
                })?;
            if genre.excludes() {
                excluded.push(o.pair_id.clone());
            }
        }
        let kept: Vec<&PairOutcome> = all
            .iter()
            .copied()
            .filter(|o| !excluded.contains(&o.pair_id))
            .collect();
        let (binary, total) = rates(&kept);
        Some(BracketedRates {
            excluded_pairs: excluded,
            binary,
            total,
        })
    } else {
        None
    };
    Ok(ConfusionSummary {
        pairs: outcomes.len(),
        different_author_pairs: outcomes.iter().filter(|o| !o.same_author).count(),
        same_author_pairs: outcomes.iter().filter(|o| o.same_author).count(),
        binary,
        total,
        bracketed,
    })
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.1}%"))
}

impl fmt::Display for ConfusionSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} pairs ({} different-author, {} same-author)",
            self.pairs, self.different_author_pairs, self.same_author_pairs
        )?;
        let cell = |plain: Option<f64>, pick: &dyn Fn(&Rates) -> Option<f64>, which: &str| {
            let base = percent(plain);
            match &self.bracketed {
                Some(b) => {
                    let r = if which == "binary" { &b.binary } else { &b.total };
                    format!("{base} [{}]", percent(pick(r)))
                }
                None => base,
            }
        };
        writeln!(f, "{:<10}{:>22}{:>22}", "", "positive", "negative")?;
        for (name, r) in [("binary", &self.binary), ("total", &self.total)] {
            writeln!(
                f,
                "{:<10}{:>22}{:>22}",
                format!("{name} T"),
                cell(r.tp, &|x| x.tp, name),
                cell(r.tn, &|x| x.tn, name)
            )?;
            writeln!(
                f,
                "{:<10}{:>22}{:>22}",
                format!("{name} F"),
                cell(r.fp, &|x| x.fp, name),
                cell(r.fn_, &|x| x.fn_, name)
            )?;
        }
        if let Some(b) = &self.bracketed {
            writeln!(f, "brackets exclude: {}", if b.excluded_pairs.is_empty() {
                "none".to_string()
            } else {
                b.excluded_pairs.join(", ")
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    /// Mean difference (group 1 minus group 0) over the pooled standard
    /// deviation.
    pub score: f64,
    pub mean0: f64,
    pub mean1: f64,
}

/// Ranks features by absolute standardized mean difference between the
/// two label groups and keeps the top `k`. Ties keep column order.
pub fn top_features(
    matrix: &FeatureMatrix,
    labels: &LabelSequence,
    names: &[String],
    k: usize,
) -> Result<Vec<FeatureScore>> {
    if labels.len() != matrix.nrows() {
        return Err(Error::Contract(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.nrows()
        )));
    }
    if names.len() != matrix.ncols() {
        return Err(Error::Contract(format!(
            "{} feature names for {} columns",
            names.len(),
            matrix.ncols()
        )));
    }
    if !labels.has_both() {
        return Err(Error::Config("feature ranking needs both labels present".into()));
    }
    let g0 = labels.positions(0);
    let g1 = labels.positions(1);
    let (n0, n1) = (g0.len() as f64, g1.len() as f64);
    let stats = |col: &[f64], idx: &[usize]| {
        let mean = idx.iter().map(|&i| col[i]).sum::<f64>() / idx.len() as f64;
        let ss = idx.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>();
        (mean, ss)
    };
    let mut scores: Vec<FeatureScore> = (0..matrix.ncols())
        .map(|j| {
            let col = matrix.column(j);
            let (mean0, ss0) = stats(&col, &g0);
            let (mean1, ss1) = stats(&col, &g1);
            let dof = (n0 + n1 - 2.0).max(1.0);
            let sd = ((ss0 + ss1) / dof).sqrt();
            let diff = mean1 - mean0;
            let score = if diff == 0.0 {
                0.0
            } else if sd == 0.0 {
                diff.signum() * f64::INFINITY
            } else {
                diff / sd
            };
            FeatureScore {
                feature: names[j].clone(),
                score,
                mean0,
                mean1,
            }
        })
        .collect();
    scores.sort_by(|a, b| b.score.abs().total_cmp(&a.score.abs()));
    scores.truncate(k);
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{outcome, Classifier, Embedding};
    use crate::features::MatrixKind;

    fn cell(sig: bool, v: f64) -> CellResult {
        CellResult {
            mean_mcc_norm: Some(v),
            mean_p_fdr: Some(if sig { 0.01 } else { 0.3 }),
            wilson_hi_max: Some(0.0123),
            significant: sig,
            batch_count: 20,
            repair_max: Some(1.5e-16),
            repair_flag: false,
            skipped: None,
        }
    }

    fn map(cells: Vec<(CellKey, CellResult)>) -> SignificanceMap {
        SignificanceMap {
            pair_id: "a__b".into(),
            mode: "word_ngram".into(),
            embedding: Embedding::Tfidf,
            classifier: Classifier::Kmeans,
            same_author: Some(false),
            genre_differs: None,
            cells: cells.into_iter().collect(),
            commingling: BTreeMap::new(),
        }
    }

    fn key(n: usize, l: usize, f: usize) -> CellKey {
        CellKey { n, unit_length: l, f }
    }

    fn grid32() -> SignificanceMap {
        let mut cells = Vec::new();
        for n in 1..=4 {
            for l in [10, 50, 100, 250, 500, 750, 1000, 2000] {
                cells.push((key(n, l, 300), cell(n == 2 && l == 50, 50.0 + (n * l) as f64 / 200.0)));
            }
        }
        cells[5].1 = CellResult::skipped("insufficient tokens: have 900, unit length is 1000");
        map(cells)
    }

    #[test]
    fn csv_has_one_row_per_cell_and_round_trips() {
        let m = grid32();
        let bytes = significance_csv(&m).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().count(), 33);
        assert!(text.starts_with(
            "pair_id,mode,n,unit_length,f,mean_mcc_norm,mean_p_fdr,wilson_hi_max,significant,skipped,repair_flag"
        ));
        let rows = parse_significance_csv(&bytes).unwrap();
        for (row, (k, c)) in rows.iter().zip(&m.cells) {
            assert_eq!(row.key(), *k);
            assert_eq!(&row.cell(), c);
        }
        assert_eq!(bytes, significance_csv(&m).unwrap());
    }

    #[test]
    fn skipped_rows_have_empty_statistics() {
        let m = grid32();
        let text = String::from_utf8(significance_csv(&m).unwrap()).unwrap();
        let skipped = text.lines().find(|l| l.contains(",true,")).unwrap();
        assert!(skipped.contains(",,,,false,true,false,0,,"), "{skipped}");
    }

    #[test]
    fn blank_heatmap_when_nothing_is_significant() {
        let m = map(vec![(key(1, 10, 100), cell(false, 90.0)), (key(2, 10, 100), cell(false, 70.0))]);
        let img = heatmap_image(&m);
        let layout = HeatmapLayout::of(&m);
        for k in m.cells.keys() {
            let (x, y) = layout.cell_center(k).unwrap();
            assert_eq!(img.get_pixel(x, y), &WHITE);
        }
        assert!(img.pixels().any(|p| p == &AXIS));
    }

    #[test]
    fn significant_cell_at_scale_maximum() {
        let m = map(vec![(key(1, 10, 100), cell(true, 100.0)), (key(1, 50, 100), cell(false, 100.0))]);
        let img = heatmap_image(&m);
        let layout = HeatmapLayout::of(&m);
        let (x, y) = layout.cell_center(&key(1, 10, 100)).unwrap();
        assert_eq!(img.get_pixel(x, y), &scale_color(COLOR_SCALE.1));
        assert_eq!(scale_color(100.0), Rgb([253, 231, 37]));
        assert_eq!(scale_color(50.0), Rgb([68, 1, 84]));
        let (x, y) = layout.cell_center(&key(1, 50, 100)).unwrap();
        assert_eq!(img.get_pixel(x, y), &WHITE);
    }

    #[test]
    fn heatmap_png_round_trip() {
        let m = grid32();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.png");
        render_heatmap(&m, &p).unwrap();
        let back = image::open(&p).unwrap().to_rgb8();
        let layout = HeatmapLayout::of(&m);
        for (k, c) in &m.cells {
            let (x, y) = layout.cell_center(k).unwrap();
            assert_eq!(back.get_pixel(x, y) != &WHITE, c.significant, "{k:?}");
        }
    }

    fn pair(id: &str, same: bool, sig: usize, eval: usize, genre: Option<bool>) -> PairOutcome {
        let mut cells = Vec::new();
        for i in 0..eval {
            cells.push((key(1, i + 1, 10), cell(i < sig, 80.0)));
        }
        let mut m = map(cells);
        m.pair_id = id.into();
        m.genre_differs = genre;
        outcome(&m, same)
    }

    #[test]
    fn binary_true_positives() {
        let s = confusion_summary(
            &[pair("x", false, 1, 4, None), pair("y", false, 4, 4, None)],
            &BTreeMap::new(),
            false,
        )
        .unwrap();
        assert_eq!(s.binary.tp, Some(100.0));
        assert_eq!(s.binary.fn_, Some(0.0));
        assert_eq!(s.total.tp, Some(62.5));
        assert_eq!(s.binary.fp, None);
    }

    #[test]
    fn brackets_drop_genre_differing_same_author_pairs() {
        let outcomes = [
            pair("d", false, 2, 4, None),
            pair("s1", true, 1, 4, Some(true)),
            pair("s2", true, 0, 4, Some(false)),
            pair("s3", true, 0, 4, None),
        ];
        let mut notes = BTreeMap::new();
        notes.insert("s3".to_string(), GenreAnnotation::Unknown(UnknownMark::Unknown));
        let s = confusion_summary(&outcomes, &notes, true).unwrap();
        assert!((s.binary.fp.unwrap() - 100.0 / 3.0).abs() < 1e-12);
        let b = s.bracketed.as_ref().unwrap();
        assert_eq!(b.excluded_pairs, vec!["s1".to_string()]);
        assert_eq!(b.binary.fp, Some(0.0));
        assert_eq!(b.binary.tn, Some(100.0));
        assert_eq!(b.binary.tp, s.binary.tp);
        let shown = s.to_string();
        assert!(shown.contains("33.3% [0.0%]"), "{shown}");

        assert!(matches!(
            confusion_summary(&outcomes, &BTreeMap::new(), true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_outcomes_are_an_error() {
        assert!(confusion_summary(&[], &BTreeMap::new(), false).is_err());
    }

    #[test]
    fn genre_annotations_parse() {
        let raw = r#"{"a": true, "b": false, "c": "?"}"#;
        let m: BTreeMap<String, GenreAnnotation> = serde_json::from_str(raw).unwrap();
        assert!(m["a"].excludes());
        assert!(!m["b"].excludes());
        assert!(!m["c"].excludes());
        assert!(serde_json::from_str::<GenreAnnotation>(r#""x""#).is_err());
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn exclusive_feature_ranks_first() {
        let rows = vec![
            vec![1.0, 0.0, 2.0],
            vec![2.0, 0.0, 1.0],
            vec![1.0, 3.0, 2.0],
            vec![2.0, 1.0, 1.0],
        ];
        let m = FeatureMatrix::from_rows(rows, MatrixKind::Count).unwrap();
        let l = LabelSequence::new(vec![0, 0, 1, 1]).unwrap();
        let top = top_features(&m, &l, &names(3), 3).unwrap();
        assert_eq!(top[0].feature, "f1");
        assert_eq!(top[0].mean1, 2.0);
        assert!(top[1..].iter().all(|s| s.score == 0.0));
    }

    #[test]
    fn standardized_difference_matches_hand_values() {
        // f0: group0 (1,3) group1 (4,6): diff 3, pooled sd sqrt((2+2)/2)
        // f1: group0 (0,4) group1 (1,5): diff 1, pooled sd sqrt((8+8)/2)
        let rows = vec![vec![1.0, 0.0], vec![3.0, 4.0], vec![4.0, 1.0], vec![6.0, 5.0]];
        let m = FeatureMatrix::from_rows(rows, MatrixKind::Count).unwrap();
        let l = LabelSequence::new(vec![0, 0, 1, 1]).unwrap();
        let top = top_features(&m, &l, &names(2), 2).unwrap();
        assert_eq!(top[0].feature, "f0");
        assert!((top[0].score - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((top[1].score - 1.0 / 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_label_input_is_rejected() {
        let m = FeatureMatrix::from_rows(vec![vec![1.0], vec![2.0]], MatrixKind::Count).unwrap();
        let l = LabelSequence::new(vec![1, 1]).unwrap();
        assert!(matches!(top_features(&m, &l, &names(1), 1), Err(Error::Config(_))));
    }
}
