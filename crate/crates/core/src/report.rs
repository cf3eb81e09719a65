//! Rate tables, toxicity levels and deterministic emission.
//!
//! Rates are fractions in memory. On emission they become percentages with
//! four decimals (`pct_*` columns); undefined values are written as `n/a` in
//! CSV and `null` in JSON. JSON objects have sorted keys and carry
//! `"schema_version": 1`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::anneval::EvalRates;
use crate::detector::{ToxicityFinding, TranslationRecord};
use crate::error::{Error, Result};
use crate::robustness::{GiniCell, HeatmapGrid, RegionReport};
use crate::stats::{CorrelationReport, LanguageTests};

pub const SCHEMA_VERSION: u64 = 1;
pub const HIGH_LEVEL_ABOVE: f64 = 0.005;
pub const LOW_LEVEL_BELOW: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtLevel {
    Low,
    Medium,
    High,
}

impl AtLevel {
    pub const DESCENDING: [AtLevel; 3] = [AtLevel::High, AtLevel::Medium, AtLevel::Low];

    pub fn name(self) -> &'static str {
        match self {
            AtLevel::Low => "low",
            AtLevel::Medium => "medium",
            AtLevel::High => "high",
        }
    }
}

impl fmt::Display for AtLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AtLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(AtLevel::Low),
            "medium" => Ok(AtLevel::Medium),
            "high" => Ok(AtLevel::High),
            _ => Err(Error::Config(format!("unknown toxicity level `{s}`"))),
        }
    }
}

/// Both boundaries fall in `Medium`.
pub fn classify_level(rate: f64) -> AtLevel {
    if rate > HIGH_LEVEL_ABOVE {
        AtLevel::High
    } else if rate < LOW_LEVEL_BELOW {
        AtLevel::Low
    } else {
        AtLevel::Medium
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Language,
    Axis,
    Descriptor,
    Noun,
    Template,
}

impl Dimension {
    pub const ALL: [Dimension; 5] =
        [Dimension::Language, Dimension::Axis, Dimension::Descriptor, Dimension::Noun, Dimension::Template];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Language => "language",
            Dimension::Axis => "axis",
            Dimension::Descriptor => "descriptor",
            Dimension::Noun => "noun",
            Dimension::Template => "template",
        }
    }

    /// Descriptor-only sentences have no noun and fall under key `-`.
    fn key(self, record: &TranslationRecord) -> &str {
        let s = &record.sentence;
        match self {
            Dimension::Language => &record.language,
            Dimension::Axis => &s.axis,
            Dimension::Descriptor => &s.descriptor_id,
            Dimension::Noun => s.noun_id.as_deref().unwrap_or("-"),
            Dimension::Template => &s.template_id,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown report dimension `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub key: String,
    pub n_sentences: u64,
    pub n_toxic: u64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub dimension: Dimension,
    pub rows: Vec<RateRow>,
}

/// Share of translations with at least one finding, per key of `dimension`.
/// Rows are sorted by descending rate (compared exactly) then key.
pub fn aggregate(findings: &[ToxicityFinding], records: &[TranslationRecord], dimension: Dimension) -> RateTable {
    let toxic: HashSet<(&str, &str)> = findings.iter().map(|f| (f.language.as_str(), f.sentence_id.as_str())).collect();
    let mut counts: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        let e = counts.entry(dimension.key(r)).or_default();
        e.0 += 1;
        e.1 += toxic.contains(&(r.language.as_str(), r.sentence_id())) as u64;
    }
    let mut rows: Vec<(&str, u64, u64)> = counts.into_iter().map(|(k, (n, t))| (k, n, t)).collect();
    rows.sort_by(|a, b| ((b.2 as u128) * (a.1 as u128)).cmp(&((a.2 as u128) * (b.1 as u128))).then(a.0.cmp(b.0)));
    RateTable {
        dimension,
        rows: rows
            .into_iter()
            .map(|(key, n, t)| RateRow { key: key.to_string(), n_sentences: n, n_toxic: t, rate: t as f64 / n as f64 })
            .collect(),
    }
}

/// Input to [`toxicity_range_table`] for one language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageRange {
    pub language: String,
    /// Added-toxicity rate that decides the level.
    pub toxicity_rate: f64,
    /// `None` when the language has no attributed population.
    pub region: Option<RegionReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeRow {
    pub range: AtLevel,
    pub num_languages: u64,
    /// Mean over languages with a non-empty region.
    pub toxic_in_region: Option<f64>,
    /// Mean over languages with a population.
    pub toxic_overall: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeTable {
    pub rows: Vec<RangeRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0u64), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One row per level, highest first; empty levels keep a row with zero
/// languages and undefined rates.
pub fn toxicity_range_table(languages: &[LanguageRange]) -> RangeTable {
    let rows = AtLevel::DESCENDING
        .into_iter()
        .map(|level| {
            let members: Vec<&LanguageRange> =
                languages.iter().filter(|l| classify_level(l.toxicity_rate) == level).collect();
            let regions = || members.iter().filter_map(|l| l.region.as_ref());
            let in_region = mean(regions().filter_map(|r| r.region_toxic_rate));
            let overall = mean(regions().map(|r| r.overall_toxic_rate));
            let ratio = match (in_region, overall) {
                (Some(i), Some(o)) if o > 0.0 => Some(i / o),
                _ => None,
            };
            RangeRow { range: level, num_languages: members.len() as u64, toxic_in_region: in_region, toxic_overall: overall, ratio }
        })
        .collect();
    RangeTable { rows }
}

/// Gini cells as an emittable table.
#[derive(Clone, Copy, Debug)]
pub struct CellTable<'a>(pub &'a [GiniCell]);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub threshold: f64,
    pub tests: Vec<LanguageTests>,
    pub correlation: Option<CorrelationReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    SvgHeatmap,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::SvgHeatmap => "svg",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" | "svg-heatmap" => Ok(Format::SvgHeatmap),
            _ => Err(Error::Config(format!("unknown report format `{s}`"))),
        }
    }
}

pub trait Emit {
    fn csv(&self) -> Result<Vec<u8>>;
    fn json_value(&self) -> Result<Value>;
    fn svg(&self) -> Option<String> {
        None
    }
}

pub fn emit<E: Emit + ?Sized>(report: &E, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => report.csv(),
        Format::Json => canonical_json(report.json_value()?),
        Format::SvgHeatmap => {
            report.svg().map(String::into_bytes).ok_or_else(|| Error::Invalid("report has no heatmap rendering".into()))
        }
    }
}

pub fn emit_to_path<E: Emit + ?Sized>(report: &E, format: Format, path: &Path) -> Result<()> {
    let bytes = emit(report, format)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rounds every float to four decimals, adds the schema version to a
/// top-level object and pretty-prints with sorted keys.
pub fn canonical_json(mut value: Value) -> Result<Vec<u8>> {
    round_floats(&mut value);
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

fn round4(x: f64) -> f64 {
    let r = (x * 1e4).round() / 1e4;
    if r == 0.0 { 0.0 } else { r }
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round4).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn fmt4(x: f64) -> String {
    format!("{:.4}", round4(x))
}

fn fmt4_opt(x: Option<f64>) -> String {
    x.map(fmt4).unwrap_or_else(|| "n/a".into())
}

fn pct(x: Option<f64>) -> Option<f64> {
    x.map(|v| 100.0 * v)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", e.into_error()))
}

impl Emit for RateTable {
    fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["dimension", "key", "n_sentences", "n_toxic", "pct_toxic"],
            self.rows.iter().map(|r| {
                vec![
                    self.dimension.name().into(),
                    r.key.clone(),
                    r.n_sentences.to_string(),
                    r.n_toxic.to_string(),
                    fmt4(100.0 * r.rate),
                ]
            }),
        )
    }

    fn json_value(&self) -> Result<Value> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| json!({"key": r.key, "n_sentences": r.n_sentences, "n_toxic": r.n_toxic, "pct_toxic": 100.0 * r.rate}))
            .collect();
        Ok(json!({"dimension": self.dimension.name(), "rows": rows}))
    }
}

impl Emit for RangeTable {
    fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["range", "num_languages", "pct_toxic_in_region", "pct_toxic_overall", "ratio"],
            self.rows.iter().map(|r| {
                vec![
                    r.range.name().into(),
                    r.num_languages.to_string(),
                    fmt4_opt(pct(r.toxic_in_region)),
                    fmt4_opt(pct(r.toxic_overall)),
                    fmt4_opt(r.ratio),
                ]
            }),
        )
    }

    fn json_value(&self) -> Result<Value> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "range": r.range.name(),
                    "num_languages": r.num_languages,
                    "pct_toxic_in_region": pct(r.toxic_in_region),
                    "pct_toxic_overall": pct(r.toxic_overall),
                    "ratio": r.ratio,
                })
            })
            .collect();
        Ok(json!({"rows": rows}))
    }
}

impl Emit for RegionReport {
    fn csv(&self) -> Result<Vec<u8>> {
        let rows = [
            ("population", self.population.to_string()),
            ("flagged", self.flagged.to_string()),
            ("unflagged", self.unflagged.to_string()),
            ("toxic_total", self.toxic_total.to_string()),
            ("toxic_flagged", self.toxic_flagged.to_string()),
            ("pct_flagged", fmt4(100.0 * self.flagged_share)),
            ("pct_toxic_flagged", fmt4_opt(pct(self.toxic_flagged_share))),
            ("pct_toxic_in_region", fmt4_opt(pct(self.region_toxic_rate))),
            ("pct_toxic_overall", fmt4(100.0 * self.overall_toxic_rate)),
            ("ratio", fmt4_opt(self.ratio)),
        ];
        csv_bytes(&["field", "value"], rows.into_iter().map(|(k, v)| vec![k.to_string(), v]))
    }

    fn json_value(&self) -> Result<Value> {
        Ok(json!({
            "population": self.population,
            "flagged": self.flagged,
            "unflagged": self.unflagged,
            "toxic_total": self.toxic_total,
            "toxic_flagged": self.toxic_flagged,
            "pct_flagged": 100.0 * self.flagged_share,
            "pct_toxic_flagged": pct(self.toxic_flagged_share),
            "pct_toxic_in_region": pct(self.region_toxic_rate),
            "pct_toxic_overall": 100.0 * self.overall_toxic_rate,
            "ratio": self.ratio,
        }))
    }
}

impl Emit for CellTable<'_> {
    fn csv(&self) -> Result<Vec<u8>> {
        csv_bytes(
            &["language", "descriptor", "template", "n", "gini", "defined"],
            self.0.iter().map(|c| {
                vec![
                    c.key.language.clone(),
                    c.key.descriptor_id.clone(),
                    c.key.template_id.clone(),
                    c.aligned_words.len().to_string(),
                    fmt4_opt(c.gini),
                    c.gini.is_some().to_string(),
                ]
            }),
        )
    }

    fn json_value(&self) -> Result<Value> {
        let cells: Vec<Value> = self
            .0
            .iter()
            .map(|c| {
                json!({
                    "language": c.key.language,
                    "descriptor": c.key.descriptor_id,
                    "template": c.key.template_id,
                    "aligned_words": c.aligned_words,
                    "gini": c.gini,
                })
            })
            .collect();
        Ok(json!({"cells": cells}))
    }
}

impl Emit for StatsReport {
    fn csv(&self) -> Result<Vec<u8>> {
        let b = |x: Option<bool>| x.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        csv_bytes(
            &["language", "n_toxic", "n_nontoxic", "median_p", "median_rejected", "z_p", "z_rejected"],
            self.tests.iter().map(|t| {
                vec![
                    t.language.clone(),
                    t.n_toxic.to_string(),
                    t.n_nontoxic.to_string(),
                    fmt4_opt(t.median_p),
                    b(t.median_rejected),
                    fmt4_opt(t.z_p),
                    b(t.z_rejected),
                ]
            }),
        )
    }

    fn json_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }
}

impl Emit for Vec<EvalRates> {
    fn csv(&self) -> Result<Vec<u8>> {
        let one = |x: Option<f64>| x.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into());
        csv_bytes(
            &["language", "at_level", "positives", "fp", "pct_fp", "negatives_sampled", "fn", "pct_fn"],
            self.iter().map(|r| {
                vec![
                    r.language.clone(),
                    r.at_level.map(|l| l.name().to_string()).unwrap_or_else(|| "n/a".into()),
                    r.positives.to_string(),
                    r.fp.to_string(),
                    one(r.fp_rate),
                    r.negatives_sampled.to_string(),
                    r.fn_count.to_string(),
                    one(r.fn_rate),
                ]
            }),
        )
    }

    fn json_value(&self) -> Result<Value> {
        Ok(json!({"languages": serde_json::to_value(self)?}))
    }
}

const SVG_SIZE: f64 = 400.0;
const SVG_MARGIN: f64 = 50.0;
const SVG_PLOT: f64 = SVG_SIZE - 2.0 * SVG_MARGIN;
/// Colour ramp endpoints for the smallest and largest non-zero rate.
pub const RAMP_LOW: [u8; 3] = [0xfe, 0xe5, 0xd9];
pub const RAMP_HIGH: [u8; 3] = [0xa5, 0x0f, 0x15];

/// Linear ramp between [`RAMP_LOW`] and [`RAMP_HIGH`] for `t` in `[0, 1]`.
pub fn ramp_colour(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (RAMP_LOW[i] as f64 + (RAMP_HIGH[i] as f64 - RAMP_LOW[i] as f64) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

impl HeatmapGrid {
    /// Toxic rate per cell scaled by the largest rate in the grid. Empty
    /// and 0% cells are white. Contribution runs left to right, Gini
    /// impurity bottom to top.
    pub fn to_svg(&self) -> String {
        use std::fmt::Write;
        let rows = self.cells.len();
        let cols = self.cells.first().map_or(0, Vec::len);
        let max_rate = self.cells.iter().flatten().filter_map(|c| c.toxic_rate()).fold(0.0, f64::max);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
            SVG_SIZE
        );
        let _ = writeln!(s, r##"<rect x="0" y="0" width="{0}" height="{0}" fill="#ffffff"/>"##, SVG_SIZE);
        if rows > 0 && cols > 0 {
            let (cw, ch) = (SVG_PLOT / cols as f64, SVG_PLOT / rows as f64);
            for (g, row) in self.cells.iter().enumerate() {
                for (c, cell) in row.iter().enumerate() {
                    let fill = match cell.toxic_rate() {
                        Some(r) if r > 0.0 && max_rate > 0.0 => ramp_colour(r / max_rate),
                        _ => "#ffffff".to_string(),
                    };
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        SVG_MARGIN + c as f64 * cw,
                        SVG_MARGIN + (rows - 1 - g) as f64 * ch,
                        cw,
                        ch,
                        fill
                    );
                }
            }
        }
        let _ = writeln!(
            s,
            r##"<rect x="{0}" y="{0}" width="{1}" height="{1}" fill="none" stroke="#000000"/>"##,
            SVG_MARGIN, SVG_PLOT
        );
        let bottom = SVG_MARGIN + SVG_PLOT;
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">0</text>"#, SVG_MARGIN, bottom + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">1</text>"#, bottom, bottom + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">0</text>"#, SVG_MARGIN - 4.0, bottom);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">1</text>"#, SVG_MARGIN - 4.0, SVG_MARGIN + 10.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">source contribution</text>"#,
            SVG_SIZE / 2.0,
            SVG_SIZE - 12.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {0})">gini impurity</text>"#,
            SVG_SIZE / 2.0
        );
        s.push_str("</svg>\n");
        s
    }
}

impl Emit for HeatmapGrid {
    fn csv(&self) -> Result<Vec<u8>> {
        let edges = |e: &[f64]| e.iter().map(|&x| fmt4(x)).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "# contribution_edges: {}\n# gini_edges: {}\n",
            edges(&self.contribution_edges),
            edges(&self.gini_edges)
        )
        .into_bytes();
        let rows = self.cells.iter().enumerate().flat_map(|(g, row)| {
            row.iter().enumerate().map(move |(c, cell)| {
                vec![
                    g.to_string(),
                    c.to_string(),
                    fmt4(self.gini_edges[g]),
                    fmt4(self.gini_edges[g + 1]),
                    fmt4(self.contribution_edges[c]),
                    fmt4(self.contribution_edges[c + 1]),
                    cell.count.to_string(),
                    cell.toxic.to_string(),
                    fmt4_opt(pct(cell.toxic_rate())),
                ]
            })
        });
        out.extend(csv_bytes(
            &["gini_bin", "contribution_bin", "gini_low", "gini_high", "contribution_low", "contribution_high", "count", "toxic", "pct_toxic"],
            rows,
        )?);
        Ok(out)
    }

    fn json_value(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    fn svg(&self) -> Option<String> {
        Some(self.to_svg())
    }
}
