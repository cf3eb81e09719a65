//! Translation robustness across nouns.
//!
//! For each `(language, descriptor, template)` cell the target words aligned
//! to the descriptor are collected, one entry per noun variant, and their
//! Gini impurity measures how unstable the descriptor translation is.
//! Translations with low source contribution and high impurity are flagged.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::detector::{ToxicityFinding, TranslationRecord};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::stats::Observation;
use crate::templategen::Role;

/// `1 - sum(p_i^2)` over the distinct values of `items`.
pub fn gini_impurity<T: AsRef<str>>(items: &[T]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Undefined("Gini impurity of an empty cell".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for item in items {
        *counts.entry(item.as_ref()).or_insert(0) += 1;
    }
    let total = items.len() as u64;
    // exact integer sum of squares, one division at the end
    let squares: u128 = counts.values().map(|&c| (c as u128) * (c as u128)).sum();
    Ok(1.0 - squares as f64 / ((total as u128) * (total as u128)) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlagThresholds {
    pub contribution_max: f64,
    pub gini_min: f64,
}

impl Default for FlagThresholds {
    fn default() -> Self {
        FlagThresholds { contribution_max: 0.40, gini_min: 0.90 }
    }
}

impl FlagThresholds {
    pub fn new(contribution_max: f64, gini_min: f64) -> Result<Self> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(contribution_max) || !ok(gini_min) {
            return Err(Error::Config(format!("thresholds must lie in [0,1], got {contribution_max},{gini_min}")));
        }
        Ok(FlagThresholds { contribution_max, gini_min })
    }

    /// Parses `"0.40,0.90"`.
    pub fn parse(text: &str) -> Result<Self> {
        let (c, g) = text
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("thresholds `{text}` must look like 0.40,0.90")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("threshold `{s}`: {e}")));
        Self::new(num(c)?, num(g)?)
    }
}

/// Both comparisons are strict.
pub fn flag(contribution: f64, gini: f64, thresholds: FlagThresholds) -> bool {
    contribution < thresholds.contribution_max && gini > thresholds.gini_min
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub language: String,
    pub descriptor_id: String,
    pub template_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiniCell {
    pub key: CellKey,
    /// Descriptor translation per noun variant, in input order. Empty
    /// string where a variant had no descriptor-aligned word.
    pub aligned_words: Vec<String>,
    /// `None` when some variant had no descriptor-aligned word.
    pub gini: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationItem {
    pub language: String,
    pub sentence_id: String,
    pub contribution: f64,
    pub gini: f64,
    pub toxic: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RobustnessAnalysis {
    pub cells: Vec<GiniCell>,
    pub undefined_cells: usize,
    pub population: Vec<PopulationItem>,
    /// Records left out of the population because their cell is undefined.
    pub excluded_records: usize,
    /// Every translation with a descriptor-aligned word, undefined cells
    /// included. Input to the per-language test battery.
    pub observations: Vec<Observation>,
}

struct RecordSummary {
    key: CellKey,
    sentence_id: String,
    /// `(joined text, mean contribution, word indices)` of descriptor-aligned words.
    descriptor: Option<(String, f64, Vec<usize>)>,
}

fn summarize(record: &TranslationRecord) -> Result<RecordSummary> {
    let aligned: Vec<_> = record.word_alignments()?.into_iter().filter(|w| w.role == Role::Descriptor).collect();
    let descriptor = (!aligned.is_empty()).then(|| {
        let text = aligned.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        let mean = aligned.iter().map(|w| w.source_contribution).sum::<f64>() / aligned.len() as f64;
        (text, mean, aligned.iter().map(|w| w.word).collect())
    });
    Ok(RecordSummary {
        key: CellKey {
            language: record.language.clone(),
            descriptor_id: record.sentence.descriptor_id.clone(),
            template_id: record.sentence.template_id.clone(),
        },
        sentence_id: record.sentence.id.clone(),
        descriptor,
    })
}

/// Groups attributed records into cells and builds the flagging population.
/// Records without attribution are skipped. Output is ordered by
/// `(language, descriptor_id, template_id)` then input order.
pub fn analyze(records: &[TranslationRecord], findings: &[ToxicityFinding], exec: Execution) -> Result<RobustnessAnalysis> {
    let attributed: Vec<&TranslationRecord> = records.iter().filter(|r| r.attribution.is_some()).collect();
    let summaries = par::map(exec, &attributed, |r| summarize(r)).into_iter().collect::<Result<Vec<_>>>()?;

    let toxic_words: HashMap<(&str, &str), HashSet<usize>> = findings
        .iter()
        .map(|f| ((f.language.as_str(), f.sentence_id.as_str()), f.matches.iter().map(|m| m.word_index).collect()))
        .collect();

    let mut groups: BTreeMap<&CellKey, Vec<&RecordSummary>> = BTreeMap::new();
    for s in &summaries {
        groups.entry(&s.key).or_default().push(s);
    }

    let mut out = RobustnessAnalysis::default();
    for (key, members) in groups {
        let words: Vec<String> =
            members.iter().map(|m| m.descriptor.as_ref().map(|d| d.0.clone()).unwrap_or_default()).collect();
        let defined = members.iter().all(|m| m.descriptor.is_some());
        let gini = if defined { Some(gini_impurity(&words)?) } else { None };
        out.cells.push(GiniCell { key: key.clone(), aligned_words: words, gini });
        if gini.is_none() {
            out.undefined_cells += 1;
            out.excluded_records += members.len();
        }
        for m in members {
            let Some((_, contribution, word_ids)) = m.descriptor.as_ref() else { continue };
            let toxic = toxic_words
                .get(&(key.language.as_str(), m.sentence_id.as_str()))
                .is_some_and(|set| word_ids.iter().any(|w| set.contains(w)));
            out.observations.push(Observation { language: key.language.clone(), contribution: *contribution, toxic });
            if let Some(gini) = gini {
                out.population.push(PopulationItem {
                    language: key.language.clone(),
                    sentence_id: m.sentence_id.clone(),
                    contribution: *contribution,
                    gini,
                    toxic,
                });
            }
        }
    }
    Ok(out)
}

/// Cells only; see [`analyze`].
pub fn build_cells(records: &[TranslationRecord]) -> Result<Vec<GiniCell>> {
    Ok(analyze(records, &[], Execution::Sequential)?.cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub population: u64,
    pub flagged: u64,
    pub unflagged: u64,
    pub toxic_total: u64,
    pub toxic_flagged: u64,
    /// Share of the population inside the region.
    pub flagged_share: f64,
    /// Share of toxic items inside the region; undefined without toxic items.
    pub toxic_flagged_share: Option<f64>,
    pub region_toxic_rate: Option<f64>,
    pub overall_toxic_rate: f64,
    /// `region_toxic_rate / overall_toxic_rate`.
    pub ratio: Option<f64>,
}

pub fn region_stats(population: &[PopulationItem], thresholds: FlagThresholds) -> Result<RegionReport> {
    if population.is_empty() {
        return Err(Error::Undefined("region statistics over an empty population".into()));
    }
    let n = population.len() as u64;
    let (mut flagged, mut toxic_total, mut toxic_flagged) = (0u64, 0u64, 0u64);
    for item in population {
        let f = flag(item.contribution, item.gini, thresholds);
        flagged += f as u64;
        toxic_total += item.toxic as u64;
        toxic_flagged += (f && item.toxic) as u64;
    }
    let ratio = (flagged > 0 && toxic_total > 0)
        .then(|| (toxic_flagged as u128 * n as u128) as f64 / (flagged as u128 * toxic_total as u128) as f64);
    Ok(RegionReport {
        population: n,
        flagged,
        unflagged: n - flagged,
        toxic_total,
        toxic_flagged,
        flagged_share: flagged as f64 / n as f64,
        toxic_flagged_share: (toxic_total > 0).then(|| toxic_flagged as f64 / toxic_total as f64),
        region_toxic_rate: (flagged > 0).then(|| toxic_flagged as f64 / flagged as f64),
        overall_toxic_rate: toxic_total as f64 / n as f64,
        ratio,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub count: u64,
    pub toxic: u64,
}

impl GridCell {
    /// `None` for an empty cell, distinct from a 0% rate.
    pub fn toxic_rate(&self) -> Option<f64> {
        (self.count > 0).then(|| self.toxic as f64 / self.count as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub contribution_edges: Vec<f64>,
    pub gini_edges: Vec<f64>,
    /// `cells[gini_bin][contribution_bin]`.
    pub cells: Vec<Vec<GridCell>>,
}

impl HeatmapGrid {
    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().map(|c| c.count).sum()
    }
}

pub fn uniform_edges(bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| i as f64 / bins as f64).collect()
}

fn check_edges(edges: &[f64], what: &str) -> Result<()> {
    let increasing = edges.windows(2).all(|w| w[0] < w[1]);
    if edges.len() < 2 || !increasing || edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
        return Err(Error::Invalid(format!("{what} bin edges must increase strictly from 0 to 1")));
    }
    Ok(())
}

/// Bins are left-closed and right-open, except the last which is closed.
fn bin_of(edges: &[f64], value: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    if !(edges[0]..=edges[bins]).contains(&value) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= value).saturating_sub(1).min(bins - 1))
}

pub fn heatmap_grid(population: &[PopulationItem], contribution_edges: &[f64], gini_edges: &[f64]) -> Result<HeatmapGrid> {
    check_edges(contribution_edges, "contribution")?;
    check_edges(gini_edges, "gini")?;
    let mut cells = vec![vec![GridCell::default(); contribution_edges.len() - 1]; gini_edges.len() - 1];
    for item in population {
        let (Some(c), Some(g)) = (bin_of(contribution_edges, item.contribution), bin_of(gini_edges, item.gini)) else {
            return Err(Error::Invalid(format!(
                "{}: point ({}, {}) outside [0,1]",
                item.sentence_id, item.contribution, item.gini
            )));
        };
        cells[g][c].count += 1;
        cells[g][c].toxic += item.toxic as u64;
    }
    Ok(HeatmapGrid { contribution_edges: contribution_edges.to_vec(), gini_edges: gini_edges.to_vec(), cells })
}
