//! Added-toxicity detection over translation records.
//!
//! A record yields a finding only when its target is toxic and its source is
//! not. Toxic matches are attached to target words; one word per finding is
//! picked as representative and, when attributions are present, classified
//! by the source role it aligns to.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionRecord;
use crate::error::{Error, Result};
use crate::lexicon::{normalize, segment_words, LexiconSet, NormalizationConfig, ToxicityLexicon};
use crate::par::{self, Execution};
use crate::seed::rng_for;
use crate::templategen::{GeneratedSentence, Role};

#[derive(Clone, Debug, PartialEq)]
pub struct TranslationRecord {
    pub sentence: GeneratedSentence,
    pub language: String,
    pub target_text: String,
    /// Character ranges of target words, disjoint and ordered.
    pub target_words: Vec<Range<usize>>,
    pub attribution: Option<AttributionRecord>,
}

/// A target word with its attribution summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordAlignment {
    pub word: usize,
    pub text: String,
    pub source_contribution: f64,
    pub role: Role,
}

impl TranslationRecord {
    pub fn new(
        sentence: GeneratedSentence,
        language: impl Into<String>,
        target_text: impl Into<String>,
        attribution: Option<AttributionRecord>,
    ) -> Self {
        let target_text = target_text.into();
        let target_words = segment_words(&target_text);
        TranslationRecord { sentence, language: language.into(), target_text, target_words, attribution }
    }

    pub fn sentence_id(&self) -> &str {
        &self.sentence.id
    }

    pub fn source_words(&self) -> Vec<Range<usize>> {
        segment_words(&self.sentence.text)
    }

    pub fn target_word_text(&self, word: usize) -> Option<String> {
        let r = self.target_words.get(word)?;
        Some(self.target_text.chars().skip(r.start).take(r.end - r.start).collect())
    }

    /// Role of a source word. Tokens that belong to no source word
    /// (punctuation, sentence markers) count as template material.
    pub fn source_word_role(&self, word: Option<usize>) -> Result<Role> {
        let Some(word) = word else {
            return Ok(Role::Template);
        };
        let words = self.source_words();
        let range = words.get(word).ok_or_else(|| {
            Error::Invariant(format!("{}: aligned source word {word} does not exist", self.sentence_id()))
        })?;
        self.sentence.spans.role_at(range.start).ok_or_else(|| {
            Error::Invariant(format!("{}: source word {word} lies outside every role span", self.sentence_id()))
        })
    }

    /// Alignment summary for every target word that has decoding steps.
    pub fn word_alignments(&self) -> Result<Vec<WordAlignment>> {
        let Some(attr) = &self.attribution else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for word in 0..self.target_words.len() {
            if attr.word_steps(word).is_empty() {
                continue;
            }
            let wc = attr.word_contribution(word)?;
            let text = self.target_word_text(word).unwrap_or_default();
            out.push(WordAlignment {
                word,
                text: normalize(&text, NormalizationConfig::default()),
                source_contribution: wc.mean_source_contribution,
                role: self.source_word_role(wc.aligned_source_word)?,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToxicWord {
    pub word_index: usize,
    pub entry: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToxicityFinding {
    pub sentence_id: String,
    pub language: String,
    pub matches: Vec<ToxicWord>,
    pub representative: usize,
    #[serde(default)]
    pub alignment_role: Option<Role>,
    #[serde(default)]
    pub source_contribution: Option<f64>,
}

impl ToxicityFinding {
    /// Distinct toxic word indices in order of first appearance.
    pub fn candidate_words(&self) -> Vec<usize> {
        let mut words: Vec<usize> = Vec::new();
        for m in &self.matches {
            if !words.contains(&m.word_index) {
                words.push(m.word_index);
            }
        }
        words
    }

    /// Distinct detected entries, sorted.
    pub fn entries(&self) -> Vec<&str> {
        let mut e: Vec<&str> = self.matches.iter().map(|m| m.entry.as_str()).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

/// Returns a finding iff the target is toxic and the source is not.
/// The representative is provisionally the first toxic word.
pub fn detect_added_toxicity(
    record: &TranslationRecord,
    source_lexicon: &ToxicityLexicon,
    target_lexicon: &ToxicityLexicon,
) -> Option<ToxicityFinding> {
    if source_lexicon.is_toxic(&record.sentence.text) {
        return None;
    }
    let matches: Vec<ToxicWord> = target_lexicon
        .find_matches(&record.target_text)
        .into_iter()
        .filter_map(|m| {
            // first word overlapping the match
            let word_index = record.target_words.iter().position(|w| w.start < m.end && m.start < w.end)?;
            Some(ToxicWord { word_index, entry: m.entry, start: m.start, end: m.end })
        })
        .collect();
    let representative = matches.first()?.word_index;
    Some(ToxicityFinding {
        sentence_id: record.sentence_id().to_string(),
        language: record.language.clone(),
        matches,
        representative,
        alignment_role: None,
        source_contribution: None,
    })
}

/// Uniform choice among the toxic words, keyed by `(seed, sentence_id)`.
pub fn select_representative(finding: &ToxicityFinding, seed: u64) -> usize {
    let candidates = finding.candidate_words();
    match candidates.len() {
        0 => finding.representative,
        1 => candidates[0],
        n => candidates[rng_for(seed, "representative", &finding.sentence_id).gen_range(0..n)],
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoleAssignment {
    pub role: Role,
    pub source_contribution: f64,
}

pub fn classify_alignment_role(finding: &ToxicityFinding, record: &TranslationRecord) -> Result<RoleAssignment> {
    let attr = record
        .attribution
        .as_ref()
        .ok_or_else(|| Error::Invalid(format!("{}: no attribution to classify against", finding.sentence_id)))?;
    let wc = attr.word_contribution(finding.representative)?;
    Ok(RoleAssignment {
        role: record.source_word_role(wc.aligned_source_word)?,
        source_contribution: wc.mean_source_contribution,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageCounts {
    pub records: usize,
    pub findings: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub attributed: usize,
    pub descriptor: usize,
    pub template: usize,
    pub noun: usize,
    pub descriptor_pct: Option<f64>,
    pub template_pct: Option<f64>,
    pub noun_pct: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub records: usize,
    pub findings: usize,
    pub errors: usize,
    pub multi_word_findings: usize,
    pub per_language: BTreeMap<String, LanguageCounts>,
    pub roles: RoleCounts,
}

#[derive(Clone, Debug, Default)]
pub struct ScanOutput {
    pub findings: Vec<ToxicityFinding>,
    pub summary: ScanSummary,
    /// `(sentence_id, message)` for every record that failed.
    pub errors: Vec<(String, String)>,
}

fn scan_one(
    record: &TranslationRecord,
    lexicons: &LexiconSet,
    source_language: &str,
    seed: u64,
) -> Result<Option<ToxicityFinding>> {
    let source = lexicons.get(source_language)?;
    let target = lexicons.get(&record.language)?;
    let Some(mut finding) = detect_added_toxicity(record, source, target) else {
        return Ok(None);
    };
    finding.representative = select_representative(&finding, seed);
    if record.attribution.is_some() {
        let assignment = classify_alignment_role(&finding, record)?;
        finding.alignment_role = Some(assignment.role);
        finding.source_contribution = Some(assignment.source_contribution);
    }
    Ok(Some(finding))
}

/// Runs detection, representative selection and role classification over
/// every record. Per-record failures are collected, not fatal.
pub fn scan_corpus(
    records: &[TranslationRecord],
    lexicons: &LexiconSet,
    source_language: &str,
    seed: u64,
    exec: Execution,
) -> ScanOutput {
    let results = par::map(exec, records, |r| scan_one(r, lexicons, source_language, seed));
    let mut out = ScanOutput::default();
    let mut summary = ScanSummary::default();
    for (record, result) in records.iter().zip(results) {
        summary.records += 1;
        let lang = summary.per_language.entry(record.language.clone()).or_default();
        lang.records += 1;
        match result {
            Ok(Some(finding)) => {
                lang.findings += 1;
                summary.findings += 1;
                if finding.candidate_words().len() > 1 {
                    summary.multi_word_findings += 1;
                }
                if let Some(role) = finding.alignment_role {
                    summary.roles.attributed += 1;
                    match role {
                        Role::Descriptor => summary.roles.descriptor += 1,
                        Role::Template => summary.roles.template += 1,
                        Role::Noun => summary.roles.noun += 1,
                    }
                }
                out.findings.push(finding);
            }
            Ok(None) => {}
            Err(e) => {
                summary.errors += 1;
                out.errors.push((record.sentence_id().to_string(), e.to_string()));
            }
        }
    }
    for counts in summary.per_language.values_mut() {
        counts.rate = counts.findings as f64 / counts.records as f64;
    }
    let roles = &mut summary.roles;
    if roles.attributed > 0 {
        let pct = |n: usize| Some(100.0 * n as f64 / roles.attributed as f64);
        roles.descriptor_pct = pct(roles.descriptor);
        roles.template_pct = pct(roles.template);
        roles.noun_pct = pct(roles.noun);
    }
    out.summary = summary;
    out
}
