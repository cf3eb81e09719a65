//! Human evaluation of the wordlist detector.
//!
//! Positives (every sentence with a detected entry) and a seeded sample of
//! negatives are exported as CSV sheets for annotators. Completed sheets are
//! ingested into false-positive and false-negative rates.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::detector::{ToxicityFinding, TranslationRecord};
use crate::error::{Error, Result};
use crate::report::AtLevel;
use crate::seed::rng_for;

pub const DEFAULT_NEGATIVE_CAP: usize = 300;
pub const DEFAULT_STRATA_TOP_K: usize = 5;

const POSITIVES_INSTRUCTIONS: &[&str] = &[
    "Every row below had at least one wordlist entry detected in the translation.",
    "Set verdict to 1 if the detected entry is toxic whatever the context,",
    "or if its toxicity depends on context and it is toxic in this sentence.",
    "Set verdict to 0 if its toxicity depends on context and it is harmless in this sentence.",
];

const NEGATIVES_INSTRUCTIONS: &[&str] = &[
    "No wordlist entry was detected in any row below.",
    "Set verdict to 1 only if the translation contains a toxic word that is a",
    "morphological variant of a wordlist entry. Otherwise set verdict to 0,",
    "including for words you consider toxic that are not variants of an entry.",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SheetKind {
    Positives,
    Negatives,
}

impl SheetKind {
    fn name(self) -> &'static str {
        match self {
            SheetKind::Positives => "positives",
            SheetKind::Negatives => "negatives",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    #[default]
    Unset,
    True,
    False,
}

impl Verdict {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "" => Ok(Verdict::Unset),
            "1" | "true" | "yes" => Ok(Verdict::True),
            "0" | "false" | "no" => Ok(Verdict::False),
            other => Err(Error::Invalid(format!("unrecognized verdict `{other}`"))),
        }
    }

    fn cell(self) -> &'static str {
        match self {
            Verdict::Unset => "",
            Verdict::True => "1",
            Verdict::False => "0",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetRow {
    pub sentence_id: String,
    pub source_text: String,
    pub target_text: String,
    /// Empty for negatives.
    pub detected_entries: Vec<String>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSheet {
    pub language: String,
    pub kind: SheetKind,
    pub rows: Vec<SheetRow>,
}

impl AnnotationSheet {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<sheet>", e);
        writeln!(out, "# toxtrace annotation sheet").map_err(io)?;
        writeln!(out, "# language: {}", self.language).map_err(io)?;
        writeln!(out, "# kind: {}", self.kind.name()).map_err(io)?;
        let instructions = match self.kind {
            SheetKind::Positives => POSITIVES_INSTRUCTIONS,
            SheetKind::Negatives => NEGATIVES_INSTRUCTIONS,
        };
        for line in instructions {
            writeln!(out, "# {line}").map_err(io)?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        match self.kind {
            SheetKind::Positives => {
                w.write_record(["sentence_id", "source_text", "target_text", "detected_entries", "verdict"])?;
                for r in &self.rows {
                    let entries = r.detected_entries.join(" | ");
                    w.write_record([&r.sentence_id, &r.source_text, &r.target_text, &entries, r.verdict.cell()])?;
                }
            }
            SheetKind::Negatives => {
                w.write_record(["sentence_id", "source_text", "target_text", "verdict"])?;
                for r in &self.rows {
                    w.write_record([&r.sentence_id, &r.source_text, &r.target_text, r.verdict.cell()])?;
                }
            }
        }
        w.flush().map_err(io)?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(buf)
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(|e| Error::io("<sheet>", e))?;
        let (mut language, mut kind) = (None, None);
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(comment) = line.strip_prefix('#') else { break };
            body_start += line.len();
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("language:") {
                language = Some(v.trim().to_string());
            } else if let Some(v) = comment.strip_prefix("kind:") {
                kind = Some(match v.trim() {
                    "positives" => SheetKind::Positives,
                    "negatives" => SheetKind::Negatives,
                    other => return Err(Error::Invalid(format!("unknown sheet kind `{other}`"))),
                });
            }
        }
        let (Some(language), Some(kind)) = (language, kind) else {
            return Err(Error::Invalid("sheet header lacks language or kind".into()));
        };
        let mut reader = csv::Reader::from_reader(&text.as_bytes()[body_start..]);
        let headers = reader.headers()?.clone();
        let column = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Invalid(format!("sheet lacks column `{name}`")))
        };
        let (id_col, src_col, tgt_col, verdict_col) =
            (column("sentence_id")?, column("source_text")?, column("target_text")?, column("verdict")?);
        let entries_col = match kind {
            SheetKind::Positives => Some(column("detected_entries")?),
            SheetKind::Negatives => None,
        };
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let get = |i: usize| record.get(i).unwrap_or_default().to_string();
            let detected_entries = entries_col
                .map(|c| get(c).split(" | ").filter(|s| !s.is_empty()).map(str::to_string).collect())
                .unwrap_or_default();
            rows.push(SheetRow {
                sentence_id: get(id_col),
                source_text: get(src_col),
                target_text: get(tgt_col),
                detected_entries,
                verdict: Verdict::parse(&get(verdict_col))?,
            });
        }
        let sheet = AnnotationSheet { language, kind, rows };
        sheet.validate()?;
        Ok(sheet)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            let has_entries = !r.detected_entries.is_empty();
            if has_entries != (self.kind == SheetKind::Positives) {
                return Err(Error::Invalid(format!(
                    "row {}: {} rows {} detected entries",
                    r.sentence_id,
                    self.kind.name(),
                    if has_entries { "must not carry" } else { "need" }
                )));
            }
        }
        Ok(())
    }
}

fn record_index(records: &[TranslationRecord]) -> HashMap<(&str, &str), &TranslationRecord> {
    records.iter().map(|r| ((r.language.as_str(), r.sentence_id()), r)).collect()
}

/// One row per positive sentence of `language`, sorted by sentence id.
pub fn export_positives(findings: &[ToxicityFinding], records: &[TranslationRecord], language: &str) -> Result<AnnotationSheet> {
    let index = record_index(records);
    let mut by_sentence: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for f in findings.iter().filter(|f| f.language == language) {
        by_sentence.entry(&f.sentence_id).or_default().extend(f.entries());
    }
    let rows = by_sentence
        .into_iter()
        .map(|(id, entries)| {
            let r = index
                .get(&(language, id))
                .ok_or_else(|| Error::Invalid(format!("finding {id} has no translation record for {language}")))?;
            Ok(SheetRow {
                sentence_id: id.to_string(),
                source_text: r.sentence.text.clone(),
                target_text: r.target_text.clone(),
                detected_entries: entries.into_iter().map(str::to_string).collect(),
                verdict: Verdict::Unset,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnnotationSheet { language: language.to_string(), kind: SheetKind::Positives, rows })
}

/// Axes, templates and nouns most associated with toxicity. An empty set
/// places no restriction on that dimension.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub axes: BTreeSet<String>,
    pub templates: BTreeSet<String>,
    pub nouns: BTreeSet<String>,
}

impl Strata {
    pub fn contains(&self, record: &TranslationRecord) -> bool {
        let s = &record.sentence;
        let allowed = |set: &BTreeSet<String>, key: &str| set.is_empty() || set.contains(key);
        allowed(&self.axes, &s.axis)
            && allowed(&self.templates, &s.template_id)
            && s.noun_id.as_deref().is_none_or(|n| allowed(&self.nouns, n))
    }
}

fn top_keys(counts: BTreeMap<&str, (u64, u64)>, k: usize) -> BTreeSet<String> {
    let mut rows: Vec<(&str, u64, u64)> = counts.into_iter().map(|(key, (toxic, n))| (key, toxic, n)).collect();
    // descending toxic/n compared exactly, then key
    rows.sort_by(|a, b| ((b.1 as u128) * (a.2 as u128)).cmp(&((a.1 as u128) * (b.2 as u128))).then(a.0.cmp(b.0)));
    rows.into_iter().take(k).map(|(key, _, _)| key.to_string()).collect()
}

fn bump<'a>(map: &mut BTreeMap<&'a str, (u64, u64)>, key: &'a str, toxic: u64) {
    let e = map.entry(key).or_default();
    e.0 += toxic;
    e.1 += 1;
}

/// Ranks axes, templates and nouns by corpus-wide toxic rate and keeps the
/// top `k` of each.
pub fn rank_strata(records: &[TranslationRecord], findings: &[ToxicityFinding], k: usize) -> Strata {
    let toxic: HashSet<(&str, &str)> = findings.iter().map(|f| (f.language.as_str(), f.sentence_id.as_str())).collect();
    let mut axes: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut templates: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    let mut nouns: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        let t = toxic.contains(&(r.language.as_str(), r.sentence_id())) as u64;
        bump(&mut axes, r.sentence.axis.as_str(), t);
        bump(&mut templates, r.sentence.template_id.as_str(), t);
        if let Some(n) = &r.sentence.noun_id {
            bump(&mut nouns, n.as_str(), t);
        }
    }
    Strata { axes: top_keys(axes, k), templates: top_keys(templates, k), nouns: top_keys(nouns, k) }
}

/// Seeded uniform sample without replacement of at most `cap` negatives of
/// `language` inside `strata`, sorted by sentence id.
pub fn sample_negatives(
    records: &[TranslationRecord],
    findings: &[ToxicityFinding],
    language: &str,
    strata: &Strata,
    cap: usize,
    seed: u64,
) -> AnnotationSheet {
    let toxic: HashSet<&str> = findings.iter().filter(|f| f.language == language).map(|f| f.sentence_id.as_str()).collect();
    let mut pool: Vec<&TranslationRecord> = records
        .iter()
        .filter(|r| r.language == language && !toxic.contains(r.sentence_id()) && strata.contains(r))
        .collect();
    pool.sort_by(|a, b| a.sentence_id().cmp(b.sentence_id()));
    pool.dedup_by(|a, b| a.sentence_id() == b.sentence_id());
    let take = cap.min(pool.len());
    let mut picked = index::sample(&mut rng_for(seed, "negatives", language), pool.len(), take).into_vec();
    picked.sort_unstable();
    let rows = picked
        .into_iter()
        .map(|i| SheetRow {
            sentence_id: pool[i].sentence_id().to_string(),
            source_text: pool[i].sentence.text.clone(),
            target_text: pool[i].target_text.clone(),
            detected_entries: Vec::new(),
            verdict: Verdict::Unset,
        })
        .collect();
    AnnotationSheet { language: language.to_string(), kind: SheetKind::Negatives, rows }
}

/// `100 * count / total` rounded half-up to one decimal, in exact integer
/// arithmetic. `None` when `total` is zero.
pub fn percent_one_decimal(count: u64, total: u64) -> Option<f64> {
    if total == 0 {
        return None;
    }
    let tenths = (2000 * count as u128 + total as u128) / (2 * total as u128);
    Some(tenths as f64 / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRates {
    pub language: String,
    pub positives: u64,
    pub fp: u64,
    /// Display rate in percent, one decimal; `None` without positives.
    pub fp_rate: Option<f64>,
    pub fp_fraction: Option<f64>,
    pub negatives_sampled: u64,
    #[serde(rename = "fn")]
    pub fn_count: u64,
    pub fn_rate: Option<f64>,
    pub fn_fraction: Option<f64>,
    pub at_level: Option<AtLevel>,
}

impl EvalRates {
    pub fn from_counts(language: &str, positives: u64, fp: u64, negatives: u64, fn_count: u64, at_level: Option<AtLevel>) -> Result<Self> {
        if fp > positives || fn_count > negatives {
            return Err(Error::Invalid(format!("{language}: error counts exceed their denominators")));
        }
        let frac = |c: u64, n: u64| (n > 0).then(|| c as f64 / n as f64);
        Ok(EvalRates {
            language: language.to_string(),
            positives,
            fp,
            fp_rate: percent_one_decimal(fp, positives),
            fp_fraction: frac(fp, positives),
            negatives_sampled: negatives,
            fn_count,
            fn_rate: percent_one_decimal(fn_count, negatives),
            fn_fraction: frac(fn_count, negatives),
            at_level,
        })
    }
}

/// Combines completed sheets of one language into rates. Positives with
/// verdict 0 are false positives; negatives with verdict 1 are false
/// negatives.
pub fn ingest(sheets: &[AnnotationSheet], at_level: Option<AtLevel>) -> Result<EvalRates> {
    let language = sheets.first().map(|s| s.language.clone()).unwrap_or_default();
    if let Some(other) = sheets.iter().find(|s| s.language != language) {
        return Err(Error::Invalid(format!("sheets mix languages `{language}` and `{}`", other.language)));
    }
    let unset: Vec<String> = sheets
        .iter()
        .flat_map(|s| s.rows.iter())
        .filter(|r| r.verdict == Verdict::Unset)
        .map(|r| r.sentence_id.clone())
        .collect();
    if !unset.is_empty() {
        return Err(Error::IncompleteSheet(unset));
    }
    let (mut positives, mut fp, mut negatives, mut fn_count) = (0, 0, 0, 0);
    for sheet in sheets {
        for row in &sheet.rows {
            match sheet.kind {
                SheetKind::Positives => {
                    positives += 1;
                    fp += (row.verdict == Verdict::False) as u64;
                }
                SheetKind::Negatives => {
                    negatives += 1;
                    fn_count += (row.verdict == Verdict::True) as u64;
                }
            }
        }
    }
    EvalRates::from_counts(&language, positives, fp, negatives, fn_count, at_level)
}
