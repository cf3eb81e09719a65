//! Parallel-corpus filtering by toxicity imbalance between source and target.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{LexiconSet, ToxicityLexicon};
use crate::par::{self, Execution};

/// Occurrence counts of lexicon matches on each side of a pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairToxicity {
    pub src_tox: usize,
    pub tgt_tox: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterPolicy {
    Baseline,
    #[serde(rename = "max_add_1")]
    MaxAdd1,
    NoAdd,
    NoTox,
}

impl FilterPolicy {
    pub const ALL: [FilterPolicy; 4] = [FilterPolicy::Baseline, FilterPolicy::MaxAdd1, FilterPolicy::NoAdd, FilterPolicy::NoTox];

    pub fn name(self) -> &'static str {
        match self {
            FilterPolicy::Baseline => "baseline",
            FilterPolicy::MaxAdd1 => "max_add_1",
            FilterPolicy::NoAdd => "no_add",
            FilterPolicy::NoTox => "no_tox",
        }
    }
}

impl fmt::Display for FilterPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown filter policy `{s}`")))
    }
}

pub fn pair_toxicity(src: &str, tgt: &str, src_lexicon: &ToxicityLexicon, tgt_lexicon: &ToxicityLexicon) -> PairToxicity {
    PairToxicity { src_tox: src_lexicon.count_matches(src), tgt_tox: tgt_lexicon.count_matches(tgt) }
}

pub fn keep(pair: PairToxicity, policy: FilterPolicy) -> bool {
    let diff = pair.src_tox.abs_diff(pair.tgt_tox);
    match policy {
        FilterPolicy::Baseline => true,
        FilterPolicy::MaxAdd1 => diff <= 1,
        FilterPolicy::NoAdd => diff == 0,
        FilterPolicy::NoTox => pair.src_tox + pair.tgt_tox == 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitextFormat {
    /// `src \t tgt`
    Tsv,
    /// `{"src": .., "tgt": .., "src_lang": .., "tgt_lang": ..}`
    Jsonl,
}

impl BitextFormat {
    /// Guesses from a file name; anything other than `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => BitextFormat::Jsonl,
            _ => BitextFormat::Tsv,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterOptions {
    pub policy: FilterPolicy,
    pub format: BitextFormat,
    /// Default languages when a record does not name its own.
    pub src_lang: String,
    pub tgt_lang: String,
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
    pub chunk_size: usize,
    pub exec: Execution,
}

impl FilterOptions {
    pub fn new(policy: FilterPolicy, format: BitextFormat, src_lang: &str, tgt_lang: &str) -> Self {
        FilterOptions {
            policy,
            format,
            src_lang: src_lang.to_string(),
            tgt_lang: tgt_lang.to_string(),
            strict: false,
            chunk_size: 8192,
            exec: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub src_tox: usize,
    pub tgt_tox: usize,
    pub count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub policy: String,
    pub input: u64,
    pub kept: u64,
    pub dropped: u64,
    pub malformed: u64,
    /// Dropped pairs by `(src_tox, tgt_tox)`, sorted.
    pub drop_histogram: Vec<HistogramBin>,
}

#[derive(Deserialize)]
struct JsonPair {
    src: String,
    tgt: String,
    #[serde(default)]
    src_lang: Option<String>,
    #[serde(default)]
    tgt_lang: Option<String>,
}

enum Outcome {
    Keep,
    Drop(PairToxicity),
    Malformed(String),
}

fn judge(line: &str, lexicons: &LexiconSet, opts: &FilterOptions) -> Result<Outcome> {
    let (src, tgt, src_lang, tgt_lang) = match opts.format {
        BitextFormat::Tsv => {
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(s), Some(t), None) => (s.to_string(), t.to_string(), None, None),
                _ => return Ok(Outcome::Malformed("expected exactly two tab-separated fields".into())),
            }
        }
        BitextFormat::Jsonl => match serde_json::from_str::<JsonPair>(line) {
            Ok(p) => (p.src, p.tgt, p.src_lang, p.tgt_lang),
            Err(e) => return Ok(Outcome::Malformed(e.to_string())),
        },
    };
    let src_lex = lexicons.get(src_lang.as_deref().unwrap_or(&opts.src_lang))?;
    let tgt_lex = lexicons.get(tgt_lang.as_deref().unwrap_or(&opts.tgt_lang))?;
    let pair = pair_toxicity(&src, &tgt, src_lex, tgt_lex);
    Ok(if keep(pair, opts.policy) { Outcome::Keep } else { Outcome::Drop(pair) })
}

/// Streams `reader` to `writer`, keeping the lines the policy accepts, in
/// input order. Memory use is bounded by the chunk size.
pub fn filter_corpus<R: BufRead, W: Write>(
    reader: R,
    mut writer: W,
    lexicons: &LexiconSet,
    opts: &FilterOptions,
) -> Result<FilterReport> {
    let mut report = FilterReport { policy: opts.policy.name().to_string(), ..Default::default() };
    let mut histogram: BTreeMap<PairToxicity, u64> = BTreeMap::new();
    let mut lines = reader.lines();
    let mut line_no = 0u64;
    loop {
        let mut chunk = Vec::with_capacity(opts.chunk_size.max(1));
        for line in lines.by_ref().take(opts.chunk_size.max(1)) {
            let mut line = line.map_err(|e| Error::io("<corpus>", e))?;
            if line.ends_with('\r') {
                line.pop();
            }
            chunk.push(line);
        }
        if chunk.is_empty() {
            break;
        }
        let outcomes = par::map(opts.exec, &chunk, |line| judge(line, lexicons, opts));
        for (line, outcome) in chunk.iter().zip(outcomes) {
            line_no += 1;
            report.input += 1;
            match outcome? {
                Outcome::Keep => {
                    report.kept += 1;
                    writeln!(writer, "{line}").map_err(|e| Error::io("<output>", e))?;
                }
                Outcome::Drop(pair) => {
                    report.dropped += 1;
                    *histogram.entry(pair).or_insert(0) += 1;
                }
                Outcome::Malformed(msg) => {
                    if opts.strict {
                        return Err(Error::Invalid(format!("line {line_no}: {msg}")));
                    }
                    report.malformed += 1;
                }
            }
        }
    }
    writer.flush().map_err(|e| Error::io("<output>", e))?;
    report.drop_histogram =
        histogram.into_iter().map(|(p, count)| HistogramBin { src_tox: p.src_tox, tgt_tox: p.tgt_tox, count }).collect();
    Ok(report)
}
