//! Wordlist toxicity detection.
//!
//! An entry matches when the normalized text contains it and both ends of the
//! occurrence abut a separator character or a text boundary. Word characters
//! are letters, digits, combining marks, apostrophes and hyphen-minus; every
//! other character separates words. So `ass` is found in `kick ass!` but not
//! in `bass` or `assistant`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};
use unicode_normalization::char::{canonical_combining_class, is_combining_mark};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum NormalForm {
    Nfc,
    #[default]
    Nfkc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub casefold: bool,
    pub form: NormalForm,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig { casefold: true, form: NormalForm::Nfkc }
    }
}

/// True for characters that belong to a word.
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c) || matches!(c, '\'' | '\u{2019}' | '-')
}

/// Character ranges of the maximal runs of word characters in `text`.
pub fn segment_words(text: &str) -> Vec<Range<usize>> {
    let mut words = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                words.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        words.push(s..n);
    }
    words
}

/// Normalizes a string the way lexicon entries and scanned text are
/// normalized: whitespace runs collapse to one space, then the configured
/// normal form and case folding apply.
pub fn normalize(text: &str, config: NormalizationConfig) -> String {
    NormalizedText::new(text, config).text
}

const NONE: u32 = u32::MAX;

/// Normalized copy of a text that remembers, for every normalized byte
/// offset, which original character a normalization unit starts or ends at.
/// A unit is either a whitespace run or a base character with its trailing
/// combining marks.
struct NormalizedText {
    text: String,
    starts: Vec<u32>,
    ends: Vec<u32>,
}

impl NormalizedText {
    fn new(input: &str, config: NormalizationConfig) -> Self {
        let chars: Vec<char> = input.chars().collect();
        let mut text = String::with_capacity(input.len());
        let mut starts = vec![NONE; input.len() + 1];
        let mut ends = vec![NONE; input.len() + 1];
        let mut scratch = String::new();

        let mut i = 0;
        while i < chars.len() {
            let unit_start = i;
            let c = chars[i];
            let begin = text.len();
            if c.is_whitespace() {
                while i < chars.len() && chars[i].is_whitespace() {
                    i += 1;
                }
                text.push(' ');
            } else {
                i += 1;
                while i < chars.len() && canonical_combining_class(chars[i]) != 0 {
                    i += 1;
                }
                if c.is_ascii() && i == unit_start + 1 {
                    text.push(if config.casefold { c.to_ascii_lowercase() } else { c });
                } else {
                    scratch.clear();
                    normalize_cluster(&chars[unit_start..i], config, &mut scratch);
                    text.push_str(&scratch);
                }
            }
            if text.len() == begin {
                // unit normalized to nothing (e.g. default-ignorable characters)
                continue;
            }
            if text.len() >= starts.len() {
                starts.resize(text.len() + 1, NONE);
                ends.resize(text.len() + 1, NONE);
            }
            starts[begin] = unit_start as u32;
            ends[text.len()] = i as u32;
        }
        starts.truncate(text.len() + 1);
        ends.truncate(text.len() + 1);
        NormalizedText { text, starts, ends }
    }

    /// Maps a normalized byte range back to an original char range, if the
    /// range starts and ends on unit boundaries.
    fn original_range(&self, start: usize, end: usize) -> Option<(usize, usize)> {
        let s = self.starts[start];
        let e = self.ends[end];
        (s != NONE && e != NONE).then_some((s as usize, e as usize))
    }
}

fn normalize_cluster(cluster: &[char], config: NormalizationConfig, out: &mut String) {
    let composed: String = match config.form {
        NormalForm::Nfc => cluster.iter().copied().nfc().collect(),
        NormalForm::Nfkc => cluster.iter().copied().nfkc().collect(),
    };
    if config.casefold {
        let folded = caseless::default_case_fold_str(&composed);
        match config.form {
            NormalForm::Nfc => out.extend(folded.nfc()),
            NormalForm::Nfkc => out.extend(folded.nfkc()),
        }
    } else {
        out.push_str(&composed);
    }
}

fn normalize_entry(raw: &str, config: NormalizationConfig) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    normalize(&collapsed, config).trim().to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchSpan {
    /// Inclusive start, in characters.
    pub start: usize,
    /// Exclusive end, in characters.
    pub end: usize,
    pub entry: String,
}

/// Bookkeeping from building a lexicon.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub duplicates_dropped: usize,
    /// Entries without a single word character can never be attached to a
    /// target word, so they are dropped.
    pub wordless_dropped: usize,
}

#[derive(Clone, Debug)]
pub struct ToxicityLexicon {
    language: String,
    entries: Vec<String>,
    normalization: NormalizationConfig,
    automaton: Option<AhoCorasick>,
    report: LoadReport,
}

impl ToxicityLexicon {
    /// Builds a lexicon from raw entries. An empty entry list is allowed here
    /// and yields a lexicon that never matches.
    pub fn from_entries<I, S>(language: &str, raw: I, normalization: NormalizationConfig) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if language.trim().is_empty() {
            return Err(Error::Config("lexicon language code is empty".into()));
        }
        let mut report = LoadReport::default();
        let mut seen = BTreeSet::new();
        for entry in raw {
            report.lines_read += 1;
            let normalized = normalize_entry(entry.as_ref(), normalization);
            if normalized.is_empty() {
                continue;
            }
            if !normalized.chars().any(is_word_char) {
                report.wordless_dropped += 1;
                continue;
            }
            if !seen.insert(normalized) {
                report.duplicates_dropped += 1;
            }
        }
        let entries: Vec<String> = seen.into_iter().collect();
        let automaton = if entries.is_empty() {
            None
        } else {
            Some(
                AhoCorasick::builder()
                    .match_kind(MatchKind::Standard)
                    .build(&entries)
                    .map_err(|e| Error::Config(format!("cannot build matcher: {e}")))?,
            )
        };
        Ok(ToxicityLexicon { language: language.to_string(), entries, normalization, automaton, report })
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    /// Normalized entries, sorted.
    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn normalization(&self) -> NormalizationConfig {
        self.normalization
    }

    pub fn load_report(&self) -> &LoadReport {
        &self.report
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every boundary-respecting occurrence of every entry, sorted by
    /// `(start, end, entry)`.
    pub fn find_matches(&self, text: &str) -> Vec<MatchSpan> {
        let Some(automaton) = &self.automaton else {
            return Vec::new();
        };
        if text.is_empty() {
            return Vec::new();
        }
        let normalized = NormalizedText::new(text, self.normalization);
        let mut chars: Option<Vec<char>> = None;
        let mut spans = Vec::new();
        for m in automaton.find_overlapping_iter(&normalized.text) {
            let Some((start, end)) = normalized.original_range(m.start(), m.end()) else {
                continue;
            };
            let chars = chars.get_or_insert_with(|| text.chars().collect());
            let left_ok = start == 0 || !is_word_char(chars[start - 1]);
            let right_ok = end == chars.len() || !is_word_char(chars[end]);
            if left_ok && right_ok {
                spans.push(MatchSpan { entry: self.entries[m.pattern().as_usize()].clone(), start, end });
            }
        }
        spans.sort();
        spans.dedup();
        spans
    }

    pub fn is_toxic(&self, text: &str) -> bool {
        !self.find_matches(text).is_empty()
    }

    /// Number of occurrences (not distinct entries).
    pub fn count_matches(&self, text: &str) -> usize {
        self.find_matches(text).len()
    }
}

/// Reads a lexicon file: UTF-8, one entry per line, `#` starts a comment line.
pub fn load_lexicon(path: &Path, language: &str, normalization: NormalizationConfig) -> Result<ToxicityLexicon> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| Error::Decode { path: path.to_path_buf(), line: i + 1 })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lines.push(line.to_string());
    }
    let lexicon = ToxicityLexicon::from_entries(language, &lines, normalization)?;
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon(path.display().to_string()));
    }
    Ok(lexicon)
}

/// Lexicons keyed by language code.
#[derive(Clone, Debug, Default)]
pub struct LexiconSet {
    lexicons: BTreeMap<String, ToxicityLexicon>,
}

impl LexiconSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lexicon: ToxicityLexicon) -> Result<()> {
        let language = lexicon.language().to_string();
        if self.lexicons.contains_key(&language) {
            return Err(Error::Config(format!("duplicate lexicon for language `{language}`")));
        }
        self.lexicons.insert(language, lexicon);
        Ok(())
    }

    /// Loads every `<language>.txt` file in `dir`.
    pub fn load_dir(dir: &Path, normalization: NormalizationConfig) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        paths.sort();
        let mut set = LexiconSet::new();
        for path in paths {
            let language = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            set.insert(load_lexicon(&path, &language, normalization)?)?;
        }
        Ok(set)
    }

    pub fn get(&self, language: &str) -> Result<&ToxicityLexicon> {
        self.lexicons
            .get(language)
            .ok_or_else(|| Error::Config(format!("no lexicon loaded for language `{language}`")))
    }

    pub fn contains(&self, language: &str) -> bool {
        self.lexicons.contains_key(language)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.lexicons.keys().map(String::as_str)
    }
}
