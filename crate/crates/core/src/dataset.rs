//! JSON Lines interchange and the join of corpus, translations and
//! attributions into translation records.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attribution::RawAttribution;
use crate::detector::TranslationRecord;
use crate::error::{Error, Result};
use crate::templategen::GeneratedSentence;

/// One translated sentence. `target_words` holds character ranges for
/// pretokenized targets; when absent, words are segmented on separators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationLine {
    pub sentence_id: String,
    pub language: String,
    pub target_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_words: Option<Vec<[usize; 2]>>,
}

/// Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&line).map_err(|_| Error::Decode { path: path.into(), line: i + 1 })?;
        if text.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(text)
            .map_err(|e| Error::Parse { path: path.into(), line: i + 1, message: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    Ok(())
}

pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(items, &mut buf)?;
    Ok(buf)
}

fn word_ranges(line: &TranslationLine) -> Result<Option<Vec<Range<usize>>>> {
    let Some(words) = &line.target_words else { return Ok(None) };
    let len = line.target_text.chars().count();
    let mut prev_end = 0;
    let mut out = Vec::with_capacity(words.len());
    for &[start, end] in words {
        if start >= end || start < prev_end || end > len {
            return Err(Error::Invalid(format!(
                "{} ({}): target word [{start}, {end}) is empty, overlapping or out of range",
                line.sentence_id, line.language
            )));
        }
        prev_end = end;
        out.push(start..end);
    }
    Ok(Some(out))
}

/// Joins translations to the corpus by sentence id and attributions by
/// `(language, sentence_id)`. Records are ordered by language, then corpus
/// order. Attributions without a translation are rejected.
pub fn join_records(
    corpus: &[GeneratedSentence],
    translations: Vec<TranslationLine>,
    attributions: Vec<RawAttribution>,
) -> Result<Vec<TranslationRecord>> {
    let position: HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut attr: HashMap<(String, String), RawAttribution> = HashMap::new();
    for a in attributions {
        let key = (a.language.clone(), a.sentence_id.clone());
        if attr.insert(key, a).is_some() {
            return Err(Error::Invalid("duplicate attribution record".into()));
        }
    }
    let mut ordered: BTreeMap<(String, usize), TranslationLine> = BTreeMap::new();
    for t in translations {
        let Some(&pos) = position.get(t.sentence_id.as_str()) else {
            return Err(Error::Invalid(format!("translation of unknown sentence `{}`", t.sentence_id)));
        };
        let key = (t.language.clone(), pos);
        if ordered.contains_key(&key) {
            return Err(Error::Invalid(format!("duplicate translation of `{}` into {}", t.sentence_id, t.language)));
        }
        ordered.insert(key, t);
    }
    let mut records = Vec::with_capacity(ordered.len());
    for ((language, pos), line) in ordered {
        let attribution = match attr.remove(&(language.clone(), line.sentence_id.clone())) {
            Some(raw) => Some(raw.into_record()?),
            None => None,
        };
        let words = word_ranges(&line)?;
        let mut record = TranslationRecord::new(corpus[pos].clone(), language, line.target_text, attribution);
        if let Some(words) = words {
            record.target_words = words;
        }
        records.push(record);
    }
    if let Some(((language, id), _)) = attr.into_iter().min_by(|a, b| a.0.cmp(&b.0)) {
        return Err(Error::Invalid(format!("attribution for `{id}` in {language} has no translation")));
    }
    Ok(records)
}
