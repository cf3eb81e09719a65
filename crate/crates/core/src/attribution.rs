//! Per-decoding-step input attributions.
//!
//! Step `t` (1-based) predicts target token `t`; its attribution vector
//! covers the `|S|` source tokens followed by the `t` target-prefix tokens
//! fed to the decoder (beginning-of-sentence marker included), so it has
//! length `|S| + t`.
//!
//! Records arrive either with final per-step vectors or with per-layer
//! contribution rows, in which case [`rollout`] composes them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub sentence_id: String,
    pub language: String,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub steps: Vec<Vec<f64>>,
    /// Source token index to source word index; `None` for tokens outside
    /// any word (punctuation, end-of-sentence).
    pub source_token_to_word: Vec<Option<usize>>,
    pub target_token_to_word: Vec<Option<usize>>,
}

/// Layer-wise contributions, each row non-negative and summing to one.
///
/// `encoder_layers[l]` is `|S| x |S|`, row `i` holding the contribution of
/// each layer input to output `i`. `decoder_layers[l][t - 1]` has `|S| + t`
/// entries: contributions from the encoder output tokens, then from the
/// previous decoder layer at positions `1..=t`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    pub encoder_layers: Vec<Vec<Vec<f64>>>,
    pub decoder_layers: Vec<Vec<Vec<f64>>>,
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Attribution(format!("{what}: entry {v} is negative or not finite")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::Attribution(format!("{what}: row sums to {sum}")));
    }
    Ok(())
}

impl LayerStack {
    pub fn source_len(&self) -> Result<usize> {
        if let Some(first) = self.encoder_layers.first() {
            return Ok(first.len());
        }
        match self.decoder_layers.first().and_then(|l| l.first()) {
            Some(row) if !row.is_empty() => Ok(row.len() - 1),
            _ => Err(Error::Dimension("layer stack has no decoder rows".into())),
        }
    }

    pub fn target_len(&self) -> usize {
        self.decoder_layers.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.source_len()?;
        for (l, layer) in self.encoder_layers.iter().enumerate() {
            if layer.len() != s {
                return Err(Error::Dimension(format!("encoder layer {l} has {} rows, expected {s}", layer.len())));
            }
            for (i, row) in layer.iter().enumerate() {
                if row.len() != s {
                    return Err(Error::Dimension(format!("encoder layer {l} row {i} has {} entries, expected {s}", row.len())));
                }
                check_row(row, &format!("encoder layer {l} row {i}"))?;
            }
        }
        if self.decoder_layers.is_empty() {
            return Err(Error::Dimension("layer stack has no decoder layers".into()));
        }
        let steps = self.target_len();
        for (l, layer) in self.decoder_layers.iter().enumerate() {
            if layer.len() != steps {
                return Err(Error::Dimension(format!("decoder layer {l} has {} steps, expected {steps}", layer.len())));
            }
            for (i, row) in layer.iter().enumerate() {
                let expected = s + i + 1;
                if row.len() != expected {
                    return Err(Error::Dimension(format!(
                        "decoder layer {l} step {} has {} entries, expected {expected}",
                        i + 1,
                        row.len()
                    )));
                }
                check_row(row, &format!("decoder layer {l} step {}", i + 1))?;
            }
        }
        Ok(())
    }
}

/// Composes a layer stack into per-step attribution vectors.
///
/// Encoder layers are chained by matrix product. For each decoder layer, the
/// source block of a step row is pushed through the accumulated encoder
/// matrix and its target block through the previous layer's accumulated rows
/// for the earlier positions. The decoder input at position `t` starts as a
/// one-hot vector on itself.
pub fn rollout(stack: &LayerStack) -> Result<Vec<Vec<f64>>> {
    stack.validate()?;
    let s = stack.source_len()?;
    let steps = stack.target_len();

    let mut encoder = identity(s);
    for layer in &stack.encoder_layers {
        encoder = matmul(layer, &encoder);
    }

    let mut acc: Vec<Vec<f64>> = (1..=steps)
        .map(|t| {
            let mut v = vec![0.0; s + t];
            v[s + t - 1] = 1.0;
            v
        })
        .collect();

    for layer in &stack.decoder_layers {
        let next: Vec<Vec<f64>> = layer
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let t = i + 1;
                let mut out = vec![0.0; s + t];
                for (src, &w) in row[..s].iter().enumerate() {
                    if w != 0.0 {
                        for (o, e) in out.iter_mut().zip(&encoder[src]) {
                            *o += w * e;
                        }
                    }
                }
                for (j, &w) in row[s..].iter().enumerate() {
                    if w != 0.0 {
                        for (o, p) in out.iter_mut().zip(&acc[j]) {
                            *o += w * p;
                        }
                    }
                }
                out
            })
            .collect();
        acc = next;
    }

    for row in &mut acc {
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    Ok(acc)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            let mut out = vec![0.0; cols];
            for (k, &w) in row.iter().enumerate() {
                for (o, v) in out.iter_mut().zip(&b[k]) {
                    *o += w * v;
                }
            }
            out
        })
        .collect()
}

/// Attribution mass on the source tokens.
pub fn source_contribution(step: &[f64], source_len: usize) -> f64 {
    step[..source_len.min(step.len())].iter().sum()
}

/// Source token with the highest attribution; ties go to the lowest index.
pub fn align(step: &[f64], source_len: usize) -> usize {
    let mut best = 0;
    for (i, &v) in step[..source_len.min(step.len())].iter().enumerate() {
        if v > step[best] {
            best = i;
        }
    }
    best
}

pub const LOW_CONTRIBUTION_THRESHOLD: f64 = 0.40;

/// Strictly below the threshold.
pub fn is_low_contribution(contribution: f64, threshold: f64) -> bool {
    contribution < threshold
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WordContribution {
    pub mean_source_contribution: f64,
    /// Word of the top-attributed source token at the word's first step.
    /// `None` when that token belongs to no word.
    pub aligned_source_word: Option<usize>,
}

impl AttributionRecord {
    pub fn source_len(&self) -> usize {
        self.source_tokens.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.source_len();
        if s == 0 {
            return Err(Error::Attribution(format!("{}: no source tokens", self.sentence_id)));
        }
        if self.steps.len() != self.target_tokens.len() {
            return Err(Error::Dimension(format!(
                "{}: {} steps for {} target tokens",
                self.sentence_id,
                self.steps.len(),
                self.target_tokens.len()
            )));
        }
        if self.source_token_to_word.len() != s || self.target_token_to_word.len() != self.target_tokens.len() {
            return Err(Error::Dimension(format!("{}: token-to-word maps do not match token counts", self.sentence_id)));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.len() != s + i + 1 {
                return Err(Error::Dimension(format!(
                    "{}: step {} has {} entries, expected {}",
                    self.sentence_id,
                    i + 1,
                    step.len(),
                    s + i + 1
                )));
            }
            check_row(step, &format!("{} step {}", self.sentence_id, i + 1))?;
        }
        Ok(())
    }

    /// Decoding steps (0-based) whose target token belongs to `word`.
    pub fn word_steps(&self, word: usize) -> Vec<usize> {
        self.target_token_to_word
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == Some(word))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn word_contribution(&self, target_word: usize) -> Result<WordContribution> {
        let steps = self.word_steps(target_word);
        let Some(&first) = steps.first() else {
            let len = self.target_token_to_word.iter().flatten().max().map_or(0, |m| m + 1);
            return Err(Error::Range { index: target_word, len });
        };
        let s = self.source_len();
        let total: f64 = steps.iter().map(|&i| source_contribution(&self.steps[i], s)).sum();
        let token = align(&self.steps[first], s);
        Ok(WordContribution {
            mean_source_contribution: total / steps.len() as f64,
            aligned_source_word: self.source_token_to_word[token],
        })
    }
}

/// One line of the attribution interchange format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RawAttribution {
    pub sentence_id: String,
    pub language: String,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    /// Omitted maps mean every token is its own word.
    #[serde(default)]
    pub source_token_to_word: Option<Vec<Option<usize>>>,
    #[serde(default)]
    pub target_token_to_word: Option<Vec<Option<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<LayerStack>,
}

impl RawAttribution {
    pub fn into_record(self) -> Result<AttributionRecord> {
        let steps = match (self.steps, self.layers) {
            (Some(steps), None) => steps,
            (None, Some(layers)) => {
                if layers.source_len()? != self.source_tokens.len() {
                    return Err(Error::Dimension(format!(
                        "{}: layer stack covers {} source tokens, record has {}",
                        self.sentence_id,
                        layers.source_len()?,
                        self.source_tokens.len()
                    )));
                }
                rollout(&layers)?
            }
            _ => {
                return Err(Error::Attribution(format!(
                    "{}: exactly one of `steps` or `layers` is required",
                    self.sentence_id
                )))
            }
        };
        let identity = |n: usize| (0..n).map(Some).collect::<Vec<_>>();
        let record = AttributionRecord {
            source_token_to_word: self.source_token_to_word.unwrap_or_else(|| identity(self.source_tokens.len())),
            target_token_to_word: self.target_token_to_word.unwrap_or_else(|| identity(self.target_tokens.len())),
            sentence_id: self.sentence_id,
            language: self.language,
            source_tokens: self.source_tokens,
            target_tokens: self.target_tokens,
            steps,
        };
        record.validate()?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    fn record(steps: Vec<Vec<f64>>, src_words: Vec<Option<usize>>, tgt_words: Vec<Option<usize>>) -> AttributionRecord {
        AttributionRecord {
            sentence_id: "s".into(),
            language: "fra_Latn".into(),
            source_tokens: (0..src_words.len()).map(|i| format!("s{i}")).collect(),
            target_tokens: (0..tgt_words.len()).map(|i| format!("t{i}")).collect(),
            steps,
            source_token_to_word: src_words,
            target_token_to_word: tgt_words,
        }
    }

    #[test]
    fn encoder_composition() {
        let layer = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let composed = matmul(&layer, &matmul(&layer, &identity(2)));
        assert_eq!(composed, vec![vec![1.0, 0.0], vec![0.75, 0.25]]);
    }

    #[test]
    fn identity_layers_give_one_hot_on_own_input() {
        let s = 3;
        let stack = LayerStack {
            encoder_layers: vec![identity(s), identity(s)],
            decoder_layers: vec![
                (1..=2).map(|t| { let mut r = vec![0.0; s + t]; r[s + t - 1] = 1.0; r }).collect();
                2
            ],
        };
        let steps = rollout(&stack).unwrap();
        assert_eq!(steps, vec![vec![0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 0.0, 1.0]]);
    }

    #[test]
    fn uniform_rows_give_uniform_attribution() {
        let s = 2;
        let stack = LayerStack {
            encoder_layers: vec![vec![uniform(s); s]; 3],
            decoder_layers: vec![(1..=3).map(|t| uniform(s + t)).collect()],
        };
        for (i, row) in rollout(&stack).unwrap().iter().enumerate() {
            let n = s + i + 1;
            for v in row {
                assert!((v - 1.0 / n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_stacks() {
        let bad_shape = LayerStack { encoder_layers: vec![vec![vec![1.0]]], decoder_layers: vec![vec![vec![0.5, 0.25, 0.25]]] };
        assert!(matches!(rollout(&bad_shape), Err(Error::Dimension(_))));
        let negative = LayerStack { encoder_layers: vec![], decoder_layers: vec![vec![vec![1.5, -0.5]]] };
        assert!(matches!(rollout(&negative), Err(Error::Attribution(_))));
        let empty = LayerStack::default();
        assert!(rollout(&empty).is_err());
    }

    #[test]
    fn source_contribution_examples() {
        assert!((source_contribution(&[0.2, 0.3, 0.1, 0.4], 3) - 0.6).abs() < 1e-15);
        assert_eq!(source_contribution(&[0.0, 0.0, 1.0], 2), 0.0);
        assert_eq!(source_contribution(&uniform(4), 2), 0.5);
    }

    #[test]
    fn align_examples() {
        assert_eq!(align(&[0.1, 0.5, 0.05, 0.35], 3), 1);
        assert_eq!(align(&[0.3, 0.3, 0.4], 2), 0);
        assert_eq!(align(&[0.0, 0.0, 1.0, 0.0], 3), 2);
    }

    #[test]
    fn low_contribution_is_strict() {
        assert!(is_low_contribution(0.35, LOW_CONTRIBUTION_THRESHOLD));
        assert!(!is_low_contribution(0.40, LOW_CONTRIBUTION_THRESHOLD));
        assert!(!is_low_contribution(0.60, LOW_CONTRIBUTION_THRESHOLD));
    }

    #[test]
    fn word_contribution_single_and_multi_token() {
        // three source tokens/words; target: word 0 = token 0, word 1 = tokens 1..3
        let steps = vec![
            vec![0.1, 0.5, 0.05, 0.35],
            vec![0.1, 0.1, 0.1, 0.3, 0.4],
            vec![0.1, 0.2, 0.2, 0.2, 0.2, 0.1],
        ];
        let r = record(steps, vec![Some(0), Some(1), Some(2)], vec![Some(0), Some(1), Some(1)]);
        r.validate().unwrap();
        let w0 = r.word_contribution(0).unwrap();
        assert!((w0.mean_source_contribution - 0.65).abs() < 1e-12);
        assert_eq!(w0.aligned_source_word, Some(1));
        let w1 = r.word_contribution(1).unwrap();
        assert!((w1.mean_source_contribution - 0.4).abs() < 1e-12);
        assert_eq!(w1.aligned_source_word, Some(0));
        assert!(matches!(r.word_contribution(7), Err(Error::Range { .. })));
    }

    #[test]
    fn aligned_word_follows_token_map() {
        let r = record(vec![vec![0.1, 0.1, 0.8, 0.0]], vec![Some(0), Some(1), Some(2)], vec![Some(0)]);
        assert_eq!(r.word_contribution(0).unwrap().aligned_source_word, Some(2));
        let r = record(vec![vec![0.1, 0.1, 0.8, 0.0]], vec![Some(0), Some(1), None], vec![Some(0)]);
        assert_eq!(r.word_contribution(0).unwrap().aligned_source_word, None);
    }

    #[test]
    fn record_validation() {
        let r = record(vec![vec![0.5, 0.5]], vec![Some(0)], vec![Some(0)]);
        assert!(r.validate().is_ok());
        let short = record(vec![vec![1.0]], vec![Some(0)], vec![Some(0)]);
        assert!(matches!(short.validate(), Err(Error::Dimension(_))));
        let unnormalized = record(vec![vec![0.5, 0.6]], vec![Some(0)], vec![Some(0)]);
        assert!(unnormalized.validate().is_err());
    }

    #[test]
    fn raw_record_with_layers_rolls_out() {
        let line = r#"{"sentence_id":"x","language":"fra_Latn","source_tokens":["a","b"],"target_tokens":["c"],
            "layers":{"encoder_layers":[[[1,0],[0.5,0.5]]],"decoder_layers":[[[0.5,0.25,0.25]]]}}"#;
        let raw: RawAttribution = serde_json::from_str(line).unwrap();
        let rec = raw.into_record().unwrap();
        assert_eq!(rec.steps, vec![vec![0.5 + 0.125, 0.125, 0.25]]);
        assert_eq!(rec.source_token_to_word, vec![Some(0), Some(1)]);
    }

    #[test]
    fn raw_record_needs_exactly_one_payload() {
        let line = r#"{"sentence_id":"x","language":"l","source_tokens":["a"],"target_tokens":[]}"#;
        let raw: RawAttribution = serde_json::from_str(line).unwrap();
        assert!(raw.into_record().is_err());
    }
}
