//! Independent oracles shared by the integration tests. Each one is a
//! direct, slow transcription of the definition it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use toxtrace_core::attribution::LayerStack;

pub mod workload;

// ---------------------------------------------------------------- matching

/// Word characters for the restricted alphabets used with [`naive_matches`].
pub fn naive_is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '-' || c == '\u{2019}'
}

fn lower(c: char) -> char {
    let mut l = c.to_lowercase();
    let first = l.next().unwrap_or(c);
    assert!(l.next().is_none(), "oracle alphabet must lowercase one-to-one: {c:?}");
    first
}

/// Oracle entry form: whitespace runs collapsed, lowercased, trimmed.
pub fn naive_entry(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").chars().map(lower).collect()
}

/// Tries every entry at every character position. A space in an entry
/// consumes a whole whitespace run of the text. Valid only for texts whose
/// characters are unchanged by NFKC and lowercase one-to-one.
pub fn naive_matches(entries: &[&str], text: &str) -> Vec<(usize, usize, String)> {
    let chars: Vec<char> = text.chars().collect();
    let entries: BTreeSet<String> = entries
        .iter()
        .map(|e| naive_entry(e))
        .filter(|e| !e.is_empty() && e.chars().any(naive_is_word))
        .collect();
    let mut out = Vec::new();
    for start in 0..chars.len() {
        'entry: for entry in &entries {
            let mut j = start;
            for ec in entry.chars() {
                if ec == ' ' {
                    if j >= chars.len() || !chars[j].is_whitespace() {
                        continue 'entry;
                    }
                    while j < chars.len() && chars[j].is_whitespace() {
                        j += 1;
                    }
                } else {
                    if j >= chars.len() || chars[j].is_whitespace() || lower(chars[j]) != ec {
                        continue 'entry;
                    }
                    j += 1;
                }
            }
            let left = start == 0 || !naive_is_word(chars[start - 1]);
            let right = j == chars.len() || !naive_is_word(chars[j]);
            if left && right {
                out.push((start, j, entry.clone()));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

pub fn random_string<R: Rng>(rng: &mut R, alphabet: &[char], max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

// ------------------------------------------------------------- attribution

pub fn random_row<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0f64).powi(2) + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

pub fn random_stack<R: Rng>(rng: &mut R, s: usize, t: usize, enc: usize, dec: usize) -> LayerStack {
    LayerStack {
        encoder_layers: (0..enc).map(|_| (0..s).map(|_| random_row(rng, s)).collect()).collect(),
        decoder_layers: (0..dec).map(|_| (1..=t).map(|step| random_row(rng, s + step)).collect()).collect(),
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.iter()
        .map(|row| (0..n).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

/// Composes the stack as one `(S+T) x (S+T)` matrix per layer. Source rows
/// hold the chained encoder product and pass through decoder layers
/// unchanged; decoder row `S+t-1` mixes source rows and the earlier decoder
/// rows of the previous layer.
pub fn brute_rollout(stack: &LayerStack) -> Vec<Vec<f64>> {
    let t = stack.decoder_layers[0].len();
    let s = stack.decoder_layers[0][0].len() - 1;
    let n = s + t;
    let identity = |k: usize| -> Vec<Vec<f64>> {
        (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    };
    let mut encoder = identity(s);
    for layer in &stack.encoder_layers {
        encoder = mat_mul(layer, &encoder);
    }
    let mut z = identity(n);
    for i in 0..s {
        for j in 0..s {
            z[i][j] = encoder[i][j];
        }
    }
    for layer in &stack.decoder_layers {
        let mut d = identity(n);
        for (step, row) in layer.iter().enumerate() {
            let r = s + step;
            d[r] = vec![0.0; n];
            d[r][..row.len()].copy_from_slice(row);
        }
        z = mat_mul(&d, &z);
    }
    (0..t)
        .map(|step| {
            let row = &z[s + step][..s + step + 1];
            let sum: f64 = row.iter().sum();
            row.iter().map(|v| v / sum).collect()
        })
        .collect()
}

// -------------------------------------------------------------- robustness

pub fn brute_gini(items: &[String]) -> f64 {
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for i in items {
        *counts.entry(i).or_default() += 1.0;
    }
    let n = items.len() as f64;
    1.0 - counts.values().map(|c| (c / n) * (c / n)).sum::<f64>()
}

/// Flag rule transcribed literally: contribution below the first threshold
/// and impurity above the second.
pub fn brute_flag(contribution: f64, gini: f64, c_max: f64, g_min: f64) -> bool {
    contribution < c_max && gini > g_min
}

// ------------------------------------------------------------------- chrF

fn all_ngrams(s: &str, n: usize) -> BTreeMap<String, u64> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = BTreeMap::new();
    if chars.len() >= n {
        for i in 0..=chars.len() - n {
            *out.entry(chars[i..i + n].iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    out
}

/// Character n-gram F-beta (beta 2) over orders `1..=min(6, |ref|)`, with
/// per-order precision and recall averaged first.
pub fn brute_chrf(hyp: &str, reference: &str) -> f64 {
    let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    let (hyp, reference) = (squash(hyp), squash(reference));
    if hyp.is_empty() {
        return 0.0;
    }
    let orders = reference.chars().count().min(6);
    let (mut p, mut r) = (0.0, 0.0);
    for n in 1..=orders {
        let h = all_ngrams(&hyp, n);
        let g = all_ngrams(&reference, n);
        let matched: u64 = h.iter().map(|(k, c)| *c.min(g.get(k).unwrap_or(&0))).sum();
        let h_total: u64 = h.values().sum();
        let g_total: u64 = g.values().sum();
        if h_total > 0 {
            p += matched as f64 / h_total as f64;
        }
        r += matched as f64 / g_total as f64;
    }
    p /= orders as f64;
    r /= orders as f64;
    if p + r == 0.0 {
        0.0
    } else {
        100.0 * 5.0 * p * r / (4.0 * p + r)
    }
}

// ----------------------------------------------------------------- filter

/// Policy definitions transcribed from their wording.
pub fn brute_keep(policy: &str, src_tox: usize, tgt_tox: usize) -> bool {
    let diff = (src_tox as i64 - tgt_tox as i64).abs();
    match policy {
        "baseline" => true,
        "max_add_1" => diff <= 1,
        "no_add" => diff == 0,
        "no_tox" => src_tox + tgt_tox == 0,
        other => panic!("unknown policy {other}"),
    }
}

// --------------------------------------------------------------- stats

/// Closed-form Pearson product-moment correlation.
pub fn closed_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Spearman for distinct values: `1 - 6 * sum d^2 / (n (n^2 - 1))`.
pub fn closed_spearman_distinct(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter().map(|a| 1.0 + v.iter().filter(|b| *b < a).count() as f64).collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}
