//! Statistical battery: Mood's median test, one-sided two-proportion z-test,
//! Pearson and Spearman correlation, percentile bootstrap intervals and chrF.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seed::rng_for;

/// Rejection level used for per-language bookkeeping.
pub const SIGNIFICANCE: f64 = 0.05;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;
const MAX_REDRAWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: Vec<usize>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Mood's median test: pooled median, `>` vs `<=` split, Pearson chi-square
/// on the 2x2 table with one degree of freedom and no continuity correction.
pub fn moods_median_test(a: &[f64], b: &[f64]) -> Result<StatResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Undefined("median test needs two non-empty samples".into()));
    }
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let m = median(&pooled);
    let above = |xs: &[f64]| xs.iter().filter(|&&x| x > m).count() as f64;
    let table = [[above(a), a.len() as f64 - above(a)], [above(b), b.len() as f64 - above(b)]];
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if cols.contains(&0.0) {
        return Err(Error::Undefined("median test table has an empty column".into()));
    }
    let total = rows[0] + rows[1];
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] * cols[j] / total;
            chi2 += (table[i][j] - expected).powi(2) / expected;
        }
    }
    let p = ChiSquared::new(1.0).expect("valid dof").sf(chi2);
    Ok(StatResult { statistic: chi2, p_value: Some(p.clamp(0.0, 1.0)), ci_low: None, ci_high: None, n: vec![a.len(), b.len()] })
}

/// Pooled two-proportion z-test of `H1: p1 > p2`.
pub fn two_prop_z_one_sided(x1: u64, n1: u64, x2: u64, n2: u64) -> Result<StatResult> {
    if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
        return Err(Error::Invalid(format!("bad proportions {x1}/{n1}, {x2}/{n2}")));
    }
    let pooled = (x1 + x2) as f64 / (n1 + n2) as f64;
    if pooled == 0.0 || pooled == 1.0 {
        return Err(Error::Undefined("pooled proportion is 0 or 1".into()));
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let diff = x1 as f64 / n1f - x2 as f64 / n2f;
    let z = diff / se;
    let p = Normal::new(0.0, 1.0).expect("standard normal").sf(z);
    Ok(StatResult { statistic: z, p_value: Some(p.clamp(0.0, 1.0)), ci_low: None, ci_high: None, n: vec![n1 as usize, n2 as usize] })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Invalid(format!("correlation needs equal lengths >= 2, got {} and {}", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Invalid("correlation needs equal lengths".into()));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Indices of bootstrap resample `index`. The RNG is keyed by the resample
/// index and redraw attempt, so the result does not depend on scheduling.
pub fn resample_indices(n: usize, seed: u64, index: usize, attempt: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, "bootstrap", &format!("{index}/{attempt}"));
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Statistic values of every resample, in resample order.
pub fn bootstrap_distribution<F>(pairs: &[(f64, f64)], statistic: F, resamples: usize, seed: u64, exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync + Send,
{
    if pairs.len() < 2 {
        return Err(Error::Invalid("bootstrap needs at least two pairs".into()));
    }
    par::map_range(exec, resamples, |index| {
        for attempt in 0..MAX_REDRAWS {
            let idx = resample_indices(pairs.len(), seed, index, attempt);
            let (x, y): (Vec<f64>, Vec<f64>) = idx.iter().map(|&i| pairs[i]).unzip();
            if let Ok(v) = statistic(&x, &y) {
                return Ok(v);
            }
        }
        Err(Error::Undefined(format!("statistic undefined on resample {index} after {MAX_REDRAWS} draws")))
    })
    .into_iter()
    .collect()
}

/// Percentile interval: order statistics `lo` and `B - 1 - lo` of the sorted
/// resample values, with `lo = round(B * (1 - level) / 2)`.
pub fn percentile_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() || !(0.0..1.0).contains(&level) {
        return Err(Error::Invalid("percentile interval needs values and a level in [0,1)".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let lo = ((b as f64 * (1.0 - level) / 2.0).round() as usize).min((b - 1) / 2);
    Ok((sorted[lo], sorted[b - 1 - lo]))
}

pub fn bootstrap_ci<F>(pairs: &[(f64, f64)], statistic: F, resamples: usize, level: f64, seed: u64, exec: Execution) -> Result<(f64, f64)>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync + Send,
{
    percentile_interval(&bootstrap_distribution(pairs, statistic, resamples, seed, exec)?, level)
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut counts = HashMap::new();
    for gram in chars.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

pub const CHRF_MAX_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// Character n-gram F-score on a 0..=100 scale. Whitespace runs collapse to
/// one space. Precision and recall are averaged over orders `1..=6` for
/// which the reference has n-grams, then combined with beta = 2.
pub fn chrf(hypothesis: &str, reference: &str) -> Result<f64> {
    let squash = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").chars().collect::<Vec<char>>();
    let reference = squash(reference);
    if reference.is_empty() {
        return Err(Error::Invalid("chrF reference is empty".into()));
    }
    let hypothesis = squash(hypothesis);
    if hypothesis.is_empty() {
        return Ok(0.0);
    }
    let orders = CHRF_MAX_ORDER.min(reference.len());
    let (mut precision, mut recall) = (0.0, 0.0);
    for n in 1..=orders {
        let hyp = char_ngrams(&hypothesis, n);
        let refs = char_ngrams(&reference, n);
        let matched: u64 = hyp.iter().map(|(g, c)| (*c).min(refs.get(g).copied().unwrap_or(0))).sum();
        let hyp_total = hypothesis.len().saturating_sub(n - 1) as u64;
        let ref_total = (reference.len() - (n - 1)) as u64;
        if hyp_total > 0 {
            precision += matched as f64 / hyp_total as f64;
        }
        recall += matched as f64 / ref_total as f64;
    }
    precision /= orders as f64;
    recall /= orders as f64;
    if precision == 0.0 && recall == 0.0 {
        return Ok(0.0);
    }
    let b2 = CHRF_BETA * CHRF_BETA;
    Ok(100.0 * (1.0 + b2) * precision * recall / (b2 * precision + recall))
}

/// One descriptor translation: its source contribution and whether a toxic
/// word aligned to the descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub language: String,
    pub contribution: f64,
    pub toxic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageTests {
    pub language: String,
    pub n_toxic: usize,
    pub n_nontoxic: usize,
    pub median_p: Option<f64>,
    pub median_rejected: Option<bool>,
    pub z_p: Option<f64>,
    pub z_rejected: Option<bool>,
}

/// Per language: Mood's test on source contributions of toxic vs non-toxic
/// translations, and a z-test that low contribution (below `threshold`) is
/// more frequent among toxic translations. Undefined tests stay `None`.
pub fn language_tests(observations: &[Observation], threshold: f64) -> Vec<LanguageTests> {
    let mut by_lang: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for o in observations {
        let entry = by_lang.entry(&o.language).or_default();
        if o.toxic { entry.0.push(o.contribution) } else { entry.1.push(o.contribution) }
    }
    by_lang
        .into_iter()
        .map(|(language, (toxic, clean))| {
            let median_p = moods_median_test(&toxic, &clean).ok().and_then(|r| r.p_value);
            let low = |xs: &[f64]| xs.iter().filter(|&&c| c < threshold).count() as u64;
            let z_p = two_prop_z_one_sided(low(&toxic), toxic.len() as u64, low(&clean), clean.len() as u64)
                .ok()
                .and_then(|r| r.p_value);
            LanguageTests {
                language: language.to_string(),
                n_toxic: toxic.len(),
                n_nontoxic: clean.len(),
                median_p,
                median_rejected: median_p.map(|p| p < SIGNIFICANCE),
                z_p,
                z_rejected: z_p.map(|p| p < SIGNIFICANCE),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson: Option<Correlation>,
    pub spearman: Option<Correlation>,
}

/// Pearson and Spearman with bootstrap intervals; each is `None` when
/// undefined on the full sample.
pub fn correlate(pairs: &[(f64, f64)], resamples: usize, level: f64, seed: u64, exec: Execution) -> CorrelationReport {
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let one = |f: fn(&[f64], &[f64]) -> Result<f64>, tag: u64| {
        let r = f(&x, &y).ok()?;
        let (lo, hi) = bootstrap_ci(pairs, f, resamples, level, seed ^ tag, exec).ok()?;
        Some(Correlation { r, ci_low: lo, ci_high: hi })
    };
    CorrelationReport { n: pairs.len(), pearson: one(pearson, 0), spearman: one(spearman, 1) }
}
