//! End-to-end run: generate, detect, robustness, stats, reports and
//! annotation sheets, with a manifest of content hashes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::anneval::{self, DEFAULT_NEGATIVE_CAP, DEFAULT_STRATA_TOP_K};
use crate::attribution::RawAttribution;
use crate::corpusfilter::{filter_corpus, BitextFormat, FilterOptions, FilterPolicy};
use crate::dataset::{join_records, jsonl_bytes, read_jsonl, TranslationLine};
use crate::detector::{scan_corpus, TranslationRecord};
use crate::error::{Error, Result};
use crate::lexicon::{LexiconSet, NormalizationConfig};
use crate::par::Execution;
use crate::report::{self, canonical_json, CellTable, Dimension, Emit, Format, LanguageRange, StatsReport};
use crate::robustness::{self, heatmap_grid, region_stats, uniform_edges, FlagThresholds};
use crate::stats::{self, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::templategen::{bundled_mini_pack, load_pack};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BitextJob {
    pub input: PathBuf,
    pub src_lang: String,
    pub tgt_lang: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled mini-pack when unset.
    pub pack: Option<PathBuf>,
    pub lexicon_dir: PathBuf,
    pub translations: PathBuf,
    pub attributions: Option<PathBuf>,
    /// Every translated language is supported when unset.
    pub capabilities: Option<PathBuf>,
    pub source_language: String,
    pub seed: u64,
    pub thresholds: FlagThresholds,
    pub bins: usize,
    pub resamples: usize,
    pub level: f64,
    pub negatives_cap: usize,
    pub strata_top_k: usize,
    pub policy: FilterPolicy,
    pub bitext: Option<BitextJob>,
    pub output_dir: PathBuf,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pack: None,
            lexicon_dir: PathBuf::new(),
            translations: PathBuf::new(),
            attributions: None,
            capabilities: None,
            source_language: "eng_Latn".into(),
            seed: 0,
            thresholds: FlagThresholds::default(),
            bins: 20,
            resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            negatives_cap: DEFAULT_NEGATIVE_CAP,
            strata_top_k: DEFAULT_STRATA_TOP_K,
            policy: FilterPolicy::Baseline,
            bitext: None,
            output_dir: PathBuf::from("out"),
            strict: false,
        }
    }
}

impl RunConfig {
    /// Reads TOML or JSON by extension. Relative paths are resolved against
    /// the directory of the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.lexicon_dir);
        fix(&mut self.translations);
        fix(&mut self.output_dir);
        for p in [&mut self.pack, &mut self.attributions, &mut self.capabilities].into_iter().flatten() {
            fix(p);
        }
        if let Some(job) = &mut self.bitext {
            fix(&mut job.input);
        }
    }

    /// Checks that every input exists and every parameter is in range.
    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path, what: &str| {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{what} is not set")));
            }
            if !p.exists() {
                return Err(Error::Config(format!("{what} `{}` does not exist", p.display())));
            }
            Ok(())
        };
        must_exist(&self.translations, "translations file")?;
        must_exist(&self.lexicon_dir, "lexicon directory")?;
        if let Some(p) = &self.pack {
            must_exist(p, "template pack")?;
        }
        if let Some(p) = &self.attributions {
            must_exist(p, "attributions file")?;
        }
        if let Some(p) = &self.capabilities {
            must_exist(p, "capabilities file")?;
        }
        if let Some(job) = &self.bitext {
            must_exist(&job.input, "bitext corpus")?;
        }
        FlagThresholds::new(self.thresholds.contribution_max, self.thresholds.gini_min)?;
        if self.bins == 0 || self.resamples == 0 {
            return Err(Error::Config("bins and resamples must be positive".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level {} outside (0,1)", self.level)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanguageCapability {
    pub word_separators: bool,
    pub alignment_supported: bool,
    pub lexicon_accurate: bool,
    /// Targets arrive with word boundaries, so missing separators are no
    /// obstacle.
    pub pretokenized: bool,
}

impl Default for LanguageCapability {
    fn default() -> Self {
        LanguageCapability { word_separators: true, alignment_supported: true, lexicon_accurate: true, pretokenized: false }
    }
}

/// Language code to capability flags; stored as a JSON object.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Capabilities(pub BTreeMap<String, LanguageCapability>);

impl Capabilities {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn all_supported<'a>(languages: impl IntoIterator<Item = &'a str>) -> Self {
        Capabilities(languages.into_iter().map(|l| (l.to_string(), LanguageCapability::default())).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    NoWordSeparators,
    AlignmentUnsupported,
    LexiconInaccurate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum LanguageStatus {
    Supported,
    Excluded { reason: ExclusionReason },
}

/// The first failing check wins, in the order separators, alignment,
/// lexicon quality. Supported languages need a lexicon.
pub fn validate_language(language: &str, lexicons: &LexiconSet, capabilities: &Capabilities) -> Result<LanguageStatus> {
    let cap = capabilities
        .0
        .get(language)
        .ok_or_else(|| Error::Config(format!("language `{language}` is missing from the capability table")))?;
    let reason = if !cap.word_separators && !cap.pretokenized {
        Some(ExclusionReason::NoWordSeparators)
    } else if !cap.alignment_supported {
        Some(ExclusionReason::AlignmentUnsupported)
    } else if !cap.lexicon_accurate {
        Some(ExclusionReason::LexiconInaccurate)
    } else {
        None
    };
    match reason {
        Some(reason) => Ok(LanguageStatus::Excluded { reason }),
        None => {
            lexicons.get(language)?;
            Ok(LanguageStatus::Supported)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u64,
    pub seed: u64,
    pub artifacts: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a stage's artifacts with a `.partial` suffix and renames them
/// once the stage succeeds; on failure the partial files stay behind.
struct ArtifactWriter {
    dir: PathBuf,
    pending: Vec<String>,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(ArtifactWriter { dir: dir.to_path_buf(), pending: Vec::new(), entries: Vec::new() })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(format!("{name}.partial"));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.pending.push(name.to_string());
        self.entries.push(ManifestEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn commit(&mut self) -> Result<()> {
        for name in self.pending.drain(..) {
            let to = self.dir.join(&name);
            fs::rename(self.dir.join(format!("{name}.partial")), &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(())
    }

    fn manifest(mut self, seed: u64) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest { schema_version: report::SCHEMA_VERSION, seed, artifacts: self.entries };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

fn stage<T>(name: &'static str, writer: &mut ArtifactWriter, body: impl FnOnce(&mut ArtifactWriter) -> Result<T>) -> Result<T> {
    let result = body(writer).and_then(|v| writer.commit().map(|_| v));
    result.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage { stage: name, cause: Box::new(other) },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub records: usize,
    pub findings: usize,
    pub languages: BTreeMap<String, LanguageStatus>,
}

pub fn run_pipeline(config: &RunConfig, exec: Execution) -> Result<RunSummary> {
    config.validate()?;
    let mut out = ArtifactWriter::new(&config.output_dir)?;
    let norm = NormalizationConfig::default();

    let (lexicons, translations, attributions, capabilities) = stage("load", &mut out, |_| {
        let lexicons = LexiconSet::load_dir(&config.lexicon_dir, norm)?;
        lexicons.get(&config.source_language)?;
        let translations: Vec<TranslationLine> = read_jsonl(&config.translations)?;
        let attributions: Vec<RawAttribution> = match &config.attributions {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        };
        let capabilities = match &config.capabilities {
            Some(p) => Capabilities::load(p)?,
            None => Capabilities::all_supported(translations.iter().map(|t| t.language.as_str())),
        };
        Ok((lexicons, translations, attributions, capabilities))
    })?;

    let corpus = stage("generate", &mut out, |w| {
        let pack = match &config.pack {
            Some(p) => load_pack(p)?,
            None => bundled_mini_pack(),
        };
        let corpus = pack.expand_with(exec);
        w.put("corpus.jsonl", &jsonl_bytes(&corpus)?)?;
        w.put("pack_stats.json", &canonical_json(serde_json::to_value(pack.stats())?)?)?;
        Ok(corpus)
    })?;

    let (records, languages) = stage("join", &mut out, |w| {
        let mut languages = BTreeMap::new();
        for lang in translations.iter().map(|t| t.language.as_str()).collect::<BTreeSet<_>>() {
            languages.insert(lang.to_string(), validate_language(lang, &lexicons, &capabilities)?);
        }
        let keep = |lang: &str| languages.get(lang) == Some(&LanguageStatus::Supported);
        let translations: Vec<_> = translations.into_iter().filter(|t| keep(&t.language)).collect();
        let attributions: Vec<_> = attributions.into_iter().filter(|a| keep(&a.language)).collect();
        let records = join_records(&corpus, translations, attributions)?;
        w.put("languages.json", &canonical_json(json!({ "languages": languages }))?)?;
        Ok((records, languages))
    })?;

    let scan = stage("detect", &mut out, |w| {
        let scan = scan_corpus(&records, &lexicons, &config.source_language, config.seed, exec);
        if config.strict {
            if let Some((id, msg)) = scan.errors.first() {
                return Err(Error::Invalid(format!("{id}: {msg}")));
            }
        }
        w.put("findings.jsonl", &jsonl_bytes(&scan.findings)?)?;
        let errors: Vec<_> = scan.errors.iter().map(|(id, msg)| json!({"sentence_id": id, "error": msg})).collect();
        w.put("detect_summary.json", &canonical_json(json!({"summary": scan.summary, "errors": errors}))?)?;
        Ok(scan)
    })?;

    let analysis = stage("robustness", &mut out, |w| {
        let analysis = robustness::analyze(&records, &scan.findings, exec)?;
        w.put("cells.csv", &report::emit(&CellTable(&analysis.cells), Format::Csv)?)?;
        let region = if analysis.population.is_empty() {
            json!({"undefined_cells": analysis.undefined_cells, "excluded_records": analysis.excluded_records})
        } else {
            let mut v = region_stats(&analysis.population, config.thresholds)?.json_value()?;
            v["undefined_cells"] = json!(analysis.undefined_cells);
            v["excluded_records"] = json!(analysis.excluded_records);
            v
        };
        w.put("region.json", &canonical_json(region)?)?;
        let edges = uniform_edges(config.bins);
        let grid = heatmap_grid(&analysis.population, &edges, &edges)?;
        w.put("heatmap.csv", &report::emit(&grid, Format::Csv)?)?;
        w.put("heatmap.svg", &report::emit(&grid, Format::SvgHeatmap)?)?;
        Ok(analysis)
    })?;

    stage("stats", &mut out, |w| {
        let tests = stats::language_tests(&analysis.observations, config.thresholds.contribution_max);
        let mut per_language: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
        for o in &analysis.observations {
            let e = per_language.entry(&o.language).or_default();
            e.0 += o.contribution;
            e.1 += 1;
        }
        let pairs: Vec<(f64, f64)> = per_language
            .iter()
            .map(|(lang, (sum, n))| (sum / *n as f64, scan.summary.per_language.get(*lang).map_or(0.0, |c| c.rate)))
            .collect();
        let correlation = (pairs.len() >= 2).then(|| stats::correlate(&pairs, config.resamples, config.level, config.seed, exec));
        let report = StatsReport { threshold: config.thresholds.contribution_max, tests, correlation };
        w.put("stats.csv", &report::emit(&report, Format::Csv)?)?;
        w.put("stats.json", &report::emit(&report, Format::Json)?)?;
        Ok(())
    })?;

    stage("report", &mut out, |w| {
        for dim in Dimension::ALL {
            let table = report::aggregate(&scan.findings, &records, dim);
            w.put(&format!("rates_{}.csv", dim.name()), &report::emit(&table, Format::Csv)?)?;
            w.put(&format!("rates_{}.json", dim.name()), &report::emit(&table, Format::Json)?)?;
        }
        let ranges: Vec<LanguageRange> = scan
            .summary
            .per_language
            .iter()
            .map(|(lang, counts)| {
                let population: Vec<_> = analysis.population.iter().filter(|p| &p.language == lang).cloned().collect();
                let region = if population.is_empty() { None } else { Some(region_stats(&population, config.thresholds)?) };
                Ok(LanguageRange { language: lang.clone(), toxicity_rate: counts.rate, region })
            })
            .collect::<Result<_>>()?;
        let range = report::toxicity_range_table(&ranges);
        w.put("toxicity_range.csv", &report::emit(&range, Format::Csv)?)?;
        w.put("toxicity_range.json", &report::emit(&range, Format::Json)?)?;
        Ok(())
    })?;

    stage("sheets", &mut out, |w| {
        let strata = anneval::rank_strata(&records, &scan.findings, config.strata_top_k);
        w.put("sheets/strata.json", &canonical_json(serde_json::to_value(&strata)?)?)?;
        for (lang, status) in &languages {
            if *status != LanguageStatus::Supported {
                continue;
            }
            let positives = anneval::export_positives(&scan.findings, &records, lang)?;
            w.put(&format!("sheets/{lang}.positives.csv"), &positives.to_csv_bytes()?)?;
            let negatives =
                anneval::sample_negatives(&records, &scan.findings, lang, &strata, config.negatives_cap, config.seed);
            w.put(&format!("sheets/{lang}.negatives.csv"), &negatives.to_csv_bytes()?)?;
        }
        Ok(())
    })?;

    if let Some(job) = &config.bitext {
        stage("filter", &mut out, |w| {
            let format = BitextFormat::from_path(&job.input);
            let mut opts = FilterOptions::new(config.policy, format, &job.src_lang, &job.tgt_lang);
            opts.strict = config.strict;
            opts.exec = exec;
            let file = fs::File::open(&job.input).map_err(|e| Error::io(&job.input, e))?;
            let mut kept = Vec::new();
            let report = filter_corpus(BufReader::new(file), &mut kept, &lexicons, &opts)?;
            let ext = match format {
                BitextFormat::Tsv => "tsv",
                BitextFormat::Jsonl => "jsonl",
            };
            w.put(&format!("filtered.{ext}"), &kept)?;
            w.put("filter_report.json", &canonical_json(serde_json::to_value(&report)?)?)?;
            Ok(())
        })?;
    }

    let manifest = out.manifest(config.seed)?;
    Ok(RunSummary { manifest, records: records.len(), findings: scan.findings.len(), languages })
}

/// Records that survive language validation, for callers that run single
/// stages.
pub fn supported_records(records: Vec<TranslationRecord>, statuses: &BTreeMap<String, LanguageStatus>) -> Vec<TranslationRecord> {
    records.into_iter().filter(|r| statuses.get(&r.language) == Some(&LanguageStatus::Supported)).collect()
}
