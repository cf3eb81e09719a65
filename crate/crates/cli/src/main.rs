use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use toxtrace_core::anneval::{self, AnnotationSheet, DEFAULT_NEGATIVE_CAP, DEFAULT_STRATA_TOP_K};
use toxtrace_core::attribution::RawAttribution;
use toxtrace_core::corpusfilter::{filter_corpus, BitextFormat, FilterOptions, FilterPolicy};
use toxtrace_core::dataset::{join_records, jsonl_bytes, read_jsonl, TranslationLine};
use toxtrace_core::detector::{scan_corpus, ToxicityFinding, TranslationRecord};
use toxtrace_core::lexicon::{load_lexicon, LexiconSet, NormalizationConfig};
use toxtrace_core::par::{with_threads, Execution};
use toxtrace_core::pipeline::{run_pipeline, validate_language, Capabilities, LanguageStatus, RunConfig};
use toxtrace_core::report::{self, canonical_json, AtLevel, CellTable, Dimension, Format, LanguageRange, StatsReport};
use toxtrace_core::robustness::{self, heatmap_grid, region_stats, uniform_edges, FlagThresholds};
use toxtrace_core::stats::{self, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use toxtrace_core::templategen::{bundled_mini_pack, load_pack, GeneratedSentence};

#[derive(Parser)]
#[command(name = "toxtrace", version, about = "Added-toxicity analysis for machine translation output")]
struct Cli {
    /// Global seed; overrides the config file for `run`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Fail on the first malformed record instead of counting it.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a template pack into a corpus.
    Generate {
        /// Bundled mini-pack when omitted.
        #[arg(long)]
        pack: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write sentence counts per axis.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Find added toxicity in translations.
    Detect {
        #[command(flatten)]
        inputs: RecordArgs,
        #[command(flatten)]
        lexicons: LexiconArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Roll out layer-wise attributions into per-step vectors.
    Attribute {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gini cells, flagged region and heatmap grid.
    Robustness {
        #[command(flatten)]
        inputs: RecordArgs,
        #[arg(long)]
        findings: PathBuf,
        #[arg(long, default_value = "0.40,0.90")]
        thresholds: String,
        /// Contribution x Gini bins.
        #[arg(long, default_value = "20x20")]
        bins: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-language tests and language-level correlations.
    Stats {
        #[command(flatten)]
        inputs: RecordArgs,
        #[arg(long)]
        findings: PathBuf,
        /// Contribution below which a translation counts as hallucinated.
        #[arg(long, default_value_t = 0.40)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: f64,
        /// CSV with one row per language.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Filter a parallel corpus by toxicity imbalance.
    Filter {
        #[arg(long)]
        policy: FilterPolicy,
        #[arg(long)]
        src_lexicon: PathBuf,
        #[arg(long)]
        tgt_lexicon: PathBuf,
        /// Defaults to the source lexicon file stem.
        #[arg(long)]
        src_lang: Option<String>,
        #[arg(long)]
        tgt_lang: Option<String>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Annotation sheets for detector evaluation.
    #[command(subcommand)]
    Annotate(Annotate),
    /// Rate tables by dimension, level table and heatmap.
    Report {
        #[command(flatten)]
        inputs: RecordArgs,
        #[arg(long)]
        findings: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, default_value = "0.40,0.90")]
        thresholds: String,
        #[arg(long, default_value = "20x20")]
        bins: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the whole pipeline from a TOML or JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Annotate {
    /// Every sentence with a finding.
    Export {
        #[command(flatten)]
        inputs: RecordArgs,
        #[arg(long)]
        findings: PathBuf,
        #[arg(long)]
        language: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded sample of sentences without findings from the most toxic strata.
    Sample {
        #[command(flatten)]
        inputs: RecordArgs,
        #[arg(long)]
        findings: PathBuf,
        #[arg(long)]
        language: String,
        #[arg(long, default_value_t = DEFAULT_NEGATIVE_CAP)]
        cap: usize,
        #[arg(long, default_value_t = DEFAULT_STRATA_TOP_K)]
        top_k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn completed sheets of one language into error rates.
    Ingest {
        #[arg(long, required = true, num_args = 1..)]
        sheets: Vec<PathBuf>,
        #[arg(long)]
        level: Option<AtLevel>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RecordArgs {
    /// Corpus JSONL; the bundled mini-pack when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    translations: PathBuf,
    #[arg(long = "attr")]
    attributions: Option<PathBuf>,
}

#[derive(Args)]
struct LexiconArgs {
    #[arg(long)]
    lexicon_dir: PathBuf,
    #[arg(long, default_value = "eng_Latn")]
    source_language: String,
    /// Languages excluded here are dropped before detection.
    #[arg(long)]
    capabilities: Option<PathBuf>,
}

fn load_records(args: &RecordArgs) -> Result<Vec<TranslationRecord>> {
    let corpus: Vec<GeneratedSentence> = match &args.corpus {
        Some(p) => read_jsonl(p)?,
        None => bundled_mini_pack().expand().collect(),
    };
    let translations: Vec<TranslationLine> = read_jsonl(&args.translations)?;
    let attributions: Vec<RawAttribution> = match &args.attributions {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    Ok(join_records(&corpus, translations, attributions)?)
}

fn parse_bins(text: &str) -> Result<(usize, usize)> {
    let (c, g) = text.split_once('x').context("bins must look like 20x20")?;
    let (c, g): (usize, usize) = (c.trim().parse()?, g.trim().parse()?);
    if c == 0 || g == 0 {
        bail!(toxtrace_core::Error::Config("bins must be positive".into()));
    }
    Ok((c, g))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let exec = Execution::default();
    match cli.command {
        Command::Generate { pack, out, stats } => {
            let pack = match pack {
                Some(p) => load_pack(&p)?,
                None => bundled_mini_pack(),
            };
            write(&out, &jsonl_bytes(&pack.expand_with(exec))?)?;
            if let Some(p) = stats {
                write(&p, &canonical_json(serde_json::to_value(pack.stats())?)?)?;
            }
        }
        Command::Detect { inputs, lexicons, out, summary } => {
            let lex = LexiconSet::load_dir(&lexicons.lexicon_dir, NormalizationConfig::default())?;
            let mut records = load_records(&inputs)?;
            if let Some(p) = &lexicons.capabilities {
                let caps = Capabilities::load(p)?;
                let mut keep = std::collections::BTreeMap::new();
                for r in &records {
                    if !keep.contains_key(&r.language) {
                        keep.insert(r.language.clone(), validate_language(&r.language, &lex, &caps)?);
                    }
                }
                records.retain(|r| keep[&r.language] == LanguageStatus::Supported);
            }
            let scan = scan_corpus(&records, &lex, &lexicons.source_language, seed, exec);
            if cli.strict {
                if let Some((id, msg)) = scan.errors.first() {
                    bail!("{id}: {msg}");
                }
            }
            write(&out, &jsonl_bytes(&scan.findings)?)?;
            if let Some(p) = summary {
                let errors: Vec<_> =
                    scan.errors.iter().map(|(id, msg)| serde_json::json!({"sentence_id": id, "error": msg})).collect();
                write(&p, &canonical_json(serde_json::json!({"summary": scan.summary, "errors": errors}))?)?;
            }
            eprintln!("{} records, {} findings, {} errors", scan.summary.records, scan.summary.findings, scan.summary.errors);
        }
        Command::Attribute { input, out } => {
            let raw: Vec<RawAttribution> = read_jsonl(&input)?;
            let records = raw.into_iter().map(|r| r.into_record()).collect::<toxtrace_core::Result<Vec<_>>>()?;
            write(&out, &jsonl_bytes(&records)?)?;
        }
        Command::Robustness { inputs, findings, thresholds, bins, out_dir } => {
            let thresholds = FlagThresholds::parse(&thresholds)?;
            let (c_bins, g_bins) = parse_bins(&bins)?;
            let records = load_records(&inputs)?;
            let findings: Vec<ToxicityFinding> = read_jsonl(&findings)?;
            let analysis = robustness::analyze(&records, &findings, exec)?;
            write(&out_dir.join("cells.csv"), &report::emit(&CellTable(&analysis.cells), Format::Csv)?)?;
            let region = region_stats(&analysis.population, thresholds)?;
            write(&out_dir.join("region.json"), &report::emit(&region, Format::Json)?)?;
            let grid = heatmap_grid(&analysis.population, &uniform_edges(c_bins), &uniform_edges(g_bins))?;
            write(&out_dir.join("heatmap.csv"), &report::emit(&grid, Format::Csv)?)?;
            write(&out_dir.join("heatmap.svg"), &report::emit(&grid, Format::SvgHeatmap)?)?;
            eprintln!("{} cells ({} undefined), {} flagged of {}", analysis.cells.len(), analysis.undefined_cells, region.flagged, region.population);
        }
        Command::Stats { inputs, findings, threshold, resamples, level, out, json } => {
            let records = load_records(&inputs)?;
            let findings: Vec<ToxicityFinding> = read_jsonl(&findings)?;
            let analysis = robustness::analyze(&records, &findings, exec)?;
            let tests = stats::language_tests(&analysis.observations, threshold);
            let rates = report::aggregate(&findings, &records, Dimension::Language);
            let mut pairs = Vec::new();
            for row in &rates.rows {
                let obs: Vec<f64> =
                    analysis.observations.iter().filter(|o| o.language == row.key).map(|o| o.contribution).collect();
                if !obs.is_empty() {
                    pairs.push((row.key.clone(), obs.iter().sum::<f64>() / obs.len() as f64, row.rate));
                }
            }
            pairs.sort_by(|a, b| a.0.cmp(&b.0));
            let pairs: Vec<(f64, f64)> = pairs.into_iter().map(|(_, c, r)| (c, r)).collect();
            let correlation = (pairs.len() >= 2).then(|| stats::correlate(&pairs, resamples, level, seed, exec));
            let report = StatsReport { threshold, tests, correlation };
            write(&out, &report::emit(&report, Format::Csv)?)?;
            if let Some(p) = json {
                write(&p, &report::emit(&report, Format::Json)?)?;
            }
        }
        Command::Filter { policy, src_lexicon, tgt_lexicon, src_lang, tgt_lang, input, out, report } => {
            let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let src_lang = src_lang.unwrap_or_else(|| stem(&src_lexicon));
            let tgt_lang = tgt_lang.unwrap_or_else(|| stem(&tgt_lexicon));
            let norm = NormalizationConfig::default();
            let mut lexicons = LexiconSet::new();
            lexicons.insert(load_lexicon(&src_lexicon, &src_lang, norm)?)?;
            if tgt_lang != src_lang {
                lexicons.insert(load_lexicon(&tgt_lexicon, &tgt_lang, norm)?)?;
            }
            let mut opts = FilterOptions::new(policy, BitextFormat::from_path(&input), &src_lang, &tgt_lang);
            opts.strict = cli.strict;
            let reader = BufReader::new(fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?);
            let writer = BufWriter::new(fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?);
            let summary = filter_corpus(reader, writer, &lexicons, &opts)?;
            if let Some(p) = report {
                write(&p, &canonical_json(serde_json::to_value(&summary)?)?)?;
            }
            eprintln!("kept {} of {} ({} malformed)", summary.kept, summary.input, summary.malformed);
        }
        Command::Annotate(Annotate::Export { inputs, findings, language, out }) => {
            let records = load_records(&inputs)?;
            let findings: Vec<ToxicityFinding> = read_jsonl(&findings)?;
            let sheet = anneval::export_positives(&findings, &records, &language)?;
            write(&out, &sheet.to_csv_bytes()?)?;
        }
        Command::Annotate(Annotate::Sample { inputs, findings, language, cap, top_k, out }) => {
            let records = load_records(&inputs)?;
            let findings: Vec<ToxicityFinding> = read_jsonl(&findings)?;
            let strata = anneval::rank_strata(&records, &findings, top_k);
            let sheet = anneval::sample_negatives(&records, &findings, &language, &strata, cap, seed);
            write(&out, &sheet.to_csv_bytes()?)?;
        }
        Command::Annotate(Annotate::Ingest { sheets, level, out }) => {
            let sheets = sheets
                .iter()
                .map(|p| {
                    let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                    AnnotationSheet::read_csv(file).with_context(|| format!("reading {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let rates = vec![anneval::ingest(&sheets, level)?];
            let format = if out.extension().is_some_and(|e| e == "csv") { Format::Csv } else { Format::Json };
            write(&out, &report::emit(&rates, format)?)?;
        }
        Command::Report { inputs, findings, format, thresholds, bins, out_dir } => {
            let format: Format = format.parse()?;
            if format == Format::SvgHeatmap {
                bail!(toxtrace_core::Error::Config("rate tables are emitted as csv or json".into()));
            }
            let records = load_records(&inputs)?;
            let findings: Vec<ToxicityFinding> = read_jsonl(&findings)?;
            let ext = format.extension();
            for dim in Dimension::ALL {
                let table = report::aggregate(&findings, &records, dim);
                write(&out_dir.join(format!("rates_{}.{ext}", dim.name())), &report::emit(&table, format)?)?;
            }
            if inputs.attributions.is_some() {
                let thresholds = FlagThresholds::parse(&thresholds)?;
                let (c_bins, g_bins) = parse_bins(&bins)?;
                let analysis = robustness::analyze(&records, &findings, exec)?;
                let rates = report::aggregate(&findings, &records, Dimension::Language);
                let mut ranges = Vec::new();
                for row in &rates.rows {
                    let population: Vec<_> = analysis.population.iter().filter(|p| p.language == row.key).cloned().collect();
                    let region = if population.is_empty() { None } else { Some(region_stats(&population, thresholds)?) };
                    ranges.push(LanguageRange { language: row.key.clone(), toxicity_rate: row.rate, region });
                }
                let range = report::toxicity_range_table(&ranges);
                write(&out_dir.join(format!("toxicity_range.{ext}")), &report::emit(&range, format)?)?;
                let grid = heatmap_grid(&analysis.population, &uniform_edges(c_bins), &uniform_edges(g_bins))?;
                write(&out_dir.join("heatmap.svg"), &report::emit(&grid, Format::SvgHeatmap)?)?;
            }
        }
        Command::Run { config, out_dir } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(dir) = out_dir {
                config.output_dir = dir;
            }
            config.strict |= cli.strict;
            let summary = run_pipeline(&config, exec)?;
            for (lang, status) in &summary.languages {
                if let LanguageStatus::Excluded { reason } = status {
                    eprintln!("{lang}: excluded ({})", serde_json::to_value(reason)?.as_str().unwrap_or_default());
                }
            }
            eprintln!(
                "{} records, {} findings, {} artifacts in {}",
                summary.records,
                summary.findings,
                summary.manifest.artifacts.len(),
                config.output_dir.display()
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<toxtrace_core::Error>().is_some_and(|e| e.is_validation())
            || e.downcast_ref::<std::num::ParseIntError>().is_some()
    });
    if validation {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    match with_threads(threads, || execute(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
