use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use webcorpus::accounting::ChainStats;
use webcorpus::betr::{self, BetrConfig};
use webcorpus::classifier::{self, FastTextModel, TrainParams};
use webcorpus::dedup::{DedupConfig, DedupMethod, Deduplicator};
use webcorpus::document::{read_jsonl, write_jsonl, Document};
use webcorpus::extract::{self, ExtractParams, StopwordList};
use webcorpus::filters::{FilterChain, FilterConfig};
use webcorpus::pipeline::{self, EmbedProvider, PipelineConfig, RunManifest, RunOptions, MANIFEST_FILE};
use webcorpus::scaling::{self, PowerLawBounds, PredictOptions, Transform};
use webcorpus::{bench, Error, Result};

#[derive(Parser)]
#[command(name = "webcorpus", version, about = "Web-corpus curation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    /// Input JSONL file.
    #[arg(long, short)]
    input: PathBuf,
    /// Output JSONL file.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct StatsOut {
    /// Also write the stats table as CSV.
    #[arg(long)]
    stats_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Read WARC/WET archives (or JSONL) into one JSONL file.
    Ingest {
        /// Input files or glob patterns.
        #[arg(long, short, required = true, num_args = 1..)]
        input: Vec<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Extract main-content text from HTML documents.
    Extract {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value = "justext")]
        parser: extract::Parser,
        /// Stopword list, one word per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[command(flatten)]
        stats: StatsOut,
    },
    /// Run the heuristic filter chain.
    Filter {
        #[command(flatten)]
        io: Io,
        /// Flat key=value file of filter thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        /// URL blocklist (overrides url_blocklist_path in the config).
        #[arg(long)]
        blocklist: Option<PathBuf>,
        /// Language-ID model; without one a stopword heuristic is used.
        #[arg(long)]
        lid_model: Option<PathBuf>,
        /// Run single-threaded.
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        stats: StatsOut,
    },
    /// Deduplicate documents.
    Dedup {
        #[command(flatten)]
        io: Io,
        #[arg(long, default_value = "bloom-old-both")]
        method: DedupMethod,
        #[arg(long, default_value_t = 13)]
        ngram: usize,
        #[arg(long, default_value_t = DedupConfig::default().expected_items)]
        expected_items: u64,
        #[arg(long, default_value_t = DedupConfig::default().fpr)]
        fpr: f64,
        #[arg(long, default_value_t = DedupConfig::default().para_dup_threshold)]
        para_threshold: f64,
        #[arg(long, default_value_t = DedupConfig::default().doc_dup_threshold)]
        doc_threshold: f64,
        #[arg(long, default_value_t = 256)]
        num_perm: usize,
        #[arg(long, default_value_t = 16)]
        bands: usize,
        /// MinHash Jaccard threshold.
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Dedup state file: loaded if present, written after the run.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        deterministic: bool,
        #[command(flatten)]
        stats: StatsOut,
    },
    /// Build a classifier training set by benchmark-targeted ranking.
    BetrBuild {
        /// Corpus JSONL.
        #[arg(long, short)]
        input: PathBuf,
        /// Benchmark example files (one example per line).
        #[arg(long, required = true, num_args = 1..)]
        benchmarks: Vec<PathBuf>,
        /// fastText-format training file.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value = "fallback", value_parser = ["fallback", "remote"])]
        provider: String,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
        /// Fallback embedder dimension.
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        embed_seed: u64,
        #[arg(long, default_value_t = 0.10)]
        top_frac: f64,
        #[arg(long, default_value_t = 1.0)]
        negative_ratio: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Also write per-document scores as JSONL.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Train the quality classifier.
    ClassifyTrain {
        /// `__label__<name> text` lines.
        #[arg(long, short)]
        input: PathBuf,
        /// Model file.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        ws: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long, default_value_t = 2)]
        word_ngrams: usize,
        #[arg(long, default_value_t = 2_097_152)]
        buckets: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Score documents and drop those below a threshold.
    ClassifyScore {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        model: PathBuf,
        /// Keep documents with P(label) >= threshold.
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value = betr::POSITIVE_LABEL)]
        label: String,
        #[command(flatten)]
        stats: StatsOut,
    },
    /// Fit loss and accuracy curves per dataset on a ladder CSV.
    ScalingFit {
        #[arg(long)]
        ladder: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        floor: f64,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Predict accuracy at target sizes from a ladder CSV.
    ScalingPredict {
        #[arg(long)]
        ladder: PathBuf,
        /// Target parameter counts.
        #[arg(long, value_delimiter = ',', default_values_t = [1.5e9, 1.75e9])]
        targets: Vec<f64>,
        #[arg(long, default_value_t = 0.25)]
        floor: f64,
        /// Parameter count of the reference model whose pair is up-weighted.
        #[arg(long)]
        calibrate: Option<f64>,
        #[arg(long, default_value_t = scaling::DEFAULT_CALIBRATION_WEIGHT)]
        calibration_weight: f64,
        #[arg(long, default_value_t = 20.0)]
        tokens_per_param: f64,
        /// Write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write predicted curves from 1B to 7B parameters as CSV.
        #[arg(long)]
        curve_csv: Option<PathBuf>,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Print the removal table of a run.
    Stats {
        /// Manifest file or run output directory.
        manifest: PathBuf,
        #[command(flatten)]
        stats: StatsOut,
    },
    /// Run the configured pipeline (resumes an interrupted run).
    Run {
        #[arg(long, short)]
        config: PathBuf,
        /// Stop after this many shards.
        #[arg(long)]
        max_shards: Option<usize>,
    },
    /// Single-core throughput of the filter chain and Bloom dedup.
    Bench {
        #[arg(long, default_value_t = 64)]
        filter_mb: usize,
        #[arg(long, default_value_t = 10_000_000)]
        bloom_probes: u64,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Transform applied to the loss column before fitting.
    #[arg(long, default_value = "identity")]
    transform: Transform,
    #[arg(long, default_value_t = 0.05)]
    alpha_min: f64,
    #[arg(long, default_value_t = 0.60)]
    alpha_max: f64,
}

impl FitArgs {
    fn bounds(&self) -> PowerLawBounds {
        PowerLawBounds {
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            ..PowerLawBounds::default()
        }
    }
}

fn emit_stats(stats: &ChainStats, out: &StatsOut) -> Result<()> {
    print!("{}", stats.to_table());
    if let Some(p) = &out.stats_csv {
        fs::write(p, stats.to_csv()).map_err(Error::Io)?;
    }
    Ok(())
}

fn write_output(path: &Path, docs: &[Document]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_jsonl(path, docs)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { input, output } => {
            let mut docs = Vec::new();
            for path in pipeline::expand_inputs(&input)? {
                docs.extend(pipeline::read_input(&path)?);
            }
            log::info!("ingested {} documents", docs.len());
            write_output(&output, &docs)
        }
        Command::Extract {
            io,
            parser,
            stopwords,
            stats,
        } => {
            let mut p = ExtractParams::default();
            if let Some(s) = stopwords {
                p.stopwords = std::sync::Arc::new(StopwordList::load(&s)?);
            }
            let (docs, st) = extract::extract_documents(read_jsonl(&io.input)?, parser, &p);
            write_output(&io.output, &docs)?;
            emit_stats(&st, &stats)
        }
        Command::Filter {
            io,
            config,
            blocklist,
            lid_model,
            deterministic,
            stats,
        } => {
            let cfg = match config {
                Some(p) => FilterConfig::load(&p)?,
                None => FilterConfig::default(),
            };
            let bl = pipeline::load_blocklist(blocklist.as_deref().or(cfg.url_blocklist_path.as_deref()))?;
            let lid = pipeline::load_lid(lid_model.as_deref())?;
            let chain = FilterChain::new(cfg, bl, lid)?;
            let (docs, st) = chain.filter_documents(read_jsonl(&io.input)?, !deterministic);
            write_output(&io.output, &docs)?;
            emit_stats(&st, &stats)
        }
        Command::Dedup {
            io,
            method,
            ngram,
            expected_items,
            fpr,
            para_threshold,
            doc_threshold,
            num_perm,
            bands,
            threshold,
            seed,
            state,
            deterministic,
            stats,
        } => {
            let cfg = DedupConfig {
                method,
                ngram,
                expected_items,
                fpr,
                para_dup_threshold: para_threshold,
                doc_dup_threshold: doc_threshold,
                num_perm,
                bands,
                threshold,
                seed,
            };
            let mut d = Deduplicator::new(&cfg)?;
            if let Some(s) = state.as_deref().filter(|s| s.exists()) {
                d.load_state(s)?;
            }
            let (docs, st) = d.process(read_jsonl(&io.input)?, !deterministic)?;
            if let Some(s) = &state {
                d.save_state(s)?;
            }
            write_output(&io.output, &docs)?;
            emit_stats(&st, &stats)
        }
        Command::BetrBuild {
            input,
            benchmarks,
            output,
            provider,
            endpoint,
            batch_size,
            dim,
            embed_seed,
            top_frac,
            negative_ratio,
            seed,
            scores,
        } => {
            let provider = match provider.as_str() {
                "remote" => EmbedProvider::Remote {
                    endpoint: endpoint.ok_or_else(|| Error::Config("--provider remote needs --endpoint".into()))?,
                    batch_size,
                },
                _ => EmbedProvider::Fallback { dim, seed: embed_seed },
            };
            let cfg = BetrConfig {
                top_frac,
                negative_ratio,
                seed,
                benchmark_paths: benchmarks,
            };
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
            let docs = read_jsonl(&input)?;
            let bench = betr::load_benchmarks(&cfg.benchmark_paths)?;
            let (scored, set) = betr::build_training_set(&docs, &bench, provider.build()?.as_ref(), &cfg)?;
            let mut text = betr::training_lines(&set, &docs).join("\n");
            text.push('\n');
            fs::write(&output, text)?;
            if let Some(p) = scores {
                let lines: Vec<String> = scored.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?;
                fs::write(p, lines.join("\n") + "\n")?;
            }
            println!("{} positives, {} negatives", set.positives.len(), set.negatives.len());
            Ok(())
        }
        Command::ClassifyTrain {
            input,
            output,
            lr,
            dim,
            ws,
            epochs,
            min_count,
            word_ngrams,
            buckets,
            seed,
        } => {
            let p = TrainParams {
                lr,
                dim,
                ws,
                epochs,
                min_count,
                word_ngrams,
                buckets,
                seed,
                ..TrainParams::default()
            };
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
            let corpus = classifier::read_corpus(&input)?;
            let (model, report) = classifier::train(&corpus, &p)?;
            model.save(&output)?;
            println!(
                "trained on {} examples ({} skipped); labels: {}; final epoch loss {:.4}",
                report.examples,
                report.skipped,
                model.labels().join(", "),
                report.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::ClassifyScore {
            io,
            model,
            threshold,
            label,
            stats,
        } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::Config(format!("--threshold must be in [0, 1], got {threshold}")));
            }
            let model = FastTextModel::load(&model)?;
            let (docs, st) = classifier::score_documents(&model, read_jsonl(&io.input)?, &label, threshold)?;
            write_output(&io.output, &docs)?;
            emit_stats(&st, &stats)
        }
        Command::ScalingFit { ladder, floor, fit } => {
            let points = scaling::load_ladder(&ladder)?;
            let mut names: Vec<&str> = Vec::new();
            for p in &points {
                if !names.contains(&p.dataset.as_str()) {
                    names.push(&p.dataset);
                }
            }
            println!("{:<16} {:>12} {:>8} {:>8} {:>12} {:>8} {:>8}", "Dataset", "A", "alpha", "E", "residual", "k", "L0");
            for name in names {
                let rows: Vec<_> = points.iter().filter(|p| p.dataset == name).collect();
                let curve: Vec<(f64, f64)> = rows.iter().map(|p| (p.compute(), p.loss)).collect();
                let pl = scaling::fit_power_law_transformed(&curve, fit.transform, &fit.bounds())?;
                let pairs: Vec<(f64, f64)> =
                    rows.iter().filter_map(|p| p.accuracy.map(|a| (fit.transform.apply(p.loss), a))).collect();
                let (k, l0) = if pairs.len() >= 2 {
                    let lg = scaling::fit_logistic(&pairs, floor, None)?;
                    (format!("{:.3}", lg.k), format!("{:.4}", lg.l0))
                } else {
                    ("-".into(), "-".into())
                };
                println!(
                    "{:<16} {:>12.5e} {:>8.4} {:>8.4} {:>12.3e} {:>8} {:>8}",
                    name, pl.a, pl.alpha, pl.e, pl.residual, k, l0
                );
                for w in &pl.warnings {
                    println!("warning: {name}: {w}");
                }
            }
            Ok(())
        }
        Command::ScalingPredict {
            ladder,
            targets,
            floor,
            calibrate,
            calibration_weight,
            tokens_per_param,
            csv,
            curve_csv,
            json,
            fit,
        } => {
            let points = scaling::load_ladder(&ladder)?;
            let opts = PredictOptions {
                targets,
                floor,
                calibrate,
                calibration_weight,
                tokens_per_param,
                transform: fit.transform,
                bounds: fit.bounds(),
            };
            let report = scaling::scaling_report(&points, &opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_text());
            }
            if let Some(p) = csv {
                fs::write(p, report.to_csv())?;
            }
            if let Some(p) = curve_csv {
                fs::write(p, scaling::curve_csv(&report, tokens_per_param))?;
            }
            Ok(())
        }
        Command::Stats { manifest, stats } => {
            let path = if manifest.is_dir() { manifest.join(MANIFEST_FILE) } else { manifest };
            let m = RunManifest::load(&path)?;
            emit_stats(&pipeline::stats_report(&m), &stats)?;
            if m.is_complete() {
                m.check_conservation()?;
            }
            Ok(())
        }
        Command::Run { config, max_shards } => {
            let cfg = PipelineConfig::load(&config)?;
            let out = pipeline::run_pipeline(&cfg, RunOptions { max_shards })?;
            let docs: u64 = out.manifest.final_shards().iter().map(|s| s.output_docs).sum();
            if out.complete {
                out.manifest.check_conservation()?;
                println!("done: {docs} documents in {} shards", out.manifest.final_shards().len());
            } else {
                println!("stopped early; rerun to resume");
            }
            Ok(())
        }
        Command::Bench {
            filter_mb,
            bloom_probes,
            json,
        } => {
            let r = bench::run_bench(filter_mb, bloom_probes)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&r)?);
            } else {
                println!(
                    "filter chain: {:.1} MB/s ({} docs, {:.1} MB in {:.2} s)",
                    r.filter_mb_per_s,
                    r.filter_docs,
                    r.filter_bytes as f64 / 1e6,
                    r.filter_seconds
                );
                println!(
                    "bloom dedup: {:.2e} n-gram probes/s ({} probes in {:.2} s); raw lookups {:.2e}/s",
                    r.bloom_probes_per_s, r.bloom_probes, r.bloom_seconds, r.raw_probes_per_s
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
