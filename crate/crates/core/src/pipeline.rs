//! The end-to-end run: ingest → extract → filter → dedup → BETR → classifier,
//! sharded, resumable and (optionally) deterministic.
//!
//! Documents are split into shards of `shard_size` in input order. Every
//! shard is written as JSONL, and the manifest is rewritten after each one
//! together with a snapshot of the dedup state, so a rerun picks up at the
//! first shard that is not done. When the classifier has to be trained from
//! a BETR selection, the run takes two passes: curate every shard, build the
//! training set from the whole curated corpus, then score every shard.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accounting::ChainStats;
use crate::betr::{self, BetrConfig, Embedder, HashEmbedder, RemoteEmbedder};
use crate::classifier::{self, parse_labeled_line, FastTextModel, TrainParams};
use crate::dedup::{DedupConfig, Deduplicator};
use crate::document::{read_jsonl, total_tokens, write_jsonl, Document};
use crate::error::{Error, Result};
use crate::extract::{extract_documents, ExtractParams, Parser, StopwordList};
use crate::filters::{FilterChain, FilterConfig, LanguageIdentifier, StopwordLid, UrlBlocklist};
use crate::kv::{KvFile, Section};
use crate::warc::read_archive_documents;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Filter,
    Dedup,
    Betr,
    Classify,
}

impl Stage {
    pub const CANONICAL: [Stage; 6] = [Stage::Ingest, Stage::Extract, Stage::Filter, Stage::Dedup, Stage::Betr, Stage::Classify];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Filter => "filter",
            Stage::Dedup => "dedup",
            Stage::Betr => "betr",
            Stage::Classify => "classify",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::CANONICAL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IoConfig {
    /// Glob patterns, expanded and sorted per pattern.
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    /// Documents per shard.
    pub shard_size: usize,
}

#[derive(Debug, Clone)]
pub struct ExtractStage {
    pub parser: Parser,
    pub params: ExtractParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterStage {
    pub config: FilterConfig,
    /// fastText language-ID model; without one the stopword heuristic
    /// [`StopwordLid`] is used.
    pub lid_model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedProvider {
    Fallback { dim: usize, seed: u64 },
    Remote { endpoint: String, batch_size: usize },
}

impl EmbedProvider {
    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self {
            EmbedProvider::Fallback { dim, seed } => Box::new(HashEmbedder::new(*dim, *seed)?),
            EmbedProvider::Remote { endpoint, batch_size } => {
                let mut r = RemoteEmbedder::new(endpoint)?;
                r.batch_size = *batch_size;
                Box::new(r)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetrStage {
    pub config: BetrConfig,
    pub provider: EmbedProvider,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyStage {
    /// Pre-trained model; required unless the BETR stage trains one.
    pub model: Option<PathBuf>,
    pub label: String,
    pub threshold: f64,
    pub train: TrainParams,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub io: IoConfig,
    pub extract: ExtractStage,
    pub filter: FilterStage,
    pub dedup: DedupConfig,
    pub betr: BetrStage,
    pub classify: ClassifyStage,
    pub seed: u64,
    pub deterministic: bool,
    /// SHA-256 of the canonical config, excluding `io.output_dir`.
    pub config_hash: String,
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn read_extract(mut s: Section, base: Option<&Path>) -> Result<ExtractStage> {
    let mut parser = Parser::Justext;
    if let Some(v) = s.take("parser") {
        parser = v.parse()?;
    }
    let mut p = ExtractParams::default();
    s.set("length_low", &mut p.length_low)?;
    s.set("length_high", &mut p.length_high)?;
    s.set("stopwords_low", &mut p.stopwords_low)?;
    s.set("stopwords_high", &mut p.stopwords_high)?;
    s.set("max_link_density", &mut p.max_link_density)?;
    s.set("context_sensitive", &mut p.context_sensitive)?;
    if let Some(path) = s.take("stopwords") {
        p.stopwords = Arc::new(StopwordList::load(&resolve(base, &path))?);
    }
    s.finish()?;
    p.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(ExtractStage { parser, params: p })
}

fn read_filter(mut s: Section, base: Option<&Path>) -> Result<FilterStage> {
    let lid_model = s.take("lid_model").map(|p| resolve(base, &p));
    let blocklist = s.take("url_blocklist_path");
    let mut config = FilterConfig::from_section(s)?;
    config.url_blocklist_path = blocklist.map(|p| resolve(base, &p));
    Ok(FilterStage { config, lid_model })
}

fn read_betr(mut s: Section, base: Option<&Path>, seed: u64) -> Result<BetrStage> {
    let mut c = BetrConfig {
        seed,
        ..BetrConfig::default()
    };
    s.set("top_frac", &mut c.top_frac)?;
    s.set("negative_ratio", &mut c.negative_ratio)?;
    s.set("seed", &mut c.seed)?;
    if let Some(v) = s.take("benchmarks") {
        c.benchmark_paths = list(&v).iter().map(|p| resolve(base, p)).collect();
    }
    let provider = match s.take("provider").as_deref() {
        None | Some("fallback") => {
            let d = HashEmbedder::default();
            let (mut dim, mut eseed) = (d.dim, d.seed);
            s.set("dim", &mut dim)?;
            s.set("embed_seed", &mut eseed)?;
            EmbedProvider::Fallback { dim, seed: eseed }
        }
        Some("remote") => {
            let endpoint = s
                .take("endpoint")
                .ok_or_else(|| Error::Config("betr.provider = remote needs betr.endpoint".into()))?;
            let mut batch_size = 64usize;
            s.set("batch_size", &mut batch_size)?;
            EmbedProvider::Remote { endpoint, batch_size }
        }
        Some(other) => return Err(Error::Config(format!("unknown betr.provider `{other}` (fallback, remote)"))),
    };
    s.finish()?;
    c.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(BetrStage { config: c, provider })
}

fn read_classify(mut s: Section, base: Option<&Path>) -> Result<ClassifyStage> {
    let model = s.take("model").map(|p| resolve(base, &p));
    let mut label = betr::POSITIVE_LABEL.to_string();
    s.set("label", &mut label)?;
    let mut threshold = 0.5f64;
    s.set("threshold", &mut threshold)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("classify.threshold must be in [0, 1], got {threshold}")));
    }
    let mut t = TrainParams::default();
    s.set("lr", &mut t.lr)?;
    s.set("dim", &mut t.dim)?;
    s.set("ws", &mut t.ws)?;
    s.set("epochs", &mut t.epochs)?;
    s.set("min_count", &mut t.min_count)?;
    s.set("word_ngrams", &mut t.word_ngrams)?;
    s.set("buckets", &mut t.buckets)?;
    s.set("seed", &mut t.seed)?;
    s.finish()?;
    t.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(ClassifyStage {
        model,
        label,
        threshold,
        train: t,
    })
}

fn config_hash(kv: &KvFile) -> String {
    let mut kv = kv.clone();
    if let Some(io) = kv.sections.iter_mut().find(|s| s.name == "io") {
        io.take("output_dir");
    }
    let digest = Sha256::digest(kv.canonical().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_order(stages: &[Stage], reorder: bool) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for s in stages {
        if !seen.insert(*s) {
            return Err(Error::Config(format!("stage `{}` listed twice", s.as_str())));
        }
    }
    if stages.windows(2).all(|w| w[0] < w[1]) {
        return Ok(());
    }
    if !reorder {
        return Err(Error::Config(format!(
            "stages must follow the order {}; set allow_reorder = true to run filter/dedup in another order",
            Stage::CANONICAL.map(Stage::as_str).join(" -> ")
        )));
    }
    // Acknowledged reordering may only swap filter and dedup; extraction has
    // to precede them and BETR and scoring have to follow them.
    let rank = |s: &Stage| match s {
        Stage::Ingest => 0,
        Stage::Extract => 1,
        Stage::Filter | Stage::Dedup => 2,
        Stage::Betr => 3,
        Stage::Classify => 4,
    };
    if stages.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])) {
        Ok(())
    } else {
        Err(Error::Config("only filter and dedup may be reordered".into()))
    }
}

impl PipelineConfig {
    /// Parses a config; relative paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut kv = KvFile::parse(text)?;
        let config_hash = config_hash(&kv);
        const SECTIONS: [&str; 7] = ["", "io", "extract", "filter", "dedup", "betr", "classify"];
        if let Some(s) = kv.sections.iter().find(|s| !SECTIONS.contains(&s.name.as_str())) {
            return Err(Error::Config(format!("unknown section [{}]", s.name)));
        }
        let mut section = |name: &str| {
kv.take_section(name).unwrap_or_else(|| Section::named(name))
        };

        let mut root = section("");
        let mut seed = 42u64;
        root.set("seed", &mut seed)?;
        let mut deterministic = false;
        root.set("deterministic", &mut deterministic)?;
        let mut reorder = false;
        root.set("allow_reorder", &mut reorder)?;
        let stages: Vec<Stage> = match root.take("stages") {
            Some(v) => list(&v).iter().map(|s| s.parse()).collect::<Result<_>>()?,
            None => vec![Stage::Ingest, Stage::Extract, Stage::Filter, Stage::Dedup],
        };
        root.finish()?;
        check_order(&stages, reorder)?;

        let mut io = section("io");
        let inputs = io.take("inputs").map(|v| list(&v)).unwrap_or_default();
        let inputs = inputs
            .iter()
            .map(|p| resolve(base, p).to_string_lossy().into_owned())
            .collect();
        let output_dir = resolve(
            base,
            &io.take("output_dir").ok_or_else(|| Error::Config("io.output_dir is required".into()))?,
        );
        let mut shard_size = 10_000usize;
        io.set("shard_size", &mut shard_size)?;
        io.finish()?;
        if shard_size == 0 {
            return Err(Error::Config("io.shard_size must be at least 1".into()));
        }

        let extract = read_extract(section("extract"), base)?;
        let filter = read_filter(section("filter"), base)?;
        let mut ds = section("dedup");
        let has_seed = ds.keys().any(|k| k == "seed");
        let mut dedup = DedupConfig::read_section(&mut ds)?;
        ds.finish()?;
        if !has_seed {
            dedup.seed = seed;
        }
        let betr = read_betr(section("betr"), base, seed)?;
        let classify = read_classify(section("classify"), base)?;

        let cfg = PipelineConfig {
            stages,
            io: IoConfig {
                inputs,
                output_dir,
                shard_size,
            },
            extract,
            filter,
            dedup,
            betr,
            classify,
            seed,
            deterministic,
            config_hash,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse(&text, path.parent()).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.has(Stage::Betr) && self.betr.config.benchmark_paths.is_empty() {
            return Err(Error::Config("the betr stage needs betr.benchmarks".into()));
        }
        if self.has(Stage::Classify) && self.classify.model.is_none() && !self.has(Stage::Betr) {
            return Err(Error::Config("the classify stage needs classify.model or a betr stage to train one".into()));
        }
        if self.has(Stage::Betr) && self.classify.model.is_some() {
            return Err(Error::Config("classify.model conflicts with the betr stage, which trains the model".into()));
        }
        Ok(())
    }

    pub fn has(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }

    fn trains_classifier(&self) -> bool {
        self.has(Stage::Betr)
    }

    fn parallel(&self) -> bool {
        !self.deterministic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShardStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub stats: ChainStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardRecord {
    pub index: usize,
    pub status: ShardStatus,
    /// Relative to the output directory.
    pub output: String,
    pub input_docs: u64,
    pub output_docs: u64,
    pub output_tokens: u64,
    pub stages: Vec<StageStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub name: String,
    pub shards: Vec<ShardRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub docs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<Stage>,
    pub inputs: Vec<InputFile>,
    pub shard_size: usize,
    pub passes: Vec<PassRecord>,
    /// Snapshot of dedup state after the last done curate shard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dedup_state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betr_training_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_model: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Shards of the last pass, whose outputs form the corpus.
    pub fn final_shards(&self) -> &[ShardRecord] {
        self.passes.last().map_or(&[], |p| &p.shards)
    }

    pub fn is_complete(&self) -> bool {
        self.passes.iter().all(|p| p.shards.iter().all(|s| s.status == ShardStatus::Done))
    }

    pub fn failed_shards(&self) -> Vec<(String, usize)> {
        self.passes
            .iter()
            .flat_map(|p| {
                p.shards
                    .iter()
                    .filter(|s| s.status == ShardStatus::Failed)
                    .map(move |s| (p.name.clone(), s.index))
            })
            .collect()
    }

    /// `input_tokens = surviving_tokens + Σ removed_tokens` over the whole run.
    pub fn check_conservation(&self) -> Result<()> {
        let report = stats_report(self);
        let surviving: u64 = self.final_shards().iter().map(|s| s.output_tokens).sum();
        if report.input_tokens == surviving + report.removed_tokens() {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "token accounting mismatch: input {} != surviving {} + removed {}",
                report.input_tokens,
                surviving,
                report.removed_tokens()
            )))
        }
    }
}

/// Combines per-shard stage stats into one table: stage rows and individual
/// filters in execution order, percentages against the first stage's input.
pub fn stats_report(manifest: &RunManifest) -> ChainStats {
    let mut merged: Vec<StageStats> = Vec::new();
    for pass in &manifest.passes {
        for shard in pass.shards.iter().filter(|s| s.status == ShardStatus::Done) {
            for st in &shard.stages {
                match merged.iter_mut().find(|m| m.stage == st.stage) {
                    Some(m) => m.stats.merge(&st.stats),
                    None => merged.push(st.clone()),
                }
            }
        }
    }
    let mut out = ChainStats::default();
    if let Some(first) = merged.first() {
        out.input_docs = first.stats.input_docs;
        out.input_tokens = first.stats.input_tokens;
    }
    for m in merged {
        out.rows.extend(m.stats.rows);
    }
    out
}

/// Expands input patterns: each pattern's matches sorted, patterns in order,
/// repeats dropped.
pub fn expand_inputs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = Vec::new();
    for pat in patterns {
        let mut matches: Vec<PathBuf> = glob::glob(pat)
            .map_err(|e| Error::Config(format!("bad input pattern `{pat}`: {e}")))?
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("reading `{pat}`: {e}")))?;
        if matches.is_empty() {
            return Err(Error::Data(format!("input pattern `{pat}` matched no files")));
        }
        matches.sort();
        for m in matches {
            if !out.contains(&m) {
                out.push(m);
            }
        }
    }
    Ok(out)
}

/// Reads one input file: `.jsonl` as documents, anything else as a WARC/WET
/// archive (optionally gzipped).
pub fn read_input(path: &Path) -> Result<Vec<Document>> {
    let name = path.to_string_lossy();
    if name.ends_with(".jsonl") || name.ends_with(".json") {
        read_jsonl(path)
    } else {
        let (docs, report) = read_archive_documents(path)?;
        if report.errors() > 0 {
            log::warn!("{}: {} malformed records skipped", path.display(), report.errors());
        }
        Ok(docs)
    }
}

/// Documents `[start, end)` of the concatenated inputs, read file by file.
struct InputStream<'a> {
    files: &'a [InputFile],
    loaded: Option<(usize, Vec<Document>)>,
}

impl<'a> InputStream<'a> {
    fn range(&mut self, start: u64, end: u64) -> Result<Vec<Document>> {
        let mut out = Vec::new();
        let mut offset = 0u64;
        for (i, f) in self.files.iter().enumerate() {
            let (lo, hi) = (offset, offset + f.docs);
            offset = hi;
            if hi <= start || lo >= end {
                continue;
            }
            if self.loaded.as_ref().map(|l| l.0) != Some(i) {
                let docs = read_input(Path::new(&f.path))?;
                if docs.len() as u64 != f.docs {
                    return Err(Error::Data(format!("{} changed since the run started", f.path)));
                }
                self.loaded = Some((i, docs));
            }
            let docs = &self.loaded.as_ref().unwrap().1;
            let a = start.max(lo) - lo;
            let b = end.min(hi) - lo;
            out.extend_from_slice(&docs[a as usize..b as usize]);
        }
        Ok(out)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io_at(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

fn write_shard(path: &Path, docs: &[Document]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write_jsonl(&tmp, docs)?;
    fs::rename(&tmp, path).map_err(|e| Error::io_at(path, e))
}

/// Loads the language identifier configured for the filter stage.
pub fn load_lid(model: Option<&Path>) -> Result<Arc<dyn LanguageIdentifier>> {
    Ok(match model {
        Some(p) => Arc::new(FastTextModel::load(p)?),
        None => Arc::new(StopwordLid::default()),
    })
}

pub fn load_blocklist(path: Option<&Path>) -> Result<UrlBlocklist> {
    match path {
        Some(p) => UrlBlocklist::load(p),
        None => Ok(UrlBlocklist::default()),
    }
}

/// Limits for one invocation of [`run_pipeline`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop cleanly after this many shard jobs (resume later).
    pub max_shards: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub complete: bool,
}

const CURATE: &str = "curate";
const SCORE: &str = "score";
const BETR_FILE: &str = "betr_train.txt";
const MODEL_FILE: &str = "classifier.bin";

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
    manifest: RunManifest,
    jobs: usize,
    opts: RunOptions,
}

impl Runner<'_> {
    fn save_manifest(&self) -> Result<()> {
        write_atomic(&self.dir.join(MANIFEST_FILE), self.manifest.to_json()?.as_bytes())
    }

    fn out_of_budget(&self) -> bool {
        self.opts.max_shards.is_some_and(|m| self.jobs >= m)
    }

    fn fail(&mut self, pass: usize, shard: usize, e: Error) -> Error {
        let rec = &mut self.manifest.passes[pass].shards[shard];
        rec.status = ShardStatus::Failed;
        rec.error = Some(e.to_string());
        log::error!("{} shard {shard} failed: {e}", self.manifest.passes[pass].name);
        if let Err(w) = self.save_manifest() {
            log::error!("could not record the failure in the manifest: {w}");
        }
        Error::PartialFailure(format!("{} shard {shard}: {e}", self.manifest.passes[pass].name))
    }

    fn finish_shard(&mut self, pass: usize, shard: usize, input_docs: u64, docs: &[Document], stages: Vec<StageStats>) -> Result<()> {
        let rec = &mut self.manifest.passes[pass].shards[shard];
        write_shard(&self.dir.join(&rec.output), docs)?;
        rec.status = ShardStatus::Done;
        rec.input_docs = input_docs;
        rec.output_docs = docs.len() as u64;
        rec.output_tokens = total_tokens(docs);
        rec.stages = stages;
        rec.error = None;
        Ok(())
    }

    fn curate(&mut self, chain: Option<&FilterChain>, scorer: Option<&FastTextModel>) -> Result<bool> {
        let cfg = self.cfg;
        let mut dedup = if cfg.has(Stage::Dedup) {
            let mut d = Deduplicator::new(&cfg.dedup)?;
            if let Some(state) = &self.manifest.dedup_state {
                d.load_state(&self.dir.join(state))?;
            }
            Some(d)
        } else {
            None
        };
        let inputs = self.manifest.inputs.clone();
        let mut stream = InputStream {
            files: &inputs,
            loaded: None,
        };
        let size = cfg.io.shard_size as u64;
        let total: u64 = inputs.iter().map(|f| f.docs).sum();
        for shard in 0..self.manifest.passes[0].shards.len() {
            if self.manifest.passes[0].shards[shard].status == ShardStatus::Done {
                continue;
            }
            if self.out_of_budget() {
                return Ok(false);
            }
            let start = shard as u64 * size;
            let result = (|| -> Result<(u64, Vec<Document>, Vec<StageStats>)> {
                let mut docs = stream.range(start, (start + size).min(total))?;
                let input_docs = docs.len() as u64;
                let mut stages = Vec::new();
                for &stage in &cfg.stages {
                    let (kept, stats) = match stage {
                        Stage::Extract => extract_documents(docs, cfg.extract.parser, &cfg.extract.params),
                        Stage::Filter => chain.expect("filter chain").filter_documents(docs, cfg.parallel()),
                        Stage::Dedup => dedup.as_mut().expect("deduplicator").process(docs, cfg.parallel())?,
                        Stage::Classify if !cfg.trains_classifier() => classifier::score_documents(
                            scorer.expect("scorer"),
                            docs,
                            &cfg.classify.label,
                            cfg.classify.threshold,
                        )?,
                        _ => continue,
                    };
                    docs = kept;
                    stages.push(StageStats {
                        stage: stage.as_str().into(),
                        stats,
                    });
                }
                Ok((input_docs, docs, stages))
            })();
            let (input_docs, docs, stages) = match result {
                Ok(r) => r,
                Err(e) => return Err(self.fail(0, shard, e)),
            };
            if let Err(e) = self.finish_shard(0, shard, input_docs, &docs, stages) {
                return Err(self.fail(0, shard, e));
            }
            let previous = self.manifest.dedup_state.take();
            if let Some(d) = &dedup {
                let name = format!("state/dedup-{:05}.bin", shard + 1);
                if let Err(e) = d.save_state(&self.dir.join(&name)) {
                    self.manifest.dedup_state = previous;
                    return Err(self.fail(0, shard, e));
                }
                self.manifest.dedup_state = Some(name);
            }
            self.save_manifest()?;
            if let Some(old) = previous {
                let _ = fs::remove_file(self.dir.join(old));
            }
            self.jobs += 1;
            log::info!("curated shard {shard}: {input_docs} -> {} docs", self.manifest.passes[0].shards[shard].output_docs);
        }
        Ok(true)
    }

    fn train_from_betr(&mut self) -> Result<FastTextModel> {
        let cfg = self.cfg;
        let mut docs = Vec::new();
        for s in &self.manifest.passes[0].shards {
            docs.extend(read_jsonl(&self.dir.join(&s.output))?);
        }
        let benchmarks = betr::load_benchmarks(&cfg.betr.config.benchmark_paths)?;
        let provider = cfg.betr.provider.build()?;
        let (_, set) = betr::build_training_set(&docs, &benchmarks, provider.as_ref(), &cfg.betr.config)?;
        let lines = betr::training_lines(&set, &docs);
        let mut text = lines.join("\n");
        text.push('\n');
        write_atomic(&self.dir.join(BETR_FILE), text.as_bytes())?;
        self.manifest.betr_training_file = Some(BETR_FILE.into());
        let corpus: Vec<(String, String)> = lines.iter().filter_map(|l| parse_labeled_line(l)).collect();
        let (model, report) = classifier::train(&corpus, &cfg.classify.train)?;
        log::info!("trained classifier on {} examples ({} skipped)", report.examples, report.skipped);
        model.save(&self.dir.join(MODEL_FILE))?;
        self.manifest.classifier_model = Some(MODEL_FILE.into());
        self.save_manifest()?;
        Ok(model)
    }

    fn score(&mut self, model: &FastTextModel) -> Result<bool> {
        let cfg = self.cfg;
        for shard in 0..self.manifest.passes[1].shards.len() {
            if self.manifest.passes[1].shards[shard].status == ShardStatus::Done {
                continue;
            }
            if self.out_of_budget() {
                return Ok(false);
            }
            let src = self.dir.join(&self.manifest.passes[0].shards[shard].output);
            let result = read_jsonl(&src).and_then(|docs| {
                let n = docs.len() as u64;
                classifier::score_documents(model, docs, &cfg.classify.label, cfg.classify.threshold).map(|(d, s)| (n, d, s))
            });
            let (n, docs, stats) = match result {
                Ok(r) => r,
                Err(e) => return Err(self.fail(1, shard, e)),
            };
            let stages = vec![StageStats {
                stage: Stage::Classify.as_str().into(),
                stats,
            }];
            if let Err(e) = self.finish_shard(1, shard, n, &docs, stages) {
                return Err(self.fail(1, shard, e));
            }
            self.save_manifest()?;
            self.jobs += 1;
        }
        Ok(true)
    }
}

fn new_manifest(cfg: &PipelineConfig, inputs: Vec<InputFile>) -> RunManifest {
    let total: u64 = inputs.iter().map(|f| f.docs).sum();
    let n = total.div_ceil(cfg.io.shard_size as u64) as usize;
    let two_pass = cfg.trains_classifier() && cfg.has(Stage::Classify);
    let shards = |prefix: &str| {
        (0..n)
            .map(|i| ShardRecord {
                index: i,
                status: ShardStatus::Pending,
                output: format!("{prefix}-{i:05}.jsonl"),
                input_docs: 0,
                output_docs: 0,
                output_tokens: 0,
                stages: Vec::new(),
                error: None,
            })
            .collect()
    };
    let mut passes = vec![PassRecord {
        name: CURATE.into(),
        shards: shards(if two_pass { "work/curated" } else { "shard" }),
    }];
    if two_pass {
        passes.push(PassRecord {
            name: SCORE.into(),
            shards: shards("shard"),
        });
    }
    RunManifest {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.config_hash.clone(),
        stages: cfg.stages.clone(),
        inputs,
        shard_size: cfg.io.shard_size,
        passes,
        dedup_state: None,
        betr_training_file: None,
        classifier_model: None,
    }
}

/// Runs (or resumes) the pipeline into `cfg.io.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunOutcome> {
    let dir = cfg.io.output_dir.clone();
    for sub in ["", "work", "state"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io_at(dir.join(sub), e))?;
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let m = RunManifest::load(&manifest_path)?;
        if m.config_hash != cfg.config_hash {
            return Err(Error::Config(format!(
                "{} was written by a different config (hash {} vs {}); refusing to resume",
                manifest_path.display(),
                m.config_hash,
                cfg.config_hash
            )));
        }
        log::info!("resuming run in {}", dir.display());
        m
    } else {
        let mut inputs = Vec::new();
        for path in expand_inputs(&cfg.io.inputs)? {
            let docs = read_input(&path)?.len() as u64;
            inputs.push(InputFile {
                path: path.to_string_lossy().into_owned(),
                docs,
            });
        }
        new_manifest(cfg, inputs)
    };

    let chain = if cfg.has(Stage::Filter) {
        let lid = load_lid(cfg.filter.lid_model.as_deref())?;
        let blocklist = load_blocklist(cfg.filter.config.url_blocklist_path.as_deref())?;
        Some(FilterChain::new(cfg.filter.config.clone(), blocklist, lid)?)
    } else {
        None
    };
    let given_model = match (&cfg.classify.model, cfg.has(Stage::Classify)) {
        (Some(p), true) => Some(FastTextModel::load(p)?),
        _ => None,
    };

    let mut runner = Runner {
        cfg,
        dir,
        manifest,
        jobs: 0,
        opts,
    };
    runner.save_manifest()?;
    let mut complete = runner.curate(chain.as_ref(), given_model.as_ref())?;
    if complete && cfg.trains_classifier() {
        let docs: u64 = runner.manifest.passes[0].shards.iter().map(|s| s.output_docs).sum();
        if docs == 0 {
            log::warn!("curated corpus is empty; skipping BETR and classifier training");
        } else {
            let model = match &runner.manifest.classifier_model {
                Some(m) => FastTextModel::load(&runner.dir.join(m))?,
                None => runner.train_from_betr()?,
            };
            if cfg.has(Stage::Classify) {
                complete = runner.score(&model)?;
            }
        }
    }
    runner.save_manifest()?;
    Ok(RunOutcome {
        manifest: runner.manifest,
        complete,
    })
}

/// Concatenated output corpus of a finished run, in shard order.
pub fn read_output(dir: &Path, manifest: &RunManifest) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for s in manifest.final_shards() {
        docs.extend(read_jsonl(&dir.join(&s.output))?);
    }
    Ok(docs)
}
