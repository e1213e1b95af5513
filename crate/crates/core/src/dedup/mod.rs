//! Deduplication: paragraph-level Bloom filtering with two update policies,
//! exact document hashing, n-gram substring matching and MinHash-LSH.
//!
//! Every stage is order-sensitive and mutates its state in input order;
//! optional parallelism only precomputes per-document hashes.

pub mod bloom;
pub mod minhash;

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rustc_hash::FxHashSet;

pub use self::bloom::{bloom_params, BloomFilter};
pub use self::minhash::{estimate_jaccard, lsh_candidates, minhash_signature, LshGroups, LshIndex, MinHashSignature, MinHasher};
use crate::accounting::ChainStats;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::filters::stats::paragraphs;
use crate::hash::{hash128, hash_str, hash_token_run, DEFAULT_SEED};
use crate::kv::Section;

pub const DEFAULT_NGRAM: usize = 13;

/// Hashes of all overlapping `n`-token windows. A non-empty text shorter than
/// `n` yields one gram over all its tokens, so short duplicates still match.
pub fn ngrams(tokens: &[&str], n: usize) -> Vec<u64> {
    assert!(n >= 1, "n-gram size must be at least 1");
    if tokens.is_empty() {
        return Vec::new();
    }
    let hashes: Vec<u64> = tokens.iter().map(|t| hash_str(t, DEFAULT_SEED)).collect();
    if hashes.len() < n {
        return vec![hash_token_run(&hashes, n as u64)];
    }
    hashes.windows(n).map(|w| hash_token_run(w, n as u64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BloomPolicy {
    /// Removed documents contribute nothing to the filter.
    Both,
    /// Removed documents still contribute their non-duplicate paragraphs.
    OldBoth,
}

impl fmt::Display for BloomPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BloomPolicy::Both => "both",
            BloomPolicy::OldBoth => "old_both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BloomParams {
    pub expected_items: u64,
    pub target_fpr: f64,
    pub ngram_size: usize,
    pub para_dup_threshold: f64,
    pub doc_dup_threshold: f64,
    pub policy: BloomPolicy,
}

impl Default for BloomParams {
    fn default() -> Self {
        BloomParams {
            expected_items: 10_000_000,
            target_fpr: 1e-13,
            ngram_size: DEFAULT_NGRAM,
            para_dup_threshold: 0.8,
            doc_dup_threshold: 0.3,
            policy: BloomPolicy::OldBoth,
        }
    }
}

impl BloomParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::invalid("fpr must be in (0, 1)"));
        }
        if self.expected_items == 0 || self.ngram_size == 0 {
            return Err(Error::invalid("expected_items and ngram must be at least 1"));
        }
        for (name, t) in [("para_dup_threshold", self.para_dup_threshold), ("doc_dup_threshold", self.doc_dup_threshold)] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid(format!("{name} must be in (0, 1], got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomDecision {
    pub keep: bool,
    pub duplicate_paragraphs: Vec<bool>,
}

/// Paragraph-level Bloom deduplication over a stream of documents.
#[derive(Debug, Clone)]
pub struct BloomDedup {
    pub filter: BloomFilter,
    pub params: BloomParams,
}

impl BloomDedup {
    pub fn new(params: BloomParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let filter = BloomFilter::with_capacity(params.expected_items, params.target_fpr, seed)?;
        Ok(BloomDedup { filter, params })
    }

    pub fn with_filter(params: BloomParams, filter: BloomFilter) -> Result<Self> {
        params.validate()?;
        Ok(BloomDedup { filter, params })
    }

    /// Per-paragraph n-gram hashes of a document.
    pub fn paragraph_grams(&self, text: &str) -> Vec<Vec<u64>> {
        paragraph_grams(text, self.params.ngram_size)
    }

    pub fn process(&mut self, text: &str) -> BloomDecision {
        let grams = self.paragraph_grams(text);
        self.process_grams(&grams)
    }

    pub fn process_grams(&mut self, paras: &[Vec<u64>]) -> BloomDecision {
        if paras.is_empty() {
            return BloomDecision {
                keep: true,
                duplicate_paragraphs: Vec::new(),
            };
        }
        // Every paragraph is judged against the filter as it was before this document.
        let duplicate_paragraphs: Vec<bool> = paras
            .iter()
            .map(|g| {
                let seen = g.iter().filter(|&&h| self.filter.contains(h)).count();
                seen as f64 / g.len() as f64 >= self.params.para_dup_threshold
            })
            .collect();
        let dup = duplicate_paragraphs.iter().filter(|&&d| d).count();
        let keep = (dup as f64 / paras.len() as f64) < self.params.doc_dup_threshold;
        for (g, &is_dup) in paras.iter().zip(&duplicate_paragraphs) {
            let insert = keep || (self.params.policy == BloomPolicy::OldBoth && !is_dup);
            if insert {
                for &h in g {
                    self.filter.insert(h);
                }
            }
        }
        BloomDecision { keep, duplicate_paragraphs }
    }
}

pub fn paragraph_grams(text: &str, n: usize) -> Vec<Vec<u64>> {
    paragraphs(text)
        .into_iter()
        .map(|lines| {
            let tokens: Vec<&str> = lines.iter().flat_map(|l| l.split_whitespace()).collect();
            ngrams(&tokens, n)
        })
        .filter(|g| !g.is_empty())
        .collect()
}

pub fn dedup_doc_bloom(doc: &Document, dedup: &mut BloomDedup) -> BloomDecision {
    dedup.process(&doc.text)
}

/// Keeps the first occurrence of every full text.
#[derive(Debug, Clone, Default)]
pub struct ExactDedup {
    seen: FxHashSet<u128>,
}

impl ExactDedup {
    pub fn content_hash(text: &str) -> u128 {
        hash128(text.as_bytes())
    }

    /// True when the hash is new (the document is kept).
    pub fn check_hash(&mut self, h: u128) -> bool {
        self.seen.insert(h)
    }

    pub fn check(&mut self, text: &str) -> bool {
        self.check_hash(Self::content_hash(text))
    }
}

pub fn exact_dedup(docs: Vec<Document>) -> Vec<Document> {
    let mut d = ExactDedup::default();
    docs.into_iter().filter(|doc| d.check(&doc.text)).collect()
}

/// Removes a document when any of its n-grams occurs in an earlier kept one.
#[derive(Debug, Clone)]
pub struct SubstringDedup {
    n: usize,
    seen: FxHashSet<u64>,
}

impl SubstringDedup {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("substring n-gram size must be at least 1"));
        }
        Ok(SubstringDedup {
            n,
            seen: FxHashSet::default(),
        })
    }

    pub fn grams(&self, text: &str) -> Vec<u64> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        ngrams(&tokens, self.n)
    }

    pub fn check_grams(&mut self, grams: &[u64]) -> bool {
        if grams.iter().any(|g| self.seen.contains(g)) {
            return false;
        }
        self.seen.extend(grams.iter().copied());
        true
    }

    pub fn check(&mut self, text: &str) -> bool {
        let g = self.grams(text);
        self.check_grams(&g)
    }
}

pub fn substring_dedup(docs: Vec<Document>, n: usize) -> Result<Vec<Document>> {
    let mut d = SubstringDedup::new(n)?;
    Ok(docs.into_iter().filter(|doc| d.check(&doc.text)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupMethod {
    BloomBoth,
    BloomOldBoth,
    Exact,
    ExactSubstring,
    Minhash,
    ExactMinhash,
    ExactSubstringMinhash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Bloom(BloomPolicy),
    Exact,
    Substring,
    Minhash,
}

impl DedupMethod {
    pub const ALL: [DedupMethod; 7] = [
        DedupMethod::BloomBoth,
        DedupMethod::BloomOldBoth,
        DedupMethod::Exact,
        DedupMethod::ExactSubstring,
        DedupMethod::Minhash,
        DedupMethod::ExactMinhash,
        DedupMethod::ExactSubstringMinhash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DedupMethod::BloomBoth => "bloom-both",
            DedupMethod::BloomOldBoth => "bloom-old-both",
            DedupMethod::Exact => "exact",
            DedupMethod::ExactSubstring => "exact-substring",
            DedupMethod::Minhash => "minhash",
            DedupMethod::ExactMinhash => "exact-minhash",
            DedupMethod::ExactSubstringMinhash => "exact-substring-minhash",
        }
    }

    /// Stages applied left to right as named.
    pub fn stages(self) -> Vec<StageKind> {
        use StageKind::*;
        match self {
            DedupMethod::BloomBoth => vec![Bloom(BloomPolicy::Both)],
            DedupMethod::BloomOldBoth => vec![Bloom(BloomPolicy::OldBoth)],
            DedupMethod::Exact => vec![Exact],
            DedupMethod::ExactSubstring => vec![Exact, Substring],
            DedupMethod::Minhash => vec![Minhash],
            DedupMethod::ExactMinhash => vec![Exact, Minhash],
            DedupMethod::ExactSubstringMinhash => vec![Exact, Substring, Minhash],
        }
    }
}

impl fmt::Display for DedupMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DedupMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DedupMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = DedupMethod::ALL.iter().map(|m| m.as_str()).collect();
                Error::Config(format!("unknown dedup method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupConfig {
    pub method: DedupMethod,
    pub ngram: usize,
    pub expected_items: u64,
    pub fpr: f64,
    pub para_dup_threshold: f64,
    pub doc_dup_threshold: f64,
    pub num_perm: usize,
    pub bands: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        let b = BloomParams::default();
        DedupConfig {
            method: DedupMethod::BloomOldBoth,
            ngram: DEFAULT_NGRAM,
            expected_items: b.expected_items,
            fpr: b.target_fpr,
            para_dup_threshold: b.para_dup_threshold,
            doc_dup_threshold: b.doc_dup_threshold,
            num_perm: 256,
            bands: 16,
            threshold: 0.8,
            seed: 0,
        }
    }
}

impl DedupConfig {
    pub fn bloom_params(&self, policy: BloomPolicy) -> BloomParams {
        BloomParams {
            expected_items: self.expected_items,
            target_fpr: self.fpr,
            ngram_size: self.ngram,
            para_dup_threshold: self.para_dup_threshold,
            doc_dup_threshold: self.doc_dup_threshold,
            policy,
        }
    }

    pub fn rows(&self) -> usize {
        if self.bands == 0 {
            0
        } else {
            self.num_perm / self.bands
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bloom_params(BloomPolicy::Both).validate()?;
        if self.num_perm == 0 || self.bands == 0 || self.num_perm % self.bands != 0 {
            return Err(Error::invalid(format!(
                "bands ({}) must divide num_perm ({})",
                self.bands, self.num_perm
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("minhash threshold must be in [0, 1]"));
        }
        Ok(())
    }

    /// Reads keys from a config section (without consuming unrelated keys).
    pub fn read_section(section: &mut Section) -> Result<Self> {
        let mut c = DedupConfig::default();
        if let Some(m) = section.take("method") {
            c.method = m.parse()?;
        }
        section.set("ngram", &mut c.ngram)?;
        section.set("expected_items", &mut c.expected_items)?;
        section.set("fpr", &mut c.fpr)?;
        section.set("para_dup_threshold", &mut c.para_dup_threshold)?;
        section.set("doc_dup_threshold", &mut c.doc_dup_threshold)?;
        section.set("num_perm", &mut c.num_perm)?;
        section.set("bands", &mut c.bands)?;
        section.set("threshold", &mut c.threshold)?;
        section.set("seed", &mut c.seed)?;
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }
}

enum Stage {
    Bloom(BloomDedup),
    Exact(ExactDedup),
    Substring(SubstringDedup),
    Minhash(MinHasher, LshIndex),
}

impl Stage {
    fn label(&self) -> (&'static str, String) {
        match self {
            Stage::Bloom(b) => (
                match b.params.policy {
                    BloomPolicy::Both => "Bloom dedup (both)",
                    BloomPolicy::OldBoth => "Bloom dedup (old_both)",
                },
                format!(
                    "n={}, para>={}, doc>={}",
                    b.params.ngram_size, b.params.para_dup_threshold, b.params.doc_dup_threshold
                ),
            ),
            Stage::Exact(_) => ("Exact dedup", "NIL".into()),
            Stage::Substring(s) => ("Substring dedup", format!("n={}", s.n)),
            Stage::Minhash(h, idx) => (
                "MinHash dedup",
                format!("J>={} ({}x{})", idx.threshold(), idx.bands(), h.num_perm() / idx.bands()),
            ),
        }
    }
}

enum Features {
    Bloom(Vec<Vec<u64>>),
    Exact(u128),
    Substring(Vec<u64>),
    Minhash(MinHashSignature),
}

/// Stateful deduplicator for one run; state carries across batches.
pub struct Deduplicator {
    method: DedupMethod,
    ngram: usize,
    stages: Vec<Stage>,
}

const STATE_MAGIC: &[u8; 4] = b"WCDS";
const STATE_VERSION: u32 = 1;

impl Deduplicator {
    pub fn new(cfg: &DedupConfig) -> Result<Self> {
        cfg.validate()?;
        let stages = cfg
            .method
            .stages()
            .into_iter()
            .map(|kind| {
                Ok(match kind {
                    StageKind::Bloom(policy) => Stage::Bloom(BloomDedup::new(cfg.bloom_params(policy), cfg.seed)?),
                    StageKind::Exact => Stage::Exact(ExactDedup::default()),
                    StageKind::Substring => Stage::Substring(SubstringDedup::new(cfg.ngram)?),
                    StageKind::Minhash => Stage::Minhash(
                        MinHasher::new(cfg.num_perm, cfg.seed)?,
                        LshIndex::new(cfg.num_perm, cfg.bands, cfg.rows(), cfg.threshold)?,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Deduplicator {
            method: cfg.method,
            ngram: cfg.ngram,
            stages,
        })
    }

    pub fn method(&self) -> DedupMethod {
        self.method
    }

    /// Empty stats with one row per stage.
    pub fn new_stats(&self) -> ChainStats {
        ChainStats::with_rows(self.stages.iter().map(|s| s.label()))
    }

    fn features(stage: &Stage, text: &str, ngram: usize) -> Features {
        match stage {
            Stage::Bloom(b) => Features::Bloom(b.paragraph_grams(text)),
            Stage::Exact(_) => Features::Exact(ExactDedup::content_hash(text)),
            Stage::Substring(s) => Features::Substring(s.grams(text)),
            Stage::Minhash(h, _) => {
                let tokens: Vec<&str> = text.split_whitespace().collect();
                Features::Minhash(h.signature(&tokens, ngram))
            }
        }
    }

    /// Runs every stage over `docs` in order. With `parallel`, per-document
    /// hashing runs on the rayon pool; decisions are identical either way.
    pub fn process(&mut self, docs: Vec<Document>, parallel: bool) -> Result<(Vec<Document>, ChainStats)> {
        let mut stats = self.new_stats();
        for d in &docs {
            stats.record_input(d.token_count);
        }
        let ngram = self.ngram;
        let mut current = docs;
        for (i, stage) in self.stages.iter_mut().enumerate() {
            let feats: Vec<Features> = if parallel {
                current.par_iter().map(|d| Self::features(stage, &d.text, ngram)).collect()
            } else {
                current.iter().map(|d| Self::features(stage, &d.text, ngram)).collect()
            };
            let mut kept = Vec::with_capacity(current.len());
            for (doc, f) in current.into_iter().zip(feats) {
                let keep = match (&mut *stage, f) {
                    (Stage::Bloom(b), Features::Bloom(g)) => b.process_grams(&g).keep,
                    (Stage::Exact(e), Features::Exact(h)) => e.check_hash(h),
                    (Stage::Substring(s), Features::Substring(g)) => s.check_grams(&g),
                    (Stage::Minhash(_, idx), Features::Minhash(sig)) => !idx.insert(sig)?,
                    _ => unreachable!("features computed for a different stage"),
                };
                if keep {
                    kept.push(doc);
                } else {
                    stats.record_removal(i, doc.token_count);
                }
            }
            current = kept;
        }
        Ok((current, stats))
    }

    /// Serializes all dedup state so a later batch can continue the run.
    pub fn write_state(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(STATE_MAGIC)?;
        w.write_all(&STATE_VERSION.to_le_bytes())?;
        w.write_all(&(self.stages.len() as u32).to_le_bytes())?;
        for stage in &self.stages {
            match stage {
                Stage::Bloom(b) => {
                    w.write_all(&[0])?;
                    b.filter.write_to(w)?;
                }
                Stage::Exact(e) => {
                    w.write_all(&[1])?;
                    let mut v: Vec<u128> = e.seen.iter().copied().collect();
                    v.sort_unstable();
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    for h in v {
                        w.write_all(&h.to_le_bytes())?;
                    }
                }
                Stage::Substring(s) => {
                    w.write_all(&[2])?;
                    let mut v: Vec<u64> = s.seen.iter().copied().collect();
                    v.sort_unstable();
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    for h in v {
                        w.write_all(&h.to_le_bytes())?;
                    }
                }
                Stage::Minhash(_, idx) => {
                    w.write_all(&[3])?;
                    let sigs = idx.signatures();
                    w.write_all(&(sigs.len() as u64).to_le_bytes())?;
                    for s in sigs {
                        for v in &s.values {
                            w.write_all(&v.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Restores state written by [`Deduplicator::write_state`] for the same config.
    pub fn read_state(&mut self, r: &mut impl Read) -> Result<()> {
        let bad = |m: &str| Error::Format(format!("dedup state: {m}"));
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| bad("truncated"))?;
        if &b4 != STATE_MAGIC {
            return Err(bad("bad magic"));
        }
        r.read_exact(&mut b4).map_err(|_| bad("truncated"))?;
        if u32::from_le_bytes(b4) != STATE_VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut b4).map_err(|_| bad("truncated"))?;
        if u32::from_le_bytes(b4) as usize != self.stages.len() {
            return Err(bad("stage count does not match the configured method"));
        }
        let read_u64 = |r: &mut dyn Read| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(b))
        };
        for stage in &mut self.stages {
            let mut tag = [0u8; 1];
            r.read_exact(&mut tag).map_err(|_| bad("truncated"))?;
            match (stage, tag[0]) {
                (Stage::Bloom(b), 0) => {
                    let f = BloomFilter::read_from(r)?;
                    if f.m() != b.filter.m() || f.k() != b.filter.k() || f.seed() != b.filter.seed() {
                        return Err(bad("bloom geometry does not match the configuration"));
                    }
                    b.filter = f;
                }
                (Stage::Exact(e), 1) => {
                    let n = read_u64(r)?;
                    e.seen.clear();
                    for _ in 0..n {
                        let mut b = [0u8; 16];
                        r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
                        e.seen.insert(u128::from_le_bytes(b));
                    }
                }
                (Stage::Substring(s), 2) => {
                    let n = read_u64(r)?;
                    s.seen.clear();
                    for _ in 0..n {
                        s.seen.insert(read_u64(r)?);
                    }
                }
                (Stage::Minhash(h, idx), 3) => {
                    let n = read_u64(r)?;
                    idx.clear();
                    for _ in 0..n {
                        let values = (0..h.num_perm()).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
                        idx.insert(MinHashSignature {
                            values,
                            num_perm: h.num_perm(),
                            seed: h.seed(),
                        })?;
                    }
                }
                _ => return Err(bad("stage kinds do not match the configured method")),
            }
        }
        Ok(())
    }

    pub fn save_state(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_state(&mut w)?;
        w.flush().map_err(|e| Error::io_at(path, e))
    }

    pub fn load_state(&mut self, path: &Path) -> Result<()> {
        let file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        self.read_state(&mut std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Source;
    use crate::synth::{ProseGen, Register};

    fn words(n: usize, tag: &str) -> Vec<String> {
        (0..n).map(|i| format!("{tag}{i}")).collect()
    }

    #[test]
    fn ngram_counts() {
        let t = words(15, "w");
        let toks: Vec<&str> = t.iter().map(String::as_str).collect();
        assert_eq!(ngrams(&toks[..13], 13).len(), 1);
        assert_eq!(ngrams(&toks, 13).len(), 3);
        assert_eq!(ngrams(&toks[..5], 13).len(), 1);
        assert!(ngrams(&[], 13).is_empty());
        assert_eq!(ngrams(&toks, 13), ngrams(&toks, 13));
    }

    fn para(g: &mut ProseGen) -> String {
        g.paragraph(Register::English, 3)
    }

    #[test]
    fn three_document_policy_trace() {
        let mut g = ProseGen::new(11);
        let (p1, p2, u, v, w) = (para(&mut g), para(&mut g), para(&mut g), para(&mut g), para(&mut g));
        let doc1 = format!("{p1}\n\n{p2}");
        let doc2 = format!("{p1}\n\n{u}");
        let doc3 = format!("{u}\n\n{v}\n\n{w}");
        let run = |policy| {
            let params = BloomParams {
                expected_items: 10_000,
                target_fpr: 1e-9,
                policy,
                ..BloomParams::default()
            };
            let mut d = BloomDedup::new(params, 5).unwrap();
            [&doc1, &doc2, &doc3].map(|t| d.process(t))
        };
        let both = run(BloomPolicy::Both);
        let old = run(BloomPolicy::OldBoth);
        assert!(both[0].keep && old[0].keep);
        assert!(!both[1].keep && !old[1].keep);
        assert_eq!(both[1].duplicate_paragraphs, vec![true, false]);
        assert!(both[2].keep);
        assert_eq!(both[2].duplicate_paragraphs, vec![false, false, false]);
        assert!(!old[2].keep);
        assert_eq!(old[2].duplicate_paragraphs, vec![true, false, false]);
    }

    #[test]
    fn exact_and_substring() {
        let a = "one two three four five six seven eight nine ten eleven twelve thirteen fourteen";
        let b = "a completely different text about apples and pears in the summer time garden";
        let docs = |ts: &[&str]| ts.iter().enumerate().map(|(i, t)| Document::new(i.to_string(), "u", *t, Source::Wet)).collect::<Vec<_>>();
        assert_eq!(exact_dedup(docs(&[a, b])).len(), 2);
        assert_eq!(exact_dedup(docs(&[a, a])).len(), 1);
        assert_eq!(exact_dedup(docs(&[a, &format!("{a}!")])).len(), 2);

        assert_eq!(substring_dedup(docs(&[a, b]), 13).unwrap().len(), 2);
        let quote = format!("intro words then {} and more", &a[..a.rfind(' ').unwrap()]);
        let kept = substring_dedup(docs(&[a, &quote]), 13).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(substring_dedup(docs(&["short text", "short text"]), 13).unwrap().len(), 1);
    }

    #[test]
    fn method_names_round_trip() {
        for m in DedupMethod::ALL {
            assert_eq!(m.as_str().parse::<DedupMethod>().unwrap(), m);
        }
        assert!("bloom".parse::<DedupMethod>().is_err());
        assert_eq!(
            DedupMethod::ExactSubstringMinhash.stages(),
            vec![StageKind::Exact, StageKind::Substring, StageKind::Minhash]
        );
    }

    fn corpus() -> Vec<Document> {
        let mut g = ProseGen::new(2);
        let mut docs: Vec<Document> = (0..30)
            .map(|i| Document::new(format!("d{i}"), "https://x.example/", g.document(Register::English, 150), Source::Wet))
            .collect();
        let copies: Vec<Document> = docs.iter().step_by(3).cloned().collect();
        docs.extend(copies);
        docs
    }

    #[test]
    fn parallel_matches_sequential_and_is_idempotent() {
        for method in DedupMethod::ALL {
            let cfg = DedupConfig {
                method,
                expected_items: 50_000,
                fpr: 1e-6,
                ..DedupConfig::default()
            };
            let (seq, s1) = Deduplicator::new(&cfg).unwrap().process(corpus(), false).unwrap();
            let (par, s2) = Deduplicator::new(&cfg).unwrap().process(corpus(), true).unwrap();
            assert_eq!(seq, par, "{method}");
            assert_eq!(s1, s2);
            assert_eq!(seq.len(), 30, "{method}");
            assert_eq!(s1.input_tokens, s1.surviving_tokens() + s1.removed_tokens());
            let (again, s3) = Deduplicator::new(&cfg).unwrap().process(seq.clone(), false).unwrap();
            assert_eq!(again, seq, "{method} not idempotent");
            assert_eq!(s3.removed_docs(), 0);
        }
    }

    #[test]
    fn state_round_trip_continues_a_run() {
        for method in DedupMethod::ALL {
            let cfg = DedupConfig {
                method,
                expected_items: 50_000,
                fpr: 1e-6,
                ..DedupConfig::default()
            };
            let docs = corpus();
            let (whole, _) = Deduplicator::new(&cfg).unwrap().process(docs.clone(), false).unwrap();
            let (a, b) = docs.split_at(25);
            let mut first = Deduplicator::new(&cfg).unwrap();
            let (mut out, _) = first.process(a.to_vec(), false).unwrap();
            let mut state = Vec::new();
            first.write_state(&mut state).unwrap();
            let mut second = Deduplicator::new(&cfg).unwrap();
            second.read_state(&mut state.as_slice()).unwrap();
            out.extend(second.process(b.to_vec(), false).unwrap().0);
            assert_eq!(out, whole, "{method}");
        }
    }
}
