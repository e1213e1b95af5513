//! Single-threaded throughput probes for the filter chain and Bloom dedup.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dedup::bloom::BloomFilter;
use crate::dedup::{BloomDedup, BloomParams, DEFAULT_NGRAM};
use crate::document::{read_jsonl_from, write_jsonl_to, Document, Source};
use crate::error::Result;
use crate::filters::{FilterChain, FilterConfig, StopwordLid, UrlBlocklist};
use crate::synth::{ProseGen, Register};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub filter_bytes: u64,
    pub filter_docs: usize,
    pub filter_seconds: f64,
    pub filter_mb_per_s: f64,
    pub bloom_probes: u64,
    pub bloom_seconds: f64,
    pub bloom_probes_per_s: f64,
    pub raw_probes: u64,
    pub raw_probes_per_s: f64,
}

/// Synthetic JSONL of roughly `bytes` bytes: mostly clean prose, some spam.
pub fn synthetic_jsonl(bytes: usize, seed: u64) -> Result<Vec<u8>> {
    let mut g = ProseGen::new(seed);
    let mut docs = Vec::new();
    let mut size = 0;
    while size < bytes {
        let i = docs.len();
        let words = g.rng().gen_range(150..900);
        let text = if i % 10 == 9 {
            vec![g.sentence(Register::English); 20].join("\n")
        } else {
            g.document(Register::English, words)
        };
        size += text.len() + 100;
        docs.push(Document::new(format!("bench-{i:07}"), format!("https://bench{}.example/{i}", i % 97), text, Source::Wet));
    }
    let mut out = Vec::with_capacity(size);
    write_jsonl_to(&mut out, &docs)?;
    Ok(out)
}

/// Parses and filters `jsonl` on one thread; returns (docs, seconds).
pub fn time_filter(jsonl: &[u8]) -> Result<(usize, f64)> {
    let chain = FilterChain::new(FilterConfig::default(), UrlBlocklist::default(), Arc::new(StopwordLid::default()))?;
    let start = Instant::now();
    let docs = read_jsonl_from(jsonl)?;
    let n = docs.len();
    let (kept, stats) = chain.filter_documents(docs, false);
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box((kept, stats));
    Ok((n, secs))
}

/// Bloom dedup (old_both) over `docs` on one thread, counting every n-gram
/// probed; returns (probes, seconds). Hashing is included in the time.
pub fn time_bloom_dedup(docs: &[Document], seed: u64) -> Result<(u64, f64)> {
    let grams: u64 = docs.iter().map(|d| d.token_count.saturating_sub(DEFAULT_NGRAM as u64 - 1).max(1)).sum();
    let params = BloomParams {
        expected_items: grams.max(1000),
        target_fpr: 0.01,
        ..BloomParams::default()
    };
    let mut dedup = BloomDedup::new(params, seed)?;
    let start = Instant::now();
    let mut probes = 0u64;
    for d in docs {
        let paras = dedup.paragraph_grams(&d.text);
        probes += paras.iter().map(|p| p.len() as u64).sum::<u64>();
        std::hint::black_box(dedup.process_grams(&paras));
    }
    Ok((probes, start.elapsed().as_secs_f64()))
}

/// Raw membership queries against a filter sized for `items` at 1% FPR.
pub fn time_bloom_probes(items: u64, probes: u64, seed: u64) -> Result<f64> {
    let mut f = BloomFilter::with_capacity(items, 0.01, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..items / 2 {
        f.insert(rng.gen());
    }
    let keys: Vec<u64> = (0..probes).map(|_| rng.gen()).collect();
    let start = Instant::now();
    let mut hits = 0u64;
    for &k in &keys {
        hits += f.contains(k) as u64;
    }
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(hits);
    Ok(secs)
}

pub fn run_bench(filter_mb: usize, bloom_probes: u64) -> Result<BenchReport> {
    let jsonl = synthetic_jsonl(filter_mb << 20, 1)?;
    let (docs, fs) = time_filter(&jsonl)?;
    let docs_for_bloom = read_jsonl_from(&jsonl[..])?;
    let (probes, bs) = time_bloom_dedup(&docs_for_bloom, 2)?;
    let raw = time_bloom_probes(10_000_000, bloom_probes, 3)?;
    Ok(BenchReport {
        filter_bytes: jsonl.len() as u64,
        filter_docs: docs,
        filter_seconds: fs,
        filter_mb_per_s: jsonl.len() as f64 / 1e6 / fs,
        bloom_probes: probes,
        bloom_seconds: bs,
        bloom_probes_per_s: probes as f64 / bs,
        raw_probes: bloom_probes,
        raw_probes_per_s: bloom_probes as f64 / raw,
    })
}
