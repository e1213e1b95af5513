//! Benchmark-targeted ranking: embed documents and benchmark examples, score
//! each document by its best cosine match, take the top fraction as positives
//! and a seeded sample of the rest as negatives.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::format_labeled_line;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::hash::{hash_bytes, mix64};

pub const POSITIVE_LABEL: &str = "positive";
pub const NEGATIVE_LABEL: &str = "negative";

/// A source of raw (unnormalized) embedding vectors.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone)]
pub struct Embeddings {
    /// Unit-norm vectors, one per input text.
    pub vectors: Vec<Vec<f64>>,
    /// Inputs that were empty (or embedded to zero) and got the first basis vector.
    pub substituted: Vec<usize>,
}

pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
        true
    } else {
        false
    }
}

/// Embeds and L2-normalizes; empty texts map to a fixed basis vector.
pub fn embed(provider: &dyn Embedder, texts: &[&str]) -> Result<Embeddings> {
    let nonempty: Vec<usize> = (0..texts.len()).filter(|&i| !texts[i].trim().is_empty()).collect();
    let batch: Vec<&str> = nonempty.iter().map(|&i| texts[i]).collect();
    let raw = if batch.is_empty() { Vec::new() } else { provider.embed_raw(&batch)? };
    if raw.len() != batch.len() {
        return Err(Error::Provider(format!("{} returned {} vectors for {} texts", provider.name(), raw.len(), batch.len())));
    }
    let dim = raw.first().map(Vec::len);
    if dim == Some(0) {
        return Err(Error::Provider("provider returned zero-length vectors".into()));
    }
    if raw.iter().any(|v| Some(v.len()) != dim) {
        return Err(Error::Provider("provider returned vectors of differing dimension".into()));
    }
    let dim = dim.unwrap_or(1);
    let basis = {
        let mut b = vec![0.0; dim];
        b[0] = 1.0;
        b
    };
    let mut vectors = vec![Vec::new(); texts.len()];
    let mut substituted = Vec::new();
    let mut filled = vec![false; texts.len()];
    for (i, mut v) in nonempty.into_iter().zip(raw) {
        if normalize(&mut v) {
            vectors[i] = v;
            filled[i] = true;
        }
    }
    for (i, ok) in filled.into_iter().enumerate() {
        if !ok {
            vectors[i] = basis.clone();
            substituted.push(i);
        }
    }
    if !substituted.is_empty() {
        log::warn!("{} empty text(s) embedded as a fixed basis vector", substituted.len());
    }
    Ok(Embeddings { vectors, substituted })
}

/// Deterministic, non-semantic embedder: a seeded ±1 random projection of
/// character 3-gram counts.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256, seed: 0 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        Ok(HashEmbedder { dim, seed })
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        let mut v = vec![0.0f64; self.dim];
        let mut buf = [0u8; 12];
        for w in chars.windows(3) {
            let mut len = 0;
            for c in w {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let g = hash_bytes(&buf[..len], self.seed);
            let mut bits = 0u64;
            for (j, x) in v.iter_mut().enumerate() {
                if j % 64 == 0 {
                    bits = mix64(g ^ (j as u64 / 64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                }
                *x += if bits & 1 == 1 { 1.0 } else { -1.0 };
                bits >>= 1;
            }
        }
        v
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "fallback"
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.par_iter().map(|t| self.embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for an HTTP embedding service: `POST {"texts": [...]}` answered by
/// `{"embeddings": [[...], ...]}`.
pub struct RemoteEmbedder {
    endpoint: String,
    client: reqwest::blocking::Client,
    pub batch_size: usize,
    pub retries: usize,
    pub backoff: Duration,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str) -> Result<Self> {
        Self::with_timeout(endpoint, Duration::from_secs(60))
    }

    pub fn with_timeout(endpoint: &str, timeout: Duration) -> Result<Self> {
        url::Url::parse(endpoint).map_err(|e| Error::invalid(format!("bad endpoint `{endpoint}`: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Provider(format!("cannot build HTTP client: {e}")))?;
        Ok(RemoteEmbedder {
            endpoint: endpoint.to_string(),
            client,
            batch_size: 64,
            retries: 3,
            backoff: Duration::from_millis(500),
        })
    }

    fn request(&self, texts: &[&str]) -> std::result::Result<Vec<Vec<f64>>, String> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let body: EmbedResponse = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        if body.embeddings.len() != texts.len() {
            return Err(format!("got {} embeddings for {} texts", body.embeddings.len(), texts.len()));
        }
        Ok(body.embeddings)
    }

    fn request_with_retry(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut delay = self.backoff;
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                log::warn!("embedding request failed ({last}); retry {attempt}/{} in {delay:?}", self.retries);
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.request(texts) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
        }
        Err(Error::Provider(format!(
            "{} unreachable after {} attempts: {last}",
            self.endpoint,
            self.retries + 1
        )))
    }
}

impl Embedder for RemoteEmbedder {
    fn name(&self) -> &str {
        "remote"
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for chunk in texts.chunks(self.batch_size.max(1)) {
            let vecs = self.request_with_retry(chunk)?;
            for v in &vecs {
                match dim {
                    None => dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(Error::Provider(format!("embedding dimension changed from {d} to {}", v.len())))
                    }
                    _ => {}
                }
            }
            out.extend(vecs);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
    pub best_benchmark: String,
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Max cosine of every document against every benchmark vector; the first
/// benchmark reaching the maximum is recorded.
pub fn betr_scores(doc_ids: &[String], doc_vecs: &[Vec<f64>], benchmark: &[(String, Vec<f64>)]) -> Result<Vec<ScoredDoc>> {
    if benchmark.is_empty() {
        return Err(Error::invalid("benchmark set is empty"));
    }
    if doc_ids.len() != doc_vecs.len() {
        return Err(Error::invalid("document ids and vectors differ in length"));
    }
    let dim = benchmark[0].1.len();
    if benchmark.iter().any(|(_, v)| v.len() != dim) || doc_vecs.iter().any(|v| v.len() != dim) {
        return Err(Error::invalid("document and benchmark vectors differ in dimension"));
    }
    let bench_norms: Vec<f64> = benchmark.iter().map(|(_, v)| norm(v)).collect();
    Ok(doc_ids
        .par_iter()
        .zip(doc_vecs.par_iter())
        .map(|(id, v)| {
            let nv = norm(v);
            let mut best = (f64::NEG_INFINITY, 0);
            for (j, ((_, b), &nb)) in benchmark.iter().zip(&bench_norms).enumerate() {
                let c = cosine(v, nv, b, nb);
                if c > best.0 {
                    best = (c, j);
                }
            }
            ScoredDoc {
                doc_id: id.clone(),
                score: best.0,
                best_benchmark: benchmark[best.1].0.clone(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetrConfig {
    pub top_frac: f64,
    pub negative_ratio: f64,
    pub seed: u64,
    pub benchmark_paths: Vec<PathBuf>,
}

impl Default for BetrConfig {
    fn default() -> Self {
        BetrConfig {
            top_frac: 0.10,
            negative_ratio: 1.0,
            seed: 0,
            benchmark_paths: Vec::new(),
        }
    }
}

impl BetrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_frac > 0.0 && self.top_frac < 1.0) {
            return Err(Error::invalid(format!("top_frac must be in (0, 1), got {}", self.top_frac)));
        }
        if !(self.negative_ratio > 0.0) {
            return Err(Error::invalid("negative_ratio must be positive"));
        }
        Ok(())
    }
}

/// `⌈x⌉` that ignores floating-point fuzz just above an integer.
fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// Indices into the scored list, best first.
    pub positives: Vec<usize>,
    /// Indices into the scored list, in sampling order.
    pub negatives: Vec<usize>,
}

/// Top `⌈top_frac·N⌉` documents by (score desc, id asc) plus a seeded sample
/// of the remainder.
pub fn select_training_set(scored: &[ScoredDoc], cfg: &BetrConfig) -> Result<TrainingSet> {
    cfg.validate()?;
    let n = scored.len();
    if n < 2 {
        return Err(Error::invalid("need at least two scored documents"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scored[b]
            .score
            .total_cmp(&scored[a].score)
            .then_with(|| scored[a].doc_id.cmp(&scored[b].doc_id))
    });
    let k = ceil_count(cfg.top_frac * n as f64).clamp(1, n - 1);
    let positives = order[..k].to_vec();
    let mut remainder = order[k..].to_vec();
    remainder.sort_by(|&a, &b| scored[a].doc_id.cmp(&scored[b].doc_id).then(a.cmp(&b)));
    let wanted = ceil_count(cfg.negative_ratio * k as f64);
    let take = if wanted > remainder.len() {
        log::warn!(
            "only {} documents remain for {} requested negatives; using all of them",
            remainder.len(),
            wanted
        );
        remainder.len()
    } else {
        wanted
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let negatives = sample(&mut rng, remainder.len(), take).into_iter().map(|i| remainder[i]).collect();
    Ok(TrainingSet { positives, negatives })
}

/// fastText-format lines for a selection, positives first.
pub fn training_lines(set: &TrainingSet, docs: &[Document]) -> Vec<String> {
    set.positives
        .iter()
        .map(|&i| format_labeled_line(POSITIVE_LABEL, &docs[i].text))
        .chain(set.negatives.iter().map(|&i| format_labeled_line(NEGATIVE_LABEL, &docs[i].text)))
        .collect()
}

/// Reads benchmark example files; each file stem names its benchmark and
/// every non-empty line is one example.
pub fn load_benchmarks(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for path in paths {
        let name = benchmark_name(path)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        out.extend(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(|l| (name.clone(), l.to_string())),
        );
    }
    if out.is_empty() {
        return Err(Error::Data("no benchmark examples found".into()));
    }
    Ok(out)
}

fn benchmark_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("cannot derive a benchmark name from {}", path.display())))
}

/// Scores `docs` against benchmark examples with `provider` and selects a
/// training set.
pub fn build_training_set(
    docs: &[Document],
    benchmarks: &[(String, String)],
    provider: &dyn Embedder,
    cfg: &BetrConfig,
) -> Result<(Vec<ScoredDoc>, TrainingSet)> {
    let bench_texts: Vec<&str> = benchmarks.iter().map(|(_, t)| t.as_str()).collect();
    let bench = embed(provider, &bench_texts)?;
    let doc_texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let dv = embed(provider, &doc_texts)?;
    let named: Vec<(String, Vec<f64>)> = benchmarks.iter().map(|(n, _)| n.clone()).zip(bench.vectors).collect();
    let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
    let scored = betr_scores(&ids, &dv.vectors, &named)?;
    let set = select_training_set(&scored, cfg)?;
    Ok((scored, set))
}
