//! Supervised fastText-style linear classifier: word and hashed word-bigram
//! features, averaged embeddings, softmax output, single-threaded SGD.
//!
//! Bucket rows start at zero and are stored sparsely, so an untouched bucket
//! contributes nothing and a model with two million buckets stays small on
//! disk and in memory.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use serde_json::Value;

use crate::accounting::ChainStats;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::filters::LanguageIdentifier;

const MAGIC: &[u8; 4] = b"WCFT";
const VERSION: u32 = 1;
pub const LABEL_PREFIX: &str = "__label__";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub lr: f64,
    pub dim: usize,
    /// Kept for configuration parity; the supervised objective has no window.
    pub ws: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub word_ngrams: usize,
    pub loss: Loss,
    pub seed: u64,
    pub buckets: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lr: 0.1,
            dim: 100,
            ws: 5,
            epochs: 5,
            min_count: 1,
            word_ngrams: 2,
            loss: Loss::Softmax,
            seed: 42,
            buckets: 2_097_152,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.dim == 0 || self.epochs == 0 || self.word_ngrams == 0 || self.min_count == 0 {
            return Err(Error::invalid("need lr > 0, dim >= 1, epochs >= 1, word_ngrams >= 1, min_count >= 1"));
        }
        if self.word_ngrams > 1 && self.buckets == 0 {
            return Err(Error::invalid("word n-grams need at least one bucket"));
        }
        if self.buckets > u32::MAX as usize || self.dim > u32::MAX as usize {
            return Err(Error::invalid("dim and buckets must fit in 32 bits"));
        }
        Ok(())
    }
}

/// The 32-bit FNV-1a variant fastText uses for tokens (bytes sign-extended).
pub fn fnv_hash(s: &str) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for &b in s.as_bytes() {
        h ^= b as i8 as u32;
        h = h.wrapping_mul(16_777_619);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub prob: f64,
    /// Probability per label, in label order.
    pub probs: Vec<f64>,
    /// Set when the text produced no features and the distribution is uniform.
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub examples: usize,
    pub skipped: usize,
    /// Mean cross-entropy per epoch, measured during the pass.
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastTextModel {
    params: TrainParams,
    labels: Vec<String>,
    words: Vec<String>,
    vocab: FxHashMap<String, u32>,
    word_rows: Vec<f32>,
    bucket_rows: FxHashMap<u32, Vec<f32>>,
    output: Vec<f32>,
}

fn tokens_lower(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

impl FastTextModel {
    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.vocab.get(word).copied()
    }

    /// Feature ids: in-vocabulary word ids, then hashed n-gram ids offset by
    /// the vocabulary size. N-grams run over all tokens, known or not.
    pub fn featurize(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut hashes: Vec<u32> = Vec::new();
        for tok in tokens_lower(text) {
            if let Some(&id) = self.vocab.get(&tok) {
                ids.push(id);
            }
            hashes.push(fnv_hash(&tok));
        }
        let nwords = self.words.len() as u32;
        let buckets = self.params.buckets as u64;
        if self.params.word_ngrams > 1 {
            for i in 0..hashes.len() {
                let mut h = hashes[i] as u64;
                for j in i + 1..hashes.len().min(i + self.params.word_ngrams) {
                    h = h.wrapping_mul(116_049_371).wrapping_add(hashes[j] as u64);
                    ids.push(nwords + (h % buckets) as u32);
                }
            }
        }
        ids
    }

    fn row(&self, id: u32) -> Option<&[f32]> {
        let dim = self.params.dim;
        let nwords = self.words.len() as u32;
        if id < nwords {
            let s = id as usize * dim;
            Some(&self.word_rows[s..s + dim])
        } else {
            self.bucket_rows.get(&(id - nwords)).map(Vec::as_slice)
        }
    }

    fn hidden(&self, ids: &[u32], out: &mut [f32]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &id in ids {
            if let Some(row) = self.row(id) {
                for (o, r) in out.iter_mut().zip(row) {
                    *o += r;
                }
            }
        }
        let inv = 1.0 / ids.len() as f32;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    fn softmax(&self, hidden: &[f32], probs: &mut [f32]) {
        let dim = self.params.dim;
        let mut max = f32::NEG_INFINITY;
        for (j, p) in probs.iter_mut().enumerate() {
            let w = &self.output[j * dim..(j + 1) * dim];
            *p = w.iter().zip(hidden).map(|(a, b)| a * b).sum();
            max = max.max(*p);
        }
        let mut z = 0.0f32;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            z += *p;
        }
        for p in probs.iter_mut() {
            *p /= z;
        }
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let ids = self.featurize(text);
        self.predict_ids(&ids)
    }

    pub fn predict_ids(&self, ids: &[u32]) -> Prediction {
        let n = self.labels.len();
        if ids.is_empty() {
            return Prediction {
                label: self.labels[0].clone(),
                prob: 1.0 / n as f64,
                probs: vec![1.0 / n as f64; n],
                low_confidence: true,
            };
        }
        let mut hidden = vec![0f32; self.params.dim];
        let mut probs = vec![0f32; n];
        self.hidden(ids, &mut hidden);
        self.softmax(&hidden, &mut probs);
        let probs: Vec<f64> = probs.into_iter().map(f64::from).collect();
        let best = probs
            .iter()
            .enumerate()
            .fold(0, |b, (i, &p)| if p > probs[b] { i } else { b });
        Prediction {
            label: self.labels[best].clone(),
            prob: probs[best],
            probs,
            low_confidence: false,
        }
    }

    /// Probability assigned to `label`, or an error if the model lacks it.
    pub fn prob_of(&self, text: &str, label: &str) -> Result<f64> {
        let idx = self
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::invalid(format!("model has no label `{label}` (labels: {})", self.labels.join(", "))))?;
        Ok(self.predict(text).probs[idx])
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let p = &self.params;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for v in [p.dim, p.ws, p.epochs, p.min_count, p.word_ngrams, p.buckets] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&p.lr.to_le_bytes())?;
        w.write_all(&p.seed.to_le_bytes())?;
        let write_str = |w: &mut dyn Write, s: &str| -> Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
            Ok(())
        };
        w.write_all(&(self.labels.len() as u32).to_le_bytes())?;
        for l in &self.labels {
            write_str(w, l)?;
        }
        w.write_all(&(self.words.len() as u32).to_le_bytes())?;
        for word in &self.words {
            write_str(w, word)?;
        }
        let write_f32s = |w: &mut dyn Write, v: &[f32]| -> Result<()> {
            let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
            w.write_all(&bytes)?;
            Ok(())
        };
        write_f32s(w, &self.word_rows)?;
        let mut ids: Vec<u32> = self.bucket_rows.keys().copied().collect();
        ids.sort_unstable();
        w.write_all(&(ids.len() as u32).to_le_bytes())?;
        for id in ids {
            w.write_all(&id.to_le_bytes())?;
            write_f32s(w, &self.bucket_rows[&id])?;
        }
        write_f32s(w, &self.output)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to memory");
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io_at(parent, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io_at(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.err_at(0, "not a classifier model (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.err_at(4, &format!("unsupported model version {version} (this build reads version {VERSION})")));
        }
        let dim = r.u32()? as usize;
        let ws = r.u32()? as usize;
        let epochs = r.u32()? as usize;
        let min_count = r.u32()? as usize;
        let word_ngrams = r.u32()? as usize;
        let buckets = r.u32()? as usize;
        let lr = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let params = TrainParams {
            lr,
            dim,
            ws,
            epochs,
            min_count,
            word_ngrams,
            loss: Loss::Softmax,
            seed,
            buckets,
        };
        let pos = r.pos;
        params.validate().map_err(|e| r.err_at(pos, &e.to_string()))?;
        let nlabels = r.u32()? as usize;
        if nlabels < 2 {
            return Err(r.err_at(r.pos - 4, "model needs at least two labels"));
        }
        let labels = (0..nlabels).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let nwords = r.u32()? as usize;
        let words = (0..nwords).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let word_rows = r.f32s(nwords * dim)?;
        let nb = r.u32()? as usize;
        let mut bucket_rows = FxHashMap::default();
        for _ in 0..nb {
            let at = r.pos;
            let id = r.u32()?;
            if id as usize >= buckets {
                return Err(r.err_at(at, &format!("bucket id {id} out of range")));
            }
            bucket_rows.insert(id, r.f32s(dim)?);
        }
        let output = r.f32s(nlabels * dim)?;
        if r.pos != bytes.len() {
            return Err(r.err_at(r.pos, "trailing bytes after model"));
        }
        let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
        Ok(FastTextModel {
            params,
            labels,
            words,
            vocab,
            word_rows,
            bucket_rows,
            output,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io_at(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl LanguageIdentifier for FastTextModel {
    fn identify(&self, text: &str) -> (String, f64) {
        let p = self.predict(text);
        (p.label, p.prob)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn err_at(&self, offset: usize, message: &str) -> Error {
        Error::ModelLoad {
            offset: offset as u64,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err_at(self.pos, &format!("truncated: need {n} more bytes, {} left", self.bytes.len() - self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| self.err_at(at, "invalid UTF-8 in string table"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let at = self.pos;
        let len = n.checked_mul(4).ok_or_else(|| self.err_at(at, "matrix size overflow"))?;
        let v: Vec<f32> = self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err_at(at, "non-finite value in matrix"));
        }
        Ok(v)
    }
}

/// Trains a model; `(text, label)` pairs with no features are skipped.
pub fn train(corpus: &[(String, String)], p: &TrainParams) -> Result<(FastTextModel, TrainReport)> {
    p.validate()?;
    let labels: Vec<String> = corpus
        .iter()
        .map(|(_, l)| l.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(Error::Training(format!(
            "need at least two distinct labels, found {}",
            labels.len()
        )));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (text, _) in corpus {
        for t in tokens_lower(text) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= p.min_count).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let words: Vec<String> = words.into_iter().map(|(w, _)| w).collect();
    let vocab: FxHashMap<String, u32> = words.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let bound = 1.0 / p.dim as f32;
    let word_rows: Vec<f32> = (0..words.len() * p.dim).map(|_| rng.gen_range(-bound..bound)).collect();
    let mut model = FastTextModel {
        params: p.clone(),
        labels,
        words,
        vocab,
        word_rows,
        bucket_rows: FxHashMap::default(),
        output: vec![0.0; 0],
    };
    model.output = vec![0.0; model.labels.len() * p.dim];

    let label_index: FxHashMap<&str, usize> = model.labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut examples: Vec<(Vec<u32>, usize)> = Vec::with_capacity(corpus.len());
    let mut skipped = 0;
    for (text, label) in corpus {
        let ids = model.featurize(text);
        if ids.is_empty() {
            skipped += 1;
        } else {
            examples.push((ids, label_index[label.as_str()]));
        }
    }
    if examples.is_empty() {
        return Err(Error::Training("no example produced any features".into()));
    }
    let nwords = model.words.len() as u32;
    let dim = p.dim;
    let total = (p.epochs * examples.len()) as f64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut hidden = vec![0f32; dim];
    let mut grad = vec![0f32; dim];
    let mut probs = vec![0f32; model.labels.len()];
    let mut epoch_loss = Vec::with_capacity(p.epochs);
    let mut step = 0usize;
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for &e in &order {
            let (ids, y) = &examples[e];
            let lr = (p.lr * (1.0 - step as f64 / total)) as f32;
            step += 1;
            for &id in ids {
                if id >= nwords {
                    model.bucket_rows.entry(id - nwords).or_insert_with(|| vec![0.0; dim]);
                }
            }
            model.hidden(ids, &mut hidden);
            model.softmax(&hidden, &mut probs);
            loss_sum -= f64::from(probs[*y].max(1e-30)).ln();
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (j, &pj) in probs.iter().enumerate() {
                let alpha = lr * (if j == *y { 1.0 } else { 0.0 } - pj);
                let w = &mut model.output[j * dim..(j + 1) * dim];
                for ((g, wv), h) in grad.iter_mut().zip(w.iter_mut()).zip(&hidden) {
                    *g += alpha * *wv;
                    *wv += alpha * h;
                }
            }
            let scale = 1.0 / ids.len() as f32;
            grad.iter_mut().for_each(|g| *g *= scale);
            for &id in ids {
                let row: &mut [f32] = if id < nwords {
                    let s = id as usize * dim;
                    &mut model.word_rows[s..s + dim]
                } else {
                    model.bucket_rows.get_mut(&(id - nwords)).expect("bucket row created above")
                };
                for (r, g) in row.iter_mut().zip(&grad) {
                    *r += g;
                }
            }
        }
        epoch_loss.push(loss_sum / examples.len() as f64);
    }
    let report = TrainReport {
        examples: examples.len(),
        skipped,
        epoch_loss,
    };
    Ok((model, report))
}

/// Scores every document, records `quality_label` / `quality_prob` (the
/// probability of `label`) in `meta`, and keeps documents with
/// `quality_prob >= threshold`.
pub fn score_documents(
    model: &FastTextModel,
    docs: Vec<Document>,
    label: &str,
    threshold: f64,
) -> Result<(Vec<Document>, ChainStats)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold must be in [0, 1], got {threshold}")));
    }
    let idx = model
        .labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::invalid(format!("model has no label `{label}` (labels: {})", model.labels.join(", "))))?;
    let mut stats = ChainStats::with_rows([(SCORE_ROW, format!(">={threshold}"))]);
    let mut kept = Vec::with_capacity(docs.len());
    for mut doc in docs {
        stats.record_input(doc.token_count);
        let pred = model.predict(&doc.text);
        let prob = pred.probs[idx];
        doc.meta.insert("quality_label".into(), Value::from(pred.label));
        doc.meta.insert("quality_prob".into(), Value::from(prob));
        if prob >= threshold {
            kept.push(doc);
        } else {
            stats.record_removal(0, doc.token_count);
        }
    }
    Ok((kept, stats))
}

pub const SCORE_ROW: &str = "Quality classifier";

/// Parses one `__label__<name> text` line; extra leading labels are ignored.
pub fn parse_labeled_line(line: &str) -> Option<(String, String)> {
    let line = line.trim();
    let rest = line.strip_prefix(LABEL_PREFIX)?;
    let (label, mut text) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    while let Some(r) = text.trim_start().strip_prefix(LABEL_PREFIX) {
        text = r.split_once(char::is_whitespace).map_or("", |(_, t)| t);
    }
    if label.is_empty() {
        return None;
    }
    Some((text.trim().to_string(), label.to_string()))
}

/// Reads a fastText-format corpus as `(text, label)` pairs.
pub fn read_corpus(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io_at(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = parse_labeled_line(&line)
            .ok_or_else(|| Error::Data(format!("{}:{}: expected `__label__<name> text`", path.display(), i + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn format_labeled_line(label: &str, text: &str) -> String {
    let flat: Vec<&str> = text.split_whitespace().collect();
    format!("{LABEL_PREFIX}{label} {}", flat.join(" "))
}
