//! The sequential heuristic filter chain: URL blocklist, language ID,
//! repetition filters, document-quality filters and line-level filters.
//!
//! Filters run in the fixed order of [`FilterId::ALL`]; the first failure
//! decides the verdict, so removals are attributable to exactly one filter.

pub mod stats;
pub mod url;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

pub use self::stats::{doc_quality_stats, repetition_stats, DocStats, RepetitionStats};
pub use self::url::UrlBlocklist;
pub use crate::accounting::ChainStats;
use crate::document::Document;
use crate::error::{Error, Result};
use crate::extract::{stopword_density, StopwordList};
use crate::kv::{KvFile, Section};

/// Anything that can name the language of a text with a confidence.
pub trait LanguageIdentifier: Send + Sync {
    /// Top label (e.g. `en`) and its probability.
    fn identify(&self, text: &str) -> (String, f64);
}

/// Model-free fallback: calls a text `en` when its stopword density is
/// high, with confidence `min(1, density / full_at)`. Anything else is `und`.
pub struct StopwordLid {
    stopwords: StopwordList,
    full_at: f64,
}

impl Default for StopwordLid {
    fn default() -> Self {
        StopwordLid {
            stopwords: StopwordList::english(),
            full_at: 0.30,
        }
    }
}

impl LanguageIdentifier for StopwordLid {
    fn identify(&self, text: &str) -> (String, f64) {
        let conf = (stopword_density(text, &self.stopwords) / self.full_at).min(1.0);
        if conf >= 0.5 {
            ("en".into(), conf)
        } else {
            ("und".into(), 1.0 - conf)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterId {
    Url,
    LanguageId,
    DupLineFraction,
    DupLineChar,
    DupParaFraction,
    DupParaChar,
    TopNgramChar,
    DupNgramChar,
    MinDocWords,
    MaxDocWords,
    MinAvgWordLen,
    MaxAvgWordLen,
    MaxSymbolRatio,
    MaxBulletRatio,
    MaxEllipsisRatio,
    MinAlphaRatio,
    MinStopWords,
    MaxNonAlphanumRatio,
    MaxUrlsRatio,
    MaxWhitespaceRatio,
    LinePunctuation,
    ShortLine,
    CharDuplicates,
    NewLineRatio,
}

impl FilterId {
    pub const ALL: [FilterId; 24] = [
        FilterId::Url,
        FilterId::LanguageId,
        FilterId::DupLineFraction,
        FilterId::DupLineChar,
        FilterId::DupParaFraction,
        FilterId::DupParaChar,
        FilterId::TopNgramChar,
        FilterId::DupNgramChar,
        FilterId::MinDocWords,
        FilterId::MaxDocWords,
        FilterId::MinAvgWordLen,
        FilterId::MaxAvgWordLen,
        FilterId::MaxSymbolRatio,
        FilterId::MaxBulletRatio,
        FilterId::MaxEllipsisRatio,
        FilterId::MinAlphaRatio,
        FilterId::MinStopWords,
        FilterId::MaxNonAlphanumRatio,
        FilterId::MaxUrlsRatio,
        FilterId::MaxWhitespaceRatio,
        FilterId::LinePunctuation,
        FilterId::ShortLine,
        FilterId::CharDuplicates,
        FilterId::NewLineRatio,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterId::Url => "URL filter",
            FilterId::LanguageId => "Language id filter",
            FilterId::DupLineFraction => "Duplicate line fraction",
            FilterId::DupLineChar => "Duplicate line char",
            FilterId::DupParaFraction => "Duplicate para fraction",
            FilterId::DupParaChar => "Duplicate para char",
            FilterId::TopNgramChar => "Top n-gram Char Thresholds",
            FilterId::DupNgramChar => "Dup n-gram Char Thresholds",
            FilterId::MinDocWords => "Min doc words",
            FilterId::MaxDocWords => "Max doc words",
            FilterId::MinAvgWordLen => "Min avg word len",
            FilterId::MaxAvgWordLen => "Max avg word len",
            FilterId::MaxSymbolRatio => "Max symbol ratio",
            FilterId::MaxBulletRatio => "Max bullet ratio",
            FilterId::MaxEllipsisRatio => "Max ellipsis ratio",
            FilterId::MinAlphaRatio => "Min alpha ratio",
            FilterId::MinStopWords => "Min stop words",
            FilterId::MaxNonAlphanumRatio => "Max non alphanum ratio",
            FilterId::MaxUrlsRatio => "Max urls ratio",
            FilterId::MaxWhitespaceRatio => "Max whitespace ratio",
            FilterId::LinePunctuation => "Default line punctuation",
            FilterId::ShortLine => "Default Short Line",
            FilterId::CharDuplicates => "Char Duplicates",
            FilterId::NewLineRatio => "New Line Ratio",
        }
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Thresholds for the chain. Comparison direction per field:
/// `max_*` and the duplicate/n-gram fractions remove when the statistic is
/// strictly above the threshold; `min_*` remove when strictly below;
/// `lid_threshold` keeps at `>=`; `max_newline_ratio` removes at `>=`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub lid_threshold: f64,
    pub dup_line_fraction: f64,
    pub dup_line_char: f64,
    pub dup_para_fraction: f64,
    pub dup_para_char: f64,
    pub top_ngram_char: Vec<(usize, f64)>,
    pub dup_ngram_char: Vec<(usize, f64)>,
    pub min_doc_words: usize,
    pub max_doc_words: usize,
    pub min_avg_word_len: f64,
    pub max_avg_word_len: f64,
    pub max_symbol_ratio: f64,
    pub max_bullet_ratio: f64,
    pub max_ellipsis_ratio: f64,
    pub min_alpha_ratio: f64,
    pub min_stop_words: usize,
    pub max_non_alphanum_ratio: f64,
    pub max_urls_ratio: f64,
    pub max_whitespace_ratio: f64,
    pub min_line_punct_fraction: f64,
    pub max_short_line_fraction: f64,
    pub max_char_dup_fraction: f64,
    pub max_newline_ratio: f64,
    pub url_blocklist_path: Option<PathBuf>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            lid_threshold: 0.65,
            dup_line_fraction: 0.3,
            dup_line_char: 0.2,
            dup_para_fraction: 0.3,
            dup_para_char: 0.2,
            top_ngram_char: vec![(2, 0.20), (3, 0.18), (4, 0.16)],
            dup_ngram_char: vec![(5, 0.15), (6, 0.14), (7, 0.13), (8, 0.12), (9, 0.11), (10, 0.10)],
            min_doc_words: 50,
            max_doc_words: 100_000,
            min_avg_word_len: 3.0,
            max_avg_word_len: 10.0,
            max_symbol_ratio: 0.1,
            max_bullet_ratio: 0.9,
            max_ellipsis_ratio: 0.3,
            min_alpha_ratio: 0.8,
            min_stop_words: 2,
            max_non_alphanum_ratio: 0.25,
            max_urls_ratio: 0.2,
            max_whitespace_ratio: 0.25,
            min_line_punct_fraction: 0.12,
            max_short_line_fraction: 0.67,
            max_char_dup_fraction: 0.01,
            max_newline_ratio: 0.3,
            url_blocklist_path: None,
        }
    }
}

/// Parses `(2, 0.20), (3, 0.18)`.
pub fn parse_ngram_thresholds(s: &str) -> Result<Vec<(usize, f64)>> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let mut out = Vec::new();
    for part in compact.split("),").map(|p| p.trim_matches(|c| c == '(' || c == ')' || c == ',')) {
        if part.is_empty() {
            continue;
        }
        let (n, f) = part
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("bad n-gram threshold `{part}`")))?;
        let n: usize = n.parse().map_err(|_| Error::Config(format!("bad n-gram size `{n}`")))?;
        let f: f64 = f.parse().map_err(|_| Error::Config(format!("bad n-gram fraction `{f}`")))?;
        out.push((n, f));
    }
    Ok(out)
}

pub fn format_ngram_thresholds(v: &[(usize, f64)]) -> String {
    v.iter().map(|(n, f)| format!("({n}, {f:.2})")).collect::<Vec<_>>().join(", ")
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("lid_threshold", self.lid_threshold),
            ("dup_line_fraction", self.dup_line_fraction),
            ("dup_line_char", self.dup_line_char),
            ("dup_para_fraction", self.dup_para_fraction),
            ("dup_para_char", self.dup_para_char),
            ("max_symbol_ratio", self.max_symbol_ratio),
            ("max_bullet_ratio", self.max_bullet_ratio),
            ("max_ellipsis_ratio", self.max_ellipsis_ratio),
            ("min_alpha_ratio", self.min_alpha_ratio),
            ("max_non_alphanum_ratio", self.max_non_alphanum_ratio),
            ("max_urls_ratio", self.max_urls_ratio),
            ("max_whitespace_ratio", self.max_whitespace_ratio),
            ("min_line_punct_fraction", self.min_line_punct_fraction),
            ("max_short_line_fraction", self.max_short_line_fraction),
            ("max_char_dup_fraction", self.max_char_dup_fraction),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        for (n, f) in self.top_ngram_char.iter().chain(&self.dup_ngram_char) {
            if !(2..=10).contains(n) || !(0.0..=1.0).contains(f) {
                return Err(Error::Config(format!("bad n-gram threshold ({n}, {f}); n must be in 2..=10")));
            }
        }
        if self.min_doc_words > self.max_doc_words {
            return Err(Error::Config("min_doc_words exceeds max_doc_words".into()));
        }
        if self.min_avg_word_len > self.max_avg_word_len {
            return Err(Error::Config("min_avg_word_len exceeds max_avg_word_len".into()));
        }
        if self.max_newline_ratio < 0.0 {
            return Err(Error::Config("max_newline_ratio must be non-negative".into()));
        }
        Ok(())
    }

    /// Reads fields from a config section; unknown keys are errors.
    pub fn from_section(mut section: Section) -> Result<Self> {
        let mut cfg = FilterConfig::default();
        section.set("lid_threshold", &mut cfg.lid_threshold)?;
        section.set("dup_line_fraction", &mut cfg.dup_line_fraction)?;
        section.set("dup_line_char", &mut cfg.dup_line_char)?;
        section.set("dup_para_fraction", &mut cfg.dup_para_fraction)?;
        section.set("dup_para_char", &mut cfg.dup_para_char)?;
        if let Some(v) = section.take("top_ngram_char") {
            cfg.top_ngram_char = parse_ngram_thresholds(&v)?;
        }
        if let Some(v) = section.take("dup_ngram_char") {
            cfg.dup_ngram_char = parse_ngram_thresholds(&v)?;
        }
        section.set("min_doc_words", &mut cfg.min_doc_words)?;
        section.set("max_doc_words", &mut cfg.max_doc_words)?;
        section.set("min_avg_word_len", &mut cfg.min_avg_word_len)?;
        section.set("max_avg_word_len", &mut cfg.max_avg_word_len)?;
        section.set("max_symbol_ratio", &mut cfg.max_symbol_ratio)?;
        section.set("max_bullet_ratio", &mut cfg.max_bullet_ratio)?;
        section.set("max_ellipsis_ratio", &mut cfg.max_ellipsis_ratio)?;
        section.set("min_alpha_ratio", &mut cfg.min_alpha_ratio)?;
        section.set("min_stop_words", &mut cfg.min_stop_words)?;
        section.set("max_non_alphanum_ratio", &mut cfg.max_non_alphanum_ratio)?;
        section.set("max_urls_ratio", &mut cfg.max_urls_ratio)?;
        section.set("max_whitespace_ratio", &mut cfg.max_whitespace_ratio)?;
        section.set("min_line_punct_fraction", &mut cfg.min_line_punct_fraction)?;
        section.set("max_short_line_fraction", &mut cfg.max_short_line_fraction)?;
        section.set("max_char_dup_fraction", &mut cfg.max_char_dup_fraction)?;
        section.set("max_newline_ratio", &mut cfg.max_newline_ratio)?;
        if let Some(p) = section.take("url_blocklist_path") {
            cfg.url_blocklist_path = Some(PathBuf::from(p));
        }
        section.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_section(KvFile::load(path)?.into_flat()?)
    }

    /// Canonical `key = value` rendering, accepted by [`FilterConfig::from_section`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("lid_threshold", self.lid_threshold.to_string());
        put("dup_line_fraction", self.dup_line_fraction.to_string());
        put("dup_line_char", self.dup_line_char.to_string());
        put("dup_para_fraction", self.dup_para_fraction.to_string());
        put("dup_para_char", self.dup_para_char.to_string());
        put("top_ngram_char", format_ngram_thresholds(&self.top_ngram_char));
        put("dup_ngram_char", format_ngram_thresholds(&self.dup_ngram_char));
        put("min_doc_words", self.min_doc_words.to_string());
        put("max_doc_words", self.max_doc_words.to_string());
        put("min_avg_word_len", self.min_avg_word_len.to_string());
        put("max_avg_word_len", self.max_avg_word_len.to_string());
        put("max_symbol_ratio", self.max_symbol_ratio.to_string());
        put("max_bullet_ratio", self.max_bullet_ratio.to_string());
        put("max_ellipsis_ratio", self.max_ellipsis_ratio.to_string());
        put("min_alpha_ratio", self.min_alpha_ratio.to_string());
        put("min_stop_words", self.min_stop_words.to_string());
        put("max_non_alphanum_ratio", self.max_non_alphanum_ratio.to_string());
        put("max_urls_ratio", self.max_urls_ratio.to_string());
        put("max_whitespace_ratio", self.max_whitespace_ratio.to_string());
        put("min_line_punct_fraction", self.min_line_punct_fraction.to_string());
        put("max_short_line_fraction", self.max_short_line_fraction.to_string());
        put("max_char_dup_fraction", self.max_char_dup_fraction.to_string());
        put("max_newline_ratio", self.max_newline_ratio.to_string());
        if let Some(p) = &self.url_blocklist_path {
            put("url_blocklist_path", p.display().to_string());
        }
        s
    }

    /// Threshold column as printed in the stats report.
    pub fn threshold_label(&self, id: FilterId) -> String {
        match id {
            FilterId::Url => "NIL".into(),
            FilterId::LanguageId => format!("{}", self.lid_threshold),
            FilterId::DupLineFraction => format!("{}", self.dup_line_fraction),
            FilterId::DupLineChar => format!("{}", self.dup_line_char),
            FilterId::DupParaFraction => format!("{}", self.dup_para_fraction),
            FilterId::DupParaChar => format!("{}", self.dup_para_char),
            FilterId::TopNgramChar => format_ngram_thresholds(&self.top_ngram_char),
            FilterId::DupNgramChar => format_ngram_thresholds(&self.dup_ngram_char),
            FilterId::MinDocWords => format!(">={}", self.min_doc_words),
            FilterId::MaxDocWords => format!("<={}", self.max_doc_words),
            FilterId::MinAvgWordLen => format!(">={}", self.min_avg_word_len),
            FilterId::MaxAvgWordLen => format!("<={}", self.max_avg_word_len),
            FilterId::MaxSymbolRatio => format!("<={}", self.max_symbol_ratio),
            FilterId::MaxBulletRatio => format!("<={}", self.max_bullet_ratio),
            FilterId::MaxEllipsisRatio => format!("<={}", self.max_ellipsis_ratio),
            FilterId::MinAlphaRatio => format!(">={}", self.min_alpha_ratio),
            FilterId::MinStopWords => format!(">={}", self.min_stop_words),
            FilterId::MaxNonAlphanumRatio => format!("<={}", self.max_non_alphanum_ratio),
            FilterId::MaxUrlsRatio => format!("<={}", self.max_urls_ratio),
            FilterId::MaxWhitespaceRatio => format!("<={}", self.max_whitespace_ratio),
            FilterId::LinePunctuation => format!(">={}", self.min_line_punct_fraction),
            FilterId::ShortLine => format!("{}", self.max_short_line_fraction),
            FilterId::CharDuplicates => format!("{}", self.max_char_dup_fraction),
            FilterId::NewLineRatio => format!(">={}", self.max_newline_ratio),
        }
    }

    pub fn new_stats(&self) -> ChainStats {
        ChainStats::with_rows(FilterId::ALL.iter().map(|&id| (id.name(), self.threshold_label(id))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: bool,
    pub failed_filter: Option<FilterId>,
    pub doc_tokens: u64,
}

pub struct FilterChain {
    cfg: FilterConfig,
    blocklist: UrlBlocklist,
    lid: Arc<dyn LanguageIdentifier>,
}

impl FilterChain {
    pub fn new(cfg: FilterConfig, blocklist: UrlBlocklist, lid: Arc<dyn LanguageIdentifier>) -> Result<Self> {
        cfg.validate()?;
        Ok(FilterChain { cfg, blocklist, lid })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn url_filter(&self, url: &str) -> bool {
        self.blocklist.allows(url)
    }

    /// Keep decision plus the identified (label, confidence).
    pub fn language_filter(&self, text: &str) -> (bool, String, f64) {
        if text.trim().is_empty() {
            return (false, String::new(), 0.0);
        }
        let (label, conf) = self.lid.identify(text);
        (label == "en" && conf >= self.cfg.lid_threshold, label, conf)
    }

    fn first_failure(&self, doc: &Document) -> Option<FilterId> {
        if !self.url_filter(&doc.url) {
            return Some(FilterId::Url);
        }
        if !self.language_filter(&doc.text).0 {
            return Some(FilterId::LanguageId);
        }

        thread_local! {
            static SCRATCH: std::cell::RefCell<stats::Scratch> = Default::default();
        }
        SCRATCH.with(|s| self.stats_failure(doc, &mut s.borrow_mut()))
    }

    fn stats_failure(&self, doc: &Document, scratch: &mut stats::Scratch) -> Option<FilterId> {
        let c = &self.cfg;
        let ascii = doc.text.is_ascii();
        scratch.index(&doc.text, ascii);
        let r = stats::repetition_stats_with(&doc.text, ascii, scratch);
        if r.dup_line_fraction > c.dup_line_fraction {
            return Some(FilterId::DupLineFraction);
        }
        if r.dup_line_char_fraction > c.dup_line_char {
            return Some(FilterId::DupLineChar);
        }
        if r.dup_para_fraction > c.dup_para_fraction {
            return Some(FilterId::DupParaFraction);
        }
        if r.dup_para_char_fraction > c.dup_para_char {
            return Some(FilterId::DupParaChar);
        }
        let exceeds = |stats: &[(usize, f64)], limits: &[(usize, f64)]| {
            limits
                .iter()
                .any(|(n, limit)| stats.iter().any(|(m, f)| m == n && f > limit))
        };
        if exceeds(&r.top_ngram_char, &c.top_ngram_char) {
            return Some(FilterId::TopNgramChar);
        }
        if exceeds(&r.dup_ngram_char, &c.dup_ngram_char) {
            return Some(FilterId::DupNgramChar);
        }

        let d = stats::doc_quality_stats_with(&doc.text, ascii, scratch, r.dup_line_char_fraction);
        let checks = [
            (FilterId::MinDocWords, d.word_count < c.min_doc_words),
            (FilterId::MaxDocWords, d.word_count > c.max_doc_words),
            (FilterId::MinAvgWordLen, d.mean_word_len < c.min_avg_word_len),
            (FilterId::MaxAvgWordLen, d.mean_word_len > c.max_avg_word_len),
            (FilterId::MaxSymbolRatio, d.symbol_ratio > c.max_symbol_ratio),
            (FilterId::MaxBulletRatio, d.bullet_ratio > c.max_bullet_ratio),
            (FilterId::MaxEllipsisRatio, d.ellipsis_ratio > c.max_ellipsis_ratio),
            (FilterId::MinAlphaRatio, d.alpha_ratio < c.min_alpha_ratio),
            (FilterId::MinStopWords, d.stop_words < c.min_stop_words),
            (FilterId::MaxNonAlphanumRatio, d.non_alphanum_ratio > c.max_non_alphanum_ratio),
            (FilterId::MaxUrlsRatio, d.url_ratio > c.max_urls_ratio),
            (FilterId::MaxWhitespaceRatio, d.whitespace_ratio > c.max_whitespace_ratio),
            (FilterId::LinePunctuation, d.line_punct_fraction < c.min_line_punct_fraction),
            (FilterId::ShortLine, d.short_line_fraction > c.max_short_line_fraction),
            (FilterId::CharDuplicates, d.dup_line_char_fraction > c.max_char_dup_fraction),
            (FilterId::NewLineRatio, d.newline_ratio >= c.max_newline_ratio),
        ];
        checks.into_iter().find(|(_, failed)| *failed).map(|(id, _)| id)
    }

    /// Pure verdict for one document.
    pub fn evaluate(&self, doc: &Document) -> FilterOutcome {
        let failed_filter = self.first_failure(doc);
        FilterOutcome {
            kept: failed_filter.is_none(),
            failed_filter,
            doc_tokens: doc.token_count,
        }
    }

    /// Evaluates and tallies into `stats` (which must come from
    /// [`FilterConfig::new_stats`]).
    pub fn apply(&self, doc: &Document, stats: &mut ChainStats) -> FilterOutcome {
        let outcome = self.evaluate(doc);
        stats.record_input(outcome.doc_tokens);
        if let Some(id) = outcome.failed_filter {
            stats.record_removal(id.index(), outcome.doc_tokens);
        }
        outcome
    }

    /// Runs the chain over a batch, preserving input order. With
    /// `parallel`, documents are evaluated on the rayon pool; the verdicts and
    /// totals are identical either way.
    pub fn filter_documents(&self, docs: Vec<Document>, parallel: bool) -> (Vec<Document>, ChainStats) {
        let outcomes: Vec<FilterOutcome> = if parallel {
            docs.par_iter().map(|d| self.evaluate(d)).collect()
        } else {
            docs.iter().map(|d| self.evaluate(d)).collect()
        };
        let mut stats = self.cfg.new_stats();
        let mut kept = Vec::with_capacity(docs.len());
        for (doc, outcome) in docs.into_iter().zip(outcomes) {
            stats.record_input(outcome.doc_tokens);
            match outcome.failed_filter {
                Some(id) => stats.record_removal(id.index(), outcome.doc_tokens),
                None => kept.push(doc),
            }
        }
        (kept, stats)
    }
}
