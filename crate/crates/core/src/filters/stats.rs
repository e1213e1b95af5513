//! Per-document statistics behind the heuristic filters.
//!
//! Conventions used throughout:
//! * a line is a `\n`-separated piece, trimmed; blank lines are not lines;
//! * a paragraph is a run of consecutive non-blank lines;
//! * words are maximal non-whitespace runs;
//! * line/paragraph char fractions use the summed char length of all lines
//!   (paragraphs) as denominator; n-gram char fractions use the summed char
//!   length of all words, so whitespace never counts as covered text.

use rustc_hash::FxHashSet;

use crate::hash::{hash_str, mix64};
use crate::document::for_each_word;

const WORD_SEED: u64 = 0x6a09_e667_f3bc_c908;
const PARA_SEED: u64 = 0xbb67_ae85_84ca_a73b;

pub const TOP_NGRAM_SIZES: [usize; 3] = [2, 3, 4];
pub const DUP_NGRAM_SIZES: [usize; 6] = [5, 6, 7, 8, 9, 10];

/// Lines shorter than this (in chars) count as short.
pub const SHORT_LINE_CHARS: usize = 30;

/// Stop words counted by the minimum-stop-word filter.
pub const GOPHER_STOP_WORDS: [&str; 8] = ["the", "be", "to", "of", "and", "that", "have", "with"];

const TERMINAL_PUNCTUATION: [char; 4] = ['.', '!', '?', '”'];
const BULLETS: [char; 3] = ['•', '-', '*'];

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionStats {
    pub dup_line_fraction: f64,
    pub dup_line_char_fraction: f64,
    pub dup_para_fraction: f64,
    pub dup_para_char_fraction: f64,
    /// (n, fraction of word chars covered by the most frequent repeated n-gram)
    pub top_ngram_char: [(usize, f64); 3],
    /// (n, fraction of word chars covered by n-grams occurring at least twice)
    pub dup_ngram_char: [(usize, f64); 6],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocStats {
    pub word_count: usize,
    pub mean_word_len: f64,
    pub symbol_ratio: f64,
    pub bullet_ratio: f64,
    pub ellipsis_ratio: f64,
    pub alpha_ratio: f64,
    pub stop_words: usize,
    pub non_alphanum_ratio: f64,
    pub url_ratio: f64,
    pub whitespace_ratio: f64,
    pub line_punct_fraction: f64,
    pub short_line_fraction: f64,
    pub dup_line_char_fraction: f64,
    pub newline_ratio: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn lines(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n').map(str::trim).filter(|l| !l.is_empty())
}

/// Paragraphs as lists of their lines.
pub fn paragraphs(text: &str) -> Vec<Vec<&str>> {
    let mut out: Vec<Vec<&str>> = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.split('\n').map(str::trim) {
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(line);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Running (items, duplicates, chars, duplicate chars) where an item is a
/// duplicate when its hash equals an earlier item's.
#[derive(Default)]
struct DupTally {
    seen: FxHashSet<u64>,
    total: usize,
    dups: usize,
    chars: usize,
    dup_chars: usize,
}

impl DupTally {
    fn reset(&mut self) {
        self.seen.clear();
        (self.total, self.dups, self.chars, self.dup_chars) = (0, 0, 0, 0);
    }

    fn add(&mut self, h: u64, chars: usize) {
        self.total += 1;
        self.chars += chars;
        if !self.seen.insert(h) {
            self.dups += 1;
            self.dup_chars += chars;
        }
    }

    /// (duplicate count ÷ items, duplicate chars ÷ total chars)
    fn fractions(&self) -> (f64, f64) {
        (ratio(self.dups, self.total), ratio(self.dup_chars, self.chars))
    }
}

fn char_len(s: &str, ascii: bool) -> usize {
    if ascii {
        s.len()
    } else {
        s.chars().count()
    }
}

/// Tallies lines and paragraphs (lines joined by `\n`) in one pass. Both are
/// compared by 64-bit hashes: a line by its text, a paragraph by its lines.
fn tally_duplicates(text: &str, ascii: bool, lines: &mut DupTally, paras: &mut DupTally) {
    lines.reset();
    paras.reset();
    let (mut h, mut chars, mut n) = (0u64, 0usize, 0usize);
    for line in text.split('\n').map(str::trim) {
        if line.is_empty() {
            if n > 0 {
                paras.add(h, chars + n - 1);
                (h, chars, n) = (0, 0, 0);
            }
        } else {
            let lh = hash_str(line, PARA_SEED);
            let lc = char_len(line, ascii);
            lines.add(lh, lc);
            h = mix64(h.rotate_left(23) ^ lh);
            chars += lc;
            n += 1;
        }
    }
    if n > 0 {
        paras.add(h, chars + n - 1);
    }
}

/// Reusable buffers for one document's word-level stats: word spans, word
/// hashes, and prefix sums of word char lengths (`prefix[i]` = chars of the
/// first `i` words).
#[derive(Default)]
pub(crate) struct Scratch {
    words: Vec<(usize, usize)>,
    hashes: Vec<u64>,
    prefix: Vec<usize>,
    grams: Vec<u64>,
    cand: Vec<usize>,
    batch: Vec<u64>,
    counter: GramCounter,
    lines: DupTally,
    paras: DupTally,
}

impl Scratch {
    /// Splits `text` into words; must precede the other methods.
    pub(crate) fn index(&mut self, text: &str, ascii: bool) {
        self.words.clear();
        self.hashes.clear();
        self.prefix.clear();
        self.prefix.push(0);
        let base = text.as_ptr() as usize;
        let mut acc = 0;
        for_each_word(text, ascii, |w| {
            let start = w.as_ptr() as usize - base;
            self.words.push((start, start + w.len()));
            self.hashes.push(hash_str(w, WORD_SEED));
            acc += char_len(w, ascii);
            self.prefix.push(acc);
        });
    }

    fn words<'a>(&'a self, text: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.words.iter().map(move |&(a, b)| &text[a..b])
    }
}

struct Prefix<'a>(&'a [usize]);

impl Prefix<'_> {
    fn total_chars(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Chars of words covered by n-grams starting at `starts` (ascending).
    fn covered_chars(&self, n: usize, starts: impl Iterator<Item = usize>) -> usize {
        let mut covered = 0;
        let mut end = 0;
        for p in starts {
            let from = p.max(end);
            let to = p + n;
            if to > from {
                covered += self.0[to] - self.0[from];
            }
            end = end.max(to);
        }
        covered
    }
}

/// Dense ids for gram hashes (open addressing on the already-mixed hash),
/// so counts are looked up by index.
#[derive(Default)]
struct GramCounter {
    keys: Vec<u64>,
    ids: Vec<u32>,
    /// A slot is occupied when its stamp equals `gen`; bumping `gen` clears
    /// the table without touching it.
    stamps: Vec<u32>,
    gen: u32,
    counts: Vec<u32>,
    slots: Vec<u32>,
}

impl GramCounter {
    fn count(&mut self, grams: &[u64]) {
        let cap = (grams.len() + grams.len() / 2).next_power_of_two().max(16);
        let mask = cap - 1;
        if self.stamps.len() < cap || self.gen == u32::MAX {
            self.keys.resize(cap, 0);
            self.ids.resize(cap, 0);
            self.stamps.clear();
            self.stamps.resize(cap, 0);
            self.gen = 0;
        }
        self.gen += 1;
        let gen = self.gen;
        self.counts.clear();
        self.slots.clear();
        for &key in grams {
            let mut i = (key >> 7) as usize & mask;
            let id = loop {
                if self.stamps[i] != gen {
                    let id = self.counts.len() as u32;
                    self.stamps[i] = gen;
                    self.keys[i] = key;
                    self.ids[i] = id;
                    self.counts.push(0);
                    break id;
                }
                if self.keys[i] == key {
                    break self.ids[i];
                }
                i = (i + 1) & mask;
            };
            self.counts[id as usize] += 1;
            self.slots.push(id);
        }
    }

    fn count_at(&self, pos: usize) -> u32 {
        self.counts[self.slots[pos] as usize]
    }
}

pub fn repetition_stats(text: &str) -> RepetitionStats {
    let ascii = text.is_ascii();
    let mut scratch = Scratch::default();
    scratch.index(text, ascii);
    repetition_stats_with(text, ascii, &mut scratch)
}

/// [`repetition_stats`] over words already indexed in `scratch`.
pub(crate) fn repetition_stats_with(text: &str, ascii: bool, scratch: &mut Scratch) -> RepetitionStats {
    tally_duplicates(text, ascii, &mut scratch.lines, &mut scratch.paras);
    let (dup_line_fraction, dup_line_char_fraction) = scratch.lines.fractions();
    let (dup_para_fraction, dup_para_char_fraction) = scratch.paras.fractions();

    let Scratch { hashes: words, prefix, grams, cand, batch, counter, .. } = scratch;
    let index = Prefix(prefix);
    let total = index.total_chars();
    let mut top_ngram_char = TOP_NGRAM_SIZES.map(|n| (n, 0.0));
    let mut dup_ngram_char = DUP_NGRAM_SIZES.map(|n| (n, 0.0));

    // grams[i] is the hash of the current-size gram at i, maintained only
    // for candidate starts. Two equal n-grams have equal (n-1)-prefixes, so
    // every repeated n-gram starts where the (n-1)-gram repeated: after each
    // size the candidates shrink to the repeated starts and counts over the
    // candidates alone stay exact.
    grams.clear();
    grams.extend_from_slice(words);
    cand.clear();
    cand.extend(0..words.len());
    for n in 2..=10 {
        if words.len() < n {
            break;
        }
        let last = words.len() - n;
        while cand.last().is_some_and(|&i| i > last) {
            cand.pop();
        }
        if cand.is_empty() {
            break;
        }
        batch.clear();
        for &i in cand.iter() {
            grams[i] = mix64(grams[i].rotate_left(17) ^ words[i + n - 1]);
            batch.push(grams[i]);
        }
        counter.count(batch);
        if n <= 4 {
            // Most frequent repeated gram; ties go to the earliest occurrence.
            let mut best: Option<(u32, u32)> = None;
            for &id in &counter.slots {
                let c = counter.counts[id as usize];
                if c >= 2 && best.is_none_or(|(bc, _)| c > bc) {
                    best = Some((c, id));
                }
            }
            if let Some((_, top)) = best {
                let starts = counter.slots.iter().zip(cand.iter()).filter(|(&id, _)| id == top).map(|(_, &i)| i);
                top_ngram_char[n - 2].1 = ratio(index.covered_chars(n, starts), total);
            }
        }
        let mut k = 0;
        cand.retain(|_| {
            k += 1;
            counter.count_at(k - 1) >= 2
        });
        if n >= 5 {
            dup_ngram_char[n - 5].1 = ratio(index.covered_chars(n, cand.iter().copied()), total);
        }
    }

    RepetitionStats {
        dup_line_fraction,
        dup_line_char_fraction,
        dup_para_fraction,
        dup_para_char_fraction,
        top_ngram_char,
        dup_ngram_char,
    }
}

fn is_gopher_stop_word(token: &str, ascii: bool) -> bool {
    let w = if ascii {
        token.trim_matches(|c: char| !c.is_ascii_alphanumeric())
    } else {
        token.trim_matches(|c: char| !c.is_alphanumeric())
    };
    w.len() <= 4 && GOPHER_STOP_WORDS.iter().any(|s| s.eq_ignore_ascii_case(w))
}

pub fn doc_quality_stats(text: &str) -> DocStats {
    let ascii = text.is_ascii();
    let mut scratch = Scratch::default();
    scratch.index(text, ascii);
    tally_duplicates(text, ascii, &mut scratch.lines, &mut scratch.paras);
    doc_quality_stats_with(text, ascii, &scratch, scratch.lines.fractions().1)
}

/// [`doc_quality_stats`] over words indexed in `scratch`, with the
/// duplicate-line char fraction supplied by a caller that already computed
/// [`repetition_stats`].
pub(crate) fn doc_quality_stats_with(text: &str, ascii: bool, scratch: &Scratch, dup_line_char_fraction: f64) -> DocStats {
    let mut total_chars = 0usize;
    let mut whitespace = 0usize;
    let mut non_alnum = 0usize;
    let mut symbols = 0usize;
    let mut newlines = 0usize;
    if ascii {
        for &b in text.as_bytes() {
            if b.is_ascii_whitespace() || b == 0x0b {
                whitespace += 1;
                if b == b'\n' {
                    newlines += 1;
                }
            } else if !b.is_ascii_alphanumeric() {
                non_alnum += 1;
                if b == b'#' {
                    symbols += 1;
                }
            }
        }
        total_chars = text.len();
    } else {
        for c in text.chars() {
            total_chars += 1;
            if c.is_whitespace() {
                whitespace += 1;
                if c == '\n' {
                    newlines += 1;
                }
            } else if !c.is_alphanumeric() {
                non_alnum += 1;
                if c == '#' || c == '…' {
                    symbols += 1;
                }
            }
        }
    }
    symbols += text.matches("...").count();

    let mut words = 0usize;
    let mut alpha_words = 0usize;
    let mut stop_words = 0usize;
    let mut urls = 0usize;
    for w in scratch.words(text) {
        words += 1;
        if ascii {
            if w.bytes().any(|b| b.is_ascii_alphabetic()) {
                alpha_words += 1;
            }
        } else {
            if w.chars().any(char::is_alphabetic) {
                alpha_words += 1;
            }
        }
        if is_gopher_stop_word(w, ascii) {
            stop_words += 1;
        }
        if w.starts_with("http") && (w.starts_with("http://") || w.starts_with("https://")) {
            urls += 1;
        }
    }
    let word_chars = *scratch.prefix.last().unwrap();

    let mut n_lines = 0usize;
    let mut bullets = 0usize;
    let mut ellipsis = 0usize;
    let mut punct = 0usize;
    let mut short = 0usize;
    for line in lines(text) {
        n_lines += 1;
        if line.starts_with(BULLETS) {
            bullets += 1;
        }
        if line.ends_with("...") || line.ends_with('…') {
            ellipsis += 1;
        }
        if line.ends_with(TERMINAL_PUNCTUATION) {
            punct += 1;
        }
        if char_len(line, ascii) < SHORT_LINE_CHARS {
            short += 1;
        }
    }

    DocStats {
        word_count: words,
        mean_word_len: ratio(word_chars, words),
        symbol_ratio: ratio(symbols, words),
        bullet_ratio: ratio(bullets, n_lines),
        ellipsis_ratio: ratio(ellipsis, n_lines),
        alpha_ratio: ratio(alpha_words, words),
        stop_words,
        non_alphanum_ratio: ratio(non_alnum, total_chars),
        url_ratio: ratio(urls, words),
        whitespace_ratio: ratio(whitespace, total_chars),
        line_punct_fraction: ratio(punct, n_lines),
        short_line_fraction: ratio(short, n_lines),
        dup_line_char_fraction,
        newline_ratio: ratio(newlines, words),
    }
}
