//! Main-content extraction by stopword-density block classification.
//!
//! HTML is cut into blocks at block-level element boundaries by a forgiving
//! linear tag scanner. Each block is classified from its length, link density
//! and stopword density; a second pass resolves `short`/`near_good` blocks
//! from their neighbours. Pages without recognizable prose yield `""`.

use std::path::Path;
use std::sync::Arc;

use rustc_hash::FxHashSet;

use crate::accounting::ChainStats;
use crate::document::{Document, Source};
use crate::error::{Error, Result};

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: FxHashSet<String>,
    /// Words of at most 16 bytes, packed little-endian.
    short: FxHashSet<u128>,
    max_len: usize,
}

fn pack(word: &[u8]) -> Option<u128> {
    let mut buf = [0u8; 16];
    buf.get_mut(..word.len())?.copy_from_slice(word);
    Some(u128::from_le_bytes(buf))
}

impl StopwordList {
    /// One word per line; `#` starts a comment line.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect::<FxHashSet<String>>();
        let max_len = words.iter().map(String::len).max().unwrap_or(0);
        let short = words.iter().filter_map(|w| pack(w.as_bytes())).collect();
        StopwordList { words, short, max_len }
    }

    pub fn english() -> Self {
        Self::parse(ENGLISH_STOPWORDS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(Self::parse(&text))
    }

    /// `word` must already be normalized with [`normalize_word`].
    pub fn contains(&self, word: &str) -> bool {
        if word.len() > self.max_len {
            return false;
        }
        match pack(word.as_bytes()) {
            Some(key) => self.short.contains(&key),
            None => self.words.contains(word),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Lowercases and trims leading/trailing non-alphanumeric characters.
pub fn normalize_word(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

pub fn stopword_density(text: &str, stopwords: &StopwordList) -> f64 {
    let mut words = 0usize;
    let mut hits = 0usize;
    let mut buf = String::new();
    let ascii = text.is_ascii();
    crate::document::for_each_word(text, ascii, |token| {
        words += 1;
        let w = if ascii {
            token.trim_matches(|c: char| !c.is_ascii_alphanumeric())
        } else {
            token.trim_matches(|c: char| !c.is_alphanumeric())
        };
        let hit = if w.len() > stopwords.max_len {
            false
        } else if ascii {
            let mut lower = [0u8; 16];
            match lower.get_mut(..w.len()) {
                Some(dst) => {
                    for (d, b) in dst.iter_mut().zip(w.bytes()) {
                        *d = b.to_ascii_lowercase();
                    }
                    stopwords.short.contains(&u128::from_le_bytes(lower))
                }
                None => stopwords.contains(&w.to_ascii_lowercase()),
            }
        } else if w.bytes().all(|b| b.is_ascii_lowercase()) {
            stopwords.contains(w)
        } else {
            buf.clear();
            buf.extend(w.chars().flat_map(char::to_lowercase));
            stopwords.contains(&buf)
        };
        if hit {
            hits += 1;
        }
    });
    if words == 0 {
        0.0
    } else {
        hits as f64 / words as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockClass {
    Good,
    Bad,
    NearGood,
    Short,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub text: String,
    pub char_len: usize,
    /// Characters that came from inside `<a>` elements.
    pub link_char_len: usize,
    pub stopword_density: f64,
    pub class: BlockClass,
}

impl Block {
    pub fn link_density(&self) -> f64 {
        if self.char_len == 0 {
            0.0
        } else {
            self.link_char_len as f64 / self.char_len as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractParams {
    pub length_low: usize,
    pub length_high: usize,
    pub stopwords_low: f64,
    pub stopwords_high: f64,
    pub max_link_density: f64,
    /// Resolve short/near-good blocks from their neighbours.
    pub context_sensitive: bool,
    pub stopwords: Arc<StopwordList>,
}

impl Default for ExtractParams {
    fn default() -> Self {
        ExtractParams {
            length_low: 70,
            length_high: 200,
            stopwords_low: 0.30,
            stopwords_high: 0.32,
            max_link_density: 0.20,
            context_sensitive: true,
            stopwords: Arc::new(StopwordList::english()),
        }
    }
}

impl ExtractParams {
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if !(frac(self.stopwords_low) && frac(self.stopwords_high) && self.stopwords_low <= self.stopwords_high) {
            return Err(Error::invalid("need 0 <= stopwords_low <= stopwords_high <= 1"));
        }
        if self.length_low > self.length_high {
            return Err(Error::invalid("need length_low <= length_high"));
        }
        if !frac(self.max_link_density) {
            return Err(Error::invalid("max_link_density must be in [0, 1]"));
        }
        Ok(())
    }
}

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "body", "caption", "center", "dd", "div", "dl", "dt", "fieldset",
    "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "html", "legend",
    "li", "main", "nav", "ol", "option", "p", "pre", "section", "table", "tbody", "td", "textarea", "tfoot", "th",
    "thead", "tr", "ul",
];

/// Elements whose content is dropped entirely.
const SKIP_TAGS: &[&str] = &["script", "style", "noscript", "head", "template", "svg"];

#[derive(Default)]
struct BlockBuilder {
    text: String,
    chars: usize,
    link_chars: usize,
    pending_space: bool,
    last_in_link: bool,
}

impl BlockBuilder {
    fn push(&mut self, c: char, in_link: bool) {
        if c.is_whitespace() {
            self.pending_space = self.chars > 0;
            return;
        }
        if self.pending_space {
            self.text.push(' ');
            self.chars += 1;
            if in_link && self.last_in_link {
                self.link_chars += 1;
            }
            self.pending_space = false;
        }
        self.text.push(c);
        self.chars += 1;
        if in_link {
            self.link_chars += 1;
        }
        self.last_in_link = in_link;
    }

    fn flush(&mut self, out: &mut Vec<Block>) {
        if self.chars > 0 {
            out.push(Block {
                text: std::mem::take(&mut self.text),
                char_len: self.chars,
                link_char_len: self.link_chars,
                stopword_density: 0.0,
                class: BlockClass::Short,
            });
        }
        *self = BlockBuilder::default();
    }
}

fn find_ci(haystack: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if needle.is_empty() || from >= haystack.len() {
        return None;
    }
    haystack[from..]
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle))
        .map(|p| from + p)
}

/// Index just past the `>` closing the tag that starts at `start`, honoring
/// quoted attribute values.
fn tag_end(bytes: &[u8], start: usize) -> usize {
    let mut quote: Option<u8> = None;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) if b == q => quote = None,
            Some(_) => {}
            None if b == b'"' || b == b'\'' => quote = Some(b),
            None if b == b'>' => return i + 1,
            None => {}
        }
        i += 1;
    }
    bytes.len()
}

fn decode_entity(s: &str) -> Option<(char, usize)> {
    let end = s.as_bytes().iter().take(12).position(|&b| b == b';')?;
    let name = &s[1..end];
    let c = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "mdash" => '—',
        "ndash" => '–',
        "hellip" => '…',
        "rsquo" => '’',
        "lsquo" => '‘',
        "rdquo" => '”',
        "ldquo" => '“',
        "copy" => '©',
        _ => {
            let num = name.strip_prefix('#')?;
            let code = match num.strip_prefix(['x', 'X']) {
                Some(hex) => u32::from_str_radix(hex, 16).ok()?,
                None => num.parse::<u32>().ok()?,
            };
            char::from_u32(code)?
        }
    };
    Some((c, end + 1))
}

/// Splits HTML into text blocks. Blocks carry char and link-char counts;
/// stopword density and class are filled in by [`classify_blocks`].
pub fn segment_blocks(html: &str) -> Vec<Block> {
    let bytes = html.as_bytes();
    let mut blocks = Vec::new();
    let mut cur = BlockBuilder::default();
    let mut link_depth = 0usize;
    let mut br_run = 0usize;
    let mut i = 0;

    while i < bytes.len() {
        let b = bytes[i];
        if b == b'<' {
            if bytes[i..].starts_with(b"<!--") {
                i = find_ci(bytes, i + 4, b"-->").map_or(bytes.len(), |p| p + 3);
                continue;
            }
            let closing = bytes.get(i + 1) == Some(&b'/');
            let name_start = i + 1 + usize::from(closing);
            let mut name_end = name_start;
            while name_end < bytes.len() && bytes[name_end].is_ascii_alphanumeric() {
                name_end += 1;
            }
            if name_end == name_start {
                if matches!(bytes.get(name_start), Some(b'!' | b'?')) {
                    i = tag_end(bytes, i);
                    continue;
                }
                // Stray '<' is text.
                cur.push('<', link_depth > 0);
                br_run = 0;
                i += 1;
                continue;
            }
            let name = html[name_start..name_end].to_ascii_lowercase();
            let end = tag_end(bytes, name_end);
            if !closing && SKIP_TAGS.contains(&name.as_str()) {
                let close = format!("</{name}");
                i = find_ci(bytes, end, close.as_bytes()).map_or(bytes.len(), |p| tag_end(bytes, p));
                continue;
            }
            i = end;
            if name == "a" {
                link_depth = if closing { link_depth.saturating_sub(1) } else { link_depth + 1 };
            } else if name == "br" {
                br_run += 1;
                if br_run >= 2 {
                    cur.flush(&mut blocks);
                } else {
                    cur.push(' ', link_depth > 0);
                }
            } else if BLOCK_TAGS.contains(&name.as_str()) {
                cur.flush(&mut blocks);
                br_run = 0;
            }
            continue;
        }

        let (c, len) = if b == b'&' {
            decode_entity(&html[i..]).unwrap_or(('&', 1))
        } else {
            let c = html[i..].chars().next().expect("char boundary");
            (c, c.len_utf8())
        };
        if !c.is_whitespace() {
            br_run = 0;
        }
        cur.push(c, link_depth > 0);
        i += len;
    }
    cur.flush(&mut blocks);
    blocks
}

/// Context-free classification of a single block.
pub fn classify_block(block: &Block, p: &ExtractParams) -> BlockClass {
    if block.char_len == 0 {
        return BlockClass::Short;
    }
    if block.link_density() > p.max_link_density {
        return BlockClass::Bad;
    }
    if block.char_len < p.length_low {
        return BlockClass::Short;
    }
    if block.stopword_density >= p.stopwords_high && block.char_len > p.length_high {
        return BlockClass::Good;
    }
    if block.stopword_density >= p.stopwords_low {
        return BlockClass::NearGood;
    }
    BlockClass::Bad
}

fn nearest_non_short(classes: &[BlockClass], range: impl Iterator<Item = usize>) -> Option<BlockClass> {
    range.map(|j| classes[j]).find(|c| *c != BlockClass::Short)
}

/// Segments and classifies; every returned block is `Good` or `Bad`.
pub fn classify_blocks(html: &str, p: &ExtractParams) -> Vec<Block> {
    let mut blocks = segment_blocks(html);
    for block in &mut blocks {
        block.stopword_density = stopword_density(&block.text, &p.stopwords);
        block.class = classify_block(block, p);
    }
    let initial: Vec<BlockClass> = blocks.iter().map(|b| b.class).collect();
    for (i, block) in blocks.iter_mut().enumerate() {
        if !matches!(block.class, BlockClass::Short | BlockClass::NearGood) {
            continue;
        }
        block.class = if p.context_sensitive {
            let prev = nearest_non_short(&initial, (0..i).rev());
            let next = nearest_non_short(&initial, i + 1..initial.len());
            if prev == Some(BlockClass::Good) || next == Some(BlockClass::Good) {
                BlockClass::Good
            } else {
                BlockClass::Bad
            }
        } else {
            BlockClass::Bad
        };
    }
    blocks
}

pub fn extract_document(html: &str, p: &ExtractParams) -> String {
    let blocks = classify_blocks(html, p);
    let good: Vec<&str> = blocks
        .iter()
        .filter(|b| b.class == BlockClass::Good)
        .map(|b| b.text.as_str())
        .collect();
    good.join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parser {
    Justext,
    /// Text is already extracted; pass it through.
    Wet,
}

impl std::str::FromStr for Parser {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "justext" => Ok(Parser::Justext),
            "wet" => Ok(Parser::Wet),
            other => Err(Error::Config(format!("unknown parser `{other}` (expected justext or wet)"))),
        }
    }
}

pub const EXTRACT_ROW: &str = "Text extraction";

/// Extracts every document in place. With [`Parser::Justext`], HTML
/// (`source = warc`) documents are run through the extractor and already
/// extracted (`wet`) text passes through. Documents left empty are dropped.
///
/// Token accounting starts here: the stats' input is the extracted token
/// count, so a dropped document removes zero tokens.
pub fn extract_documents(docs: Vec<Document>, parser: Parser, p: &ExtractParams) -> (Vec<Document>, ChainStats) {
    let label = match parser {
        Parser::Justext => "justext",
        Parser::Wet => "wet",
    };
    let mut stats = ChainStats::with_rows([(EXTRACT_ROW, label.to_string())]);
    let kept = docs
        .into_iter()
        .filter_map(|mut doc| {
            if parser == Parser::Justext && doc.source == Source::Warc {
                let text = extract_document(&doc.text, p);
                doc.set_text(text);
            }
            stats.record_input(doc.token_count);
            if doc.text.trim().is_empty() {
                stats.record_removal(0, 0);
                None
            } else {
                Some(doc)
            }
        })
        .collect();
    (kept, stats)
}
