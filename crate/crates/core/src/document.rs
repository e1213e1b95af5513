//! The unit of data flowing between every stage, plus JSONL helpers.
//!
//! Stages exchange documents as JSON Lines, one object per line with the
//! fields `id`, `url`, `text`, `source`, `token_count` and `meta`, in that
//! order. `meta` is a sorted map so serialization is byte-stable.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Warc,
    Wet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub url: String,
    pub text: String,
    pub source: Source,
    pub token_count: u64,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

/// Unicode whitespace restricted to ASCII.
#[inline]
fn is_ascii_ws(b: u8) -> bool {
    (b == b' ') | (b.wrapping_sub(b'\t') < 5)
}

/// `split_whitespace` for ASCII text.
pub(crate) fn ascii_words(text: &str) -> impl Iterator<Item = &str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    std::iter::from_fn(move || {
        while i < bytes.len() && is_ascii_ws(bytes[i]) {
            i += 1;
        }
        if i == bytes.len() {
            return None;
        }
        let start = i;
        while i < bytes.len() && !is_ascii_ws(bytes[i]) {
            i += 1;
        }
        // Only ASCII bytes are split on, so the slice is on char boundaries.
        Some(&text[start..i])
    })
}

/// Words of `text`, with the ASCII fast path when `ascii` holds.
pub(crate) fn for_each_word<'a>(text: &'a str, ascii: bool, mut f: impl FnMut(&'a str)) {
    if ascii {
        ascii_words(text).for_each(&mut f);
    } else {
        text.split_whitespace().for_each(&mut f);
    }
}

/// Number of maximal non-whitespace runs.
pub fn whitespace_token_count(text: &str) -> u64 {
    if text.is_ascii() {
        // Count word starts: a non-space byte after a space (or at 0).
        let b = text.as_bytes();
        let first = b.first().is_some_and(|&c| !is_ascii_ws(c)) as u64;
        let rest = &b[1.min(b.len())..];
        // Chunks of 128 keep the per-chunk sum in a u8, which vectorizes.
        let starts: u64 = b
            .chunks(128)
            .zip(rest.chunks(128))
            .map(|(p, c)| p.iter().zip(c).map(|(&p, &c)| (is_ascii_ws(p) & !is_ascii_ws(c)) as u8).sum::<u8>() as u64)
            .sum();
        first + starts
    } else {
        text.split_whitespace().count() as u64
    }
}

impl Document {
    pub fn new(id: impl Into<String>, url: impl Into<String>, text: impl Into<String>, source: Source) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            url: url.into(),
            token_count: whitespace_token_count(&text),
            text,
            source,
            meta: BTreeMap::new(),
        }
    }

    /// Replaces the text and keeps `token_count` in sync.
    pub fn set_text(&mut self, text: String) {
        self.token_count = whitespace_token_count(&text);
        self.text = text;
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses one JSONL line. `token_count` is recomputed from the text so a
    /// hand-edited file cannot violate the token invariant.
    pub fn from_json_line(line: &str) -> Result<Self> {
        let mut doc: Document = serde_json::from_str(line)?;
        doc.token_count = whitespace_token_count(&doc.text);
        Ok(doc)
    }
}

/// Reads every document of a JSONL file. Blank lines are ignored; a bad line
/// is a data error that names the line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    read_jsonl_from(BufReader::new(file)).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_jsonl_from<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = Document::from_json_line(&line)
            .map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl_to<W: Write>(mut out: W, docs: &[Document]) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io_at(parent, e))?;
        }
    }
    let file = File::create(path).map_err(|e| Error::io_at(path, e))?;
    write_jsonl_to(BufWriter::new(file), docs)
}

pub fn total_tokens(docs: &[Document]) -> u64 {
    docs.iter().map(|d| d.token_count).sum()
}
