//! Streaming reader for WARC/1.x containers (plain or multi-member gzip) and
//! conversion of response/conversion records into [`Document`]s.
//!
//! The reader is total: malformed records are skipped and counted, a stream
//! cut short mid-record ends iteration with `truncated` set, and a stream that
//! does not start with a WARC version line yields nothing and reports a
//! format error. See [`ReadReport`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use encoding_rs::Encoding;
use flate2::read::MultiGzDecoder;
use serde_json::Value;

use crate::document::{Document, Source};
use crate::error::{Error, Result};
use crate::hash::hash128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecordType {
    Response,
    Request,
    Metadata,
    Conversion,
    Other,
}

impl RecordType {
    pub fn parse(value: &str) -> Self {
        match value.trim().to_ascii_lowercase().as_str() {
            "response" => RecordType::Response,
            "request" => RecordType::Request,
            "metadata" => RecordType::Metadata,
            "conversion" => RecordType::Conversion,
            _ => RecordType::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            RecordType::Response => "response",
            RecordType::Request => "request",
            RecordType::Metadata => "metadata",
            RecordType::Conversion => "conversion",
            RecordType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarcRecord {
    pub version: String,
    pub record_type: RecordType,
    pub target_uri: String,
    pub record_id: String,
    pub content_length: u64,
    /// Header lines in stream order, names as written.
    pub headers: Vec<(String, String)>,
    pub payload: Vec<u8>,
}

impl WarcRecord {
    /// Builds a WARC/1.1 record with the minimal header set.
    pub fn new(record_type: &str, target_uri: &str, record_id: &str, payload: Vec<u8>) -> Self {
        let mut headers = vec![
            ("WARC-Type".to_string(), record_type.to_string()),
            ("WARC-Record-ID".to_string(), record_id.to_string()),
        ];
        if !target_uri.is_empty() {
            headers.push(("WARC-Target-URI".to_string(), target_uri.to_string()));
        }
        headers.push(("Content-Length".to_string(), payload.len().to_string()));
        WarcRecord {
            version: "WARC/1.1".to_string(),
            record_type: RecordType::parse(record_type),
            target_uri: target_uri.to_string(),
            record_id: record_id.to_string(),
            content_length: payload.len() as u64,
            headers,
            payload,
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Serializes the record exactly as the reader expects it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + 256);
        out.extend_from_slice(self.version.as_bytes());
        out.extend_from_slice(b"\r\n");
        for (k, v) in &self.headers {
            out.extend_from_slice(k.as_bytes());
            out.extend_from_slice(b": ");
            out.extend_from_slice(v.as_bytes());
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(b"\r\n\r\n");
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadReport {
    pub yielded: u64,
    pub filtered_out: u64,
    pub malformed: u64,
    pub truncated: bool,
    pub format_error: Option<String>,
}

impl ReadReport {
    pub fn errors(&self) -> u64 {
        self.malformed + u64::from(self.truncated) + u64::from(self.format_error.is_some())
    }
}

pub struct WarcReader<R> {
    input: R,
    filter: Option<HashSet<RecordType>>,
    report: ReadReport,
    seen_version: bool,
    in_garbage: bool,
    done: bool,
    line: Vec<u8>,
}

enum Line {
    Eof,
    Text,
}

impl<R: BufRead> WarcReader<R> {
    pub fn new(input: R) -> Self {
        WarcReader {
            input,
            filter: None,
            report: ReadReport::default(),
            seen_version: false,
            in_garbage: false,
            done: false,
            line: Vec::with_capacity(256),
        }
    }

    /// Only yield records whose type is in `types`.
    pub fn with_filter(mut self, types: impl IntoIterator<Item = RecordType>) -> Self {
        self.filter = Some(types.into_iter().collect());
        self
    }

    pub fn report(&self) -> &ReadReport {
        &self.report
    }

    fn read_line(&mut self) -> Line {
        self.line.clear();
        match self.input.read_until(b'\n', &mut self.line) {
            Ok(0) => Line::Eof,
            Ok(_) => {
                while matches!(self.line.last(), Some(b'\n' | b'\r')) {
                    self.line.pop();
                }
                Line::Text
            }
            // A gzip member cut short surfaces as an io error.
            Err(_) => {
                if self.seen_version {
                    self.report.truncated = true;
                } else {
                    self.report.format_error = Some("unreadable stream".to_string());
                }
                self.done = true;
                Line::Eof
            }
        }
    }

    fn finish_truncated(&mut self) -> Option<WarcRecord> {
        self.report.truncated = true;
        self.done = true;
        None
    }

    fn next_record(&mut self) -> Option<WarcRecord> {
        loop {
            if self.done {
                return None;
            }
            // Locate the version line, skipping record separators.
            if let Line::Eof = self.read_line() {
                self.done = true;
                return None;
            }
            if self.line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            if !self.line.starts_with(b"WARC/") {
                if !self.seen_version {
                    self.report.format_error = Some("stream does not start with a WARC version line".to_string());
                    self.done = true;
                    return None;
                }
                if !self.in_garbage {
                    self.report.malformed += 1;
                    self.in_garbage = true;
                }
                continue;
            }
            self.seen_version = true;
            self.in_garbage = false;
            let version = String::from_utf8_lossy(&self.line).into_owned();

            let mut headers: Vec<(String, String)> = Vec::new();
            let mut bad_header = false;
            loop {
                if let Line::Eof = self.read_line() {
                    return self.finish_truncated();
                }
                if self.line.is_empty() {
                    break;
                }
                let text = String::from_utf8_lossy(&self.line);
                if matches!(self.line[0], b' ' | b'\t') {
                    match headers.last_mut() {
                        Some((_, v)) => {
                            v.push(' ');
                            v.push_str(text.trim());
                        }
                        None => bad_header = true,
                    }
                    continue;
                }
                match text.split_once(':') {
                    Some((k, v)) if !k.trim().is_empty() => {
                        headers.push((k.trim().to_string(), v.trim().to_string()));
                    }
                    _ => bad_header = true,
                }
            }

            let find = |name: &str| {
                headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(name))
                    .map(|(_, v)| v.clone())
            };
            let content_length = match find("Content-Length").and_then(|v| v.parse::<u64>().ok()) {
                Some(n) => n,
                None => {
                    // Without a length the payload boundary is unknown; resync
                    // on the next version line.
                    self.report.malformed += 1;
                    self.in_garbage = true;
                    continue;
                }
            };

            let mut payload = Vec::with_capacity(content_length.min(1 << 20) as usize);
            match (&mut self.input).take(content_length).read_to_end(&mut payload) {
                Ok(n) if n as u64 == content_length => {}
                _ => return self.finish_truncated(),
            }

            let record_type = find("WARC-Type").map(|t| RecordType::parse(&t)).unwrap_or(RecordType::Other);
            let target_uri = find("WARC-Target-URI").unwrap_or_default();
            let record_id = find("WARC-Record-ID").unwrap_or_default();
            let needs_uri = matches!(record_type, RecordType::Response | RecordType::Conversion);
            if bad_header || (needs_uri && target_uri.is_empty()) {
                self.report.malformed += 1;
                continue;
            }
            if let Some(filter) = &self.filter {
                if !filter.contains(&record_type) {
                    self.report.filtered_out += 1;
                    continue;
                }
            }
            self.report.yielded += 1;
            return Some(WarcRecord {
                version,
                record_type,
                target_uri,
                record_id,
                content_length,
                headers,
                payload,
            });
        }
    }
}

impl<R: BufRead> Iterator for WarcReader<R> {
    type Item = WarcRecord;

    fn next(&mut self) -> Option<WarcRecord> {
        self.next_record()
    }
}

/// Wraps a byte stream, transparently decompressing gzip (including
/// concatenated per-record members).
pub fn maybe_gunzip<R: Read + Send + 'static>(input: R) -> io::Result<Box<dyn BufRead + Send>> {
    let mut buffered = BufReader::with_capacity(1 << 16, input);
    let head = buffered.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(buffered))))
    } else {
        Ok(Box::new(buffered))
    }
}

pub fn open_archive(path: &Path) -> Result<WarcReader<Box<dyn BufRead + Send>>> {
    let file = File::open(path).map_err(|e| Error::io_at(path, e))?;
    let input = maybe_gunzip(file).map_err(|e| Error::io_at(path, e))?;
    Ok(WarcReader::new(input))
}

/// Decodes bytes as UTF-8, replacing each maximal invalid sequence with
/// U+FFFD. Returns the text and the number of replacements made.
pub fn decode_utf8_counting(bytes: &[u8]) -> (String, usize) {
    let mut out = String::with_capacity(bytes.len());
    let mut replacements = 0;
    for chunk in bytes.utf8_chunks() {
        out.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            out.push('\u{FFFD}');
            replacements += 1;
        }
    }
    (out, replacements)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedPayload {
    pub text: String,
    /// The charset label that was honored, or `utf-8-fallback`.
    pub charset: String,
    pub replacements: usize,
}

pub const UTF8_FALLBACK: &str = "utf-8-fallback";

/// Splits an HTTP response into (header block, body). Payloads that do not
/// start with a status line are all body.
fn split_http(payload: &[u8]) -> (Option<&[u8]>, &[u8]) {
    if !payload.starts_with(b"HTTP/") {
        return (None, payload);
    }
    if let Some(pos) = find_subslice(payload, b"\r\n\r\n") {
        return (Some(&payload[..pos]), &payload[pos + 4..]);
    }
    if let Some(pos) = find_subslice(payload, b"\n\n") {
        return (Some(&payload[..pos]), &payload[pos + 2..]);
    }
    (Some(payload), &[])
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn charset_param(value: &str) -> Option<String> {
    let lower = value.to_ascii_lowercase();
    let idx = lower.find("charset")?;
    let rest = lower[idx + "charset".len()..].trim_start();
    let rest = rest.strip_prefix('=')?.trim_start();
    let rest = rest.trim_start_matches(['"', '\'']);
    let label: String = rest
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | ':' | '.'))
        .collect();
    (!label.is_empty()).then_some(label)
}

fn http_charset(header_block: &[u8]) -> Option<String> {
    let text = String::from_utf8_lossy(header_block);
    text.lines()
        .filter_map(|line| line.split_once(':'))
        .find(|(k, _)| k.trim().eq_ignore_ascii_case("content-type"))
        .and_then(|(_, v)| charset_param(v))
}

fn meta_charset(body: &[u8]) -> Option<String> {
    let window = &body[..body.len().min(4096)];
    let lower: Vec<u8> = window.iter().map(u8::to_ascii_lowercase).collect();
    let mut from = 0;
    while let Some(pos) = find_subslice(&lower[from..], b"<meta") {
        let start = from + pos;
        let end = lower[start..].iter().position(|&b| b == b'>').map_or(lower.len(), |e| start + e);
        let tag = String::from_utf8_lossy(&lower[start..end]);
        if let Some(label) = charset_param(&tag) {
            return Some(label);
        }
        from = end.max(start + 5);
        if from >= lower.len() {
            break;
        }
    }
    None
}

fn decode_with_label(body: &[u8], label: &str) -> Option<DecodedPayload> {
    let encoding = Encoding::for_label(label.as_bytes())?;
    if encoding == encoding_rs::UTF_8 {
        let (text, replacements) = decode_utf8_counting(body);
        return Some(DecodedPayload {
            text,
            charset: label.to_string(),
            replacements,
        });
    }
    let (text, had_errors) = encoding.decode_without_bom_handling(body);
    let replacements = if had_errors { text.matches('\u{FFFD}').count() } else { 0 };
    Some(DecodedPayload {
        text: text.into_owned(),
        charset: label.to_string(),
        replacements,
    })
}

/// Strips the HTTP header block and decodes the body, trying the HTTP
/// Content-Type charset, then an HTML `<meta>` charset, then UTF-8 with
/// replacement. Never fails; unknown labels fall through to the next source.
pub fn decode_payload(record: &WarcRecord) -> DecodedPayload {
    decode_http_body(&record.payload)
}

pub fn decode_http_body(payload: &[u8]) -> DecodedPayload {
    let (headers, body) = split_http(payload);
    let declared = headers.and_then(http_charset).into_iter().chain(meta_charset(body));
    for label in declared {
        if let Some(decoded) = decode_with_label(body, &label) {
            return decoded;
        }
    }
    let (text, replacements) = decode_utf8_counting(body);
    DecodedPayload {
        text,
        charset: UTF8_FALLBACK.to_string(),
        replacements,
    }
}

fn document_id(record: &WarcRecord) -> String {
    let id = record.record_id.trim().trim_start_matches('<').trim_end_matches('>');
    if !id.is_empty() {
        return id.to_string();
    }
    let mut key = record.target_uri.as_bytes().to_vec();
    key.extend_from_slice(&record.payload);
    format!("{:032x}", hash128(&key))
}

/// Converts a conversion (WET) record: text is the payload as UTF-8.
pub fn wet_document(record: &WarcRecord) -> Document {
    let (text, replacements) = decode_utf8_counting(&record.payload);
    let mut doc = Document::new(document_id(record), record.target_uri.clone(), text, Source::Wet);
    doc.meta.insert("replacements".into(), Value::from(replacements));
    doc
}

/// Converts a response record: text is the decoded HTML body.
pub fn warc_document(record: &WarcRecord) -> Document {
    let decoded = decode_payload(record);
    let mut doc = Document::new(document_id(record), record.target_uri.clone(), decoded.text, Source::Warc);
    doc.meta.insert("charset".into(), Value::from(decoded.charset));
    doc.meta.insert("replacements".into(), Value::from(decoded.replacements));
    doc
}

/// Iterator over the conversion records of a WET stream as documents.
pub struct WetReader<R> {
    inner: WarcReader<R>,
}

impl<R: BufRead> WetReader<R> {
    pub fn report(&self) -> &ReadReport {
        self.inner.report()
    }
}

impl<R: BufRead> Iterator for WetReader<R> {
    type Item = Document;

    fn next(&mut self) -> Option<Document> {
        self.inner.next().map(|r| wet_document(&r))
    }
}

pub fn read_wet_records<R: BufRead>(input: R) -> WetReader<R> {
    WetReader {
        inner: WarcReader::new(input).with_filter([RecordType::Conversion]),
    }
}

/// Reads every document from one archive file: response records for WARC,
/// conversion records for WET.
pub fn read_archive_documents(path: &Path) -> Result<(Vec<Document>, ReadReport)> {
    let mut reader = open_archive(path)?.with_filter([RecordType::Response, RecordType::Conversion]);
    let mut docs = Vec::new();
    for record in reader.by_ref() {
        docs.push(match record.record_type {
            RecordType::Conversion => wet_document(&record),
            _ => warc_document(&record),
        });
    }
    Ok((docs, reader.report().clone()))
}
