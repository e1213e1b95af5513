//! Seeded synthetic fixtures: low-repetition English-like prose, a contrasting
//! foreign-language register, HTML pages with boilerplate, and WARC archives.
//! Used by tests, the bench command and demo runs; nothing here is semantic.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::{Document, Source};
use crate::warc::WarcRecord;

const EN_FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "to", "in", "that", "with", "for", "was", "on", "as", "is", "be", "have", "it", "by",
    "from", "at", "which", "their", "this", "but", "were", "had", "not", "they", "an", "or", "its", "into",
];
const EN_ONSETS: &[&str] = &["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w", "br", "st", "tr", "pl", "gr"];
const EN_VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ea", "ou", "ai"];
const EN_CODAS: &[&str] = &["", "", "n", "r", "t", "s", "nd", "ng", "st", "ll"];

const XX_FUNCTION_WORDS: &[&str] = &[
    "der", "die", "und", "ist", "nicht", "ein", "zu", "mit", "auf", "dem", "sich", "des", "von", "wird", "eine",
];
const XX_ONSETS: &[&str] = &["sch", "z", "k", "w", "pf", "gr", "kl", "fr", "schw", "tz", "j"];
const XX_VOWELS: &[&str] = &["ü", "ö", "ä", "ei", "au", "ie", "u"];
const XX_CODAS: &[&str] = &["ch", "cht", "tz", "ng", "rn", "lk", ""];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Register {
    English,
    Foreign,
}

/// Generates prose from a seeded pseudo-word lexicon.
pub struct ProseGen {
    rng: ChaCha8Rng,
    english: Vec<String>,
    foreign: Vec<String>,
}

fn lexicon(rng: &mut ChaCha8Rng, size: usize, onsets: &[&str], vowels: &[&str], codas: &[&str]) -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(onsets.choose(rng).unwrap());
            w.push_str(vowels.choose(rng).unwrap());
        }
        w.push_str(codas.choose(rng).unwrap());
        words.insert(w);
    }
    let mut v: Vec<String> = words.into_iter().collect();
    v.shuffle(rng);
    v
}

impl ProseGen {
    pub fn new(seed: u64) -> Self {
        // The lexicon is fixed; only the sampling stream depends on `seed`.
        let mut lex_rng = ChaCha8Rng::seed_from_u64(0x5eed_1e55);
        let english = lexicon(&mut lex_rng, 4000, EN_ONSETS, EN_VOWELS, EN_CODAS);
        let foreign = lexicon(&mut lex_rng, 2000, XX_ONSETS, XX_VOWELS, XX_CODAS);
        ProseGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            english,
            foreign,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn word(&mut self, register: Register) -> &str {
        let (function, content) = match register {
            Register::English => (EN_FUNCTION_WORDS, &self.english),
            Register::Foreign => (XX_FUNCTION_WORDS, &self.foreign),
        };
        if self.rng.gen_bool(0.38) {
            function.choose(&mut self.rng).unwrap()
        } else {
            content.choose(&mut self.rng).unwrap()
        }
    }

    /// One sentence of 10..=20 words, capitalized, ending with a period.
    pub fn sentence(&mut self, register: Register) -> String {
        let n = self.rng.gen_range(10..=20);
        let mut s = String::new();
        for i in 0..n {
            let w = self.word(register).to_string();
            if i == 0 {
                let mut chars = w.chars();
                if let Some(c) = chars.next() {
                    s.extend(c.to_uppercase());
                    s.push_str(chars.as_str());
                }
            } else {
                s.push(' ');
                s.push_str(&w);
                if i + 1 < n && self.rng.gen_bool(0.06) {
                    s.push(',');
                }
            }
        }
        s.push('.');
        s
    }

    /// A paragraph of `sentences` sentences on one line.
    pub fn paragraph(&mut self, register: Register, sentences: usize) -> String {
        (0..sentences).map(|_| self.sentence(register)).collect::<Vec<_>>().join(" ")
    }

    /// Plain-text document of roughly `words` words: one sentence per line,
    /// blank lines between paragraphs of 3-5 sentences.
    pub fn document(&mut self, register: Register, words: usize) -> String {
        let mut out = String::new();
        let mut count = 0;
        let mut in_para = 0;
        let mut para_len = self.rng.gen_range(3..=5);
        while count < words {
            let s = self.sentence(register);
            count += s.split_whitespace().count();
            out.push_str(&s);
            out.push('\n');
            in_para += 1;
            if in_para == para_len && count < words {
                out.push('\n');
                in_para = 0;
                para_len = self.rng.gen_range(3..=5);
            }
        }
        out.truncate(out.trim_end().len());
        out
    }

    /// An HTML page with navigation and footer boilerplate around
    /// `paragraphs` long prose paragraphs.
    pub fn html_page(&mut self, register: Register, paragraphs: usize) -> String {
        let mut html = String::from("<html><head><title>page</title><style>p{margin:0}</style></head><body>\n");
        html.push_str("<div class=nav><a href=/>Home</a> | <a href=/news>News</a> | <a href=/about>About</a></div>\n");
        for _ in 0..paragraphs {
            let n = self.rng.gen_range(3..=5);
            html.push_str("<p>");
            html.push_str(&self.paragraph(register, n));
            html.push_str("</p>\n");
        }
        html.push_str("<script>track();</script>\n<div class=footer><a href=/privacy>Privacy</a> <a href=/terms>Terms</a></div>\n</body></html>\n");
        html
    }
}

/// `__label__<lang> text` lines for training a toy language identifier.
pub fn lid_corpus(seed: u64, per_label: usize) -> Vec<(String, String)> {
    let mut g = ProseGen::new(seed);
    let mut out = Vec::with_capacity(2 * per_label);
    for _ in 0..per_label {
        let n = g.rng().gen_range(1..=3);
        out.push(("en".to_string(), g.paragraph(Register::English, n)));
        let n = g.rng().gen_range(1..=3);
        out.push(("xx".to_string(), g.paragraph(Register::Foreign, n)));
    }
    out
}

/// Wraps HTML pages as WARC response records with HTTP headers.
pub fn warc_archive(pages: &[(String, String)]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, (url, html)) in pages.iter().enumerate() {
        let mut payload = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: text/html; charset=utf-8\r\nContent-Length: {}\r\n\r\n",
            html.len()
        )
        .into_bytes();
        payload.extend_from_slice(html.as_bytes());
        let rec = WarcRecord::new("response", url, &format!("<urn:uuid:synth-{i:08}>"), payload);
        out.extend(rec.to_bytes());
    }
    out
}

/// Mixed corpus of plain-text documents: mostly English prose with some
/// foreign documents, exact duplicates, short stubs and repetitive spam.
pub fn mixed_documents(seed: u64, n: usize) -> Vec<Document> {
    let mut g = ProseGen::new(seed);
    let mut docs: Vec<Document> = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("doc-{i:06}");
        let url = format!("https://site{}.example/p/{i}", i % 37);
        let roll = g.rng().gen_range(0..100);
        let text = match roll {
            0..=9 if !docs.is_empty() => {
                let j = g.rng().gen_range(0..docs.len());
                docs[j].text.clone()
            }
            10..=19 => {
                let w = g.rng().gen_range(120..400);
                g.document(Register::Foreign, w)
            }
            20..=26 => {
                let w = g.rng().gen_range(5..40);
                g.document(Register::English, w)
            }
            27..=32 => {
                let line = g.sentence(Register::English);
                vec![line; 12].join("\n")
            }
            _ => {
                let w = g.rng().gen_range(120..600);
                g.document(Register::English, w)
            }
        };
        docs.push(Document::new(id, url, text, Source::Wet));
    }
    docs
}
