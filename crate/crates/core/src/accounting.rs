//! Token accounting shared by the filter chain and the pipeline report.
//!
//! Percentages are always taken against `input_tokens`, the token count that
//! entered the chain, so rows of a sequential chain add up.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatRow {
    pub name: String,
    pub threshold: String,
    pub removed_docs: u64,
    pub removed_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub input_docs: u64,
    pub input_tokens: u64,
    pub rows: Vec<StatRow>,
}

impl ChainStats {
    pub fn with_rows<'a>(rows: impl IntoIterator<Item = (&'a str, String)>) -> Self {
        ChainStats {
            input_docs: 0,
            input_tokens: 0,
            rows: rows
                .into_iter()
                .map(|(name, threshold)| StatRow {
                    name: name.to_string(),
                    threshold,
                    removed_docs: 0,
                    removed_tokens: 0,
                })
                .collect(),
        }
    }

    pub fn record_input(&mut self, tokens: u64) {
        self.input_docs += 1;
        self.input_tokens += tokens;
    }

    pub fn record_removal(&mut self, row: usize, tokens: u64) {
        let r = &mut self.rows[row];
        r.removed_docs += 1;
        r.removed_tokens += tokens;
    }

    /// Adds counts from a partial tally over the same rows.
    pub fn merge(&mut self, other: &ChainStats) {
        assert_eq!(self.rows.len(), other.rows.len(), "merging stats with different layouts");
        self.input_docs += other.input_docs;
        self.input_tokens += other.input_tokens;
        for (a, b) in self.rows.iter_mut().zip(&other.rows) {
            a.removed_docs += b.removed_docs;
            a.removed_tokens += b.removed_tokens;
        }
    }

    pub fn removed_tokens(&self) -> u64 {
        self.rows.iter().map(|r| r.removed_tokens).sum()
    }

    pub fn removed_docs(&self) -> u64 {
        self.rows.iter().map(|r| r.removed_docs).sum()
    }

    pub fn surviving_tokens(&self) -> u64 {
        self.input_tokens - self.removed_tokens()
    }

    pub fn percent(&self, row: &StatRow) -> f64 {
        if self.input_tokens == 0 {
            0.0
        } else {
            100.0 * row.removed_tokens as f64 / self.input_tokens as f64
        }
    }

    pub fn row(&self, name: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).chain([6]).max().unwrap();
        let thr_w = self.rows.iter().map(|r| r.threshold.chars().count()).chain([9]).max().unwrap();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:<thr_w$}  {:>14}  {:>9}",
            "Filter", "Threshold", "Removed Tokens", "Removed %"
        );
        let _ = writeln!(out, "{}", "-".repeat(name_w + thr_w + 14 + 9 + 6));
        for r in &self.rows {
            let pad = thr_w - r.threshold.chars().count();
            let _ = writeln!(
                out,
                "{:<name_w$}  {}{}  {:>14}  {:>9.2}",
                r.name,
                r.threshold,
                " ".repeat(pad),
                r.removed_tokens,
                self.percent(r)
            );
        }
        let _ = writeln!(
            out,
            "input tokens (whitespace): {}  surviving: {}",
            self.input_tokens,
            self.surviving_tokens()
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Filter,Threshold,Removed Tokens,Removed %\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:.2}",
                csv_field(&r.name),
                csv_field(&r.threshold),
                r.removed_tokens,
                self.percent(r)
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
