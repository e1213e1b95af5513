//! Flat `key = value` config files with optional `[section]` headers.
//! Lines starting with `#` are comments. Every key must be consumed by the
//! reader; leftovers are reported as unknown keys.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Section {
    pub name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    pub fn named(name: &str) -> Self {
        Section {
            name: name.to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Removes and returns the raw value for `key`.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("line {line}: bad value `{v}` for `{}{key}`: {e}", self.prefix()))
            }),
        }
    }

    /// Overwrites `slot` when `key` is present.
    pub fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take_parsed(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn prefix(&self) -> String {
        if self.name.is_empty() {
            String::new()
        } else {
            format!("{}.", self.name)
        }
    }

    /// Errors if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, (_, line))| *line) {
            None => Ok(()),
            Some((key, (_, line))) => Err(Error::Config(format!("line {line}: unknown key `{}{key}`", self.prefix()))),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvFile {
    /// Sections in file order; keys before any header land in section "".
    pub sections: Vec<Section>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = vec![Section::default()];
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if sections.iter().any(|s| s.name == name) {
                    return Err(Error::Config(format!("line {lineno}: duplicate section [{name}]")));
                }
                sections.push(Section {
                    name,
                    entries: BTreeMap::new(),
                });
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {lineno}: expected `key = value`, got `{line}`")));
            };
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config(format!("line {lineno}: empty key")));
            }
            let section = sections.last_mut().expect("root section");
            if section.entries.insert(key.clone(), (value.trim().to_string(), lineno)).is_some() {
                return Err(Error::Config(format!("line {lineno}: duplicate key `{key}`")));
            }
        }
        if sections[0].is_empty() && sections.len() > 1 {
            sections.remove(0);
        }
        Ok(KvFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn take_section(&mut self, name: &str) -> Option<Section> {
        let idx = self.sections.iter().position(|s| s.name == name)?;
        Some(self.sections.remove(idx))
    }

    /// Sections and keys in sorted order, one `key = value` per line; equal
    /// for files that differ only in layout, comments or ordering.
    pub fn canonical(&self) -> String {
        let mut sections: Vec<&Section> = self.sections.iter().collect();
        sections.sort_by(|a, b| a.name.cmp(&b.name));
        let mut out = String::new();
        for s in sections {
            out.push_str(&format!("[{}]\n", s.name));
            for (k, (v, _)) in &s.entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// The single unnamed section of a flat file.
    pub fn into_flat(mut self) -> Result<Section> {
        match self.sections.len() {
            0 => Ok(Section::default()),
            1 if self.sections[0].name.is_empty() => Ok(self.sections.remove(0)),
            _ => Err(Error::Config("expected a flat key=value file without sections".into())),
        }
    }
}
