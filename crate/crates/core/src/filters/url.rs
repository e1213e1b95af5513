use std::path::Path;

use url::Url;

use crate::error::{Error, Result};

/// Blocked domains and URL substrings.
///
/// A pattern made only of `[a-z0-9.-]` with at least one dot is a domain and
/// matches the URL host or any subdomain of it. Every other pattern is
/// matched as a substring of the lowercased URL.
#[derive(Debug, Clone, Default)]
pub struct UrlBlocklist {
    domains: Vec<String>,
    substrings: Vec<String>,
}

fn is_domain_pattern(p: &str) -> bool {
    p.contains('.') && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '-')
}

impl UrlBlocklist {
    pub fn parse(text: &str) -> Self {
        let mut list = UrlBlocklist::default();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let pattern = line.to_lowercase();
            if is_domain_pattern(&pattern) {
                list.domains.push(pattern.trim_matches('.').to_string());
            } else {
                list.substrings.push(pattern);
            }
        }
        list
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn len(&self) -> usize {
        self.domains.len() + self.substrings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when the URL should be kept. Unparseable or host-less URLs are
    /// removed.
    pub fn allows(&self, url: &str) -> bool {
        let Ok(parsed) = Url::parse(url.trim()) else {
            return false;
        };
        let Some(host) = parsed.host_str() else {
            return false;
        };
        let host = host.to_ascii_lowercase();
        let blocked_domain = self.domains.iter().any(|d| {
            host == *d || (host.len() > d.len() && host.ends_with(d.as_str()) && host.as_bytes()[host.len() - d.len() - 1] == b'.')
        });
        if blocked_domain {
            return false;
        }
        if self.substrings.is_empty() {
            return true;
        }
        let lower = url.to_lowercase();
        !self.substrings.iter().any(|s| lower.contains(s.as_str()))
    }
}
