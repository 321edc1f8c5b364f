//! Public Suffix List matching and eTLD+1 (registrable domain) extraction.
//!
//! Implements the publicsuffix.org algorithm: rules match a hostname label by
//! label from the right, `*` matches exactly one label, `!` marks an
//! exception whose public suffix is the rule minus its leftmost label, the
//! longest matching rule prevails, and an unlisted TLD falls back to the
//! implicit `*` rule.

use std::collections::HashSet;
use std::net::IpAddr;

/// Parsed rule set in the canonical PSL text format.
#[derive(Debug, Clone, Default)]
pub struct PublicSuffixList {
    exact: HashSet<String>,
    /// Parents of `*.` rules, e.g. `ck` for `*.ck`.
    wildcard: HashSet<String>,
    /// Full label sequences of `!` rules, e.g. `www.ck` for `!www.ck`.
    exception: HashSet<String>,
}

impl PublicSuffixList {
    /// Parse the standard list format: one rule per line, `//` comments,
    /// blank lines ignored, anything after whitespace ignored.
    pub fn parse(text: &str) -> Self {
        let mut list = PublicSuffixList::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule = line
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_ascii_lowercase();
            if rule.is_empty() {
                continue;
            }
            if let Some(rest) = rule.strip_prefix('!') {
                list.exception.insert(rest.to_string());
            } else if let Some(rest) = rule.strip_prefix("*.") {
                list.wildcard.insert(rest.to_string());
            } else {
                list.exact.insert(rule);
            }
        }
        list
    }

    /// The snapshot compiled into the binary; callers may load a newer copy
    /// from disk instead.
    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/public_suffix_list.dat"))
    }

    pub fn rule_count(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    /// Number of labels in the public suffix of `labels`, or `None` when an
    /// exception rule applies and already decided the answer.
    fn public_suffix_len(&self, labels: &[String]) -> usize {
        let n = labels.len();
        // Implicit `*` rule: an unlisted TLD is itself a suffix.
        let mut best = 1;
        for start in 0..n {
            let candidate = labels[start..].join(".");
            if self.exception.contains(&candidate) {
                // Exception prevails over everything: the suffix is the rule
                // minus its leftmost label.
                return n - start - 1;
            }
            if self.exact.contains(&candidate) {
                best = best.max(n - start);
            }
            if start >= 1 && self.wildcard.contains(&candidate) {
                best = best.max(n - start + 1);
            }
        }
        best
    }
}

fn normalize_hostname(hostname: &str) -> Option<Vec<String>> {
    let host = hostname.trim().trim_end_matches('.').to_ascii_lowercase();
    if host.is_empty() || host.parse::<IpAddr>().is_ok() {
        return None;
    }
    let labels: Vec<String> = host.split('.').map(str::to_string).collect();
    if labels
        .iter()
        .any(|l| l.is_empty() || l.chars().any(|c| c.is_whitespace() || c == '/'))
    {
        return None;
    }
    Some(labels)
}

/// Registrable domain (one label past the public suffix) of `hostname`, or
/// `None` when the hostname is itself a public suffix, a bare single label,
/// an IP address, or not a well-formed hostname.
pub fn etld_plus_one(hostname: &str, psl: &PublicSuffixList) -> Option<String> {
    let labels = normalize_hostname(hostname)?;
    let suffix_len = psl.public_suffix_len(&labels);
    if labels.len() <= suffix_len {
        return None;
    }
    Some(labels[labels.len() - suffix_len - 1..].join("."))
}
