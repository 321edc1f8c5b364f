//! Parser and serializer for `ads.txt` files.
//!
//! An ads.txt file is a plain-text file served at the root of a publisher
//! domain in which the publisher lists every advertising system authorized to
//! sell its inventory, one comma-separated record per line. Parsing is
//! lenient: malformed lines never abort the parse, they are collected as
//! per-line diagnostics so that messy real-world files still yield every
//! record they contain.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// Account relationship declared by a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Relationship {
    /// The publisher controls the advertising account directly.
    Direct,
    /// A third party is authorized to resell the inventory.
    Reseller,
}

impl Relationship {
    /// Case-insensitive parse of the third record field.
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_uppercase().as_str() {
            "DIRECT" => Some(Relationship::Direct),
            "RESELLER" => Some(Relationship::Reseller),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Relationship::Direct => "DIRECT",
            Relationship::Reseller => "RESELLER",
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One authorized-seller declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdsTxtRecord {
    /// Advertising system domain, lowercased.
    pub ad_system_domain: String,
    /// Seller account identifier, trimmed with case preserved.
    pub seller_account_id: String,
    pub relationship: Relationship,
    /// Optional certification authority identifier (field four).
    pub cert_authority_id: Option<String>,
    /// 1-based source line.
    pub line_no: usize,
}

impl AdsTxtRecord {
    /// Key used for deduplication and cross-referencing. The certification id
    /// and line number do not participate in identity.
    pub fn dedupe_key(&self) -> (&str, &str, Relationship) {
        (
            self.ad_system_domain.as_str(),
            self.seller_account_id.as_str(),
            self.relationship,
        )
    }
}

/// A `NAME=value` line such as `CONTACT=ads@example.com`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    /// Variable name, uppercased.
    pub name: String,
    pub value: String,
    pub line_no: usize,
}

/// A line the parser could not classify as record, variable, or comment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based source line; 0 for file-level diagnostics.
    pub line_no: usize,
    pub message: String,
}

/// Classification of a single input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Record(AdsTxtRecord),
    Variable(Variable),
    /// Comment-only or blank line.
    Nothing,
    Diagnostic(Diagnostic),
}

/// A parsed ads.txt file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdsTxtFile {
    pub publisher_domain: String,
    /// Records in input order.
    pub records: Vec<AdsTxtRecord>,
    /// Variable name (uppercased) to values in input order.
    pub variables: BTreeMap<String, Vec<String>>,
    pub diagnostics: Vec<Diagnostic>,
    /// Comment-only and blank lines, kept so that every input line is
    /// accounted for: records + variable values + ignored + diagnostics
    /// equals the input line count.
    pub ignored_lines: usize,
    /// Set when the file came from a fetch rather than a local path.
    pub fetched_at: Option<DateTime<Utc>>,
}

impl AdsTxtFile {
    /// First OWNERDOMAIN value, if declared.
    pub fn owner_domain(&self) -> Option<&str> {
        self.variables
            .get("OWNERDOMAIN")
            .and_then(|vs| vs.first())
            .map(|s| s.as_str())
            .filter(|s| !s.is_empty())
    }

    fn variable_line_count(&self) -> usize {
        self.variables.values().map(|vs| vs.len()).sum()
    }

    /// Total input lines this parse accounted for.
    pub fn classified_line_count(&self) -> usize {
        self.records.len()
            + self.variable_line_count()
            + self.ignored_lines
            + self.diagnostics.len()
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn diagnostic(line_no: usize, message: impl Into<String>) -> ParsedLine {
    ParsedLine::Diagnostic(Diagnostic {
        line_no,
        message: message.into(),
    })
}

/// Classify one line of an ads.txt file.
///
/// Everything after the first `#` is comment (the format has no quoting, so
/// `#` never appears inside a value). A line with `=` before any comma is a
/// variable; a line that splits on commas into 3 or 4 fields is a record;
/// anything else non-blank is a diagnostic.
pub fn parse_record(line: &str, line_no: usize) -> ParsedLine {
    let content = strip_comment(line).trim();
    if content.is_empty() {
        return ParsedLine::Nothing;
    }

    let first_comma = content.find(',');
    let first_eq = content.find('=');
    if let Some(eq) = first_eq {
        if first_comma.is_none_or(|c| eq < c) {
            let name = content[..eq].trim().to_ascii_uppercase();
            if name.is_empty() {
                return diagnostic(line_no, "variable line with empty name");
            }
            return ParsedLine::Variable(Variable {
                name,
                value: content[eq + 1..].trim().to_string(),
                line_no,
            });
        }
    }

    let fields: Vec<&str> = content.split(',').map(str::trim).collect();
    match fields.len() {
        1 | 2 => diagnostic(
            line_no,
            format!("expected 3 or 4 comma-separated fields, found {}", fields.len()),
        ),
        3 | 4 => {
            let domain = fields[0].to_ascii_lowercase();
            if domain.is_empty() {
                return diagnostic(line_no, "empty advertising system domain");
            }
            if domain.chars().any(char::is_whitespace) {
                return diagnostic(line_no, "advertising system domain contains whitespace");
            }
            let account_id = fields[1].to_string();
            if account_id.is_empty() {
                return diagnostic(line_no, "empty seller account id");
            }
            let relationship = match Relationship::parse(fields[2]) {
                Some(r) => r,
                None => {
                    return diagnostic(
                        line_no,
                        format!("unknown relationship {:?}, expected DIRECT or RESELLER", fields[2]),
                    )
                }
            };
            let cert = fields
                .get(3)
                .map(|s| s.to_string())
                .filter(|s| !s.is_empty());
            ParsedLine::Record(AdsTxtRecord {
                ad_system_domain: domain,
                seller_account_id: account_id,
                relationship,
                cert_authority_id: cert,
                line_no,
            })
        }
        n => diagnostic(
            line_no,
            format!("expected 3 or 4 comma-separated fields, found {n}"),
        ),
    }
}

/// Parse a full ads.txt file. Never fails; the worst input yields a file of
/// diagnostics only. A leading UTF-8 BOM is ignored.
pub fn parse_ads_txt(text: &str, publisher_domain: &str) -> AdsTxtFile {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut file = AdsTxtFile {
        publisher_domain: publisher_domain.to_ascii_lowercase(),
        records: Vec::new(),
        variables: BTreeMap::new(),
        diagnostics: Vec::new(),
        ignored_lines: 0,
        fetched_at: None,
    };
    for (idx, line) in text.lines().enumerate() {
        match parse_record(line, idx + 1) {
            ParsedLine::Record(r) => file.records.push(r),
            ParsedLine::Variable(v) => file.variables.entry(v.name).or_default().push(v.value),
            ParsedLine::Nothing => file.ignored_lines += 1,
            ParsedLine::Diagnostic(d) => file.diagnostics.push(d),
        }
    }
    debug_assert_eq!(file.classified_line_count(), text.lines().count());
    file
}

/// Parse raw fetched bytes. Invalid UTF-8 is replaced and recorded as a
/// file-level diagnostic (line 0).
pub fn parse_ads_txt_bytes(bytes: &[u8], publisher_domain: &str) -> AdsTxtFile {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_ads_txt(text, publisher_domain),
        Err(_) => {
            let text = String::from_utf8_lossy(bytes);
            let mut file = parse_ads_txt(&text, publisher_domain);
            file.diagnostics.insert(
                0,
                Diagnostic {
                    line_no: 0,
                    message: "invalid UTF-8 bytes replaced".to_string(),
                },
            );
            file
        }
    }
}

/// Remove duplicate records on (domain, account id, relationship), keeping
/// the first occurrence and its order.
pub fn dedupe_records(file: &AdsTxtFile) -> Vec<AdsTxtRecord> {
    let mut seen = std::collections::HashSet::new();
    file.records
        .iter()
        .filter(|r| {
            seen.insert((
                r.ad_system_domain.clone(),
                r.seller_account_id.clone(),
                r.relationship,
            ))
        })
        .cloned()
        .collect()
}

/// Emit the canonical text form: records in order, then variables sorted by
/// name. Comments and diagnostic lines are dropped, so
/// `parse(serialize(f))` reproduces exactly the records and variables of `f`.
pub fn serialize(file: &AdsTxtFile) -> String {
    let mut out = String::new();
    for r in &file.records {
        out.push_str(&r.ad_system_domain);
        out.push_str(", ");
        out.push_str(&r.seller_account_id);
        out.push_str(", ");
        out.push_str(r.relationship.as_str());
        if let Some(cert) = &r.cert_authority_id {
            out.push_str(", ");
            out.push_str(cert);
        }
        out.push('\n');
    }
    for (name, values) in &file.variables {
        for value in values {
            out.push_str(name);
            out.push('=');
            out.push_str(value);
            out.push('\n');
        }
    }
    out
}
