//! Parser and index for `sellers.json` files.
//!
//! An advertising system publishes a sellers.json file at its domain root to
//! disclose the inventory sellers it has approved. Each seller carries the
//! identifier that publishers reference from their ads.txt files, which is
//! what makes the two formats cross-referenceable. Parsing is skip-and-
//! diagnose: malformed entries are dropped with a diagnostic instead of
//! rejecting the file.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Seller classification from the IAB sellers.json standard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SellerType {
    /// Owns and controls the site whose inventory is sold.
    Publisher,
    /// Resells inventory on behalf of others.
    Intermediary,
    /// Acts as both a publisher and an intermediary.
    Both,
}

impl SellerType {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_uppercase().as_str() {
            "PUBLISHER" => Some(SellerType::Publisher),
            "INTERMEDIARY" => Some(SellerType::Intermediary),
            "BOTH" => Some(SellerType::Both),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SellerType::Publisher => "PUBLISHER",
            SellerType::Intermediary => "INTERMEDIARY",
            SellerType::Both => "BOTH",
        }
    }
}

impl fmt::Display for SellerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One approved inventory seller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seller {
    /// Trimmed, case preserved.
    pub seller_id: String,
    pub seller_type: SellerType,
    pub name: Option<String>,
    /// Seller domain, lowercased.
    pub domain: Option<String>,
    pub is_confidential: bool,
    pub is_passthrough: bool,
}

/// A parsed sellers.json file, indexed by seller id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SellersJsonFile {
    pub ad_system_domain: String,
    pub sellers: BTreeMap<String, Seller>,
    pub contact_email: Option<String>,
    pub contact_address: Option<String>,
    pub version: Option<String>,
    pub diagnostics: Vec<String>,
    pub fetched_at: Option<DateTime<Utc>>,
}

fn empty_file(ad_system_domain: &str) -> SellersJsonFile {
    SellersJsonFile {
        ad_system_domain: ad_system_domain.to_ascii_lowercase(),
        sellers: BTreeMap::new(),
        contact_email: None,
        contact_address: None,
        version: None,
        diagnostics: Vec::new(),
        fetched_at: None,
    }
}

/// Accept strings and bare numbers for identifier-like fields; wild files
/// frequently serialize seller ids as JSON numbers.
fn value_as_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn value_as_bool(value: &Value) -> Option<bool> {
    match value {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => n.as_i64().map(|i| i != 0),
        _ => None,
    }
}

fn parse_seller(entry: &Value, index: usize) -> Result<Seller, String> {
    let obj = entry
        .as_object()
        .ok_or_else(|| format!("sellers[{index}]: entry is not an object"))?;
    let seller_id = obj
        .get("seller_id")
        .and_then(value_as_text)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("sellers[{index}]: missing or empty seller_id"))?;
    let seller_type = obj
        .get("seller_type")
        .and_then(|v| v.as_str())
        .ok_or_else(|| format!("sellers[{index}] (id {seller_id}): missing seller_type"))
        .and_then(|s| {
            SellerType::parse(s)
                .ok_or_else(|| format!("sellers[{index}] (id {seller_id}): unknown seller_type {s:?}"))
        })?;
    Ok(Seller {
        seller_id,
        seller_type,
        name: obj.get("name").and_then(value_as_text),
        domain: obj
            .get("domain")
            .and_then(value_as_text)
            .map(|d| d.trim().to_ascii_lowercase())
            .filter(|d| !d.is_empty()),
        is_confidential: obj.get("is_confidential").and_then(value_as_bool).unwrap_or(false),
        is_passthrough: obj.get("is_passthrough").and_then(value_as_bool).unwrap_or(false),
    })
}

/// Parse a sellers.json document.
///
/// Never fails: text that is not a JSON object yields an empty seller map
/// plus a fatal diagnostic. Entries missing `seller_id` or `seller_type` are
/// skipped with a diagnostic, duplicate ids keep the first occurrence, and
/// unknown fields are ignored.
pub fn parse_sellers_json(text: &str, ad_system_domain: &str) -> SellersJsonFile {
    let mut file = empty_file(ad_system_domain);
    let root: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            file.diagnostics.push(format!("not a valid JSON document: {e}"));
            return file;
        }
    };
    let obj = match root.as_object() {
        Some(o) => o,
        None => {
            file.diagnostics
                .push("top-level JSON value is not an object".to_string());
            return file;
        }
    };

    file.contact_email = obj.get("contact_email").and_then(value_as_text);
    file.contact_address = obj.get("contact_address").and_then(value_as_text);
    file.version = obj.get("version").and_then(value_as_text);

    let sellers = match obj.get("sellers").and_then(|v| v.as_array()) {
        Some(arr) => arr,
        None => {
            file.diagnostics
                .push("missing or non-array `sellers` field".to_string());
            return file;
        }
    };
    for (index, entry) in sellers.iter().enumerate() {
        match parse_seller(entry, index) {
            Ok(seller) => {
                if file.sellers.contains_key(&seller.seller_id) {
                    file.diagnostics.push(format!(
                        "sellers[{index}]: duplicate seller_id {:?}, keeping first occurrence",
                        seller.seller_id
                    ));
                } else {
                    file.sellers.insert(seller.seller_id.clone(), seller);
                }
            }
            Err(message) => file.diagnostics.push(message),
        }
    }
    file
}

/// Parse raw fetched bytes; invalid UTF-8 is replaced before parsing.
pub fn parse_sellers_json_bytes(bytes: &[u8], ad_system_domain: &str) -> SellersJsonFile {
    parse_sellers_json(&String::from_utf8_lossy(bytes), ad_system_domain)
}

/// Exact, case-sensitive seller lookup after trimming the query.
pub fn lookup_seller<'a>(file: &'a SellersJsonFile, seller_id: &str) -> Option<&'a Seller> {
    file.sellers.get(seller_id.trim())
}
