//! External annotations and persistence: credibility labels, traffic data,
//! the domain-to-entity ownership map, the public suffix list, and the
//! on-disk snapshot store.
//!
//! All annotation sources are local files with fixed schemas rather than live
//! API clients, which keeps analysis runs reproducible. Ingestion collects
//! per-row warnings instead of failing; only an unreadable file is a hard
//! error.

mod persist;
pub mod psl;

pub use persist::{load_snapshot, save_snapshot, Manifest, ManifestEntry};
pub use psl::{etld_plus_one, PublicSuffixList};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no manifest for snapshot {date} under {root}")]
    MissingManifest { root: PathBuf, date: NaiveDate },
    #[error("stored body for {domain} does not match its manifest digest")]
    DigestMismatch { domain: String },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("domain {0:?} is not a usable file name")]
    InvalidDomain(String),
}

/// Non-fatal problem encountered while ingesting an annotation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    /// 1-based line in the source file, when attributable.
    pub line_no: Option<u64>,
    pub message: String,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line_no {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

macro_rules! label_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            /// Case-insensitive parse; spaces and underscores are
            /// interchangeable ("VERY LOW" == "very_low").
            pub fn parse(text: &str) -> Option<Self> {
                let norm = text.trim().to_ascii_uppercase().replace(' ', "_");
                match norm.as_str() {
                    $($text => Some(Self::$variant),)+
                    _ => None,
                }
            }

            pub fn as_str(&self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_enum!(Credibility {
    Low => "LOW",
    Medium => "MEDIUM",
    High => "HIGH",
    Unknown => "UNKNOWN",
});

label_enum!(FactualReporting {
    VeryLow => "VERY_LOW",
    Low => "LOW",
    Mixed => "MIXED",
    MostlyFactual => "MOSTLY_FACTUAL",
    High => "HIGH",
    VeryHigh => "VERY_HIGH",
    Unknown => "UNKNOWN",
});

label_enum!(ReliabilityTier {
    LeastReliable => "LEAST_RELIABLE",
    GenerallyUnreliable => "GENERALLY_UNRELIABLE",
    Mixed => "MIXED",
    GenerallyReliable => "GENERALLY_RELIABLE",
    MostReliable => "MOST_RELIABLE",
});

label_enum!(TrafficLabel {
    Minimal => "MINIMAL",
    Low => "LOW",
    Medium => "MEDIUM",
    High => "HIGH",
});

impl TrafficLabel {
    /// Ordinal encoding used for rank correlation: MINIMAL < LOW < MEDIUM < HIGH.
    pub fn ordinal(&self) -> u8 {
        match self {
            TrafficLabel::Minimal => 0,
            TrafficLabel::Low => 1,
            TrafficLabel::Medium => 2,
            TrafficLabel::High => 3,
        }
    }
}

/// Credibility annotations for one publisher domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteLabel {
    pub domain: String,
    pub credibility: Credibility,
    pub factual_reporting: FactualReporting,
    pub reliability_tier: Option<ReliabilityTier>,
    pub traffic_label: Option<TrafficLabel>,
}

/// Monthly traffic estimate for one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficRecord {
    pub domain: String,
    pub monthly_visits: u64,
    pub as_of: NaiveDate,
}

/// Domain-to-owning-entity mapping. Lookups are total: an unmapped domain is
/// attributed to itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityMap {
    entries: BTreeMap<String, String>,
}

impl EntityMap {
    pub fn new(entries: BTreeMap<String, String>) -> Self {
        let entries = entries
            .into_iter()
            .map(|(domain, entity)| (domain.to_ascii_lowercase(), entity))
            .collect();
        EntityMap { entries }
    }

    /// Load a flat JSON object `{domain: entity_name}`.
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let entries: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| RegistryError::MalformedManifest(format!("{}: {e}", path.display())))?;
        Ok(Self::new(entries))
    }

    pub fn entity_of<'a>(&'a self, domain: &'a str) -> &'a str {
        match self.entries.get(&domain.to_ascii_lowercase()) {
            Some(entity) => entity.as_str(),
            None => domain,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const LABEL_HEADER: [&str; 5] = [
    "domain",
    "credibility",
    "factual_reporting",
    "reliability_tier",
    "traffic_label",
];
const TRAFFIC_HEADER: [&str; 3] = ["domain", "monthly_visits", "as_of"];

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, RegistryError> {
    let file = std::fs::File::open(path).map_err(|source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(file))
}

fn header_matches(
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
    warnings: &mut Vec<IngestWarning>,
) -> bool {
    match reader.headers() {
        Ok(headers) => {
            let got: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
            if got == expected {
                true
            } else {
                warnings.push(IngestWarning {
                    line_no: Some(1),
                    message: format!("missing header: expected {:?}, found {:?}", expected.join(","), got.join(",")),
                });
                false
            }
        }
        Err(e) => {
            warnings.push(IngestWarning {
                line_no: Some(1),
                message: format!("missing header: {e}"),
            });
            false
        }
    }
}

fn parse_label_cell<T>(
    cell: &str,
    field: &str,
    line_no: u64,
    parse: impl Fn(&str) -> Option<T>,
    unknown: T,
    warnings: &mut Vec<IngestWarning>,
) -> T {
    if cell.trim().is_empty() {
        return unknown;
    }
    match parse(cell) {
        Some(value) => value,
        None => {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: format!("unknown {field} value {cell:?}, treated as UNKNOWN"),
            });
            unknown
        }
    }
}

fn parse_optional_cell<T>(
    cell: &str,
    field: &str,
    line_no: u64,
    parse: impl Fn(&str) -> Option<T>,
    warnings: &mut Vec<IngestWarning>,
) -> Option<T> {
    if cell.trim().is_empty() {
        return None;
    }
    let value = parse(cell);
    if value.is_none() {
        warnings.push(IngestWarning {
            line_no: Some(line_no),
            message: format!("unknown {field} value {cell:?}, ignored"),
        });
    }
    value
}

/// Ingest `labels.csv` (`domain,credibility,factual_reporting,reliability_tier,traffic_label`).
///
/// Duplicate domains keep the last row with a warning; unknown enum text maps
/// to UNKNOWN (or is dropped for the optional columns) with a warning.
pub fn ingest_labels(
    path: &Path,
) -> Result<(BTreeMap<String, SiteLabel>, Vec<IngestWarning>), RegistryError> {
    let mut warnings = Vec::new();
    let mut labels = BTreeMap::new();
    let mut reader = open_csv(path)?;
    if !header_matches(&mut reader, &LABEL_HEADER, &mut warnings) {
        return Ok((labels, warnings));
    }
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line());
                warnings.push(IngestWarning {
                    line_no: line,
                    message: format!("unparsable row: {e}"),
                });
                continue;
            }
        };
        let line_no = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != LABEL_HEADER.len() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: format!("unparsable row: expected {} cells, found {}", LABEL_HEADER.len(), record.len()),
            });
            continue;
        }
        let domain = record[0].trim().to_ascii_lowercase();
        if domain.is_empty() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: "unparsable row: empty domain".to_string(),
            });
            continue;
        }
        let label = SiteLabel {
            domain: domain.clone(),
            credibility: parse_label_cell(
                &record[1],
                "credibility",
                line_no,
                Credibility::parse,
                Credibility::Unknown,
                &mut warnings,
            ),
            factual_reporting: parse_label_cell(
                &record[2],
                "factual_reporting",
                line_no,
                FactualReporting::parse,
                FactualReporting::Unknown,
                &mut warnings,
            ),
            reliability_tier: parse_optional_cell(
                &record[3],
                "reliability_tier",
                line_no,
                ReliabilityTier::parse,
                &mut warnings,
            ),
            traffic_label: parse_optional_cell(
                &record[4],
                "traffic_label",
                line_no,
                TrafficLabel::parse,
                &mut warnings,
            ),
        };
        if labels.insert(domain.clone(), label).is_some() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: format!("duplicate domain {domain}, keeping the later row"),
            });
        }
    }
    Ok((labels, warnings))
}

/// Ingest `traffic.csv` (`domain,monthly_visits,as_of`). Negative visit
/// counts reject the row; duplicate domains keep the last row.
pub fn ingest_traffic(
    path: &Path,
) -> Result<(BTreeMap<String, TrafficRecord>, Vec<IngestWarning>), RegistryError> {
    let mut warnings = Vec::new();
    let mut traffic = BTreeMap::new();
    let mut reader = open_csv(path)?;
    if !header_matches(&mut reader, &TRAFFIC_HEADER, &mut warnings) {
        return Ok((traffic, warnings));
    }
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                warnings.push(IngestWarning {
                    line_no: e.position().map(|p| p.line()),
                    message: format!("unparsable row: {e}"),
                });
                continue;
            }
        };
        let line_no = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != TRAFFIC_HEADER.len() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: format!("unparsable row: expected {} cells, found {}", TRAFFIC_HEADER.len(), record.len()),
            });
            continue;
        }
        let domain = record[0].trim().to_ascii_lowercase();
        if domain.is_empty() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: "unparsable row: empty domain".to_string(),
            });
            continue;
        }
        let visits = match record[1].trim().parse::<i64>() {
            Ok(v) if v < 0 => {
                warnings.push(IngestWarning {
                    line_no: Some(line_no),
                    message: format!("negative monthly_visits {v} for {domain}, row omitted"),
                });
                continue;
            }
            Ok(v) => v as u64,
            Err(_) => {
                warnings.push(IngestWarning {
                    line_no: Some(line_no),
                    message: format!("unparsable monthly_visits {:?} for {domain}, row omitted", record[1].trim()),
                });
                continue;
            }
        };
        let as_of = match record[2].trim().parse::<NaiveDate>() {
            Ok(d) => d,
            Err(_) => {
                warnings.push(IngestWarning {
                    line_no: Some(line_no),
                    message: format!("unparsable as_of date {:?} for {domain}, row omitted", record[2].trim()),
                });
                continue;
            }
        };
        let record = TrafficRecord {
            domain: domain.clone(),
            monthly_visits: visits,
            as_of,
        };
        if traffic.insert(domain.clone(), record).is_some() {
            warnings.push(IngestWarning {
                line_no: Some(line_no),
                message: format!("duplicate domain {domain}, keeping the later row"),
            });
        }
    }
    Ok((traffic, warnings))
}
