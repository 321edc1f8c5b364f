//! On-disk snapshot store.
//!
//! Layout under the snapshot root:
//!
//! ```text
//! <root>/<YYYY-MM-DD>/adstxt/<domain>.txt
//! <root>/<YYYY-MM-DD>/sellersjson/<domain>.json
//! <root>/<YYYY-MM-DD>/manifest.json
//! ```
//!
//! The manifest records fetch metadata and a SHA-256 digest per domain; the
//! digest is re-checked on load so tampered or truncated bodies surface as
//! errors instead of silently skewing analysis. The manifest is written last
//! and atomically, acting as the commit marker for the snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::RegistryError;
use crate::adstxt;
use crate::fetcher::{sha256_hex, FetchResult, FetchStatus, Snapshot};
use crate::sellersjson;

/// Per-domain fetch metadata as stored in `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub status: String,
    pub http_status: Option<u16>,
    pub url_requested: String,
    pub final_url: String,
    pub fetched_at: DateTime<Utc>,
    pub sha256: Option<String>,
}

impl ManifestEntry {
    fn from_result(result: &FetchResult) -> Self {
        ManifestEntry {
            status: result.status.as_str().to_string(),
            http_status: result.http_status,
            url_requested: result.url_requested.clone(),
            final_url: result.final_url.clone(),
            fetched_at: result.fetched_at,
            sha256: result.content_digest.clone(),
        }
    }
}

/// Snapshot index: one entry per crawled domain, per file kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub snapshot_date: NaiveDate,
    pub adstxt: BTreeMap<String, ManifestEntry>,
    pub sellersjson: BTreeMap<String, ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RegistryError + '_ {
    move |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_domain_filename(domain: &str) -> Result<(), RegistryError> {
    let ok = !domain.is_empty()
        && !domain.starts_with('.')
        && domain
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | ':'));
    if ok {
        Ok(())
    } else {
        Err(RegistryError::InvalidDomain(domain.to_string()))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn snapshot_dir(root: &Path, date: NaiveDate) -> PathBuf {
    root.join(date.to_string())
}

/// Write a snapshot under `root`. Bodies go first, the manifest last.
pub fn save_snapshot(snapshot: &Snapshot, root: &Path) -> Result<PathBuf, RegistryError> {
    let dir = snapshot_dir(root, snapshot.snapshot_date);
    let adstxt_dir = dir.join("adstxt");
    let sellersjson_dir = dir.join("sellersjson");
    fs::create_dir_all(&adstxt_dir).map_err(io_err(&adstxt_dir))?;
    fs::create_dir_all(&sellersjson_dir).map_err(io_err(&sellersjson_dir))?;

    let mut manifest = Manifest {
        snapshot_date: snapshot.snapshot_date,
        adstxt: BTreeMap::new(),
        sellersjson: BTreeMap::new(),
    };

    for (domain, (result, _)) in &snapshot.adstxt_files {
        check_domain_filename(domain)?;
        if let Some(body) = &result.body {
            write_atomic(&adstxt_dir.join(format!("{domain}.txt")), body)?;
        }
        manifest
            .adstxt
            .insert(domain.clone(), ManifestEntry::from_result(result));
    }
    for (domain, (result, _)) in &snapshot.sellersjson_files {
        check_domain_filename(domain)?;
        if let Some(body) = &result.body {
            write_atomic(&sellersjson_dir.join(format!("{domain}.json")), body)?;
        }
        manifest
            .sellersjson
            .insert(domain.clone(), ManifestEntry::from_result(result));
    }

    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RegistryError::MalformedManifest(e.to_string()))?;
    json.push('\n');
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(dir)
}

fn load_entry(
    domain: &str,
    entry: &ManifestEntry,
    body_path: &Path,
) -> Result<FetchResult, RegistryError> {
    let status = FetchStatus::parse(&entry.status).ok_or_else(|| {
        RegistryError::MalformedManifest(format!("unknown status {:?} for {domain}", entry.status))
    })?;
    let body = if let Some(expected_digest) = &entry.sha256 {
        let bytes = fs::read(body_path).map_err(io_err(body_path))?;
        if sha256_hex(&bytes) != *expected_digest {
            return Err(RegistryError::DigestMismatch {
                domain: domain.to_string(),
            });
        }
        Some(bytes)
    } else {
        None
    };
    Ok(FetchResult {
        url_requested: entry.url_requested.clone(),
        final_url: entry.final_url.clone(),
        status,
        http_status: entry.http_status,
        body,
        fetched_at: entry.fetched_at,
        content_digest: entry.sha256.clone(),
    })
}

/// Load the snapshot saved for `date` under `root`, re-verifying digests and
/// re-parsing every stored body.
pub fn load_snapshot(root: &Path, date: NaiveDate) -> Result<Snapshot, RegistryError> {
    let dir = snapshot_dir(root, date);
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(RegistryError::MissingManifest {
            root: root.to_path_buf(),
            date,
        });
    }
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| RegistryError::MalformedManifest(e.to_string()))?;

    let mut snapshot = Snapshot::empty(manifest.snapshot_date);
    for (domain, entry) in &manifest.adstxt {
        check_domain_filename(domain)?;
        let result = load_entry(domain, entry, &dir.join("adstxt").join(format!("{domain}.txt")))?;
        let parsed = result.body.as_ref().map(|body| {
            let mut file = adstxt::parse_ads_txt_bytes(body, domain);
            file.fetched_at = Some(result.fetched_at);
            file
        });
        snapshot.adstxt_files.insert(domain.clone(), (result, parsed));
    }
    for (domain, entry) in &manifest.sellersjson {
        check_domain_filename(domain)?;
        let result = load_entry(
            domain,
            entry,
            &dir.join("sellersjson").join(format!("{domain}.json")),
        )?;
        let parsed = result.body.as_ref().map(|body| {
            let mut file = sellersjson::parse_sellers_json_bytes(body, domain);
            file.fetched_at = Some(result.fetched_at);
            file
        });
        snapshot
            .sellersjson_files
            .insert(domain.clone(), (result, parsed));
    }
    Ok(snapshot)
}
