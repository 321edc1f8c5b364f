//! Polite HTTP collection of ads.txt and sellers.json files.
//!
//! The crawl contract is one initial request per unique domain per run, plus
//! whatever redirect hops the server demands. Files are single-shot root
//! fetches (`/ads.txt`, `/sellers.json`); there is deliberately no robots.txt
//! handling, no retry loop, and no recurring schedule. A run produces a dated
//! [`Snapshot`] that downstream analysis treats as immutable.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::SocketAddr;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adstxt::{self, AdsTxtFile};
use crate::sellersjson::{self, SellersJsonFile};

/// Outcome class of a single fetch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchStatus {
    Ok,
    NotFound,
    Timeout,
    DnsFailure,
    TooManyRedirects,
    TransportError,
}

impl FetchStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FetchStatus::Ok => "ok",
            FetchStatus::NotFound => "not_found",
            FetchStatus::Timeout => "timeout",
            FetchStatus::DnsFailure => "dns_failure",
            FetchStatus::TooManyRedirects => "too_many_redirects",
            FetchStatus::TransportError => "transport_error",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "ok" => FetchStatus::Ok,
            "not_found" => FetchStatus::NotFound,
            "timeout" => FetchStatus::Timeout,
            "dns_failure" => FetchStatus::DnsFailure,
            "too_many_redirects" => FetchStatus::TooManyRedirects,
            "transport_error" => FetchStatus::TransportError,
            _ => return None,
        })
    }
}

/// Everything recorded about one fetch attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResult {
    pub url_requested: String,
    /// URL after following redirects; equals `url_requested` when none fired.
    pub final_url: String,
    pub status: FetchStatus,
    pub http_status: Option<u16>,
    pub body: Option<Vec<u8>>,
    pub fetched_at: DateTime<Utc>,
    /// SHA-256 hex of the body, present exactly when the body is.
    pub content_digest: Option<String>,
}

impl FetchResult {
    fn failure(url: &str, status: FetchStatus, http_status: Option<u16>) -> Self {
        FetchResult {
            url_requested: url.to_string(),
            final_url: url.to_string(),
            status,
            http_status,
            body: None,
            fetched_at: Utc::now(),
            content_digest: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Fetch policy for a crawl run.
#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub timeout: Duration,
    pub max_redirects: usize,
    pub max_concurrency: usize,
    pub user_agent: String,
    /// Request over HTTPS first, falling back to plain HTTP on TLS failure.
    /// Disable only when pointing the crawler at a plain-HTTP test server.
    pub use_https: bool,
    /// Static DNS overrides (domain -> socket address), used by test
    /// harnesses and offline replays.
    pub dns_overrides: BTreeMap<String, SocketAddr>,
}

pub const DEFAULT_TIMEOUT_SECS: u64 = 30;
pub const TIMEOUT_ENV_VAR: &str = "ADCHAIN_TIMEOUT_SECS";

impl Default for FetchConfig {
    fn default() -> Self {
        let timeout_secs = std::env::var(TIMEOUT_ENV_VAR)
            .ok()
            .and_then(|v| v.parse::<u64>().ok())
            .unwrap_or(DEFAULT_TIMEOUT_SECS);
        FetchConfig {
            timeout: Duration::from_secs(timeout_secs),
            max_redirects: 5,
            max_concurrency: 8,
            user_agent: concat!(
                "adchain/",
                env!("CARGO_PKG_VERSION"),
                " (single-shot transparency-file fetcher; +https://example.invalid/contact)"
            )
            .to_string(),
            use_https: true,
            dns_overrides: BTreeMap::new(),
        }
    }
}

impl FetchConfig {
    fn build_client(&self) -> Result<reqwest::blocking::Client, reqwest::Error> {
        let mut builder = reqwest::blocking::Client::builder()
            .user_agent(self.user_agent.clone())
            .timeout(self.timeout)
            .redirect(reqwest::redirect::Policy::limited(self.max_redirects));
        for (domain, addr) in &self.dns_overrides {
            builder = builder.resolve(domain, *addr);
        }
        builder.build()
    }
}

/// Walk an error chain and map it onto a [`FetchStatus`]. Kept separate from
/// the reqwest-specific checks so the mapping itself is unit-testable.
pub(crate) fn classify_error_chain(err: &(dyn std::error::Error + 'static)) -> FetchStatus {
    let mut current: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = current {
        let text = e.to_string().to_ascii_lowercase();
        if text.contains("dns") || text.contains("failed to lookup address") {
            return FetchStatus::DnsFailure;
        }
        current = e.source();
    }
    FetchStatus::TransportError
}

fn classify_reqwest_error(err: &reqwest::Error) -> FetchStatus {
    if err.is_timeout() {
        FetchStatus::Timeout
    } else if err.is_redirect() {
        FetchStatus::TooManyRedirects
    } else {
        classify_error_chain(err)
    }
}

/// TLS-level failures trigger the plain-HTTP fallback; anything else does not.
fn is_tls_failure(err: &reqwest::Error) -> bool {
    let mut current: Option<&(dyn std::error::Error + 'static)> = Some(err);
    while let Some(e) = current {
        let text = e.to_string().to_ascii_lowercase();
        if text.contains("tls") || text.contains("ssl") || text.contains("certificate") || text.contains("handshake") {
            return true;
        }
        current = e.source();
    }
    false
}

fn read_response(url: &str, response: reqwest::blocking::Response) -> FetchResult {
    let final_url = response.url().to_string();
    let code = response.status().as_u16();
    if response.status().is_success() {
        return match response.bytes() {
            Ok(bytes) => {
                let body = bytes.to_vec();
                let digest = sha256_hex(&body);
                FetchResult {
                    url_requested: url.to_string(),
                    final_url,
                    status: FetchStatus::Ok,
                    http_status: Some(code),
                    body: Some(body),
                    fetched_at: Utc::now(),
                    content_digest: Some(digest),
                }
            }
            Err(e) => FetchResult {
                url_requested: url.to_string(),
                final_url,
                status: classify_reqwest_error(&e),
                http_status: Some(code),
                body: None,
                fetched_at: Utc::now(),
                content_digest: None,
            },
        };
    }
    let status = if code == 404 {
        FetchStatus::NotFound
    } else {
        FetchStatus::TransportError
    };
    FetchResult {
        url_requested: url.to_string(),
        final_url,
        status,
        http_status: Some(code),
        body: None,
        fetched_at: Utc::now(),
        content_digest: None,
    }
}

fn fetch_path(
    client: &reqwest::blocking::Client,
    domain: &str,
    path: &str,
    use_https: bool,
) -> FetchResult {
    if use_https {
        let https_url = format!("https://{domain}{path}");
        match client.get(&https_url).send() {
            Ok(response) => return read_response(&https_url, response),
            Err(e) if is_tls_failure(&e) => {} // retry over plain HTTP
            Err(e) => return FetchResult::failure(&https_url, classify_reqwest_error(&e), None),
        }
    }
    let http_url = format!("http://{domain}{path}");
    match client.get(&http_url).send() {
        Ok(response) => read_response(&http_url, response),
        Err(e) => FetchResult::failure(&http_url, classify_reqwest_error(&e), None),
    }
}

fn fetch_path_fresh_client(domain: &str, path: &str, config: &FetchConfig) -> FetchResult {
    match config.build_client() {
        Ok(client) => fetch_path(&client, domain, path, config.use_https),
        Err(_) => FetchResult::failure(
            &format!("https://{domain}{path}"),
            FetchStatus::TransportError,
            None,
        ),
    }
}

/// Fetch `https://<domain>/ads.txt` (HTTP fallback on TLS failure).
pub fn fetch_ads_txt(publisher_domain: &str, config: &FetchConfig) -> FetchResult {
    fetch_path_fresh_client(publisher_domain, "/ads.txt", config)
}

/// Fetch `https://<domain>/sellers.json` (HTTP fallback on TLS failure).
pub fn fetch_sellers_json(ad_system_domain: &str, config: &FetchConfig) -> FetchResult {
    fetch_path_fresh_client(ad_system_domain, "/sellers.json", config)
}

/// One dated collection run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub snapshot_date: NaiveDate,
    pub adstxt_files: BTreeMap<String, (FetchResult, Option<AdsTxtFile>)>,
    pub sellersjson_files: BTreeMap<String, (FetchResult, Option<SellersJsonFile>)>,
}

impl Snapshot {
    pub fn empty(snapshot_date: NaiveDate) -> Self {
        Snapshot {
            snapshot_date,
            adstxt_files: BTreeMap::new(),
            sellersjson_files: BTreeMap::new(),
        }
    }

    /// Publishers whose ads.txt fetch succeeded and parsed.
    pub fn parsed_adstxt(&self) -> impl Iterator<Item = (&str, &AdsTxtFile)> {
        self.adstxt_files
            .iter()
            .filter_map(|(domain, (_, parsed))| parsed.as_ref().map(|f| (domain.as_str(), f)))
    }

    /// Ad systems whose sellers.json fetch succeeded and parsed.
    pub fn parsed_sellersjson(&self) -> impl Iterator<Item = (&str, &SellersJsonFile)> {
        self.sellersjson_files
            .iter()
            .filter_map(|(domain, (_, parsed))| parsed.as_ref().map(|f| (domain.as_str(), f)))
    }
}

/// Client-side record of one initial request issued during a crawl.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestLogEntry {
    pub domain: String,
    pub url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    AdsTxt,
    SellersJson,
}

/// Crawl both domain lists into a snapshot, returning the request log so the
/// one-request-per-domain contract can be audited.
pub fn crawl_with_log(
    publishers: &[String],
    ad_systems: &[String],
    snapshot_date: NaiveDate,
    config: &FetchConfig,
) -> (Snapshot, Vec<RequestLogEntry>) {
    let publishers: BTreeSet<String> = publishers.iter().map(|d| d.trim().to_ascii_lowercase()).filter(|d| !d.is_empty()).collect();
    let ad_systems: BTreeSet<String> = ad_systems.iter().map(|d| d.trim().to_ascii_lowercase()).filter(|d| !d.is_empty()).collect();

    let mut work: VecDeque<(FileKind, String)> = VecDeque::new();
    work.extend(publishers.iter().map(|d| (FileKind::AdsTxt, d.clone())));
    work.extend(ad_systems.iter().map(|d| (FileKind::SellersJson, d.clone())));

    let queue = Mutex::new(work);
    let log = Mutex::new(Vec::new());
    let adstxt_results = Mutex::new(Vec::new());
    let sellersjson_results = Mutex::new(Vec::new());

    // One client for the whole run: workers share its connection pool.
    let client = config.build_client();
    let workers = config.max_concurrency.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let item = queue.lock().unwrap().pop_front();
                let Some((kind, domain)) = item else { break };
                let path = match kind {
                    FileKind::AdsTxt => "/ads.txt",
                    FileKind::SellersJson => "/sellers.json",
                };
                let result = match &client {
                    Ok(client) => fetch_path(client, &domain, path, config.use_https),
                    Err(_) => FetchResult::failure(
                        &format!("https://{domain}{path}"),
                        FetchStatus::TransportError,
                        None,
                    ),
                };
                log.lock().unwrap().push(RequestLogEntry {
                    domain: domain.clone(),
                    url: format!("{}://{domain}{path}", if config.use_https { "https" } else { "http" }),
                });
                match kind {
                    FileKind::AdsTxt => adstxt_results.lock().unwrap().push((domain, result)),
                    FileKind::SellersJson => sellersjson_results.lock().unwrap().push((domain, result)),
                }
            });
        }
    });

    let mut snapshot = Snapshot::empty(snapshot_date);
    for (domain, result) in adstxt_results.into_inner().unwrap() {
        let parsed = match (&result.status, &result.body) {
            (FetchStatus::Ok, Some(body)) => {
                let mut file = adstxt::parse_ads_txt_bytes(body, &domain);
                file.fetched_at = Some(result.fetched_at);
                Some(file)
            }
            _ => None,
        };
        snapshot.adstxt_files.insert(domain, (result, parsed));
    }
    for (domain, result) in sellersjson_results.into_inner().unwrap() {
        let parsed = match (&result.status, &result.body) {
            (FetchStatus::Ok, Some(body)) => {
                let mut file = sellersjson::parse_sellers_json_bytes(body, &domain);
                file.fetched_at = Some(result.fetched_at);
                Some(file)
            }
            _ => None,
        };
        snapshot.sellersjson_files.insert(domain, (result, parsed));
    }

    let mut log = log.into_inner().unwrap();
    log.sort_by(|a, b| (&a.domain, &a.url).cmp(&(&b.domain, &b.url)));
    (snapshot, log)
}

/// Crawl both domain lists into a snapshot.
pub fn crawl(
    publishers: &[String],
    ad_systems: &[String],
    snapshot_date: NaiveDate,
    config: &FetchConfig,
) -> Snapshot {
    crawl_with_log(publishers, ad_systems, snapshot_date, config).0
}
