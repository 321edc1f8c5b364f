//! Shared helpers for integration tests: a minimal in-process HTTP server,
//! snapshot builders, and independent oracle implementations that the
//! acceptance suite checks the real code against.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use adchain::adstxt::parse_ads_txt;
use adchain::fetcher::{sha256_hex, FetchResult, FetchStatus, Snapshot};
use adchain::sellersjson::{parse_sellers_json, SellerType};
use chrono::{NaiveDate, TimeZone, Utc};

pub fn fixture_path(relative: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(relative)
}

// ------------------------------------------------------------------ server

/// What the test server answers for one (host, path) route.
#[derive(Debug, Clone)]
pub enum Route {
    Body(u16, String),
    /// 301 with the given Location.
    Redirect(String),
    /// Sleep, then answer 200. Long enough sleeps trip the client timeout.
    Slow(Duration, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeenRequest {
    pub host: String,
    pub path: String,
}

/// Tiny blocking HTTP/1.0-style server. Routes match on the Host header and
/// request path; unknown routes answer 404.
pub struct TestServer {
    pub addr: SocketAddr,
    requests: Arc<Mutex<Vec<SeenRequest>>>,
    max_in_flight: Arc<AtomicUsize>,
    shutdown: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl TestServer {
    pub fn start(routes: BTreeMap<(String, String), Route>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().unwrap();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let max_in_flight = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(AtomicBool::new(false));

        let handle = {
            let requests = requests.clone();
            let shutdown = shutdown.clone();
            let max_in_flight = max_in_flight.clone();
            let routes = Arc::new(routes);
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let requests = requests.clone();
                    let routes = routes.clone();
                    let in_flight = in_flight.clone();
                    let max_in_flight = max_in_flight.clone();
                    std::thread::spawn(move || {
                        let current = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        max_in_flight.fetch_max(current, Ordering::SeqCst);
                        let _ = handle_connection(stream, &routes, &requests);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                    });
                }
            })
        };

        TestServer {
            addr,
            requests,
            max_in_flight,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn requests(&self) -> Vec<SeenRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Requests for the transparency files themselves, i.e. excluding
    /// redirect hops.
    pub fn initial_requests(&self) -> Vec<SeenRequest> {
        self.requests()
            .into_iter()
            .filter(|r| r.path == "/ads.txt" || r.path == "/sellers.json")
            .collect()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    routes: &BTreeMap<(String, String), Route>,
    requests: &Mutex<Vec<SeenRequest>>,
) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_millis(500)))?;
    let mut stream = stream;

    // Read the request head without line-buffering so that non-HTTP bytes
    // (e.g. a TLS ClientHello probing an HTTPS URL) fail fast instead of
    // stalling on a missing newline.
    let mut head = Vec::new();
    let mut buf = [0u8; 2048];
    loop {
        let n = match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(_) => break,
        };
        head.extend_from_slice(&buf[..n]);
        if !head.starts_with(b"GET") && !b"GET".starts_with(&head[..head.len().min(3)]) {
            let _ = stream.write_all(b"HTTP/1.1 400 Bad Request\r\nConnection: close\r\n\r\n");
            return Ok(());
        }
        if head.windows(4).any(|w| w == b"\r\n\r\n") || head.len() > 16 * 1024 {
            break;
        }
    }

    let head = String::from_utf8_lossy(&head);
    let mut lines = head.lines();
    let request_line = lines.next().unwrap_or("");
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("/")
        .to_string();
    let mut host = String::new();
    for line in lines {
        if line.is_empty() {
            break;
        }
        if let Some(value) = line.strip_prefix("Host:").or_else(|| line.strip_prefix("host:")) {
            host = value.trim().split(':').next().unwrap_or("").to_string();
        }
    }
    requests.lock().unwrap().push(SeenRequest {
        host: host.clone(),
        path: path.clone(),
    });

    match routes.get(&(host, path)) {
        Some(Route::Body(status, body)) => write_response(&mut stream, *status, body),
        Some(Route::Redirect(location)) => {
            let head = format!(
                "HTTP/1.1 301 Moved Permanently\r\nLocation: {location}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
            );
            stream.write_all(head.as_bytes())
        }
        Some(Route::Slow(delay, body)) => {
            std::thread::sleep(*delay);
            write_response(&mut stream, 200, body)
        }
        None => write_response(&mut stream, 404, "not found"),
    }
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        404 => "Not Found",
        _ => "Status",
    };
    let head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(body.as_bytes())
}

// ----------------------------------------------------------------- builders

pub fn fetch_ok(url: &str, body: &str) -> FetchResult {
    FetchResult {
        url_requested: url.to_string(),
        final_url: url.to_string(),
        status: FetchStatus::Ok,
        http_status: Some(200),
        body: Some(body.as_bytes().to_vec()),
        fetched_at: Utc.with_ymd_and_hms(2024, 1, 15, 6, 0, 0).unwrap(),
        content_digest: Some(sha256_hex(body.as_bytes())),
    }
}

pub fn fetch_failed(url: &str) -> FetchResult {
    FetchResult {
        url_requested: url.to_string(),
        final_url: url.to_string(),
        status: FetchStatus::NotFound,
        http_status: Some(404),
        body: None,
        fetched_at: Utc.with_ymd_and_hms(2024, 1, 15, 6, 0, 0).unwrap(),
        content_digest: None,
    }
}

/// Build a snapshot from in-memory file texts, parsing them the way a crawl
/// would. A `None` body models a domain whose fetch failed.
pub fn snapshot_from_text(
    date: NaiveDate,
    adstxt: &[(&str, Option<&str>)],
    sellersjson: &[(&str, Option<&str>)],
) -> Snapshot {
    let mut snapshot = Snapshot::empty(date);
    for (domain, body) in adstxt {
        let entry = match body {
            Some(text) => (
                fetch_ok(&format!("https://{domain}/ads.txt"), text),
                Some(parse_ads_txt(text, domain)),
            ),
            None => (fetch_failed(&format!("https://{domain}/ads.txt")), None),
        };
        snapshot.adstxt_files.insert(domain.to_string(), entry);
    }
    for (domain, body) in sellersjson {
        let entry = match body {
            Some(text) => (
                fetch_ok(&format!("https://{domain}/sellers.json"), text),
                Some(parse_sellers_json(text, domain)),
            ),
            None => (fetch_failed(&format!("https://{domain}/sellers.json")), None),
        };
        snapshot.sellersjson_files.insert(domain.to_string(), entry);
    }
    snapshot
}

// ------------------------------------------------------------------ oracles

/// Flattened relationship tuple used to compare implementations.
pub type RelTuple = (String, String, String, SellerType, bool);

/// Independent brute-force verification: a plain nested loop over every
/// publisher's DIRECT entries and every sellers.json lookup, with its own
/// first-occurrence dedupe.
pub fn brute_force_verify(snapshot: &Snapshot, strict_mode: bool) -> Vec<RelTuple> {
    let mut out = std::collections::BTreeSet::new();
    for (publisher, (_, parsed)) in &snapshot.adstxt_files {
        let Some(file) = parsed else { continue };
        let mut seen = std::collections::HashSet::new();
        for record in &file.records {
            if record.relationship != adchain::adstxt::Relationship::Direct {
                continue;
            }
            if !seen.insert((record.ad_system_domain.clone(), record.seller_account_id.clone())) {
                continue;
            }
            let Some((_, Some(sellers))) = snapshot.sellersjson_files.get(&record.ad_system_domain)
            else {
                continue;
            };
            let Some(seller) = sellers.sellers.get(record.seller_account_id.trim()) else {
                continue;
            };
            let is_publisher_type =
                seller.seller_type == SellerType::Publisher || seller.seller_type == SellerType::Both;
            if strict_mode && !is_publisher_type {
                continue;
            }
            out.insert((
                publisher.clone(),
                record.ad_system_domain.clone(),
                record.seller_account_id.clone(),
                seller.seller_type,
                is_publisher_type,
            ));
        }
    }
    out.into_iter().collect()
}

/// O(n^2) average ranks: rank of x = (# smaller) + (# equal + 1) / 2.
pub fn naive_average_ranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&x| {
            let smaller = values.iter().filter(|&&y| y < x).count();
            let equal = values.iter().filter(|&&y| y == x).count();
            smaller as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson correlation.
pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Rank-then-Pearson Spearman oracle.
pub fn naive_spearman_rho(x: &[f64], y: &[f64]) -> f64 {
    naive_pearson(&naive_average_ranks(x), &naive_average_ranks(y))
}

// Reference two-sided p-value for the t statistic, via the regularized
// incomplete beta function (Lentz continued fraction + Lanczos ln-gamma).
// Independent of the statrs implementation used by the library.

fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut series = 1.000000000190015;
    for c in COEFFS {
        y += 1.0;
        series += c / y;
    }
    -tmp + (2.5066282746310005 * series / x).ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3.0e-16;
    const FPMIN: f64 = 1.0e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn reference_t_p_value(t: f64, df: f64) -> f64 {
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// The p-value the t approximation assigns to a Spearman rho at sample size n.
pub fn reference_spearman_p(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    reference_t_p_value(t, df)
}
