//! Command-line frontend: composable stages over a snapshot directory.
//!
//! `fetch` is the only command that touches the network; everything else
//! reads snapshots and annotation files from disk and writes deterministic
//! CSV (or JSON) tables. Exit codes: 0 success, 2 partial success with a
//! `warnings.txt` next to the outputs, 1 fatal error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytics::{
    self, diff_relationships, histogram_relationship_counts, network_site_rates, popularity_split,
    traffic_retention_correlation, GroupBy,
};
use crate::crossref::{
    detect_pooling, verify_relationships, VerificationOutcome, VerifiedRelationship, VerifyMode,
};
use crate::fetcher::{self, FetchConfig, FetchStatus};
use crate::registry::{
    ingest_labels, ingest_traffic, load_snapshot, save_snapshot, EntityMap,
    PublicSuffixList, SiteLabel, TrafficLabel,
};
use crate::report;

#[derive(Debug, Parser)]
#[command(
    name = "adchain",
    version,
    about = "Audit publisher / ad-network relationships from ads.txt and sellers.json snapshots"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Idmatch,
    Strict,
}

impl From<ModeArg> for VerifyMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Idmatch => VerifyMode::IdMatch,
            ModeArg::Strict => VerifyMode::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupByArg {
    Reliability,
    Factual,
}

impl From<GroupByArg> for GroupBy {
    fn from(arg: GroupByArg) -> Self {
        match arg {
            GroupByArg::Reliability => GroupBy::ReliabilityTier,
            GroupByArg::Factual => GroupBy::FactualReporting,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl ads.txt and sellers.json files into a dated snapshot.
    Fetch(FetchCmd),
    /// Compute verified relationships for one snapshot.
    Verify(VerifyCmd),
    /// Diff verified relationships between two snapshots per ad system.
    Diff(DiffCmd),
    /// Correlate traffic tiers with relationship retention per ad system.
    Correlate(CorrelateCmd),
    /// Partition domains into popular/unpopular at a traffic percentile.
    Split(SplitCmd),
    /// Verified-relationship rates per credibility tier and ad system.
    Tiers(TiersCmd),
    /// Seller accounts claimed DIRECT by organizationally unrelated sites.
    Pools(PoolsCmd),
    /// Run verify, diff, correlate, tiers, histogram, and pools in one pass.
    Report(ReportCmd),
}

#[derive(Debug, Args)]
pub struct FetchCmd {
    /// File with one publisher domain per line (# comments allowed).
    #[arg(long)]
    pub publishers: PathBuf,
    /// File with one ad-system domain per line.
    #[arg(long)]
    pub ad_systems: PathBuf,
    #[arg(long)]
    pub snapshot_root: PathBuf,
    /// Snapshot date (YYYY-MM-DD); defaults to today (UTC).
    #[arg(long)]
    pub date: Option<NaiveDate>,
    /// Request timeout in seconds (env ADCHAIN_TIMEOUT_SECS also applies).
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub max_redirects: usize,
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    /// Directory for the warnings file; defaults to the snapshot directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    #[arg(long, value_enum, default_value_t = ModeArg::Idmatch)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct DiffCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub before: NaiveDate,
    #[arg(long)]
    pub after: NaiveDate,
    #[arg(long, value_enum, default_value_t = ModeArg::Idmatch)]
    pub mode: ModeArg,
    /// Restrict to these ad systems (repeatable); default is every ad system
    /// verified in either snapshot.
    #[arg(long = "network")]
    pub networks: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct CorrelateCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub before: NaiveDate,
    #[arg(long)]
    pub after: NaiveDate,
    #[arg(long, value_enum, default_value_t = ModeArg::Idmatch)]
    pub mode: ModeArg,
    /// labels.csv with MBFC-style traffic labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Restrict to these ad systems (repeatable); default is every ad system
    /// verified in the before snapshot.
    #[arg(long = "network")]
    pub networks: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct SplitCmd {
    /// traffic.csv (`domain,monthly_visits,as_of`).
    #[arg(long)]
    pub traffic: PathBuf,
    #[arg(long, default_value_t = 80.0)]
    pub percentile: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct TiersCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    #[arg(long, value_enum, default_value_t = ModeArg::Idmatch)]
    pub mode: ModeArg,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = GroupByArg::Reliability)]
    pub group_by: GroupByArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct PoolsCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    /// entities.json mapping domain to owning entity.
    #[arg(long)]
    pub entities: PathBuf,
    /// Public suffix list file; defaults to the bundled snapshot.
    #[arg(long)]
    pub psl: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    #[arg(long)]
    pub snapshot_root: PathBuf,
    #[arg(long)]
    pub before: NaiveDate,
    #[arg(long)]
    pub after: NaiveDate,
    #[arg(long, value_enum, default_value_t = ModeArg::Idmatch)]
    pub mode: ModeArg,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub traffic: PathBuf,
    #[arg(long)]
    pub entities: PathBuf,
    #[arg(long)]
    pub psl: Option<PathBuf>,
    #[arg(long, default_value_t = 80.0)]
    pub percentile: f64,
    /// Histogram bin edges for relationship counts per publisher.
    #[arg(long, default_value = "0,1,2,5,10,20,50,100,200,500")]
    pub bin_edges: String,
    #[arg(long, value_enum, default_value_t = GroupByArg::Reliability)]
    pub group_by: GroupByArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
}

/// Collects output files and warnings for one command run.
struct OutputSink {
    dir: PathBuf,
    format: FormatArg,
    warnings: Vec<String>,
}

impl OutputSink {
    fn new(dir: &Path, format: FormatArg) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            format,
            warnings: Vec::new(),
        })
    }

    fn warn(&mut self, line: impl Into<String>) {
        self.warnings.push(line.into());
    }

    fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("cannot rename into {}", path.display()))?;
        Ok(())
    }

    /// Write `<stem>.csv` or `<stem>.json` depending on the selected format.
    fn write_table<T: serde::Serialize>(&self, stem: &str, csv: &str, rows: &T) -> Result<()> {
        match self.format {
            FormatArg::Csv => self.write_atomic(&format!("{stem}.csv"), csv.as_bytes()),
            FormatArg::Json => {
                let mut json = serde_json::to_string_pretty(rows)?;
                json.push('\n');
                self.write_atomic(&format!("{stem}.json"), json.as_bytes())
            }
        }
    }

    /// Write (or clear) warnings.txt and map warnings onto the exit code.
    fn finish(self) -> Result<i32> {
        let path = self.dir.join("warnings.txt");
        if self.warnings.is_empty() {
            if path.exists() {
                fs::remove_file(&path)
                    .with_context(|| format!("cannot remove stale {}", path.display()))?;
            }
            Ok(0)
        } else {
            let mut text = self.warnings.join("\n");
            text.push('\n');
            self.write_atomic("warnings.txt", text.as_bytes())?;
            eprintln!("{} warning(s) written to {}", self.warnings.len(), path.display());
            Ok(2)
        }
    }
}

fn require_inputs(paths: &[&Path]) -> Result<()> {
    for path in paths {
        if !path.exists() {
            bail!("input file {} does not exist", path.display());
        }
    }
    Ok(())
}

fn load_psl(path: &Option<PathBuf>) -> Result<PublicSuffixList> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read public suffix list {}", p.display()))?;
            Ok(PublicSuffixList::parse(&text))
        }
        None => Ok(PublicSuffixList::bundled()),
    }
}

fn read_domain_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read domain list {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn load_labels(sink: &mut OutputSink, path: &Path) -> Result<BTreeMap<String, SiteLabel>> {
    let (labels, warnings) = ingest_labels(path)?;
    for w in warnings {
        sink.warn(format!("labels: {w}"));
    }
    Ok(labels)
}

fn publishers_verified_with<'a>(
    relationships: &'a BTreeSet<VerifiedRelationship>,
    ad_system: &str,
) -> BTreeSet<&'a str> {
    relationships
        .iter()
        .filter(|r| r.ad_system_domain == ad_system)
        .map(|r| r.publisher_domain.as_str())
        .collect()
}

fn ad_systems_of(relationships: &BTreeSet<VerifiedRelationship>) -> BTreeSet<String> {
    relationships
        .iter()
        .map(|r| r.ad_system_domain.clone())
        .collect()
}

fn plural<'a>(n: usize, one: &'a str, many: &'a str) -> &'a str {
    if n == 1 {
        one
    } else {
        many
    }
}

fn warn_coverage(sink: &mut OutputSink, stage: &str, outcome: &VerificationOutcome) {
    let coverage = &outcome.coverage;
    if coverage.entries_unverifiable > 0 {
        let missing: Vec<&str> = coverage
            .ad_systems_missing
            .iter()
            .map(String::as_str)
            .collect();
        let n = coverage.entries_unverifiable;
        sink.warn(format!(
            "{stage}: {n} unverifiable DIRECT {} ({})",
            plural(n, "entry", "entries"),
            missing.join(";")
        ));
    }
}

fn run_fetch(cmd: &FetchCmd) -> Result<i32> {
    require_inputs(&[&cmd.publishers, &cmd.ad_systems])?;
    let date = cmd.date.unwrap_or_else(|| chrono::Utc::now().date_naive());
    let mut config = FetchConfig::default();
    if let Some(secs) = cmd.timeout_secs {
        config.timeout = std::time::Duration::from_secs(secs);
    }
    config.max_redirects = cmd.max_redirects;
    config.max_concurrency = cmd.concurrency;

    let publishers = read_domain_list(&cmd.publishers)?;
    let ad_systems = read_domain_list(&cmd.ad_systems)?;
    let (snapshot, log) = fetcher::crawl_with_log(&publishers, &ad_systems, date, &config);
    let dir = save_snapshot(&snapshot, &cmd.snapshot_root)?;

    let out_dir = cmd.out.clone().unwrap_or_else(|| dir.clone());
    let mut sink = OutputSink::new(&out_dir, FormatArg::Csv)?;
    let mut ok = 0usize;
    let statuses = snapshot
        .adstxt_files
        .iter()
        .map(|(domain, (result, _))| ("ads.txt", domain, result))
        .chain(
            snapshot
                .sellersjson_files
                .iter()
                .map(|(domain, (result, _))| ("sellers.json", domain, result)),
        );
    for (kind, domain, result) in statuses {
        if result.status == FetchStatus::Ok {
            ok += 1;
        } else {
            sink.warn(format!("fetch {domain} ({kind}): {}", result.status.as_str()));
        }
    }
    println!(
        "snapshot {date}: {} request(s) issued, {ok} ok, saved to {}",
        log.len(),
        dir.display()
    );
    sink.finish()
}

fn run_verify(cmd: &VerifyCmd) -> Result<i32> {
    let snapshot = load_snapshot(&cmd.snapshot_root, cmd.date)?;
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;
    let outcome = verify_relationships(&snapshot, cmd.mode.into());
    warn_coverage(&mut sink, &format!("verify {}", cmd.date), &outcome);
    let rows: Vec<&VerifiedRelationship> = outcome.relationships.iter().collect();
    sink.write_table(
        "relationships",
        &report::relationships_csv(outcome.relationships.iter()),
        &rows,
    )?;
    println!(
        "{}: {} verified relationships across {} publishers",
        cmd.date,
        outcome.relationships.len(),
        publishers_of_any(&outcome.relationships).len()
    );
    sink.finish()
}

fn publishers_of_any(relationships: &BTreeSet<VerifiedRelationship>) -> BTreeSet<&str> {
    relationships
        .iter()
        .map(|r| r.publisher_domain.as_str())
        .collect()
}

fn verify_pair(
    snapshot_root: &Path,
    before: NaiveDate,
    after: NaiveDate,
    mode: VerifyMode,
    sink: &mut OutputSink,
) -> Result<(VerificationOutcome, VerificationOutcome)> {
    let before_snapshot = load_snapshot(snapshot_root, before)?;
    let after_snapshot = load_snapshot(snapshot_root, after)?;
    let before_outcome = verify_relationships(&before_snapshot, mode);
    let after_outcome = verify_relationships(&after_snapshot, mode);
    warn_coverage(sink, &format!("verify {before}"), &before_outcome);
    warn_coverage(sink, &format!("verify {after}"), &after_outcome);
    Ok((before_outcome, after_outcome))
}

fn diff_rows(
    before: &VerificationOutcome,
    after: &VerificationOutcome,
    networks: &[String],
    before_date: NaiveDate,
    after_date: NaiveDate,
) -> Vec<analytics::RelationshipDiff> {
    let networks: BTreeSet<String> = if networks.is_empty() {
        let mut all = ad_systems_of(&before.relationships);
        all.extend(ad_systems_of(&after.relationships));
        all
    } else {
        networks.iter().map(|n| n.to_ascii_lowercase()).collect()
    };
    networks
        .iter()
        .map(|network| {
            diff_relationships(
                &before.relationships,
                &after.relationships,
                network,
                before_date,
                after_date,
            )
        })
        .collect()
}

fn run_diff(cmd: &DiffCmd) -> Result<i32> {
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;
    let (before, after) = verify_pair(
        &cmd.snapshot_root,
        cmd.before,
        cmd.after,
        cmd.mode.into(),
        &mut sink,
    )?;
    let rows = diff_rows(&before, &after, &cmd.networks, cmd.before, cmd.after);
    sink.write_table("diff", &report::diff_csv(&rows), &rows)?;
    println!("{} ad system(s) diffed between {} and {}", rows.len(), cmd.before, cmd.after);
    sink.finish()
}

fn correlation_rows(
    before: &BTreeSet<VerifiedRelationship>,
    after: &BTreeSet<VerifiedRelationship>,
    labels: &BTreeMap<String, SiteLabel>,
    networks: &[String],
    sink: &mut OutputSink,
) -> Vec<report::CorrelationRow> {
    let networks: BTreeSet<String> = if networks.is_empty() {
        ad_systems_of(before)
    } else {
        networks.iter().map(|n| n.to_ascii_lowercase()).collect()
    };
    let mut rows = Vec::new();
    for network in &networks {
        let before_pubs = publishers_verified_with(before, network);
        let after_pubs = publishers_verified_with(after, network);
        let mut tiers: BTreeMap<String, TrafficLabel> = BTreeMap::new();
        let mut unlabeled = 0usize;
        for publisher in &before_pubs {
            match labels.get(*publisher).and_then(|l| l.traffic_label) {
                Some(tier) => {
                    tiers.insert(publisher.to_string(), tier);
                }
                None => unlabeled += 1,
            }
        }
        if unlabeled > 0 {
            sink.warn(format!(
                "correlate {network}: {unlabeled} verified {} a traffic label",
                plural(unlabeled, "publisher lacks", "publishers lack")
            ));
        }
        let retained: BTreeMap<String, bool> = before_pubs
            .iter()
            .map(|p| (p.to_string(), after_pubs.contains(*p)))
            .collect();
        match traffic_retention_correlation(&tiers, &retained) {
            Ok(result) => rows.push(report::CorrelationRow {
                ad_system_domain: network.clone(),
                n: result.correlation.n,
                rho: result.correlation.rho,
                p_value: result.correlation.p_value,
                minimal_drop_rate: result
                    .tier_drop_rates
                    .get(&TrafficLabel::Minimal)
                    .map(|(_, rate)| *rate),
            }),
            Err(e) => sink.warn(format!("correlate {network}: skipped: {e}")),
        }
    }
    rows
}

fn run_correlate(cmd: &CorrelateCmd) -> Result<i32> {
    require_inputs(&[&cmd.labels])?;
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;
    let labels = load_labels(&mut sink, &cmd.labels)?;
    let (before, after) = verify_pair(
        &cmd.snapshot_root,
        cmd.before,
        cmd.after,
        cmd.mode.into(),
        &mut sink,
    )?;
    let rows = correlation_rows(
        &before.relationships,
        &after.relationships,
        &labels,
        &cmd.networks,
        &mut sink,
    );
    sink.write_table("correlation", &report::correlation_csv(&rows), &rows)?;
    println!("{} correlation row(s) computed", rows.len());
    sink.finish()
}

fn run_split(cmd: &SplitCmd) -> Result<i32> {
    require_inputs(&[&cmd.traffic])?;
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;
    let (traffic, warnings) = ingest_traffic(&cmd.traffic)?;
    for w in warnings {
        sink.warn(format!("traffic: {w}"));
    }
    let visits: BTreeMap<String, u64> = traffic
        .iter()
        .map(|(domain, record)| (domain.clone(), record.monthly_visits))
        .collect();
    let split = popularity_split(&visits, cmd.percentile)?;
    sink.write_table("split", &report::split_csv(&split, &visits), &split)?;
    println!(
        "percentile {}: {} popular / {} unpopular, threshold {} monthly visits",
        split.percentile,
        split.popular.len(),
        split.unpopular.len(),
        split.threshold_visits
    );
    sink.finish()
}

fn tier_rate_table(
    snapshot: &fetcher::Snapshot,
    outcome: &VerificationOutcome,
    labels: &BTreeMap<String, SiteLabel>,
    group_by: GroupBy,
    sink: &mut OutputSink,
) -> analytics::NetworkSiteRates {
    let publishers: BTreeSet<String> = snapshot
        .parsed_adstxt()
        .map(|(domain, _)| domain.to_string())
        .collect();
    let rates = network_site_rates(&outcome.relationships, labels, &publishers, group_by);
    if rates.unlabeled_publishers > 0 {
        let n = rates.unlabeled_publishers;
        sink.warn(format!(
            "tiers: {n} {} with a parsed ads.txt not covered by the label file",
            plural(n, "publisher", "publishers")
        ));
    }
    rates
}

fn run_tiers(cmd: &TiersCmd) -> Result<i32> {
    require_inputs(&[&cmd.labels])?;
    let snapshot = load_snapshot(&cmd.snapshot_root, cmd.date)?;
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;
    let labels = load_labels(&mut sink, &cmd.labels)?;
    let outcome = verify_relationships(&snapshot, cmd.mode.into());
    warn_coverage(&mut sink, &format!("verify {}", cmd.date), &outcome);
    let rates = tier_rate_table(&snapshot, &outcome, &labels, cmd.group_by.into(), &mut sink);
    sink.write_table("tiers", &report::tiers_csv(&rates), &rates.rows)?;
    println!("{} tier rate row(s) computed", rates.rows.len());
    sink.finish()
}

fn run_pools(cmd: &PoolsCmd) -> Result<i32> {
    require_inputs(&[&cmd.entities])?;
    if let Some(psl) = &cmd.psl {
        require_inputs(&[psl])?;
    }
    let snapshot = load_snapshot(&cmd.snapshot_root, cmd.date)?;
    let sink = OutputSink::new(&cmd.out, cmd.format)?;
    let entities = EntityMap::load(&cmd.entities)?;
    let psl = load_psl(&cmd.psl)?;
    let pools = detect_pooling(&snapshot, &entities, &psl);
    sink.write_table("pools", &report::pools_csv(&pools), &pools)?;
    println!("{} pooling candidate(s) found", pools.len());
    sink.finish()
}

fn parse_bin_edges(text: &str) -> Result<Vec<u64>> {
    let edges: Vec<u64> = text
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .context("bin edges must be comma-separated non-negative integers")?;
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        bail!("bin edges must be strictly increasing with at least two edges");
    }
    Ok(edges)
}

fn run_report(cmd: &ReportCmd) -> Result<i32> {
    require_inputs(&[&cmd.labels, &cmd.traffic, &cmd.entities])?;
    if let Some(psl) = &cmd.psl {
        require_inputs(&[psl])?;
    }
    let edges = parse_bin_edges(&cmd.bin_edges)?;
    let mut sink = OutputSink::new(&cmd.out, cmd.format)?;

    let labels = load_labels(&mut sink, &cmd.labels)?;
    let (_traffic, traffic_warnings) = ingest_traffic(&cmd.traffic)?;
    for w in traffic_warnings {
        sink.warn(format!("traffic: {w}"));
    }
    let entities = EntityMap::load(&cmd.entities)?;
    let psl = load_psl(&cmd.psl)?;

    let before_snapshot = load_snapshot(&cmd.snapshot_root, cmd.before)?;
    let after_snapshot = load_snapshot(&cmd.snapshot_root, cmd.after)?;
    let mode: VerifyMode = cmd.mode.into();
    let before = verify_relationships(&before_snapshot, mode);
    let after = verify_relationships(&after_snapshot, mode);
    warn_coverage(&mut sink, &format!("verify {}", cmd.before), &before);
    warn_coverage(&mut sink, &format!("verify {}", cmd.after), &after);

    // relationships.csv carries both snapshots, before rows first.
    let ordered = report::ordered_relationships(&[&before.relationships, &after.relationships]);
    sink.write_table(
        "relationships",
        &report::relationships_csv(ordered.iter().copied()),
        &ordered,
    )?;

    let diffs = diff_rows(&before, &after, &[], cmd.before, cmd.after);
    sink.write_table("diff", &report::diff_csv(&diffs), &diffs)?;

    let correlations = correlation_rows(
        &before.relationships,
        &after.relationships,
        &labels,
        &[],
        &mut sink,
    );
    sink.write_table("correlation", &report::correlation_csv(&correlations), &correlations)?;

    let rates = tier_rate_table(&after_snapshot, &after, &labels, cmd.group_by.into(), &mut sink);
    sink.write_table("tiers", &report::tiers_csv(&rates), &rates.rows)?;

    let counts = crate::crossref::relationship_counts_per_publisher(&after_snapshot, mode);
    let bins = histogram_relationship_counts(&counts, &edges)?;
    sink.write_table("histogram", &report::histogram_csv(&edges, &bins), &bins)?;

    let pools = detect_pooling(&after_snapshot, &entities, &psl);
    sink.write_table("pools", &report::pools_csv(&pools), &pools)?;

    println!(
        "report complete: {} before / {} after relationships, {} diffs, {} correlations, {} tier rows, {} pools",
        before.relationships.len(),
        after.relationships.len(),
        diffs.len(),
        correlations.len(),
        rates.rows.len(),
        pools.len()
    );
    sink.finish()
}

/// Run one parsed command; the returned code is the process exit status.
pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Fetch(cmd) => run_fetch(cmd),
        Command::Verify(cmd) => run_verify(cmd),
        Command::Diff(cmd) => run_diff(cmd),
        Command::Correlate(cmd) => run_correlate(cmd),
        Command::Split(cmd) => run_split(cmd),
        Command::Tiers(cmd) => run_tiers(cmd),
        Command::Pools(cmd) => run_pools(cmd),
        Command::Report(cmd) => run_report(cmd),
    }
}
