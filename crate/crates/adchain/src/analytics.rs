//! Longitudinal and cross-sectional statistics over verified relationships:
//! before/after diffs and percentage change, traffic-percentile popularity
//! splits, Spearman rank correlation with tie-aware average ranks, histogram
//! binning, per-credibility-tier network rates, and top-network rankings.
//!
//! Everything here is pure computation with pinned tie-breaks, so repeated
//! runs over the same inputs produce identical output byte for byte.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::crossref::VerifiedRelationship;
use crate::registry::{etld_plus_one, EntityMap, PublicSuffixList, SiteLabel, TrafficLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("percentage change is undefined for a zero baseline")]
    ZeroBaseline,
    #[error("input is empty")]
    EmptyInput,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("bin edges must be strictly increasing with at least two edges")]
    BadEdges,
}

/// Percentage change from `before` to `after`: `(after - before) / |before| * 100`.
///
/// Evaluated as the exact rational `(after - before) * 100 / |before|` with a
/// single rounded division, so `D * |before|` reproduces `(A - B) * 100`
/// exactly for count-sized inputs.
pub fn percentage_change(before: i64, after: i64) -> Result<f64, AnalyticsError> {
    if before == 0 {
        return Err(AnalyticsError::ZeroBaseline);
    }
    Ok(((after - before) * 100) as f64 / before.abs() as f64)
}

/// How one ad system's verified publisher set moved between two snapshots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationshipDiff {
    pub ad_system_domain: String,
    pub before_count: usize,
    pub after_count: usize,
    /// None marks an undefined change (no publishers in the before set).
    pub percent_change: Option<f64>,
    pub retained: BTreeSet<String>,
    pub dropped: BTreeSet<String>,
    pub added: BTreeSet<String>,
    pub before_date: NaiveDate,
    pub after_date: NaiveDate,
}

fn publishers_of<'a>(
    relationships: &'a BTreeSet<VerifiedRelationship>,
    ad_system: &str,
) -> BTreeSet<&'a str> {
    relationships
        .iter()
        .filter(|r| r.ad_system_domain == ad_system)
        .map(|r| r.publisher_domain.as_str())
        .collect()
}

/// Diff the publishers verified with `ad_system` between two relationship
/// sets computed under the same verification mode.
pub fn diff_relationships(
    before: &BTreeSet<VerifiedRelationship>,
    after: &BTreeSet<VerifiedRelationship>,
    ad_system: &str,
    before_date: NaiveDate,
    after_date: NaiveDate,
) -> RelationshipDiff {
    let before_set = publishers_of(before, ad_system);
    let after_set = publishers_of(after, ad_system);
    let retained: BTreeSet<String> = before_set
        .intersection(&after_set)
        .map(|d| d.to_string())
        .collect();
    let dropped: BTreeSet<String> = before_set
        .difference(&after_set)
        .map(|d| d.to_string())
        .collect();
    let added: BTreeSet<String> = after_set
        .difference(&before_set)
        .map(|d| d.to_string())
        .collect();
    let percent_change = percentage_change(before_set.len() as i64, after_set.len() as i64).ok();
    RelationshipDiff {
        ad_system_domain: ad_system.to_string(),
        before_count: before_set.len(),
        after_count: after_set.len(),
        percent_change,
        retained,
        dropped,
        added,
        before_date,
        after_date,
    }
}

/// A popular/unpopular partition of domains at a traffic percentile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularitySplit {
    pub percentile: f64,
    /// Monthly visits of the least popular domain that still made the
    /// popular set.
    pub threshold_visits: u64,
    pub popular: BTreeSet<String>,
    pub unpopular: BTreeSet<String>,
}

/// Split domains at the given traffic percentile by rank count: the top
/// `ceil((1 - percentile/100) * n)` domains (visits descending, ties broken
/// by domain name ascending) are popular, the rest unpopular.
pub fn popularity_split(
    traffic: &BTreeMap<String, u64>,
    percentile: f64,
) -> Result<PopularitySplit, AnalyticsError> {
    if traffic.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(AnalyticsError::DegenerateInput("percentile must be in (0, 100)"));
    }
    let n = traffic.len();
    let mut ranked: Vec<(&String, u64)> = traffic.iter().map(|(d, v)| (d, *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    // (100 - p) * n / 100 in this order keeps integer-valued percentiles
    // exact in floating point.
    let popular_count = (((100.0 - percentile) * n as f64) / 100.0).ceil() as usize;
    let popular_count = popular_count.clamp(1, n);
    let threshold_visits = ranked[popular_count - 1].1;
    let popular: BTreeSet<String> = ranked[..popular_count]
        .iter()
        .map(|(d, _)| (*d).clone())
        .collect();
    let unpopular: BTreeSet<String> = ranked[popular_count..]
        .iter()
        .map(|(d, _)| (*d).clone())
        .collect();
    Ok(PopularitySplit {
        percentile,
        threshold_visits,
        popular,
        unpopular,
    })
}

/// Spearman correlation with a two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Average ranks (1-based); tied values share the mean of their positions.
/// Callers must pass finite values; `spearman` validates before ranking.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(AnalyticsError::DegenerateInput("constant variable"));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average-ranked values,
/// with a two-sided p-value from the t approximation
/// `t = rho * sqrt((n-2) / (1 - rho^2))` on n-2 degrees of freedom.
/// Perfectly monotone inputs give rho = ±1 exactly and p = 0.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalyticsError::InsufficientData { needed: 3, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalyticsError::DegenerateInput("non-finite value"));
    }
    let rank_x = average_ranks(x);
    let rank_y = average_ranks(y);

    // Detect perfect monotone agreement on the ranks so rho comes out as an
    // exact ±1 rather than 1 minus a rounding ulp.
    let rho = if rank_x == rank_y {
        if rank_x.iter().all(|r| *r == rank_x[0]) {
            return Err(AnalyticsError::DegenerateInput("constant variable"));
        }
        1.0
    } else if rank_x
        .iter()
        .zip(&rank_y)
        .all(|(a, b)| *b == (n + 1) as f64 - *a)
    {
        -1.0
    } else {
        pearson(&rank_x, &rank_y)?
    };

    let p_value = if rho == 1.0 || rho == -1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|_| AnalyticsError::DegenerateInput("bad degrees of freedom"))?;
        (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
    };
    Ok(CorrelationResult { rho, p_value, n })
}

/// Correlation between traffic tier and retention, plus per-tier drop rates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRetention {
    pub correlation: CorrelationResult,
    /// Per tier: (sites observed, fraction of them no longer retained).
    pub tier_drop_rates: BTreeMap<TrafficLabel, (usize, f64)>,
}

/// Correlate a site's traffic tier (MINIMAL=0 .. HIGH=3) with whether its
/// relationship was retained (0/1), over the domains present in both maps.
pub fn traffic_retention_correlation(
    tiers: &BTreeMap<String, TrafficLabel>,
    retained: &BTreeMap<String, bool>,
) -> Result<TrafficRetention, AnalyticsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut per_tier: BTreeMap<TrafficLabel, (usize, usize)> = BTreeMap::new();
    for (domain, tier) in tiers {
        let Some(kept) = retained.get(domain) else {
            continue;
        };
        xs.push(tier.ordinal() as f64);
        ys.push(if *kept { 1.0 } else { 0.0 });
        let (total, dropped) = per_tier.entry(*tier).or_insert((0, 0));
        *total += 1;
        if !*kept {
            *dropped += 1;
        }
    }
    let correlation = spearman(&xs, &ys)?;
    let tier_drop_rates = per_tier
        .into_iter()
        .map(|(tier, (total, dropped))| (tier, (total, dropped as f64 / total as f64)))
        .collect();
    Ok(TrafficRetention {
        correlation,
        tier_drop_rates,
    })
}

/// Bin integer counts into `edges.len() - 1` bins, left-closed right-open
/// with the final bin closed. Values outside the edge range are counted into
/// the nearest end bin so that totals are conserved.
pub fn histogram_relationship_counts(
    counts: &BTreeMap<String, usize>,
    edges: &[u64],
) -> Result<Vec<u64>, AnalyticsError> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalyticsError::BadEdges);
    }
    let mut bins = vec![0u64; edges.len() - 1];
    for value in counts.values() {
        let v = *value as u64;
        let idx = match edges.iter().rposition(|e| *e <= v) {
            None => 0,
            Some(pos) => pos.min(edges.len() - 2),
        };
        bins[idx] += 1;
    }
    Ok(bins)
}

/// Which label field to group publishers by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    ReliabilityTier,
    FactualReporting,
}

impl GroupBy {
    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "reliability" | "reliability_tier" => Some(GroupBy::ReliabilityTier),
            "factual" | "factual_reporting" => Some(GroupBy::FactualReporting),
            _ => None,
        }
    }
}

/// One (ad system, tier) cell of the rate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierRateRow {
    pub ad_system_domain: String,
    pub tier: String,
    /// Labeled publishers in the tier that served a parsed ads.txt.
    pub publishers_in_tier: usize,
    /// Of those, how many have a verified relationship with the ad system.
    pub linked_publishers: usize,
    pub rate: f64,
}

/// Per-tier verified-relationship rates, keyed by ad system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSiteRates {
    pub rows: Vec<TierRateRow>,
    /// Publishers with a parsed ads.txt that no usable label covered.
    pub unlabeled_publishers: usize,
}

fn tier_key(label: &SiteLabel, group_by: GroupBy) -> Option<(u8, String)> {
    match group_by {
        GroupBy::ReliabilityTier => label
            .reliability_tier
            .map(|t| (t as u8, t.as_str().to_string())),
        GroupBy::FactualReporting => {
            Some((label.factual_reporting as u8, label.factual_reporting.as_str().to_string()))
        }
    }
}

/// Rate of tier publishers each ad system verifiably works with:
/// (publishers in the tier with >=1 verified relationship to the ad system)
/// / (publishers in the tier serving a parsed ads.txt). Tiers with no
/// publishers are omitted; publishers without an applicable label are
/// excluded and counted.
pub fn network_site_rates(
    relationships: &BTreeSet<VerifiedRelationship>,
    labels: &BTreeMap<String, SiteLabel>,
    publishers_with_adstxt: &BTreeSet<String>,
    group_by: GroupBy,
) -> NetworkSiteRates {
    let mut unlabeled = 0usize;
    // (tier order, tier name) -> publishers in tier
    let mut tier_members: BTreeMap<(u8, String), BTreeSet<&str>> = BTreeMap::new();
    for publisher in publishers_with_adstxt {
        match labels.get(publisher).and_then(|l| tier_key(l, group_by)) {
            Some(key) => {
                tier_members.entry(key).or_default().insert(publisher);
            }
            None => unlabeled += 1,
        }
    }

    let mut linked: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for rel in relationships {
        linked
            .entry(rel.ad_system_domain.as_str())
            .or_default()
            .insert(rel.publisher_domain.as_str());
    }

    let mut rows = Vec::new();
    for (ad_system, linked_publishers) in &linked {
        for ((_, tier), members) in &tier_members {
            let linked_count = members.intersection(linked_publishers).count();
            rows.push(TierRateRow {
                ad_system_domain: ad_system.to_string(),
                tier: tier.clone(),
                publishers_in_tier: members.len(),
                linked_publishers: linked_count,
                rate: linked_count as f64 / members.len() as f64,
            });
        }
    }
    NetworkSiteRates {
        rows,
        unlabeled_publishers: unlabeled,
    }
}

/// Rank ad systems (or, with a rollup, their owning entities) by the number
/// of distinct publishers they verifiably work with. Descending by count,
/// ties by name ascending, truncated to `k`.
pub fn top_networks(
    relationships: &BTreeSet<VerifiedRelationship>,
    k: usize,
    rollup: Option<(&EntityMap, &PublicSuffixList)>,
) -> Vec<(String, usize)> {
    let mut groups: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for rel in relationships {
        let name = match rollup {
            Some((entities, psl)) => {
                let root = etld_plus_one(&rel.ad_system_domain, psl)
                    .unwrap_or_else(|| rel.ad_system_domain.clone());
                entities.entity_of(&root).to_string()
            }
            None => rel.ad_system_domain.clone(),
        };
        groups
            .entry(name)
            .or_default()
            .insert(rel.publisher_domain.as_str());
    }
    let mut ranked: Vec<(String, usize)> = groups
        .into_iter()
        .map(|(name, publishers)| (name, publishers.len()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}
