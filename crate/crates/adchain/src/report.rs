//! Machine-readable CSV renderings of analysis results.
//!
//! Formatting is pinned so identical inputs produce byte-identical files:
//! rows follow the natural sort order of their keys, rates carry four decimal
//! places, p-values use scientific notation with six significant decimals,
//! and undefined values render as `NA`.

use std::collections::BTreeSet;

use crate::analytics::{NetworkSiteRates, RelationshipDiff};
use crate::crossref::{PoolingCandidate, VerifiedRelationship};

/// Four-decimal fixed-point rendering used for rates and percentages.
pub fn fmt_rate(value: f64) -> String {
    format!("{value:.4}")
}

/// Scientific notation used for p-values, e.g. `3.333333e-1`.
pub fn fmt_p_value(value: f64) -> String {
    format!("{value:.6e}")
}

fn fmt_optional_rate(value: Option<f64>) -> String {
    match value {
        Some(v) => fmt_rate(v),
        None => "NA".to_string(),
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

/// `snapshot_date,publisher_domain,ad_system_domain,seller_account_id,seller_type,strict`
pub fn relationships_csv<'a>(
    relationships: impl IntoIterator<Item = &'a VerifiedRelationship>,
) -> String {
    let mut w = csv_writer();
    w.write_record([
        "snapshot_date",
        "publisher_domain",
        "ad_system_domain",
        "seller_account_id",
        "seller_type",
        "strict",
    ])
    .unwrap();
    for rel in relationships {
        w.write_record([
            rel.snapshot_date.to_string(),
            rel.publisher_domain.clone(),
            rel.ad_system_domain.clone(),
            rel.seller_account_id.clone(),
            rel.seller_type.as_str().to_string(),
            rel.strict.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

/// `ad_system,before,after,percent_change,n_retained,n_dropped,n_added`
pub fn diff_csv(diffs: &[RelationshipDiff]) -> String {
    let mut w = csv_writer();
    w.write_record([
        "ad_system",
        "before",
        "after",
        "percent_change",
        "n_retained",
        "n_dropped",
        "n_added",
    ])
    .unwrap();
    for diff in diffs {
        w.write_record([
            diff.ad_system_domain.clone(),
            diff.before_count.to_string(),
            diff.after_count.to_string(),
            fmt_optional_rate(diff.percent_change),
            diff.retained.len().to_string(),
            diff.dropped.len().to_string(),
            diff.added.len().to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

/// One correlation table row: traffic tier vs relationship retention for one
/// ad system.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CorrelationRow {
    pub ad_system_domain: String,
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
    /// Drop rate among MINIMAL-traffic sites, when that tier was observed.
    pub minimal_drop_rate: Option<f64>,
}

/// `ad_system,n,rho,p_value,minimal_drop_rate`
pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut w = csv_writer();
    w.write_record(["ad_system", "n", "rho", "p_value", "minimal_drop_rate"])
        .unwrap();
    for row in rows {
        w.write_record([
            row.ad_system_domain.clone(),
            row.n.to_string(),
            fmt_rate(row.rho),
            fmt_p_value(row.p_value),
            fmt_optional_rate(row.minimal_drop_rate),
        ])
        .unwrap();
    }
    finish(w)
}

/// `ad_system,tier,n_publishers,n_linked,rate`
pub fn tiers_csv(rates: &NetworkSiteRates) -> String {
    let mut w = csv_writer();
    w.write_record(["ad_system", "tier", "n_publishers", "n_linked", "rate"])
        .unwrap();
    for row in &rates.rows {
        w.write_record([
            row.ad_system_domain.clone(),
            row.tier.clone(),
            row.publishers_in_tier.to_string(),
            row.linked_publishers.to_string(),
            fmt_rate(row.rate),
        ])
        .unwrap();
    }
    finish(w)
}

/// `bin_start,bin_end,count` — one row per bin, edges as given.
pub fn histogram_csv(edges: &[u64], bins: &[u64]) -> String {
    debug_assert_eq!(edges.len(), bins.len() + 1);
    let mut w = csv_writer();
    w.write_record(["bin_start", "bin_end", "count"]).unwrap();
    for (i, count) in bins.iter().enumerate() {
        w.write_record([
            edges[i].to_string(),
            edges[i + 1].to_string(),
            count.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

/// `ad_system_domain,seller_account_id,n_publishers,n_entities,publishers`
pub fn pools_csv(pools: &[PoolingCandidate]) -> String {
    let mut w = csv_writer();
    w.write_record([
        "ad_system_domain",
        "seller_account_id",
        "n_publishers",
        "n_entities",
        "publishers",
    ])
    .unwrap();
    for pool in pools {
        let publishers: Vec<&str> = pool.claiming_publishers.iter().map(String::as_str).collect();
        w.write_record([
            pool.ad_system_domain.clone(),
            pool.seller_account_id.clone(),
            pool.claiming_publishers.len().to_string(),
            pool.distinct_owner_entities.len().to_string(),
            publishers.join(";"),
        ])
        .unwrap();
    }
    finish(w)
}

/// `domain,monthly_visits,bucket` in split order: visits descending, domain
/// ascending, popular rows first.
pub fn split_csv(
    split: &crate::analytics::PopularitySplit,
    traffic: &std::collections::BTreeMap<String, u64>,
) -> String {
    let mut ranked: Vec<(&String, u64)> = traffic.iter().map(|(d, v)| (d, *v)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut w = csv_writer();
    w.write_record(["domain", "monthly_visits", "bucket"]).unwrap();
    for (domain, visits) in ranked {
        let bucket = if split.popular.contains(domain) {
            "popular"
        } else {
            "unpopular"
        };
        w.write_record([domain.clone(), visits.to_string(), bucket.to_string()])
            .unwrap();
    }
    finish(w)
}

/// Deterministic ordering helper used by commands that emit relationship
/// rows from more than one snapshot: date, then set order.
pub fn ordered_relationships<'a>(
    sets: &[&'a BTreeSet<VerifiedRelationship>],
) -> Vec<&'a VerifiedRelationship> {
    let mut all: Vec<&VerifiedRelationship> = sets.iter().flat_map(|s| s.iter()).collect();
    all.sort_by(|a, b| {
        a.snapshot_date
            .cmp(&b.snapshot_date)
            .then_with(|| (*a).cmp(*b))
    });
    all
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sellersjson::SellerType;
    use chrono::NaiveDate;
    use std::collections::BTreeSet;

    #[test]
    fn p_value_format_matches_reference_style() {
        assert_eq!(fmt_p_value(5.021135e-57), "5.021135e-57");
        assert_eq!(fmt_p_value(1.0 / 3.0), "3.333333e-1");
        assert_eq!(fmt_rate(2.0 / 3.0), "0.6667");
        assert_eq!(fmt_rate(-100.0 / 3.0), "-33.3333");
    }

    #[test]
    fn relationships_csv_is_sorted_and_stable() {
        let date = NaiveDate::from_ymd_opt(2024, 1, 15).unwrap();
        let mut rels = BTreeSet::new();
        for (publisher, id) in [("b.example", "2"), ("a.example", "1")] {
            rels.insert(VerifiedRelationship {
                publisher_domain: publisher.to_string(),
                ad_system_domain: "adnet.com".to_string(),
                seller_account_id: id.to_string(),
                seller_type: SellerType::Publisher,
                snapshot_date: date,
                strict: true,
            });
        }
        let csv = relationships_csv(&rels);
        assert_eq!(
            csv,
            "snapshot_date,publisher_domain,ad_system_domain,seller_account_id,seller_type,strict\n\
             2024-01-15,a.example,adnet.com,1,PUBLISHER,true\n\
             2024-01-15,b.example,adnet.com,2,PUBLISHER,true\n"
        );
        assert_eq!(csv, relationships_csv(&rels));
    }

    #[test]
    fn histogram_csv_rows_follow_edges() {
        let csv = histogram_csv(&[0, 2, 10], &[2, 1]);
        assert_eq!(csv, "bin_start,bin_end,count\n0,2,2\n2,10,1\n");
    }
}
