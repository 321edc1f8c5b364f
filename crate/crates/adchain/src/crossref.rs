//! Cross-referencing of publisher claims against ad-system disclosures.
//!
//! A publisher's ads.txt and an ad system's sellers.json are conflicting
//! sides of the same coin: either file alone can be fabricated, but when a
//! DIRECT ads.txt entry names an account id that the targeted ad system also
//! discloses, the relationship is treated as verified. Entries pointing at ad
//! systems whose sellers.json is not in the snapshot are neither confirmed
//! nor refuted; they are tracked separately as unverifiable.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adstxt::{dedupe_records, AdsTxtFile, AdsTxtRecord, Relationship};
use crate::fetcher::Snapshot;
use crate::registry::{etld_plus_one, EntityMap, PublicSuffixList};
use crate::sellersjson::{lookup_seller, SellerType};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrossrefError {
    #[error("no publisher in the snapshot served a parseable ads.txt file")]
    EmptyCorpus,
}

/// How a claimed relationship qualifies as verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// The account id exists in the ad system's sellers.json.
    IdMatch,
    /// The id exists and the seller is typed PUBLISHER or BOTH, i.e. the ad
    /// system says the account belongs to a publisher.
    Strict,
}

impl VerifyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerifyMode::IdMatch => "idmatch",
            VerifyMode::Strict => "strict",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "idmatch" => Some(VerifyMode::IdMatch),
            "strict" => Some(VerifyMode::Strict),
            _ => None,
        }
    }
}

/// A publisher / ad-system link confirmed by both sides.
///
/// Field order doubles as the deterministic sort order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VerifiedRelationship {
    pub publisher_domain: String,
    pub ad_system_domain: String,
    pub seller_account_id: String,
    pub seller_type: SellerType,
    pub snapshot_date: NaiveDate,
    /// True when the seller-type filter passed (PUBLISHER or BOTH).
    pub strict: bool,
}

/// What the verification pass could and could not check.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageReport {
    /// Publishers whose ads.txt was fetched and parsed.
    pub publishers_with_adstxt: usize,
    /// Distinct DIRECT entries examined across all publishers.
    pub direct_entries: usize,
    /// DIRECT entries whose target ad system has no parsed sellers.json in
    /// the snapshot.
    pub entries_unverifiable: usize,
    /// DIRECT entries whose target has a sellers.json that does not list the
    /// claimed account id (or lists it with a non-publisher type in Strict
    /// mode).
    pub entries_unconfirmed: usize,
    /// Ad systems targeted by DIRECT entries but absent from the snapshot.
    pub ad_systems_missing: BTreeSet<String>,
}

/// Verified relationships plus the coverage of the check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationOutcome {
    pub relationships: BTreeSet<VerifiedRelationship>,
    pub coverage: CoverageReport,
}

/// Distinct DIRECT records of one file, input order preserved.
pub fn direct_entries(file: &AdsTxtFile) -> Vec<AdsTxtRecord> {
    dedupe_records(file)
        .into_iter()
        .filter(|r| r.relationship == Relationship::Direct)
        .collect()
}

/// Intersect every publisher's DIRECT claims with the sellers.json files in
/// the snapshot.
pub fn verify_relationships(snapshot: &Snapshot, mode: VerifyMode) -> VerificationOutcome {
    let mut outcome = VerificationOutcome {
        relationships: BTreeSet::new(),
        coverage: CoverageReport::default(),
    };
    for (publisher, file) in snapshot.parsed_adstxt() {
        outcome.coverage.publishers_with_adstxt += 1;
        for record in direct_entries(file) {
            outcome.coverage.direct_entries += 1;
            let sellers = snapshot
                .sellersjson_files
                .get(&record.ad_system_domain)
                .and_then(|(_, parsed)| parsed.as_ref());
            let Some(sellers) = sellers else {
                outcome.coverage.entries_unverifiable += 1;
                outcome
                    .coverage
                    .ad_systems_missing
                    .insert(record.ad_system_domain.clone());
                continue;
            };
            let Some(seller) = lookup_seller(sellers, &record.seller_account_id) else {
                outcome.coverage.entries_unconfirmed += 1;
                continue;
            };
            let strict = matches!(seller.seller_type, SellerType::Publisher | SellerType::Both);
            if mode == VerifyMode::Strict && !strict {
                outcome.coverage.entries_unconfirmed += 1;
                continue;
            }
            outcome.relationships.insert(VerifiedRelationship {
                publisher_domain: publisher.to_string(),
                ad_system_domain: record.ad_system_domain.clone(),
                seller_account_id: record.seller_account_id.clone(),
                seller_type: seller.seller_type,
                snapshot_date: snapshot.snapshot_date,
                strict,
            });
        }
    }
    outcome
}

/// Count and share of publishers with at least one verified relationship.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitesWithVerified {
    pub count: usize,
    pub publishers_with_adstxt: usize,
    /// count / publishers_with_adstxt, in [0, 1].
    pub fraction: f64,
}

impl SitesWithVerified {
    /// The fraction as a percentage rounded to 0.1.
    pub fn percent(&self) -> f64 {
        (self.fraction * 1000.0).round() / 10.0
    }
}

pub fn sites_with_verified(
    snapshot: &Snapshot,
    mode: VerifyMode,
) -> Result<SitesWithVerified, CrossrefError> {
    let outcome = verify_relationships(snapshot, mode);
    let publishers_with_adstxt = outcome.coverage.publishers_with_adstxt;
    if publishers_with_adstxt == 0 {
        return Err(CrossrefError::EmptyCorpus);
    }
    let verified: BTreeSet<&str> = outcome
        .relationships
        .iter()
        .map(|r| r.publisher_domain.as_str())
        .collect();
    Ok(SitesWithVerified {
        count: verified.len(),
        publishers_with_adstxt,
        fraction: verified.len() as f64 / publishers_with_adstxt as f64,
    })
}

/// Distinct verified ad systems per publisher. Publishers whose ads.txt
/// parsed but yielded no verified relationship map to 0.
pub fn relationship_counts_per_publisher(
    snapshot: &Snapshot,
    mode: VerifyMode,
) -> BTreeMap<String, usize> {
    let outcome = verify_relationships(snapshot, mode);
    let mut counts: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for (publisher, _) in snapshot.parsed_adstxt() {
        counts.entry(publisher.to_string()).or_default();
    }
    for rel in &outcome.relationships {
        counts
            .entry(rel.publisher_domain.clone())
            .or_default()
            .insert(rel.ad_system_domain.as_str());
    }
    counts
        .into_iter()
        .map(|(publisher, systems)| (publisher, systems.len()))
        .collect()
}

/// A seller account id claimed DIRECT by organizationally unrelated
/// publishers: the shape of inventory pooling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PoolingCandidate {
    pub ad_system_domain: String,
    pub seller_account_id: String,
    pub claiming_publishers: BTreeSet<String>,
    pub distinct_owner_entities: BTreeSet<String>,
}

/// Owner identity of a publisher: its declared OWNERDOMAIN when present,
/// otherwise the entity owning its registrable domain.
fn publisher_owner(
    publisher: &str,
    file: &AdsTxtFile,
    entities: &EntityMap,
    psl: &PublicSuffixList,
) -> String {
    if let Some(owner) = file.owner_domain() {
        return owner.to_ascii_lowercase();
    }
    let root = etld_plus_one(publisher, psl).unwrap_or_else(|| publisher.to_string());
    entities.entity_of(&root).to_string()
}

/// Group DIRECT claims by (ad system, account id) and keep the groups claimed
/// by at least two publishers with at least two distinct owners. Sorted by
/// claimant count descending, then ad system, then account id.
pub fn detect_pooling(
    snapshot: &Snapshot,
    entities: &EntityMap,
    psl: &PublicSuffixList,
) -> Vec<PoolingCandidate> {
    let mut groups: BTreeMap<(String, String), (BTreeSet<String>, BTreeSet<String>)> =
        BTreeMap::new();
    for (publisher, file) in snapshot.parsed_adstxt() {
        let owner = publisher_owner(publisher, file, entities, psl);
        for record in direct_entries(file) {
            let key = (record.ad_system_domain, record.seller_account_id);
            let (publishers, owners) = groups.entry(key).or_default();
            publishers.insert(publisher.to_string());
            owners.insert(owner.clone());
        }
    }
    let mut candidates: Vec<PoolingCandidate> = groups
        .into_iter()
        .filter(|(_, (publishers, owners))| publishers.len() >= 2 && owners.len() >= 2)
        .map(|((ad_system, id), (publishers, owners))| PoolingCandidate {
            ad_system_domain: ad_system,
            seller_account_id: id,
            claiming_publishers: publishers,
            distinct_owner_entities: owners,
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.claiming_publishers
            .len()
            .cmp(&a.claiming_publishers.len())
            .then_with(|| a.ad_system_domain.cmp(&b.ad_system_domain))
            .then_with(|| a.seller_account_id.cmp(&b.seller_account_id))
    });
    candidates
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adstxt::parse_ads_txt;
    use crate::fetcher::{sha256_hex, FetchResult, FetchStatus};
    use crate::sellersjson::parse_sellers_json;
    use chrono::{TimeZone, Utc};
    use std::collections::BTreeMap;

    fn fetch_ok(url: &str, body: &str) -> FetchResult {
        FetchResult {
            url_requested: url.to_string(),
            final_url: url.to_string(),
            status: FetchStatus::Ok,
            http_status: Some(200),
            body: Some(body.as_bytes().to_vec()),
            fetched_at: Utc.with_ymd_and_hms(2024, 1, 15, 0, 0, 0).unwrap(),
            content_digest: Some(sha256_hex(body.as_bytes())),
        }
    }

    /// Snapshot with in-memory file bodies, parsed the same way a crawl
    /// would parse them.
    pub(crate) fn snapshot_from_text(
        adstxt: &[(&str, &str)],
        sellersjson: &[(&str, &str)],
    ) -> Snapshot {
        let date = NaiveDate::from_ymd_opt(2024, 1, 15).unwrap();
        let mut snapshot = Snapshot::empty(date);
        for (domain, body) in adstxt {
            let parsed = parse_ads_txt(body, domain);
            snapshot.adstxt_files.insert(
                domain.to_string(),
                (fetch_ok(&format!("https://{domain}/ads.txt"), body), Some(parsed)),
            );
        }
        for (domain, body) in sellersjson {
            let parsed = parse_sellers_json(body, domain);
            snapshot.sellersjson_files.insert(
                domain.to_string(),
                (
                    fetch_ok(&format!("https://{domain}/sellers.json"), body),
                    Some(parsed),
                ),
            );
        }
        snapshot
    }

    #[test]
    fn direct_entries_filters_and_dedupes() {
        let file = parse_ads_txt(
            "a.com, 1, DIRECT\na.com, 2, RESELLER\na.com, 1, DIRECT\nb.com, 3, DIRECT\n",
            "pub.example",
        );
        let entries = direct_entries(&file);
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].seller_account_id, "1");
        assert_eq!(entries[1].ad_system_domain, "b.com");
    }

    #[test]
    fn confirms_id_found_in_sellers_json() {
        let snapshot = snapshot_from_text(
            &[("examplefakenews.com", "adnet.com, 12345, DIRECT\n")],
            &[("adnet.com", r#"{"sellers":[{"seller_id":"12345","seller_type":"PUBLISHER"}]}"#)],
        );
        let outcome = verify_relationships(&snapshot, VerifyMode::IdMatch);
        assert_eq!(outcome.relationships.len(), 1);
        let rel = outcome.relationships.iter().next().unwrap();
        assert_eq!(rel.publisher_domain, "examplefakenews.com");
        assert_eq!(rel.seller_type, SellerType::Publisher);
        assert!(rel.strict);
    }

    #[test]
    fn absent_id_is_not_confirmed() {
        let snapshot = snapshot_from_text(
            &[("pub.example", "adnet.com, 12345, DIRECT\n")],
            &[("adnet.com", r#"{"sellers":[{"seller_id":"99999","seller_type":"PUBLISHER"}]}"#)],
        );
        let outcome = verify_relationships(&snapshot, VerifyMode::IdMatch);
        assert!(outcome.relationships.is_empty());
        assert_eq!(outcome.coverage.entries_unconfirmed, 1);
    }

    #[test]
    fn intermediary_passes_idmatch_not_strict() {
        let snapshot = snapshot_from_text(
            &[("pub.example", "adnet.com, 7, DIRECT\n")],
            &[("adnet.com", r#"{"sellers":[{"seller_id":"7","seller_type":"INTERMEDIARY"}]}"#)],
        );
        let idmatch = verify_relationships(&snapshot, VerifyMode::IdMatch);
        assert_eq!(idmatch.relationships.len(), 1);
        assert!(!idmatch.relationships.iter().next().unwrap().strict);
        let strict = verify_relationships(&snapshot, VerifyMode::Strict);
        assert!(strict.relationships.is_empty());
    }

    #[test]
    fn missing_sellers_json_is_unverifiable() {
        let snapshot = snapshot_from_text(&[("pub.example", "ghost.com, 1, DIRECT\n")], &[]);
        let outcome = verify_relationships(&snapshot, VerifyMode::IdMatch);
        assert!(outcome.relationships.is_empty());
        assert_eq!(outcome.coverage.entries_unverifiable, 1);
        assert!(outcome.coverage.ad_systems_missing.contains("ghost.com"));
    }

    #[test]
    fn reseller_claims_never_verify() {
        let snapshot = snapshot_from_text(
            &[("pub.example", "adnet.com, 7, RESELLER\n")],
            &[("adnet.com", r#"{"sellers":[{"seller_id":"7","seller_type":"PUBLISHER"}]}"#)],
        );
        let outcome = verify_relationships(&snapshot, VerifyMode::IdMatch);
        assert!(outcome.relationships.is_empty());
        assert_eq!(outcome.coverage.direct_entries, 0);
    }

    #[test]
    fn sites_with_verified_counts_and_fraction() {
        let snapshot = snapshot_from_text(
            &[
                ("a.example", "adnet.com, 1, DIRECT\n"),
                ("b.example", "adnet.com, 2, DIRECT\n"),
                ("c.example", "adnet.com, 404, DIRECT\n"),
                ("d.example", "# no records\n"),
            ],
            &[(
                "adnet.com",
                r#"{"sellers":[{"seller_id":"1","seller_type":"PUBLISHER"},{"seller_id":"2","seller_type":"BOTH"}]}"#,
            )],
        );
        let result = sites_with_verified(&snapshot, VerifyMode::IdMatch).unwrap();
        assert_eq!(result.count, 2);
        assert_eq!(result.publishers_with_adstxt, 4);
        assert_eq!(result.percent(), 50.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let snapshot = Snapshot::empty(NaiveDate::from_ymd_opt(2024, 1, 15).unwrap());
        assert_eq!(
            sites_with_verified(&snapshot, VerifyMode::IdMatch),
            Err(CrossrefError::EmptyCorpus)
        );
    }

    #[test]
    fn per_publisher_counts_include_zeroes() {
        let snapshot = snapshot_from_text(
            &[
                ("a.example", "adnet.com, 1, DIRECT\nadx.com, 9, DIRECT\n"),
                ("b.example", "adnet.com, 404, DIRECT\n"),
            ],
            &[
                ("adnet.com", r#"{"sellers":[{"seller_id":"1","seller_type":"PUBLISHER"}]}"#),
                ("adx.com", r#"{"sellers":[{"seller_id":"9","seller_type":"PUBLISHER"}]}"#),
            ],
        );
        let counts = relationship_counts_per_publisher(&snapshot, VerifyMode::IdMatch);
        assert_eq!(counts["a.example"], 2);
        assert_eq!(counts["b.example"], 0);
    }

    #[test]
    fn empty_snapshot_has_empty_counts() {
        let snapshot = Snapshot::empty(NaiveDate::from_ymd_opt(2024, 1, 15).unwrap());
        assert!(relationship_counts_per_publisher(&snapshot, VerifyMode::IdMatch).is_empty());
    }

    fn test_entities() -> EntityMap {
        EntityMap::new(BTreeMap::from([
            ("pub-a.example".to_string(), "Alpha Media".to_string()),
            ("pub-b.example".to_string(), "Bravo Media".to_string()),
        ]))
    }

    #[test]
    fn shared_id_across_entities_is_a_pool() {
        let snapshot = snapshot_from_text(
            &[
                ("pub-a.example", "adnet.com, 777, DIRECT\n"),
                ("pub-b.example", "adnet.com, 777, DIRECT\n"),
            ],
            &[],
        );
        let pools = detect_pooling(&snapshot, &test_entities(), &PublicSuffixList::bundled());
        assert_eq!(pools.len(), 1);
        assert_eq!(pools[0].claiming_publishers.len(), 2);
        assert_eq!(pools[0].distinct_owner_entities.len(), 2);
    }

    #[test]
    fn shared_ownerdomain_suppresses_the_pool() {
        let snapshot = snapshot_from_text(
            &[
                ("pub-a.example", "OWNERDOMAIN=parent.com\nadnet.com, 777, DIRECT\n"),
                ("pub-b.example", "OWNERDOMAIN=parent.com\nadnet.com, 777, DIRECT\n"),
            ],
            &[],
        );
        let pools = detect_pooling(&snapshot, &test_entities(), &PublicSuffixList::bundled());
        assert!(pools.is_empty());
    }

    #[test]
    fn single_claimant_is_not_a_pool() {
        let snapshot = snapshot_from_text(&[("pub-a.example", "adnet.com, 777, DIRECT\n")], &[]);
        let pools = detect_pooling(&snapshot, &test_entities(), &PublicSuffixList::bundled());
        assert!(pools.is_empty());
    }

    #[test]
    fn pool_sort_is_count_then_name() {
        let snapshot = snapshot_from_text(
            &[
                ("pub-a.example", "zeta.com, 1, DIRECT\nalpha.com, 2, DIRECT\n"),
                ("pub-b.example", "zeta.com, 1, DIRECT\nalpha.com, 2, DIRECT\n"),
                ("pub-c.example", "zeta.com, 1, DIRECT\n"),
            ],
            &[],
        );
        let entities = EntityMap::new(BTreeMap::from([
            ("pub-a.example".to_string(), "Alpha Media".to_string()),
            ("pub-b.example".to_string(), "Bravo Media".to_string()),
            ("pub-c.example".to_string(), "Charlie Media".to_string()),
        ]));
        let pools = detect_pooling(&snapshot, &entities, &PublicSuffixList::bundled());
        assert_eq!(pools.len(), 2);
        assert_eq!(pools[0].ad_system_domain, "zeta.com");
        assert_eq!(pools[0].claiming_publishers.len(), 3);
        assert_eq!(pools[1].ad_system_domain, "alpha.com");
    }

    #[test]
    fn strict_is_subset_of_idmatch() {
        let snapshot = snapshot_from_text(
            &[(
                "pub.example",
                "adnet.com, 1, DIRECT\nadnet.com, 2, DIRECT\nadnet.com, 3, DIRECT\n",
            )],
            &[(
                "adnet.com",
                r#"{"sellers":[
                    {"seller_id":"1","seller_type":"PUBLISHER"},
                    {"seller_id":"2","seller_type":"INTERMEDIARY"},
                    {"seller_id":"3","seller_type":"BOTH"}
                ]}"#,
            )],
        );
        let idmatch = verify_relationships(&snapshot, VerifyMode::IdMatch);
        let strict = verify_relationships(&snapshot, VerifyMode::Strict);
        assert!(strict.relationships.is_subset(&idmatch.relationships));
        assert_eq!(idmatch.relationships.len(), 3);
        assert_eq!(strict.relationships.len(), 2);
    }
}
