//! Toolkit for auditing publisher / ad-network business relationships.
//!
//! Publishers disclose their authorized inventory sellers in `ads.txt` files;
//! advertising systems disclose their approved sellers in `sellers.json`
//! files. Each side alone can lie, but a relationship asserted by both sides
//! at once is taken as ground truth. This crate collects those files into
//! dated snapshots, computes the verified-relationship intersection, and
//! derives the longitudinal and credibility statistics built on top of it:
//! snapshot diffs, percentage change, popularity splits, rank correlations,
//! per-tier network rates, and shared-account (dark pool) candidates.

pub mod adstxt;
pub mod analytics;
pub mod crossref;
pub mod cli;
pub mod fetcher;
pub mod registry;
pub mod report;
pub mod sellersjson;
