//! Fairness auditing for binary decisions via principal stratification.
//!
//! The toolkit evaluates whether a binary decision (detain, flag, deny)
//! treats groups equally among units that are comparable in how the decision
//! would affect them. Units are partitioned by their response type, the pair
//! of potential outcomes (with and without the decision), into four principal
//! strata: safe, preventable, backlash, and dangerous. Principal fairness
//! asks that decision rates be equal across groups within each stratum.
//!
//! The crate provides:
//!
//! - count tables over strata and observed views, and the lossy map between
//!   them ([`table`]);
//! - dataset ingestion with strict validation ([`dataset`]);
//! - the usual group criteria (overall parity, calibration, accuracy) and
//!   per-stratum disparities ([`metrics`]);
//! - plug-in identification of per-stratum decision rates from observational
//!   data under monotonicity and outcome unconfoundedness, with diagnostics
//!   and bootstrap intervals ([`identify`]);
//! - an exact finite-support simulator for generating data and verifying the
//!   relationships between principal fairness and the statistical criteria
//!   ([`simulate`]);
//! - deterministic JSON/text report rendering ([`report`]) and a small worked
//!   example ([`demo`]).
//!
//! Determinism is a design rule throughout: all maps are ordered, all
//! randomness flows from explicit seeds through a counter-based generator,
//! and parallel reductions preserve order, so identical inputs yield
//! byte-identical reports.

pub mod dataset;
pub mod demo;
pub mod error;
pub mod identify;
pub mod logistic;
pub mod metrics;
pub mod report;
pub mod simulate;
pub mod stratum;
pub mod table;

pub use error::Error;
pub use stratum::PrincipalStratum;
