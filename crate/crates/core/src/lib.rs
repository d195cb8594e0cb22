//! Observational causality testing from 2×2 tables.
//!
//! An association between exposure and outcome warrants a causal reading
//! when the randomness `η` of the data generating process exceeds the
//! threshold `T = 1 − |φ|`. This crate computes `T` from tables or reported
//! measures, its finite-population and covariate-adjusted variants, lower
//! bounds on `η` from twin concordances, and brute-force oracles for all of
//! the above.

pub mod covariate;
pub mod error;
pub mod finitepop;
pub mod ingest;
pub mod linalg;
pub mod oracle;
pub mod randomness;
pub mod sampling;
pub mod tables;
pub mod threshold;

pub use covariate::{threshold_tc, StratifiedTable, Stratum, TauSolution};
pub use error::{Error, Result};
pub use finitepop::{fpc_threshold, FpcResult, ResampleConfig};
pub use randomness::{lower_bound_eta, ConcordanceEvidence, RandomnessBound};
pub use tables::{AssociationKind, Counts2x2, MarginalSummary, Probs2x2};
pub use threshold::{threshold, threshold_from_measure, ThresholdResult};
