use thiserror::Error;

/// Errors raised by table construction, threshold computation and the
/// resampling/optimization routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("table is empty (all counts are zero)")]
    EmptyTable,

    #[error("table has a zero cell; relative frequencies must be strictly positive")]
    ZeroCell,

    #[error("degenerate marginal: {0} is 0 or 1")]
    DegenerateMarginal(&'static str),

    #[error("stratum `{label}` is degenerate: {reason}")]
    DegenerateStratum { label: String, reason: String },

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("summary is infeasible: implied cell {cell} = {value:.3e} is not positive")]
    Infeasible { cell: &'static str, value: f64 },

    #[error("stratum `{label}` has an empty feasible interval [{lo:.6e}, {hi:.6e}]")]
    InfeasibleStratum { label: String, lo: f64, hi: f64 },

    #[error("negative discriminant {0:.3e} in odds-ratio conversion")]
    NegativeDiscriminant(f64),

    #[error("threshold is zero; ratio undefined")]
    ZeroThreshold,

    #[error("concordance {value} is inconsistent with prevalence {prevalence} (radicand {radicand:.4})")]
    InconsistentEvidence {
        value: f64,
        prevalence: f64,
        radicand: f64,
    },

    #[error("no twin pair carries the trait; concordance is undefined")]
    NoTraitPresent,

    #[error("twin cohort counts do not add up: {concordant} + {discordant} + {unaffected} != {pairs}")]
    CohortMismatch {
        pairs: u64,
        concordant: u64,
        discordant: u64,
        unaffected: u64,
    },

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("solver stopped after {nodes} nodes with certified gap {gap:.3e} above tolerance {tol:.3e}")]
    SolverBudget { nodes: usize, gap: f64, tol: f64 },

    #[error("latent population is invalid: {0}")]
    InvalidPopulation(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: value `{value}` in column `{column}` cannot be mapped to 0/1")]
    UnmappableValue {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid microdata spec: {0}")]
    Spec(String),

    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub(crate) fn check_open_unit(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value < 1.0 {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "(0, 1)",
        })
    }
}

pub(crate) fn check_closed_unit(what: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "[0, 1]",
        })
    }
}
