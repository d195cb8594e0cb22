//! The structured report every command prints to standard output.
//!
//! Field order is fixed by declaration order. Absent sections are `null`
//! rather than omitted so that every report of a given command has the same
//! shape.

use causaltest::covariate::SolverMethod;
use causaltest::finitepop::FpcResult;
use causaltest::oracle::SuiteReport;
use causaltest::randomness::{ConcordanceKind, RandomnessBound};
use causaltest::tables::{AssociationKind, Counts2x2, Measures};
use serde::Serialize;

pub const SCHEMA: &str = "causaltest.report/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Warranted,
    NotWarranted,
    Indeterminate,
}

impl Verdict {
    /// `Warranted` iff `l_η` strictly exceeds the threshold.
    pub fn decide(l_eta: Option<f64>, threshold: Option<f64>) -> Self {
        match (l_eta, threshold) {
            (Some(l), Some(t)) if l > t => Verdict::Warranted,
            (Some(_), Some(_)) => Verdict::NotWarranted,
            _ => Verdict::Indeterminate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEcho {
    pub p_e: f64,
    pub p_d: f64,
    pub measure: AssociationKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumEcho {
    pub label: String,
    pub counts: Counts2x2,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct InputEcho {
    pub table: Option<Counts2x2>,
    pub summary: Option<SummaryEcho>,
    pub strata: Option<Vec<StratumEcho>>,
    pub csv: Option<String>,
    pub spec: Option<String>,
    pub excluded_rows: Option<u64>,
    pub haldane: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSection {
    pub t: f64,
    pub phi: f64,
    /// `table` or the measure the threshold was converted from.
    pub source: String,
    pub measures: Option<Measures>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceEcho {
    pub kind: ConcordanceKind,
    pub value: f64,
    pub prevalence: f64,
    /// `table`, `summary` or `override`.
    pub prevalence_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RandomnessSection {
    pub l_eta: f64,
    pub r2_pi_upper: f64,
    pub r2_r_upper: f64,
    pub exposure: EvidenceEcho,
    pub outcome: EvidenceEcho,
}

impl RandomnessSection {
    pub fn new(b: RandomnessBound, exposure: EvidenceEcho, outcome: EvidenceEcho) -> Self {
        Self {
            l_eta: b.l_eta,
            r2_pi_upper: b.r2_pi_upper,
            r2_r_upper: b.r2_r_upper,
            exposure,
            outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FpcSection {
    #[serde(flatten)]
    pub result: FpcResult,
    pub seed_from_entropy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumDiagnostics {
    pub label: String,
    pub weight: f64,
    pub counts: Counts2x2,
    pub phi: f64,
    pub t: f64,
    pub var_e: f64,
    pub var_d: f64,
    pub l2_pi: f64,
    pub u2_pi: f64,
    pub l2_r: f64,
    pub u2_r: f64,
    pub pi_var: f64,
    pub r_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedSection {
    pub t_marginal: f64,
    pub t_c: f64,
    pub tau: f64,
    pub solver_gap: f64,
    pub tol: f64,
    pub method: SolverMethod,
    pub nodes: usize,
    pub between_e: f64,
    pub between_d: f64,
    pub adjusted_rr: f64,
    pub ample_ratio_marginal: Option<f64>,
    pub ample_ratio_adjusted: Option<f64>,
    pub strata: Vec<StratumDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Applicable {
    /// `T`, `T_n` or `T_c`.
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub inputs: InputEcho,
    pub threshold: Option<ThresholdSection>,
    pub finite_population: Option<FpcSection>,
    pub adjusted: Option<AdjustedSection>,
    pub randomness: Option<RandomnessSection>,
    pub applicable_threshold: Option<Applicable>,
    pub verdict: Verdict,
    pub ample_ratio: Option<f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl TestReport {
    pub fn new(command: &'static str, inputs: InputEcho) -> Self {
        Self {
            schema: SCHEMA,
            command,
            inputs,
            threshold: None,
            finite_population: None,
            adjusted: None,
            randomness: None,
            applicable_threshold: None,
            verdict: Verdict::Indeterminate,
            ample_ratio: None,
            warnings: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Picks the most specific threshold available and fills in the
    /// verdict and ample ratio.
    pub fn conclude(&mut self) {
        let applicable = if let Some(a) = &self.adjusted {
            Some(("T_c", a.t_c))
        } else if let Some(f) = &self.finite_population {
            Some(("T_n", f.result.t_n))
        } else {
            self.threshold.as_ref().map(|t| ("T", t.t))
        };
        self.applicable_threshold = applicable.map(|(name, value)| Applicable {
            name: name.into(),
            value,
        });
        let l_eta = self.randomness.as_ref().map(|r| r.l_eta);
        let t = applicable.map(|a| a.1);
        self.verdict = Verdict::decide(l_eta, t);
        self.ample_ratio = match (l_eta, t) {
            (Some(l), Some(t)) if t > 0.0 => Some(l / t),
            _ => None,
        };
        if self.randomness.is_some() {
            self.notes.push(
                "the twin-based bound assumes common causes make co-twins agree at least as often as \
                 independent draws would (L <= V); this cannot be checked from the data"
                    .into(),
            );
            self.notes.push(
                "concordances are transported from twin studies to this population; the stability \
                 of potential-outcome parameters (a relaxed SUTVA) is assumed"
                    .into(),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    #[serde(flatten)]
    pub suite: SuiteReport,
    pub gating_checks: usize,
    pub gating_failures: usize,
}

impl VerifyReport {
    pub fn new(suite: SuiteReport) -> Self {
        let gating: Vec<_> = suite.checks.iter().filter(|c| c.gating).collect();
        Self {
            schema: SCHEMA,
            command: "verify",
            gating_checks: gating.len(),
            gating_failures: gating.iter().filter(|c| !c.passed).count(),
            suite,
        }
    }
}

/// Labels for how the threshold was obtained.
pub fn source_label(kind: Option<AssociationKind>) -> String {
    match kind {
        None => "table".into(),
        Some(k) => k.to_string(),
    }
}
