//! Covariate-adjusted threshold `T_c`.
//!
//! Conditioning on a measured covariate `c` splits the population into
//! strata. Per stratum the unobserved variances `σ²_{π|c}` and `σ²_{r|c}`
//! are tied by `σ²_{π|c} σ²_{r|c} = φ²(c) σ²_{e|c} σ²_{d|c}` and boxed by
//! bounds read off the conditional table. The adjusted threshold is
//! `T_c = 1 − sqrt(τ)/(σ_e σ_d)` where `τ` minimizes
//! `(A + Σ m_c σ²_{π|c}) (B + Σ m_c σ²_{r|c})` and `A`, `B` are the
//! between-stratum variances of the conditional prevalences.

mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::Counts2x2;

pub use solver::{solve_tau, SolverMethod, TauSolution, DEFAULT_TOL, GRID_MAX_STRATA};

/// Slack allowed on the per-stratum feasibility certificate.
pub const FEASIBILITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub counts: Counts2x2,
}

/// Counts for each level of a covariate, weighted by stratum size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedTable {
    strata: Vec<Stratum>,
}

impl StratifiedTable {
    /// Every stratum needs both exposure groups and both outcome groups.
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        if strata.is_empty() {
            return Err(Error::EmptyTable);
        }
        for s in &strata {
            let c = &s.counts;
            let reason = if c.total() == 0 {
                Some("stratum is empty")
            } else if c.exposed() == 0 || c.unexposed() == 0 {
                Some("P(e=1|c) is 0 or 1")
            } else if c.cases() == 0 || c.non_cases() == 0 {
                Some("P(d=1|c) is 0 or 1")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(Error::DegenerateStratum {
                    label: s.label.clone(),
                    reason: reason.into(),
                });
            }
        }
        Ok(Self { strata })
    }

    pub fn from_counts<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Counts2x2)>,
        S: Into<String>,
    {
        Self::new(
            items
                .into_iter()
                .map(|(label, counts)| Stratum {
                    label: label.into(),
                    counts,
                })
                .collect(),
        )
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.strata.iter().map(|s| s.counts.total()).sum()
    }

    /// `m_c = n_c / n`.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.strata
            .iter()
            .map(|s| s.counts.total() as f64 / n)
            .collect()
    }

    /// The table obtained by ignoring the covariate.
    pub fn marginal(&self) -> Counts2x2 {
        let mut acc = [0u64; 4];
        for s in &self.strata {
            for (a, x) in acc.iter_mut().zip(s.counts.as_array()) {
                *a += x;
            }
        }
        Counts2x2::from_array(acc)
    }

    /// Pools strata according to `mapping` (old label → new label); labels
    /// absent from the mapping are kept. Output order follows first
    /// appearance of each new label.
    pub fn merge(&self, mapping: &BTreeMap<String, String>) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut pooled: BTreeMap<String, [u64; 4]> = BTreeMap::new();
        for s in &self.strata {
            let target = mapping.get(&s.label).unwrap_or(&s.label).clone();
            let entry = pooled.entry(target.clone()).or_insert_with(|| {
                order.push(target.clone());
                [0; 4]
            });
            for (a, x) in entry.iter_mut().zip(s.counts.as_array()) {
                *a += x;
            }
        }
        Self::new(
            order
                .into_iter()
                .map(|label| {
                    let counts = Counts2x2::from_array(pooled[&label]);
                    Stratum { label, counts }
                })
                .collect(),
        )
    }
}

/// Stratum-level quantities entering the optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBounds {
    pub label: String,
    pub weight: f64,
    pub phi: f64,
    pub phi2: f64,
    /// `σ²_{e|c}`.
    pub var_e: f64,
    /// `σ²_{d|c}`.
    pub var_d: f64,
    pub l2_pi: f64,
    pub u2_pi: f64,
    pub l2_r: f64,
    pub u2_r: f64,
}

impl StratumBounds {
    /// Right-hand side `k_c = φ²(c) σ²_{e|c} σ²_{d|c}` of the hyperbola.
    pub fn hyperbola(&self) -> f64 {
        self.phi2 * self.var_e * self.var_d
    }

    /// Values of `σ²_{π|c}` compatible with both boxes and the hyperbola.
    pub fn feasible_pi_interval(&self) -> (f64, f64) {
        let k = self.hyperbola();
        let lo = self.l2_pi.max(k / self.u2_r);
        let hi = if self.l2_r > 0.0 {
            self.u2_pi.min(k / self.l2_r)
        } else {
            self.u2_pi
        };
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauProblem {
    pub strata: Vec<StratumBounds>,
    /// Between-stratum variance of `P(e=1|c)`.
    pub between_e: f64,
    /// Between-stratum variance of `P(d=1|c)`.
    pub between_d: f64,
    /// Marginal `σ²_e`.
    pub var_e: f64,
    /// Marginal `σ²_d`.
    pub var_d: f64,
}

impl TauProblem {
    /// `σ²_e σ²_d`, the largest value `τ` can take.
    pub fn scale(&self) -> f64 {
        self.var_e * self.var_d
    }

    pub fn objective(&self, pi_vars: &[f64], r_vars: &[f64]) -> f64 {
        let mut left = self.between_e;
        let mut right = self.between_d;
        for ((s, x), y) in self.strata.iter().zip(pi_vars).zip(r_vars) {
            left += s.weight * x;
            right += s.weight * y;
        }
        left * right
    }
}

fn stratum_bounds(label: &str, weight: f64, c: &Counts2x2) -> Result<StratumBounds> {
    let phi = c.phi().map_err(|e| Error::DegenerateStratum {
        label: label.into(),
        reason: e.to_string(),
    })?;
    let n = c.total() as f64;
    let p_e = c.exposed() as f64 / n;
    let p_d = c.cases() as f64 / n;
    let e_given_d1 = c.x11 as f64 / c.cases() as f64;
    let e_given_d0 = c.x10 as f64 / c.non_cases() as f64;
    let d_given_e1 = c.x11 as f64 / c.exposed() as f64;
    let d_given_e0 = c.x01 as f64 / c.unexposed() as f64;
    let var_e = p_e * (1.0 - p_e);
    let var_d = p_d * (1.0 - p_d);
    let l2_pi = p_d * (e_given_d1 - p_e).powi(2) + (1.0 - p_d) * (e_given_d0 - p_e).powi(2);
    let l2_r = p_e * (d_given_e1 - p_d).powi(2) + (1.0 - p_e) * (d_given_e0 - p_d).powi(2);
    Ok(StratumBounds {
        label: label.into(),
        weight,
        phi,
        phi2: phi * phi,
        var_e,
        var_d,
        l2_pi,
        u2_pi: var_e,
        l2_r,
        u2_r: var_d,
    })
}

pub fn build_problem(s: &StratifiedTable) -> Result<TauProblem> {
    let marginal = s.marginal();
    let n = marginal.total() as f64;
    let p_e = marginal.exposed() as f64 / n;
    let p_d = marginal.cases() as f64 / n;
    let weights = s.weights();
    let mut strata = Vec::with_capacity(s.len());
    let mut between_e = 0.0;
    let mut between_d = 0.0;
    for (stratum, &w) in s.strata().iter().zip(&weights) {
        let b = stratum_bounds(&stratum.label, w, &stratum.counts)?;
        let c = &stratum.counts;
        let pe_c = c.exposed() as f64 / c.total() as f64;
        let pd_c = c.cases() as f64 / c.total() as f64;
        between_e += w * (pe_c - p_e).powi(2);
        between_d += w * (pd_c - p_d).powi(2);

        let k = b.hyperbola();
        let slack = FEASIBILITY_SLACK * b.u2_pi.max(b.u2_r).max(1.0);
        if b.l2_pi * b.l2_r > k + slack || k > b.u2_pi * b.u2_r + slack {
            let (lo, hi) = b.feasible_pi_interval();
            return Err(Error::InfeasibleStratum {
                label: b.label,
                lo,
                hi,
            });
        }
        strata.push(b);
    }
    Ok(TauProblem {
        strata,
        between_e,
        between_d,
        var_e: p_e * (1.0 - p_e),
        var_d: p_d * (1.0 - p_d),
    })
}

/// `build_problem` followed by `solve_tau`.
pub fn threshold_tc(s: &StratifiedTable, tol: f64) -> Result<TauSolution> {
    solve_tau(&build_problem(s)?, tol)
}
