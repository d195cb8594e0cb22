//! The asymptotic threshold of sufficient randomness, `T = 1 − |φ|`, from a
//! table or from prevalences plus a reported association measure.

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::tables::{phi, AssociationKind, MarginalSummary, Probs2x2};

/// Where a threshold value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdSource {
    FromTable,
    FromMeasure(AssociationKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub t: f64,
    /// Signed φ implied by the inputs.
    pub phi_used: f64,
    pub source: ThresholdSource,
}

impl ThresholdResult {
    fn from_phi(phi_used: f64, source: ThresholdSource) -> Self {
        Self {
            t: 1.0 - phi_used.abs(),
            phi_used,
            source,
        }
    }
}

/// `T = 1 − |φ|` for an interior table.
pub fn threshold(p: &Probs2x2) -> Result<ThresholdResult> {
    Ok(ThresholdResult::from_phi(phi(p)?, ThresholdSource::FromTable))
}

/// `λ = sqrt(p_e (1 − p_e) / (p_d (1 − p_d)))`, the factor turning a risk
/// difference into φ.
pub fn lambda(p_e: f64, p_d: f64) -> Result<f64> {
    check_open_unit("p_e", p_e)?;
    check_open_unit("p_d", p_d)?;
    Ok((p_e * (1.0 - p_e) / (p_d * (1.0 - p_d))).sqrt())
}

/// Risk difference implied by a relative risk at the given prevalences.
pub fn rd_from_rr(p_e: f64, p_d: f64, rr: f64) -> f64 {
    p_d * (rr - 1.0) / (1.0 + p_e * (rr - 1.0))
}

/// Converts an odds ratio to the matching relative risk.
///
/// Solves `p_e u² + a u + m = 0` with `a = p_d (OR − 1) + (1 − p_e) − p_e OR`
/// and `m = (p_e − 1) OR`, taking the root that gives `RR = 1` at `OR = 1`.
pub fn rr_from_or(p_e: f64, p_d: f64, or: f64) -> Result<f64> {
    check_open_unit("p_e", p_e)?;
    check_open_unit("p_d", p_d)?;
    let a = p_d * (or - 1.0) + (1.0 - p_e) - p_e * or;
    let m = (p_e - 1.0) * or;
    // a² − 4 p_e m written in its nonnegative form.
    let disc = a * a + 4.0 * p_e * (1.0 - p_e) * or;
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant(disc));
    }
    let root = disc.sqrt();
    // Same "+" root, in whichever form avoids cancellation.
    let u = if a >= 0.0 {
        -2.0 * m / (a + root)
    } else {
        (-a + root) / (2.0 * p_e)
    };
    Ok(u)
}

/// Threshold from `(p_e, p_d, ξ)` without access to the full table.
pub fn threshold_from_measure(m: &MarginalSummary) -> Result<ThresholdResult> {
    let lam = lambda(m.p_e(), m.p_d())?;
    let phi_used = match m.kind() {
        AssociationKind::Phi => m.value(),
        AssociationKind::Rd => m.value() * lam,
        AssociationKind::Rr => rd_from_rr(m.p_e(), m.p_d(), m.value()) * lam,
        AssociationKind::Or => {
            let rr = rr_from_or(m.p_e(), m.p_d(), m.value())?;
            rd_from_rr(m.p_e(), m.p_d(), rr) * lam
        }
    };
    Ok(ThresholdResult::from_phi(
        phi_used,
        ThresholdSource::FromMeasure(m.kind()),
    ))
}

/// `η/T` with the randomness lower bound standing in for `η`; above 1 the
/// bound alone warrants causal inference.
pub fn ample_randomness_ratio(l_eta: f64, threshold: f64) -> Result<f64> {
    if threshold == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    Ok(l_eta / threshold)
}
