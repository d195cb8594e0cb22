//! Empirical lower bound on the randomness `η` from monozygotic-twin
//! concordances.
//!
//! For one trait with prevalence `ψ̄` and probandwise concordance `BC`, the
//! share of variance explained by individual propensities is bounded by
//! `R² ≤ 1 − (1 − BC)/(1 − ψ̄)`, assuming the concordant share `L` of
//! individual propensities does not exceed the observed twin agreement `V`.
//! The two trait bounds combine as `η ≥ 1 − sqrt(R²_π,max) · sqrt(R²_r,max)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_closed_unit, check_open_unit, Error, Result};

/// Radicands in `[−RADICAND_SLACK, 0)` are clipped to zero.
pub const RADICAND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConcordanceKind {
    Probandwise,
    Pairwise,
}

/// A twin-study concordance paired with the prevalence of the same trait in
/// the analysed population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceEvidence {
    pub kind: ConcordanceKind,
    pub value: f64,
    pub prevalence: f64,
}

impl ConcordanceEvidence {
    pub fn new(kind: ConcordanceKind, value: f64, prevalence: f64) -> Result<Self> {
        check_closed_unit("concordance", value)?;
        check_open_unit("prevalence", prevalence)?;
        Ok(Self {
            kind,
            value,
            prevalence,
        })
    }

    pub fn probandwise(value: f64, prevalence: f64) -> Result<Self> {
        Self::new(ConcordanceKind::Probandwise, value, prevalence)
    }

    pub fn pairwise(value: f64, prevalence: f64) -> Result<Self> {
        Self::new(ConcordanceKind::Pairwise, value, prevalence)
    }

    /// `1 − BC`, equivalently `(1 − PC)/(1 + PC)`.
    fn discordance(&self) -> f64 {
        match self.kind {
            ConcordanceKind::Probandwise => 1.0 - self.value,
            ConcordanceKind::Pairwise => (1.0 - self.value) / (1.0 + self.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomnessBound {
    pub l_eta: f64,
    /// Upper bound on `R²_π` (exposure propensities).
    pub r2_pi_upper: f64,
    /// Upper bound on `R²_r` (outcome prognoses).
    pub r2_r_upper: f64,
}

/// Single-trait bound `R² ≤ 1 − (1 − BC)/(1 − ψ̄)`.
pub fn r_squared_upper_bound(ev: &ConcordanceEvidence) -> Result<f64> {
    let radicand = 1.0 - ev.discordance() / (1.0 - ev.prevalence);
    if radicand >= 0.0 {
        Ok(radicand.min(1.0))
    } else if radicand >= -RADICAND_SLACK {
        Ok(0.0)
    } else {
        Err(Error::InconsistentEvidence {
            value: ev.value,
            prevalence: ev.prevalence,
            radicand,
        })
    }
}

/// `l_η` from one piece of evidence per trait; the two kinds may differ.
pub fn lower_bound_eta(
    exposure: &ConcordanceEvidence,
    outcome: &ConcordanceEvidence,
) -> Result<RandomnessBound> {
    let r2_pi_upper = r_squared_upper_bound(exposure)?;
    let r2_r_upper = r_squared_upper_bound(outcome)?;
    Ok(RandomnessBound {
        l_eta: 1.0 - r2_pi_upper.sqrt() * r2_r_upper.sqrt(),
        r2_pi_upper,
        r2_r_upper,
    })
}

/// `BC = 2 PC / (1 + PC)`.
pub fn pairwise_to_probandwise(pc: f64) -> Result<f64> {
    check_closed_unit("pairwise concordance", pc)?;
    Ok(2.0 * pc / (1.0 + pc))
}

/// Counts from a twin registry for a single trait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwinCohort {
    pub pairs: u64,
    /// Pairs where both twins have the trait.
    pub concordant: u64,
    /// Pairs where exactly one twin has the trait.
    pub discordant: u64,
    /// Pairs where neither twin has the trait.
    pub unaffected: u64,
}

impl TwinCohort {
    pub fn new(pairs: u64, concordant: u64, discordant: u64, unaffected: u64) -> Result<Self> {
        if concordant + discordant + unaffected != pairs {
            return Err(Error::CohortMismatch {
                pairs,
                concordant,
                discordant,
                unaffected,
            });
        }
        Ok(Self {
            pairs,
            concordant,
            discordant,
            unaffected,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohortStatistics {
    /// Probandwise concordance `2C/(2C + D̃)`.
    pub bc: f64,
    /// Pairwise concordance `C/(C + D̃)`.
    pub pc: f64,
    /// Share of agreeing pairs `(U + C)/n`.
    pub v: f64,
    /// Trait prevalence `(C + D̃/2)/n`.
    pub psi_bar: f64,
}

pub fn cohort_statistics(t: &TwinCohort) -> Result<CohortStatistics> {
    let (c, d) = (t.concordant as f64, t.discordant as f64);
    if t.concordant == 0 && t.discordant == 0 {
        return Err(Error::NoTraitPresent);
    }
    let n = t.pairs as f64;
    Ok(CohortStatistics {
        bc: 2.0 * c / (2.0 * c + d),
        pc: c / (c + d),
        v: (t.unaffected as f64 + c) / n,
        psi_bar: (2.0 * c + d) / (2.0 * n),
    })
}

/// Moments of a finite list of individual trait propensities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensitySummary {
    pub mean: f64,
    pub variance: f64,
    pub r_squared: f64,
    /// Mean of `ψ² + (1 − ψ)²`, the chance that two independent draws agree.
    pub agreement: f64,
}

pub fn propensity_summary(psi: &[f64]) -> Result<PropensitySummary> {
    if psi.is_empty() {
        return Err(Error::InvalidPopulation("empty propensity list".into()));
    }
    let n = psi.len() as f64;
    let mean = psi.iter().sum::<f64>() / n;
    check_open_unit("mean propensity", mean)?;
    let variance = psi.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let agreement = psi.iter().map(|p| p * p + (1.0 - p) * (1.0 - p)).sum::<f64>() / n;
    Ok(PropensitySummary {
        mean,
        variance,
        r_squared: variance / (mean * (1.0 - mean)),
        agreement,
    })
}

/// Parses `0.67` or `67%`.
pub fn parse_concordance(s: &str) -> Result<f64> {
    let s = s.trim();
    let (body, scale) = match s.strip_suffix('%') {
        Some(b) => (b.trim(), 100.0),
        None => (s, 1.0),
    };
    let v: f64 = body
        .parse()
        .map_err(|_| Error::Spec(format!("cannot parse concordance `{s}`")))?;
    check_closed_unit("concordance", v / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn copd_evidence_with_rounded_prevalences() {
        let e = ConcordanceEvidence::probandwise(0.67, 0.65).unwrap();
        let d = ConcordanceEvidence::probandwise(0.20, 0.14).unwrap();
        let b = lower_bound_eta(&e, &d).unwrap();
        // 1 - sqrt(1 - .33/.35) * sqrt(1 - .80/.86)
        assert_abs_diff_eq!(b.l_eta, 0.936_859_593_258_713, epsilon = 1e-12);
        assert_abs_diff_eq!(b.r2_pi_upper, 0.057_142_857_142_857, epsilon = 1e-12);
    }

    #[test]
    fn drugs_evidence_with_rounded_prevalences() {
        let e = ConcordanceEvidence::probandwise(0.50, 0.43).unwrap();
        let d = ConcordanceEvidence::probandwise(0.40, 0.17).unwrap();
        let b = lower_bound_eta(&e, &d).unwrap();
        assert_abs_diff_eq!(b.l_eta, 0.815_525_448_141_923, epsilon = 1e-12);
    }

    #[test]
    fn perfect_concordance_gives_no_randomness() {
        let e = ConcordanceEvidence::probandwise(1.0, 0.3).unwrap();
        let d = ConcordanceEvidence::pairwise(1.0, 0.8).unwrap();
        assert_eq!(lower_bound_eta(&e, &d).unwrap().l_eta, 0.0);
        assert_eq!(r_squared_upper_bound(&e).unwrap(), 1.0);
    }

    #[test]
    fn bound_zero_when_concordance_equals_prevalence() {
        let ev = ConcordanceEvidence::probandwise(0.5, 0.5).unwrap();
        assert_eq!(r_squared_upper_bound(&ev).unwrap(), 0.0);
    }

    #[test]
    fn inconsistent_evidence_is_rejected() {
        let ev = ConcordanceEvidence::probandwise(0.10, 0.40).unwrap();
        assert!(matches!(
            r_squared_upper_bound(&ev),
            Err(Error::InconsistentEvidence { .. })
        ));
    }

    #[test]
    fn tiny_negative_radicand_is_clipped() {
        // 1 - (1 - 0.3)/(1 - 0.3) lands a hair below zero with this rounding
        let ev = ConcordanceEvidence::probandwise(0.3 - 1e-12, 0.3).unwrap();
        assert_eq!(r_squared_upper_bound(&ev).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_and_probandwise_agree() {
        let pc = 0.25;
        let bc = pairwise_to_probandwise(pc).unwrap();
        assert_abs_diff_eq!(bc, 0.4, epsilon = 1e-15);
        let a = ConcordanceEvidence::pairwise(pc, 0.2).unwrap();
        let b = ConcordanceEvidence::probandwise(bc, 0.2).unwrap();
        assert_abs_diff_eq!(
            r_squared_upper_bound(&a).unwrap(),
            r_squared_upper_bound(&b).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(pairwise_to_probandwise(0.0).unwrap(), 0.0);
        assert_eq!(pairwise_to_probandwise(1.0).unwrap(), 1.0);
        assert!(pairwise_to_probandwise(1.5).is_err());
    }

    #[test]
    fn cohort_statistics_by_hand() {
        let s = cohort_statistics(&TwinCohort::new(4, 1, 2, 1).unwrap()).unwrap();
        assert_eq!(s.bc, 0.5);
        assert_abs_diff_eq!(s.pc, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.v, 0.5);
        assert_eq!(s.psi_bar, 0.5);

        let all = cohort_statistics(&TwinCohort::new(10, 10, 0, 0).unwrap()).unwrap();
        assert_eq!((all.bc, all.pc, all.v, all.psi_bar), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn cohort_errors() {
        assert!(matches!(
            TwinCohort::new(5, 1, 1, 1),
            Err(Error::CohortMismatch { .. })
        ));
        let none = TwinCohort::new(3, 0, 0, 3).unwrap();
        assert_eq!(cohort_statistics(&none), Err(Error::NoTraitPresent));
    }

    #[test]
    fn lower_bound_non_increasing_in_concordance() {
        let d = ConcordanceEvidence::probandwise(0.4, 0.2).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let bc = 0.3 + 0.7 * i as f64 / 100.0;
            let e = ConcordanceEvidence::probandwise(bc, 0.3).unwrap();
            let l = lower_bound_eta(&e, &d).unwrap().l_eta;
            assert!(l <= prev + 1e-15);
            prev = l;
        }
    }

    #[test]
    fn percent_strings() {
        assert_abs_diff_eq!(parse_concordance("67%").unwrap(), 0.67, epsilon = 1e-15);
        assert_eq!(parse_concordance(" 0.2 ").unwrap(), 0.2);
        assert!(parse_concordance("120%").is_err());
        assert!(parse_concordance("abc").is_err());
    }
}
