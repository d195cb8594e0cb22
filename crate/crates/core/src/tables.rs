//! 2×2 contingency tables and the association measures derived from them.
//!
//! Cells are always ordered `(x01, x11, x00, x10)`, where the first digit is
//! the exposure `e` and the second the outcome `d`. Published tables usually
//! print outcome rows against exposure columns, so `Yes/No` rows read
//! `x01 x11` / `x00 x10`.

use serde::{Deserialize, Serialize};

use crate::covariate::StratifiedTable;
use crate::error::{Error, Result};

/// Tolerance on the simplex constraint of [`Probs2x2`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Observed frequency counts of the four `(e, d)` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counts2x2 {
    pub x01: u64,
    pub x11: u64,
    pub x00: u64,
    pub x10: u64,
}

impl Counts2x2 {
    pub const fn new(x01: u64, x11: u64, x00: u64, x10: u64) -> Self {
        Self { x01, x11, x00, x10 }
    }

    pub const fn from_array(cells: [u64; 4]) -> Self {
        Self::new(cells[0], cells[1], cells[2], cells[3])
    }

    pub const fn as_array(&self) -> [u64; 4] {
        [self.x01, self.x11, self.x00, self.x10]
    }

    pub const fn total(&self) -> u64 {
        self.x01 + self.x11 + self.x00 + self.x10
    }

    /// Number of exposed subjects (`e = 1`).
    pub const fn exposed(&self) -> u64 {
        self.x11 + self.x10
    }

    pub const fn unexposed(&self) -> u64 {
        self.x01 + self.x00
    }

    /// Number of subjects with the outcome (`d = 1`).
    pub const fn cases(&self) -> u64 {
        self.x01 + self.x11
    }

    pub const fn non_cases(&self) -> u64 {
        self.x00 + self.x10
    }

    pub fn has_zero_cell(&self) -> bool {
        self.as_array().contains(&0)
    }

    /// Relative frequencies; every cell must be positive.
    pub fn probs(&self) -> Result<Probs2x2> {
        from_counts(self)
    }

    /// Relative frequencies after adding 0.5 to every cell.
    pub fn haldane_probs(&self) -> Result<Probs2x2> {
        Probs2x2::from_weights(self.as_array().map(|x| x as f64 + 0.5))
    }

    /// The φ coefficient computed from integer counts.
    ///
    /// Zero cells are allowed as long as both marginals are interior.
    pub fn phi(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::EmptyTable);
        }
        let margins = [
            ("P(e=1)", self.exposed()),
            ("P(e=0)", self.unexposed()),
            ("P(d=1)", self.cases()),
            ("P(d=0)", self.non_cases()),
        ];
        for (name, m) in margins {
            if m == 0 {
                return Err(Error::DegenerateMarginal(name));
            }
        }
        let cross = self.x11 as i128 * self.x00 as i128 - self.x01 as i128 * self.x10 as i128;
        let denom = (self.exposed() as f64)
            * (self.unexposed() as f64)
            * (self.cases() as f64)
            * (self.non_cases() as f64);
        Ok(cross as f64 / denom.sqrt())
    }
}

/// Relative frequencies on the open 3-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probs2x2 {
    p01: f64,
    p11: f64,
    p00: f64,
    p10: f64,
}

impl Probs2x2 {
    pub fn new(p01: f64, p11: f64, p00: f64, p10: f64) -> Result<Self> {
        let cells = [p01, p11, p00, p10];
        if cells.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::ZeroCell);
        }
        let sum: f64 = cells.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain {
                what: "cell sum",
                value: sum,
                domain: "1 ± 1e-12",
            });
        }
        Ok(Self { p01, p11, p00, p10 })
    }

    /// Normalizes positive weights (counts, expected counts) onto the simplex.
    pub fn from_weights(w: [f64; 4]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyTable);
        }
        if w.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::ZeroCell);
        }
        Self::new(w[0] / total, w[1] / total, w[2] / total, w[3] / total)
    }

    pub fn p01(&self) -> f64 {
        self.p01
    }
    pub fn p11(&self) -> f64 {
        self.p11
    }
    pub fn p00(&self) -> f64 {
        self.p00
    }
    pub fn p10(&self) -> f64 {
        self.p10
    }

    pub fn cells(&self) -> [f64; 4] {
        [self.p01, self.p11, self.p00, self.p10]
    }

    /// Exposure prevalence `P(e=1)`.
    pub fn p_e(&self) -> f64 {
        self.p11 + self.p10
    }

    /// Outcome prevalence `P(d=1)`.
    pub fn p_d(&self) -> f64 {
        self.p01 + self.p11
    }

    /// The table with exposure labels swapped (`e ↦ 1 − e`).
    pub fn swap_exposure(&self) -> Self {
        Self {
            p01: self.p11,
            p11: self.p01,
            p00: self.p10,
            p10: self.p00,
        }
    }
}

pub fn from_counts(c: &Counts2x2) -> Result<Probs2x2> {
    let n = c.total();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    if c.has_zero_cell() {
        return Err(Error::ZeroCell);
    }
    let n = n as f64;
    Probs2x2::new(
        c.x01 as f64 / n,
        c.x11 as f64 / n,
        c.x00 as f64 / n,
        c.x10 as f64 / n,
    )
}

/// Pearson correlation of the two binary variables.
pub fn phi(p: &Probs2x2) -> Result<f64> {
    phi_of_cells(p.cells())
}

/// φ from non-negative cell weights; zero cells are fine while both
/// marginals stay interior.
pub fn phi_of_cells(cells: [f64; 4]) -> Result<f64> {
    let [p01, p11, p00, p10] = cells;
    let total = p01 + p11 + p00 + p10;
    let p_e = (p11 + p10) / total;
    let p_d = (p01 + p11) / total;
    if !(p_e > 0.0 && p_e < 1.0) {
        return Err(Error::DegenerateMarginal("P(e=1)"));
    }
    if !(p_d > 0.0 && p_d < 1.0) {
        return Err(Error::DegenerateMarginal("P(d=1)"));
    }
    let num = (p11 * p00 - p01 * p10) / (total * total);
    Ok(num / (p_e * (1.0 - p_e) * p_d * (1.0 - p_d)).sqrt())
}

/// Which association measure a summary value refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssociationKind {
    Phi,
    #[serde(rename = "RD")]
    Rd,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "OR")]
    Or,
}

impl std::fmt::Display for AssociationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AssociationKind::Phi => "phi",
            AssociationKind::Rd => "RD",
            AssociationKind::Rr => "RR",
            AssociationKind::Or => "OR",
        })
    }
}

impl std::str::FromStr for AssociationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "phi" => Ok(AssociationKind::Phi),
            "rd" => Ok(AssociationKind::Rd),
            "rr" => Ok(AssociationKind::Rr),
            "or" => Ok(AssociationKind::Or),
            _ => Err(Error::Spec(format!("unknown association measure `{s}`"))),
        }
    }
}

/// Risk difference, relative risk and odds ratio of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub rd: f64,
    pub rr: f64,
    pub or: f64,
}

pub fn measures(p: &Probs2x2) -> Measures {
    let risk_exposed = p.p11 / (p.p11 + p.p10);
    let risk_unexposed = p.p01 / (p.p01 + p.p00);
    Measures {
        rd: risk_exposed - risk_unexposed,
        rr: risk_exposed * (p.p01 + p.p00) / p.p01,
        or: (p.p11 * p.p00) / (p.p10 * p.p01),
    }
}

/// Prevalences plus one association measure, validated against the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    p_e: f64,
    p_d: f64,
    kind: AssociationKind,
    value: f64,
}

/// Cells below this are treated as infeasible when reconstructing a table
/// from a summary.
pub const FEASIBILITY_EPS: f64 = 1e-12;

impl MarginalSummary {
    pub fn new(p_e: f64, p_d: f64, kind: AssociationKind, value: f64) -> Result<Self> {
        crate::error::check_open_unit("p_e", p_e)?;
        crate::error::check_open_unit("p_d", p_d)?;
        if !value.is_finite() {
            return Err(Error::Domain {
                what: "association value",
                value,
                domain: "finite reals",
            });
        }
        if matches!(kind, AssociationKind::Rr | AssociationKind::Or) && value <= 0.0 {
            return Err(Error::Domain {
                what: "ratio measure",
                value,
                domain: "(0, inf)",
            });
        }
        let summary = Self {
            p_e,
            p_d,
            kind,
            value,
        };
        summary.implied_cells()?;
        Ok(summary)
    }

    pub fn from_table(p: &Probs2x2, kind: AssociationKind) -> Result<Self> {
        let m = measures(p);
        let value = match kind {
            AssociationKind::Phi => phi(p)?,
            AssociationKind::Rd => m.rd,
            AssociationKind::Rr => m.rr,
            AssociationKind::Or => m.or,
        };
        Self::new(p.p_e(), p.p_d(), kind, value)
    }

    pub fn p_e(&self) -> f64 {
        self.p_e
    }
    pub fn p_d(&self) -> f64 {
        self.p_d
    }
    pub fn kind(&self) -> AssociationKind {
        self.kind
    }
    pub fn value(&self) -> f64 {
        self.value
    }

    /// Reconstructs `(p01, p11, p00, p10)`; fails if any cell is not
    /// comfortably positive.
    pub fn implied_cells(&self) -> Result<[f64; 4]> {
        let (pe, pd) = (self.p_e, self.p_d);
        let p11 = match self.kind {
            AssociationKind::Phi => {
                pe * pd + self.value * (pe * (1.0 - pe) * pd * (1.0 - pd)).sqrt()
            }
            AssociationKind::Rd => pe * pd + self.value * pe * (1.0 - pe),
            AssociationKind::Rr => pd - unexposed_cases_from_rr(pe, pd, self.value),
            AssociationKind::Or => {
                let rr = crate::threshold::rr_from_or(pe, pd, self.value)?;
                pd - unexposed_cases_from_rr(pe, pd, rr)
            }
        };
        let cells = [pd - p11, p11, 1.0 - pe - pd + p11, pe - p11];
        const NAMES: [&str; 4] = ["p01", "p11", "p00", "p10"];
        for (name, &v) in NAMES.iter().zip(cells.iter()) {
            if !(v > FEASIBILITY_EPS) {
                return Err(Error::Infeasible { cell: name, value: v });
            }
        }
        Ok(cells)
    }
}

/// `p01 = p_d (1 − p_e) / (1 + p_e (RR − 1))`.
fn unexposed_cases_from_rr(pe: f64, pd: f64, rr: f64) -> f64 {
    pd * (1.0 - pe) / (1.0 + pe * (rr - 1.0))
}

/// Mantel–Haenszel pooled relative risk across strata.
pub fn adjusted_rr(s: &StratifiedTable) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for stratum in s.strata() {
        let c = &stratum.counts;
        if c.exposed() == 0 || c.unexposed() == 0 {
            return Err(Error::DegenerateStratum {
                label: stratum.label.clone(),
                reason: "no exposed or no unexposed subjects".into(),
            });
        }
        let n = c.total() as f64;
        num += c.x11 as f64 * c.unexposed() as f64 / n;
        den += c.x01 as f64 * c.exposed() as f64 / n;
    }
    if den == 0.0 || num == 0.0 {
        return Err(Error::ZeroCell);
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) const COPD: Counts2x2 = Counts2x2::new(318, 1631, 4679, 7538);
    pub(crate) const DRUGS: Counts2x2 = Counts2x2::new(114, 978, 3649, 1864);
    pub(crate) const VACCINE: Counts2x2 = Counts2x2::new(1006, 188, 6089, 11102);

    #[test]
    fn copd_frequencies() {
        let p = COPD.probs().unwrap();
        assert_abs_diff_eq!(p.p01(), 318.0 / 14166.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.p_e(), 0.65, epsilon = 0.005);
        assert_abs_diff_eq!(p.p_d(), 0.14, epsilon = 0.005);
        let sum: f64 = p.cells().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_table() {
        let p = Counts2x2::new(25, 25, 25, 25).probs().unwrap();
        assert_eq!(p.cells(), [0.25; 4]);
        assert_eq!(phi(&p).unwrap(), 0.0);
        let m = measures(&p);
        assert_eq!((m.rd, m.rr, m.or), (0.0, 1.0, 1.0));
    }

    #[test]
    fn drugs_prevalences() {
        let p = DRUGS.probs().unwrap();
        assert_abs_diff_eq!(p.p_e(), 0.43, epsilon = 0.005);
        assert_abs_diff_eq!(p.p_d(), 0.17, epsilon = 0.005);
    }

    #[test]
    fn zero_and_empty_tables_are_rejected() {
        assert_eq!(Counts2x2::new(0, 0, 0, 0).probs(), Err(Error::EmptyTable));
        assert_eq!(Counts2x2::new(1, 0, 3, 4).probs(), Err(Error::ZeroCell));
        assert!(Probs2x2::new(0.5, 0.5, 0.0, 0.0).is_err());
        assert!(Probs2x2::new(0.25, 0.25, 0.25, 0.2).is_err());
    }

    #[test]
    fn published_phi_values() {
        assert_abs_diff_eq!(phi(&COPD.probs().unwrap()).unwrap(), 0.16, epsilon = 0.005);
        assert_abs_diff_eq!(phi(&VACCINE.probs().unwrap()).unwrap(), -0.25, epsilon = 0.005);
        assert_abs_diff_eq!(phi(&DRUGS.probs().unwrap()).unwrap(), 0.42, epsilon = 0.005);
    }

    #[test]
    fn count_phi_matches_probability_phi() {
        for c in [COPD, DRUGS, VACCINE] {
            let a = c.phi().unwrap();
            let b = phi(&c.probs().unwrap()).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn count_phi_with_zero_cell_but_interior_margins() {
        let c = Counts2x2::new(0, 5, 5, 5);
        // cross = 5*5 - 0 = 25; margins 10, 5, 5, 10
        assert_abs_diff_eq!(c.phi().unwrap(), 25.0 / 50.0, epsilon = 1e-15);
        assert_eq!(
            Counts2x2::new(0, 3, 0, 4).phi(),
            Err(Error::DegenerateMarginal("P(e=0)"))
        );
    }

    #[test]
    fn published_relative_risks() {
        assert_abs_diff_eq!(measures(&COPD.probs().unwrap()).rr, 2.8, epsilon = 0.05);
        assert_abs_diff_eq!(measures(&DRUGS.probs().unwrap()).rr, 11.4, epsilon = 0.1);
        assert_abs_diff_eq!(measures(&VACCINE.probs().unwrap()).rr, 0.12, epsilon = 0.01);
    }

    #[test]
    fn phi_is_antisymmetric_under_exposure_swap() {
        for c in [COPD, DRUGS, VACCINE] {
            let p = c.probs().unwrap();
            let (a, b) = (phi(&p.swap_exposure()).unwrap(), phi(&p).unwrap());
            assert!((a + b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn haldane_correction_handles_zero_cells() {
        let p = Counts2x2::new(0, 4, 9, 2).haldane_probs().unwrap();
        assert_abs_diff_eq!(p.p01(), 0.5 / 17.0, epsilon = 1e-15);
    }

    #[test]
    fn summary_reconstructs_the_table() {
        let p = COPD.probs().unwrap();
        for kind in [
            AssociationKind::Phi,
            AssociationKind::Rd,
            AssociationKind::Rr,
            AssociationKind::Or,
        ] {
            let s = MarginalSummary::from_table(&p, kind).unwrap();
            let cells = s.implied_cells().unwrap();
            for (a, b) in cells.iter().zip(p.cells().iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn impossible_summary_is_infeasible() {
        // RR so large that every case would have to be exposed and more.
        let err = MarginalSummary::new(0.1, 0.5, AssociationKind::Rr, 50.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
        assert!(MarginalSummary::new(0.5, 0.5, AssociationKind::Rd, 1.5).is_err());
        assert!(MarginalSummary::new(0.5, 0.5, AssociationKind::Or, -1.0).is_err());
        assert!(MarginalSummary::new(1.0, 0.5, AssociationKind::Rr, 1.0).is_err());
    }

    #[test]
    fn association_kind_parses() {
        assert_eq!("RR".parse::<AssociationKind>().unwrap(), AssociationKind::Rr);
        assert_eq!("phi".parse::<AssociationKind>().unwrap(), AssociationKind::Phi);
        assert!("xx".parse::<AssociationKind>().is_err());
    }
}
