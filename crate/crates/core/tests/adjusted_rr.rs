use causaltest::covariate::StratifiedTable;
use causaltest::tables::{adjusted_rr, measures, Counts2x2};

const VACCINE_STRATA: [(&str, Counts2x2); 3] = [
    ("18-49", Counts2x2::new(155, 7, 2666, 1523)),
    ("50-64", Counts2x2::new(290, 23, 1755, 2447)),
    ("65+", Counts2x2::new(561, 158, 1668, 7132)),
];

#[test]
fn vaccine_age_adjusted_risk_ratio() {
    let s = StratifiedTable::from_counts(VACCINE_STRATA).unwrap();
    let rr = adjusted_rr(&s).unwrap();
    assert!((rr - 0.08).abs() < 0.005, "adjusted RR = {rr}");
    // hand computation of Σ x11 n0/N over Σ x01 n1/N
    let num: f64 = VACCINE_STRATA
        .iter()
        .map(|(_, c)| c.x11 as f64 * c.unexposed() as f64 / c.total() as f64)
        .sum();
    let den: f64 = VACCINE_STRATA
        .iter()
        .map(|(_, c)| c.x01 as f64 * c.exposed() as f64 / c.total() as f64)
        .sum();
    assert!((rr - num / den).abs() < 1e-15);
}

#[test]
fn single_stratum_gives_crude_ratio() {
    let c = Counts2x2::new(318, 1631, 4679, 7538);
    let s = StratifiedTable::from_counts([("all", c)]).unwrap();
    let crude = measures(&c.probs().unwrap()).rr;
    assert!((adjusted_rr(&s).unwrap() - crude).abs() < 1e-12);
}

#[test]
fn identical_strata_give_crude_ratio() {
    let c = Counts2x2::new(34, 433, 1015, 518);
    let crude = measures(&c.probs().unwrap()).rr;
    for k in 2..6 {
        let s = StratifiedTable::from_counts((0..k).map(|i| (format!("s{i}"), c))).unwrap();
        assert!((adjusted_rr(&s).unwrap() - crude).abs() < 1e-12);
    }
}
