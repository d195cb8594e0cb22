use causaltest::finitepop::{fpc_threshold, ResampleConfig};
use causaltest::tables::Counts2x2;
use proptest::prelude::*;

#[test]
fn subpopulation_corrected_threshold() {
    let x0 = Counts2x2::new(34, 433, 1015, 518);
    let r = fpc_threshold(&x0, &ResampleConfig::new(0.05, 100_000, 2024).unwrap()).unwrap();
    assert!((r.t_point - 0.50).abs() < 0.005);
    assert!((r.t_n - 0.55).abs() < 0.02, "T_n = {}", r.t_n);
    assert!(r.quantile_alt >= r.t_point - 0.05 && r.quantile_alt <= r.t_n);
    assert!(r.se_alt > 0.0 && r.se_alt < 0.05);
    let again = fpc_threshold(&x0, &ResampleConfig::new(0.05, 100_000, 2024).unwrap()).unwrap();
    assert_eq!(r, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn corrected_threshold_bounds(cells in proptest::array::uniform4(3u64..600), seed in any::<u64>()) {
        let x0 = Counts2x2::from_array(cells);
        let mut prev = f64::NEG_INFINITY;
        for alpha in [0.6, 0.3, 0.1, 0.05, 0.01] {
            let r = fpc_threshold(&x0, &ResampleConfig::new(alpha, 3_000, seed).unwrap()).unwrap();
            prop_assert!(r.t_n >= r.t_point);
            prop_assert!(r.t_n >= prev);
            prev = r.t_n;
        }
    }
}
