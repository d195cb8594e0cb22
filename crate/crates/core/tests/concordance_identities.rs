use causaltest::randomness::{cohort_statistics, propensity_summary, TwinCohort};
use num_rational::Ratio;
use proptest::prelude::*;

type Q = Ratio<i128>;

fn q(n: u64) -> Q {
    Q::from_integer(n as i128)
}

fn to_f64(r: Q) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn agreement_share_from_concordance(c in 0u64..5_000, d in 1u64..5_000, u in 0u64..5_000) {
        let n = c + d + u;
        let (cq, dq, uq, nq) = (q(c), q(d), q(u), q(n));
        let one = Q::from_integer(1);
        let two = Q::from_integer(2);
        let v = (uq + cq) / nq;
        let psi = (two * cq + dq) / (two * nq);
        let bc = two * cq / (two * cq + dq);
        let pc = cq / (cq + dq);
        prop_assert_eq!(v, one - two * psi * (one - bc));
        prop_assert_eq!(v, one - two * psi * (one - pc) / (one + pc));
        prop_assert_eq!((one - pc) / (one + pc), one - bc);

        let s = cohort_statistics(&TwinCohort::new(n, c, d, u).unwrap()).unwrap();
        prop_assert!((s.v - to_f64(v)).abs() < 1e-12);
        prop_assert!((s.psi_bar - to_f64(psi)).abs() < 1e-12);
        prop_assert!((s.bc - to_f64(bc)).abs() < 1e-12);
        prop_assert!((s.pc - to_f64(pc)).abs() < 1e-12);
    }

    #[test]
    fn variance_from_agreement(nums in proptest::collection::vec(1i128..999, 1..60)) {
        // ψ_i = k_i / 1000
        let psi: Vec<Q> = nums.iter().map(|&k| Q::new(k, 1000)).collect();
        let n = Q::from_integer(psi.len() as i128);
        let one = Q::from_integer(1);
        let two = Q::from_integer(2);
        let mean = psi.iter().copied().sum::<Q>() / n;
        let var = psi.iter().map(|p| (p - mean) * (p - mean)).sum::<Q>() / n;
        let l = psi.iter().map(|p| p * p + (one - p) * (one - p)).sum::<Q>() / n;
        let r2 = var / (mean * (one - mean));
        prop_assert_eq!(r2, one - (one - l) / (two * mean * (one - mean)));

        let floats: Vec<f64> = nums.iter().map(|&k| k as f64 / 1000.0).collect();
        let s = propensity_summary(&floats).unwrap();
        prop_assert!((s.r_squared - to_f64(r2)).abs() < 1e-12);
        prop_assert!((s.agreement - to_f64(l)).abs() < 1e-12);
    }
}
