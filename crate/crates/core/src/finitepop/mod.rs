//! Finite-population correction of the threshold.
//!
//! Synthetic tables are drawn from `Mult(n, x₀/n)`. Those within the
//! approximate confidence region `(x − x₀)ᵀ Σ†(x − x₀) < χ²₃(1 − α)` are
//! kept and the largest `T(x)` among them (and `x₀` itself) is the corrected
//! threshold `T_n(1 − α)`. The same pass also records the `1 − α` quantile
//! and the standard deviation of every synthetic `T`.

mod chi2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chi2::{chi2_cdf_df3, chi2_quantile_df3};

use crate::error::{check_open_unit, Error, Result};
use crate::linalg::{pseudo_inverse_with_rank, quad_form, Mat4, ZERO};
use crate::sampling::{multinomial, stream_rng};
use crate::tables::Counts2x2;

pub const DEFAULT_SAMPLES: u64 = 100_000;
/// Below this the result is flagged as under-sampled.
pub const MIN_REPORTED_SAMPLES: u64 = 1_000;
/// Draws per independently seeded partition.
const CHUNK: u64 = 4_096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub alpha: f64,
    pub num_samples: u64,
    pub seed: u64,
}

impl ResampleConfig {
    pub fn new(alpha: f64, num_samples: u64, seed: u64) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        if num_samples == 0 {
            return Err(Error::Domain {
                what: "num_samples",
                value: 0.0,
                domain: "positive integers",
            });
        }
        Ok(Self {
            alpha,
            num_samples,
            seed,
        })
    }

    pub fn under_sampled(&self) -> bool {
        self.num_samples < MIN_REPORTED_SAMPLES
    }
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            num_samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

/// Multinomial covariance of the cell counts with its pseudo-inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix4 {
    pub sigma: Mat4,
    pub pinv: Mat4,
    pub rank: usize,
}

/// `n (diag(p) − p pᵀ)`.
pub fn multinomial_covariance_of(n: f64, p: &[f64; 4]) -> Mat4 {
    let mut s = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            s[i][j] = if i == j {
                n * p[i] * (1.0 - p[i])
            } else {
                -n * p[i] * p[j]
            };
        }
    }
    s
}

pub fn multinomial_covariance(x0: &Counts2x2) -> Result<CovMatrix4> {
    let n = x0.total();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    let nf = n as f64;
    let p = x0.as_array().map(|x| x as f64 / nf);
    let sigma = multinomial_covariance_of(nf, &p);
    let (pinv, rank) = pseudo_inverse_with_rank(&sigma)?;
    Ok(CovMatrix4 { sigma, pinv, rank })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpcResult {
    /// Corrected threshold `T_n(1 − α)`.
    pub t_n: f64,
    /// `T(x₀)`.
    pub t_point: f64,
    /// `1 − α` quantile of the synthetic `T` values.
    pub quantile_alt: f64,
    /// Standard deviation of the synthetic `T` values.
    pub se_alt: f64,
    /// Synthetic tables inside the confidence region.
    pub accepted_count: u64,
    /// Synthetic tables skipped because a marginal was 0 or 1.
    pub degenerate_count: u64,
    pub chi2_cutoff: f64,
    pub config: ResampleConfig,
}

#[derive(Default)]
struct Partial {
    t_values: Vec<f64>,
    accepted_max: Option<f64>,
    accepted: u64,
    degenerate: u64,
}

fn run_chunk(x0: &Counts2x2, p0: &[f64; 4], pinv: &Mat4, cutoff: f64, cfg: &ResampleConfig, chunk: u64) -> Partial {
    let start = chunk * CHUNK;
    let len = CHUNK.min(cfg.num_samples - start);
    let mut rng = stream_rng(cfg.seed, chunk);
    let n = x0.total();
    let base = x0.as_array();
    let mut out = Partial {
        t_values: Vec::with_capacity(len as usize),
        ..Partial::default()
    };
    for _ in 0..len {
        let x = multinomial(&mut rng, n, p0);
        let Ok(phi) = Counts2x2::from_array(x).phi() else {
            out.degenerate += 1;
            continue;
        };
        let t = 1.0 - phi.abs();
        out.t_values.push(t);
        let diff = [0, 1, 2, 3].map(|k| x[k] as f64 - base[k] as f64);
        if quad_form(pinv, &diff) < cutoff {
            out.accepted += 1;
            out.accepted_max = Some(out.accepted_max.map_or(t, |m: f64| m.max(t)));
        }
    }
    out
}

/// Linear-interpolation (type 7) sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn fpc_threshold(x0: &Counts2x2, cfg: &ResampleConfig) -> Result<FpcResult> {
    let n = x0.total();
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    if x0.has_zero_cell() {
        return Err(Error::ZeroCell);
    }
    let cfg = ResampleConfig::new(cfg.alpha, cfg.num_samples, cfg.seed)?;
    let t_point = 1.0 - x0.phi()?.abs();
    let cov = multinomial_covariance(x0)?;
    let cutoff = chi2_quantile_df3(1.0 - cfg.alpha)?;
    let p0 = x0.as_array().map(|x| x as f64 / n as f64);

    let chunks = cfg.num_samples.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..chunks)
        .into_par_iter()
        .map(|c| run_chunk(x0, &p0, &cov.pinv, cutoff, &cfg, c))
        .collect();

    let mut t_values = Vec::with_capacity(cfg.num_samples as usize);
    let mut t_n = t_point;
    let mut accepted = 0;
    let mut degenerate = 0;
    for part in partials {
        t_values.extend_from_slice(&part.t_values);
        if let Some(m) = part.accepted_max {
            t_n = t_n.max(m);
        }
        accepted += part.accepted;
        degenerate += part.degenerate;
    }

    let (quantile_alt, se_alt) = if t_values.is_empty() {
        (t_point, 0.0)
    } else {
        let m = t_values.len() as f64;
        let mean = t_values.iter().sum::<f64>() / m;
        let var = if t_values.len() > 1 {
            t_values.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        let mut sorted = t_values;
        sorted.sort_by(f64::total_cmp);
        (sorted_quantile(&sorted, 1.0 - cfg.alpha), var.sqrt())
    };

    Ok(FpcResult {
        t_n,
        t_point,
        quantile_alt,
        se_alt,
        accepted_count: accepted,
        degenerate_count: degenerate,
        chi2_cutoff: cutoff,
        config: cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matmul, max_abs, penrose_residual, sub};

    #[test]
    fn uniform_covariance() {
        let c = multinomial_covariance(&Counts2x2::new(1, 1, 1, 1)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.75 } else { -0.25 };
                assert!((c.sigma[i][j] - expect).abs() < 1e-15);
            }
        }
        assert_eq!(c.rank, 3);
    }

    #[test]
    fn covariance_rows_sum_to_zero() {
        for x in [[318, 1631, 4679, 7538], [34, 433, 1015, 518], [1, 2, 3, 4]] {
            let c = multinomial_covariance(&Counts2x2::from_array(x)).unwrap();
            for row in c.sigma {
                let scale: f64 = row.iter().map(|v| v.abs()).sum();
                assert!(row.iter().sum::<f64>().abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn copd_pseudo_inverse_round_trips() {
        let c = multinomial_covariance(&Counts2x2::new(318, 1631, 4679, 7538)).unwrap();
        let back = matmul(&matmul(&c.sigma, &c.pinv), &c.sigma);
        assert!(max_abs(&sub(&back, &c.sigma)) < 1e-6);
        assert!(penrose_residual(&c.sigma, &c.pinv) < 1e-8);
    }

    #[test]
    fn empty_and_zero_cell_inputs() {
        assert_eq!(
            multinomial_covariance(&Counts2x2::new(0, 0, 0, 0)),
            Err(Error::EmptyTable)
        );
        let cfg = ResampleConfig::new(0.05, 100, 1).unwrap();
        assert_eq!(
            fpc_threshold(&Counts2x2::new(0, 4, 5, 6), &cfg),
            Err(Error::ZeroCell)
        );
        assert!(ResampleConfig::new(1.0, 100, 1).is_err());
        assert!(ResampleConfig::new(0.05, 0, 1).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let x0 = Counts2x2::new(34, 433, 1015, 518);
        let cfg = ResampleConfig::new(0.05, 10_000, 42).unwrap();
        let a = fpc_threshold(&x0, &cfg).unwrap();
        let b = fpc_threshold(&x0, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t_n.to_bits(), b.t_n.to_bits());
        let other = fpc_threshold(&x0, &ResampleConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.se_alt, other.se_alt);
    }

    #[test]
    fn corrected_threshold_dominates_point_value() {
        let x0 = Counts2x2::new(34, 433, 1015, 518);
        let cfg = ResampleConfig::new(0.05, 5_000, 9).unwrap();
        let r = fpc_threshold(&x0, &cfg).unwrap();
        assert!(r.t_n >= r.t_point);
        assert!(r.accepted_count > 0 && r.accepted_count <= 5_000);
        assert!((r.t_point - 0.5008).abs() < 1e-3);
    }

    #[test]
    fn near_one_alpha_collapses_to_point_value() {
        let x0 = Counts2x2::new(34, 433, 1015, 518);
        let cfg = ResampleConfig::new(1.0 - 1e-12, 5_000, 5).unwrap();
        let r = fpc_threshold(&x0, &cfg).unwrap();
        assert!(r.chi2_cutoff < 1e-6);
        assert!((r.t_n - r.t_point).abs() < 1e-3);
    }

    #[test]
    fn non_increasing_in_alpha() {
        let x0 = Counts2x2::new(20, 60, 90, 30);
        let mut prev = f64::INFINITY;
        for alpha in [0.001, 0.01, 0.05, 0.1, 0.3, 0.6, 0.9] {
            let r = fpc_threshold(&x0, &ResampleConfig::new(alpha, 3_000, 77).unwrap()).unwrap();
            assert!(r.t_n <= prev);
            prev = r.t_n;
        }
    }

    #[test]
    fn small_tables_count_degenerate_draws() {
        let x0 = Counts2x2::new(1, 1, 1, 1);
        let r = fpc_threshold(&x0, &ResampleConfig::new(0.05, 2_000, 3).unwrap()).unwrap();
        assert!(r.degenerate_count > 0);
        assert!(r.t_n <= 1.0);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&v, 0.5), 2.0);
        assert_eq!(sorted_quantile(&v, 0.95), 3.8);
        assert_eq!(sorted_quantile(&v, 1.0), 4.0);
    }
}
