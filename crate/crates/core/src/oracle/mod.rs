//! Brute-force checks of the threshold theory on explicit latent
//! populations.
//!
//! A population is a finite list of equally weighted individuals, each with
//! a propensity `π` and prognoses `r₀`, `r₁`. Under the null `r₀ = r₁`.

mod suite;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use suite::{run_suite, CheckOutcome, Fault, Intensity, SuiteConfig, SuiteReport};

use crate::error::{Error, Result};
use crate::finitepop::multinomial_covariance_of;
use crate::linalg::Mat4;
use crate::randomness::TwinCohort;
use crate::sampling::{multinomial, stream_rng};
use crate::tables::Probs2x2;
use crate::threshold::threshold;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub pi: f64,
    pub r0: f64,
    pub r1: f64,
}

impl Individual {
    pub fn null(pi: f64, r: f64) -> Self {
        Self { pi, r0: r, r1: r }
    }

    /// Expected prognosis `π r₁ + (1 − π) r₀`.
    pub fn r(&self) -> f64 {
        self.pi * self.r1 + (1.0 - self.pi) * self.r0
    }

    /// Cell probabilities in `(x01, x11, x00, x10)` order.
    pub fn cells(&self) -> [f64; 4] {
        let (p, r0, r1) = (self.pi, self.r0, self.r1);
        [(1.0 - p) * r0, p * r1, (1.0 - p) * (1.0 - r0), p * (1.0 - r1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPopulation {
    individuals: Vec<Individual>,
}

fn interior(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

impl LatentPopulation {
    pub fn new(individuals: Vec<Individual>) -> Result<Self> {
        if individuals.is_empty() {
            return Err(Error::InvalidPopulation("no individuals".into()));
        }
        for (i, ind) in individuals.iter().enumerate() {
            if !(interior(ind.pi) && interior(ind.r0) && interior(ind.r1)) {
                return Err(Error::InvalidPopulation(format!(
                    "individual {i} has a probability outside (0, 1): {ind:?}"
                )));
            }
        }
        Ok(Self { individuals })
    }

    /// Null population from `(π, r)` pairs.
    pub fn null<I: IntoIterator<Item = (f64, f64)>>(points: I) -> Result<Self> {
        Self::new(points.into_iter().map(|(p, r)| Individual::null(p, r)).collect())
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn is_null(&self) -> bool {
        self.individuals.iter().all(|i| i.r0 == i.r1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaValue {
    pub eta: f64,
    pub r_pi: f64,
    pub r_r: f64,
}

fn mean_var(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// `η = 1 − R_π R_r` with population variances.
pub fn eta_of(pop: &LatentPopulation) -> Result<EtaValue> {
    let n = pop.len() as f64;
    let ind = pop.individuals();
    let (pi_bar, var_pi) = mean_var(ind.iter().map(|i| i.pi), n);
    let (r_bar, var_r) = mean_var(ind.iter().map(|i| i.r()), n);
    if !(interior(pi_bar) && interior(r_bar)) {
        return Err(Error::InvalidPopulation("mean propensity or prognosis is degenerate".into()));
    }
    let r_pi = (var_pi / (pi_bar * (1.0 - pi_bar))).sqrt().clamp(0.0, 1.0);
    let r_r = (var_r / (r_bar * (1.0 - r_bar))).sqrt().clamp(0.0, 1.0);
    Ok(EtaValue {
        eta: 1.0 - r_pi * r_r,
        r_pi,
        r_r,
    })
}

fn mean_cells(pop: &LatentPopulation) -> [f64; 4] {
    let mut s = [0.0; 4];
    for ind in pop.individuals() {
        for (acc, c) in s.iter_mut().zip(ind.cells()) {
            *acc += c;
        }
    }
    s.map(|v| v / pop.len() as f64)
}

/// Population-average cell probabilities.
pub fn expected_cells(pop: &LatentPopulation) -> Result<Probs2x2> {
    let [p01, p11, p00, _] = mean_cells(pop);
    Probs2x2::new(p01, p11, p00, 1.0 - p01 - p11 - p00)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub eta: f64,
    pub t: f64,
    pub ok: bool,
}

pub const SOUNDNESS_SLACK: f64 = 1e-9;

/// Checks `η ≤ T + 1e-9` for a null population.
pub fn verify_threshold_bound(pop: &LatentPopulation) -> Result<BoundCheck> {
    if !pop.is_null() {
        return Err(Error::InvalidPopulation("population is not null (r0 != r1)".into()));
    }
    let eta = eta_of(pop)?.eta;
    let t = threshold(&expected_cells(pop)?)?.t;
    Ok(BoundCheck {
        eta,
        t,
        ok: eta <= t + SOUNDNESS_SLACK,
    })
}

/// Two equally weighted individuals at `(a, a)` and `(1 − a, 1 − a)`.
pub fn diagonal_two_point(a: f64) -> Result<LatentPopulation> {
    LatentPopulation::null([(a, a), (1.0 - a, 1.0 - a)])
}

/// Reared-apart twins: both members of each pair are independent
/// Bernoulli(ψ) draws. Stream `i` of `seed` drives `psi[i]`.
pub fn simulate_twin_cohort(psi: &[f64], pairs_per_psi: u64, seed: u64) -> Result<TwinCohort> {
    let (mut c, mut d, mut u) = (0, 0, 0);
    for (i, &p) in psi.iter().enumerate() {
        if !interior(p) {
            return Err(Error::Domain {
                what: "psi",
                value: p,
                domain: "(0, 1)",
            });
        }
        let mut rng = stream_rng(seed, i as u64);
        let draw = multinomial(&mut rng, pairs_per_psi, &[p * p, 2.0 * p * (1.0 - p), (1.0 - p) * (1.0 - p), 0.0]);
        c += draw[0];
        d += draw[1];
        u += draw[2];
    }
    TwinCohort::new(c + d + u, c, d, u)
}

/// Random trait propensities for the twin checks.
pub fn random_psi<R: Rng + ?Sized>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariancePair {
    /// Exact covariance of the cell counts (generalized Poisson binomial).
    pub gpb: Mat4,
    /// Multinomial covariance with the same mean.
    pub mult: Mat4,
}

/// Both count covariances for a null population.
pub fn covariance_pair(pop: &LatentPopulation) -> Result<CovariancePair> {
    if !pop.is_null() {
        return Err(Error::InvalidPopulation("population is not null (r0 != r1)".into()));
    }
    let mut g = [[0.0; 4]; 4];
    for ind in pop.individuals() {
        let (p, r) = (ind.pi, ind.r0);
        let (q, s) = (1.0 - p, 1.0 - r);
        // (x01, x11, x00, x10) have probabilities (q r, p r, q s, p s)
        g[0][0] += q * r * (1.0 - q * r);
        g[1][1] += p * r * (1.0 - p * r);
        g[2][2] += q * s * (1.0 - q * s);
        g[3][3] += p * s * (1.0 - p * s);
        g[0][1] -= p * q * r * r;
        g[0][2] -= q * q * r * s;
        g[0][3] -= p * q * r * s;
        g[1][2] -= p * q * r * s;
        g[1][3] -= p * p * r * s;
        g[2][3] -= p * q * s * s;
    }
    for i in 0..4 {
        for j in 0..i {
            g[i][j] = g[j][i];
        }
    }
    let mult = multinomial_covariance_of(pop.len() as f64, &mean_cells(pop));
    Ok(CovariancePair { gpb: g, mult })
}

/// Rows where `|a_ii| ≥ Σ_{j≠i} |a_ij| − slack` fails.
pub fn diagonal_dominance_violations(a: &Mat4, slack: f64) -> usize {
    (0..4)
        .filter(|&i| {
            let off: f64 = (0..4).filter(|&j| j != i).map(|j| a[i][j].abs()).sum();
            a[i][i].abs() < off - slack
        })
        .count()
}

/// Families used to generate random null populations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopulationFamily {
    /// Independent uniform `π` and `r`.
    Uniform,
    /// `π` and `r` driven by a shared latent factor, so `|φ|` can be large.
    Correlated,
    /// A handful of distinct points, each repeated.
    Clustered,
}

const PROB_FLOOR: f64 = 1e-3;

fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub fn random_null_population<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    family: PopulationFamily,
) -> LatentPopulation {
    let points: Vec<(f64, f64)> = match family {
        PopulationFamily::Uniform => (0..size)
            .map(|_| (rng.random_range(0.02..0.98), rng.random_range(0.02..0.98)))
            .collect(),
        PopulationFamily::Correlated => {
            let (p_lo, p_hi) = (rng.random_range(0.0..0.5), rng.random_range(0.5..1.0));
            let (r_lo, r_hi) = (rng.random_range(0.0..0.5), rng.random_range(0.5..1.0));
            let flip = rng.random::<bool>();
            let noise = rng.random_range(0.0..0.2);
            (0..size)
                .map(|_| {
                    let u: f64 = rng.random();
                    let v = if flip { 1.0 - u } else { u };
                    let p = p_lo + (p_hi - p_lo) * u + noise * (rng.random::<f64>() - 0.5);
                    let r = r_lo + (r_hi - r_lo) * v + noise * (rng.random::<f64>() - 0.5);
                    (clamp_prob(p), clamp_prob(r))
                })
                .collect()
        }
        PopulationFamily::Clustered => {
            let k = rng.random_range(1..=4usize);
            let centers: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)))
                .collect();
            (0..size).map(|i| centers[i % k]).collect()
        }
    };
    LatentPopulation::null(points).expect("generated probabilities are interior")
}
