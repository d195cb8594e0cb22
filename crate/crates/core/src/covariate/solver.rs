//! Certified minimization of the product objective.
//!
//! The hyperbola constraint is eliminated with `y_c = k_c / x_c`, leaving a
//! box-constrained problem in `x = (σ²_{π|c})`. On a box `[lo, hi]` the first
//! factor grows and the second shrinks in every coordinate, so
//! `(A + Σ m lo)(B + Σ m k/hi)` is a valid lower bound. A sharper one comes
//! from `√(LR) = min_s (sL + R/s)/2`: swapping the minimizations separates
//! the strata and leaves a convex function of the scalar `s`. Cells and
//! nodes take the larger of the two. Few strata are handled by uniform grid
//! refinement, many by best-first branch and bound; both stop once the best
//! value found is within `tol` of the smallest outstanding lower bound.
//!
//! Tolerances are on `τ / (σ²_e σ²_d)`, which lies in `[0, 1]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{TauProblem, FEASIBILITY_SLACK};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-4;
/// Grid refinement up to this many free strata, branch and bound above.
pub const GRID_MAX_STRATA: usize = 4;
const NODE_BUDGET: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    /// Nothing left to optimize once fixed strata are substituted.
    Closed,
    Grid,
    BranchAndBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSolution {
    pub tau: f64,
    pub t_c: f64,
    /// Optimal `σ²_{π|c}` per stratum.
    pub pi_vars: Vec<f64>,
    /// Optimal `σ²_{r|c}` per stratum.
    pub r_vars: Vec<f64>,
    /// Certified bound on `τ − τ*`, in the units of `τ`.
    pub solver_gap: f64,
    pub method: SolverMethod,
    pub nodes: usize,
}

/// Reduced problem over the free coordinates, in normalized units.
struct Reduced {
    offset_left: f64,
    offset_right: f64,
    weight: Vec<f64>,
    k: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Reduced {
    fn value(&self, x: &[f64]) -> f64 {
        let mut left = self.offset_left;
        let mut right = self.offset_right;
        for i in 0..x.len() {
            left += self.weight[i] * x[i];
            right += self.weight[i] * self.k[i] / x[i];
        }
        left * right
    }

    fn lower_bound(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut left = self.offset_left;
        let mut right = self.offset_right;
        for i in 0..lo.len() {
            left += self.weight[i] * lo[i];
            right += self.weight[i] * self.k[i] / hi[i];
        }
        left * right
    }

    /// `g(s) = s a + b/s + Σ m min_x (s x + k/(s x))` over the box together
    /// with its derivative. `min_s g/2` is the square root of the box minimum.
    fn dual(&self, lo: &[f64], hi: &[f64], s: f64) -> (f64, f64) {
        let mut g = s * self.offset_left + self.offset_right / s;
        let mut dg = self.offset_left - self.offset_right / (s * s);
        for i in 0..lo.len() {
            let x = (self.k[i].sqrt() / s).clamp(lo[i], hi[i]);
            g += self.weight[i] * (s * x + self.k[i] / (s * x));
            dg += self.weight[i] * (x - self.k[i] / (s * s * x));
        }
        (g, dg)
    }

    /// Bracket `[a, b]` around the minimizer of the dual, `g'(a) ≤ 0 ≤ g'(b)`.
    fn dual_bracket(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let (mut a, mut b) = (1.0_f64, 1.0_f64);
        let mut tries = 0;
        while self.dual(lo, hi, a).1 > 0.0 && tries < 400 {
            a *= 0.5;
            tries += 1;
        }
        while self.dual(lo, hi, b).1 < 0.0 && tries < 800 {
            b *= 2.0;
            tries += 1;
        }
        for _ in 0..200 {
            let m = (a * b).sqrt();
            if !(m > a && m < b) {
                break;
            }
            if self.dual(lo, hi, m).1 < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        (a, b)
    }

    /// Certified lower bound on the box minimum from the convex dual, and
    /// the box point the dual optimum selects.
    fn dual_bound(&self, lo: &[f64], hi: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = self.dual_bracket(lo, hi);
        let (ga, da) = self.dual(lo, hi, a);
        let (gb, db) = self.dual(lo, hi, b);
        // lower envelope of the two tangents over [a, b]
        let floor = if da < 0.0 && db > 0.0 {
            let s = ((gb - db * b) - (ga - da * a)) / (da - db);
            (ga + da * (s.clamp(a, b) - a)).min(ga).min(gb)
        } else {
            ga.min(gb)
        };
        let s = (a * b).sqrt();
        let point = (0..lo.len())
            .map(|i| (self.k[i].sqrt() / s).clamp(lo[i], hi[i]))
            .collect();
        let lb = if floor > 0.0 { 0.25 * floor * floor } else { 0.0 };
        (lb, point)
    }

    /// Coordinate whose width contributes most to the bound gap.
    fn split_axis(&self, lo: &[f64], hi: &[f64]) -> usize {
        let left_max: f64 =
            self.offset_left + (0..lo.len()).map(|i| self.weight[i] * hi[i]).sum::<f64>();
        let right_max: f64 = self.offset_right
            + (0..lo.len())
                .map(|i| self.weight[i] * self.k[i] / lo[i])
                .sum::<f64>();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..lo.len() {
            let score = self.weight[i] * (hi[i] - lo[i]) * right_max
                + self.weight[i] * self.k[i] * (1.0 / lo[i] - 1.0 / hi[i]) * left_max;
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }
}

struct Incumbent {
    value: f64,
    x: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, value: f64, x: &[f64]) {
        let better = value < self.value
            || (value == self.value
                && x.iter()
                    .zip(&self.x)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| *o != Ordering::Equal)
                    == Some(Ordering::Less));
        if better {
            self.value = value;
            self.x.clear();
            self.x.extend_from_slice(x);
        }
    }
}

fn center(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect()
}

/// Returns (best value, best point, certified gap, nodes).
fn grid_refine(p: &Reduced, tol: f64) -> Result<(f64, Vec<f64>, f64, usize)> {
    let dim = p.lo.len();
    let per_axis: usize = match dim {
        1 => 64,
        2 => 16,
        3 => 6,
        _ => 4,
    };
    let mut best = Incumbent {
        value: f64::INFINITY,
        x: Vec::new(),
    };
    for corner in [&p.lo, &p.hi] {
        best.offer(p.value(corner), corner);
    }
    let mut cells: Vec<(Vec<f64>, Vec<f64>, f64)> =
        vec![(p.lo.clone(), p.hi.clone(), node_bound(p, &p.lo, &p.hi, &mut best))];
    let mut pruned_min = f64::INFINITY;
    let mut nodes = 0;
    let children = per_axis.pow(dim as u32);
    loop {
        let open_min = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        let gap = best.value - open_min.min(pruned_min);
        if cells.is_empty() || best.value - open_min <= tol {
            return Ok((best.value, best.x, gap.max(0.0), nodes));
        }
        if nodes + cells.len() * children > NODE_BUDGET {
            return Err(Error::SolverBudget {
                nodes,
                gap,
                tol,
            });
        }
        let mut next = Vec::new();
        for (lo, hi, _) in &cells {
            let mut idx = vec![0usize; dim];
            loop {
                let mut clo = vec![0.0; dim];
                let mut chi = vec![0.0; dim];
                for d in 0..dim {
                    let w = (hi[d] - lo[d]) / per_axis as f64;
                    clo[d] = lo[d] + w * idx[d] as f64;
                    chi[d] = if idx[d] + 1 == per_axis {
                        hi[d]
                    } else {
                        lo[d] + w * (idx[d] + 1) as f64
                    };
                }
                let c = center(&clo, &chi);
                best.offer(p.value(&c), &c);
                let lb = node_bound(p, &clo, &chi, &mut best);
                next.push((clo, chi, lb));
                nodes += 1;

                let mut d = 0;
                while d < dim {
                    idx[d] += 1;
                    if idx[d] < per_axis {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
        }
        cells.clear();
        for cell in next {
            if cell.2 >= best.value - tol {
                pruned_min = pruned_min.min(cell.2);
            } else {
                cells.push(cell);
            }
        }
    }
}

struct Node {
    lb: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.lb.total_cmp(&other.lb) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // min-heap on the lower bound
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.total_cmp(&self.lb)
    }
}

/// Lower bound on a box, offering the dual point to the incumbent.
fn node_bound(p: &Reduced, lo: &[f64], hi: &[f64], best: &mut Incumbent) -> f64 {
    let (dual, point) = p.dual_bound(lo, hi);
    best.offer(p.value(&point), &point);
    p.lower_bound(lo, hi).max(dual)
}

fn branch_and_bound(p: &Reduced, tol: f64) -> Result<(f64, Vec<f64>, f64, usize)> {
    let mut best = Incumbent {
        value: f64::INFINITY,
        x: Vec::new(),
    };
    for corner in [&p.lo, &p.hi] {
        best.offer(p.value(corner), corner);
    }
    let c = center(&p.lo, &p.hi);
    best.offer(p.value(&c), &c);
    let lb = node_bound(p, &p.lo, &p.hi, &mut best);
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        lb,
        lo: p.lo.clone(),
        hi: p.hi.clone(),
    });
    let mut nodes = 1;
    while let Some(node) = heap.pop() {
        if node.lb >= best.value - tol {
            let gap = (best.value - node.lb).max(0.0);
            return Ok((best.value, best.x, gap, nodes));
        }
        if nodes >= NODE_BUDGET {
            return Err(Error::SolverBudget {
                nodes,
                gap: best.value - node.lb,
                tol,
            });
        }
        let axis = p.split_axis(&node.lo, &node.hi);
        let mid = 0.5 * (node.lo[axis] + node.hi[axis]);
        let mut left_hi = node.hi.clone();
        left_hi[axis] = mid;
        let mut right_lo = node.lo.clone();
        right_lo[axis] = mid;
        for (lo, hi) in [(node.lo.clone(), left_hi), (right_lo, node.hi)] {
            let c = center(&lo, &hi);
            best.offer(p.value(&c), &c);
            let lb = node_bound(p, &lo, &hi, &mut best);
            nodes += 1;
            if lb < best.value - tol {
                heap.push(Node { lb, lo, hi });
            }
        }
    }
    Ok((best.value, best.x, 0.0, nodes))
}

/// Minimizes the product objective to a certified normalized gap `tol`.
pub fn solve_tau(problem: &TauProblem, tol: f64) -> Result<TauSolution> {
    if !(tol > 0.0) {
        return Err(Error::Domain {
            what: "solver tolerance",
            value: tol,
            domain: "(0, inf)",
        });
    }
    let scale = problem.scale();
    let n = problem.strata.len();
    let mut pi_vars = vec![0.0; n];
    let mut r_vars = vec![0.0; n];
    let mut free = Vec::new();
    let mut reduced = Reduced {
        offset_left: problem.between_e / scale.sqrt(),
        offset_right: problem.between_d / scale.sqrt(),
        weight: Vec::new(),
        k: Vec::new(),
        lo: Vec::new(),
        hi: Vec::new(),
    };
    // Work in units where τ/scale is the objective: x ↦ x/√scale, y ↦ y/√scale.
    let unit = scale.sqrt();
    for (i, s) in problem.strata.iter().enumerate() {
        let k = s.hyperbola();
        if k == 0.0 {
            pi_vars[i] = s.l2_pi;
            r_vars[i] = s.l2_r;
            reduced.offset_left += s.weight * s.l2_pi / unit;
            reduced.offset_right += s.weight * s.l2_r / unit;
            continue;
        }
        let (lo, hi) = s.feasible_pi_interval();
        let slack = FEASIBILITY_SLACK * s.u2_pi.max(1.0);
        if lo > hi + slack {
            return Err(Error::InfeasibleStratum {
                label: s.label.clone(),
                lo,
                hi,
            });
        }
        if hi - lo <= 1e-15 * hi.max(1e-300) || lo >= hi {
            let x = if lo >= hi { 0.5 * (lo + hi) } else { lo };
            pi_vars[i] = x;
            r_vars[i] = k / x;
            reduced.offset_left += s.weight * x / unit;
            reduced.offset_right += s.weight * (k / x) / unit;
            continue;
        }
        free.push(i);
        reduced.weight.push(s.weight);
        reduced.k.push(k / scale);
        reduced.lo.push(lo / unit);
        reduced.hi.push(hi / unit);
    }

    let (value, x, gap, nodes, method) = if free.is_empty() {
        let v = reduced.offset_left * reduced.offset_right;
        (v, Vec::new(), 0.0, 0, SolverMethod::Closed)
    } else if free.len() <= GRID_MAX_STRATA {
        let (v, x, g, nodes) = grid_refine(&reduced, tol)?;
        (v, x, g, nodes, SolverMethod::Grid)
    } else {
        let (v, x, g, nodes) = branch_and_bound(&reduced, tol)?;
        (v, x, g, nodes, SolverMethod::BranchAndBound)
    };

    for (slot, &i) in free.iter().enumerate() {
        let xi = x[slot] * unit;
        let k = problem.strata[i].hyperbola();
        pi_vars[i] = xi;
        r_vars[i] = k / xi;
    }
    let normalized = value.max(0.0);
    Ok(TauSolution {
        tau: normalized * scale,
        t_c: 1.0 - normalized.sqrt(),
        pi_vars,
        r_vars,
        solver_gap: gap * scale,
        method,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariate::{build_problem, StratifiedTable};
    use crate::tables::Counts2x2;

    fn vaccine_by_age() -> StratifiedTable {
        StratifiedTable::from_counts([
            ("18-49", Counts2x2::new(155, 7, 2666, 1523)),
            ("50-64", Counts2x2::new(290, 23, 1755, 2447)),
            ("65+", Counts2x2::new(561, 158, 1668, 7132)),
        ])
        .unwrap()
    }

    #[test]
    fn single_stratum_recovers_marginal_threshold() {
        let c = Counts2x2::new(318, 1631, 4679, 7538);
        let s = StratifiedTable::from_counts([("all", c)]).unwrap();
        let sol = solve_tau(&build_problem(&s).unwrap(), DEFAULT_TOL).unwrap();
        let t = 1.0 - c.phi().unwrap().abs();
        assert!((sol.t_c - t).abs() < 1e-9, "{} vs {t}", sol.t_c);
    }

    #[test]
    fn vaccine_by_age_matches_published_value() {
        let p = build_problem(&vaccine_by_age()).unwrap();
        let sol = solve_tau(&p, DEFAULT_TOL).unwrap();
        assert_eq!(sol.method, SolverMethod::Grid);
        assert!((sol.t_c - 0.70).abs() < 0.01, "T_c = {}", sol.t_c);
        assert!(sol.solver_gap <= DEFAULT_TOL * p.scale());
        let direct = 1.0 - sol.tau.sqrt() / (p.var_e * p.var_d).sqrt();
        assert!((direct - sol.t_c).abs() < 1e-12);
        // constraints hold at the reported optimum
        for (i, s) in p.strata.iter().enumerate() {
            let (x, y) = (sol.pi_vars[i], sol.r_vars[i]);
            assert!((x * y - s.hyperbola()).abs() < 1e-10);
            assert!(x >= s.l2_pi - 1e-12 && x <= s.u2_pi + 1e-12);
            assert!(y >= s.l2_r - 1e-12 && y <= s.u2_r + 1e-12);
        }
        assert!((p.objective(&sol.pi_vars, &sol.r_vars) - sol.tau).abs() < 1e-15);
    }

    #[test]
    fn independent_strata_give_product_of_between_variances() {
        let s = StratifiedTable::from_counts([
            ("a", Counts2x2::new(10, 20, 30, 60)),
            ("b", Counts2x2::new(40, 10, 40, 10)),
        ])
        .unwrap();
        let p = build_problem(&s).unwrap();
        let sol = solve_tau(&p, DEFAULT_TOL).unwrap();
        assert_eq!(sol.method, SolverMethod::Closed);
        let expect = (p.between_e + p.strata.iter().map(|s| s.weight * s.l2_pi).sum::<f64>())
            * (p.between_d + p.strata.iter().map(|s| s.weight * s.l2_r).sum::<f64>());
        assert!((sol.tau - p.between_e * p.between_d).abs() < 1e-15);
        assert!((sol.tau - expect).abs() < 1e-15);
    }

    #[test]
    fn many_strata_use_branch_and_bound() {
        let strata: Vec<(String, Counts2x2)> = (0..6)
            .map(|i| {
                let i = i as u64;
                (format!("s{i}"), Counts2x2::new(20 + 7 * i, 30 + 11 * i, 80 - 5 * i, 25 + 3 * i))
            })
            .collect();
        let s = StratifiedTable::from_counts(strata).unwrap();
        let p = build_problem(&s).unwrap();
        let sol = solve_tau(&p, DEFAULT_TOL).unwrap();
        assert_eq!(sol.method, SolverMethod::BranchAndBound);
        assert!(sol.solver_gap <= DEFAULT_TOL * p.scale() * (1.0 + 1e-12));
        let marginal_t = 1.0 - s.marginal().phi().unwrap().abs();
        assert!(sol.t_c <= marginal_t + DEFAULT_TOL);
    }

    #[test]
    fn grid_and_branch_and_bound_agree() {
        let p = build_problem(&vaccine_by_age()).unwrap();
        let scale = p.scale();
        let unit = scale.sqrt();
        let reduced = Reduced {
            offset_left: p.between_e / unit,
            offset_right: p.between_d / unit,
            weight: p.strata.iter().map(|s| s.weight).collect(),
            k: p.strata.iter().map(|s| s.hyperbola() / scale).collect(),
            lo: p.strata.iter().map(|s| s.feasible_pi_interval().0 / unit).collect(),
            hi: p.strata.iter().map(|s| s.feasible_pi_interval().1 / unit).collect(),
        };
        let g = grid_refine(&reduced, 1e-6).unwrap();
        let b = branch_and_bound(&reduced, 1e-6).unwrap();
        assert!((g.0 - b.0).abs() <= 2e-6);
        assert!(g.2 <= 1e-6 && b.2 <= 1e-6);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let p = build_problem(&vaccine_by_age()).unwrap();
        assert!(solve_tau(&p, 0.0).is_err());
    }
}
