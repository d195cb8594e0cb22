//! Small dense helpers for 4×4 symmetric matrices: cyclic Jacobi
//! eigendecomposition and the Moore–Penrose pseudo-inverse built on it.

use crate::error::{Error, Result};

pub type Mat4 = [[f64; 4]; 4];

pub const ZERO: Mat4 = [[0.0; 4]; 4];

pub const IDENTITY: Mat4 = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

/// Eigenvalues with `|λ| < PINV_RTOL · max|λ|` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// Largest relative asymmetry accepted by [`pseudo_inverse`].
pub const SYMMETRY_TOL: f64 = 1e-9;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

pub fn matmul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat4) -> Mat4 {
    let mut out = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn sub(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] -= b[i][j];
        }
    }
    out
}

pub fn max_abs(a: &Mat4) -> f64 {
    a.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `vᵀ A v`.
pub fn quad_form(a: &Mat4, v: &[f64; 4]) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let row: f64 = (0..4).map(|j| a[i][j] * v[j]).sum();
        acc += v[i] * row;
    }
    acc
}

pub fn asymmetry(a: &Mat4) -> f64 {
    let scale = max_abs(a);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0_f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst / scale
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetricEigen {
    pub values: [f64; 4],
    /// Eigenvectors stored as columns.
    pub vectors: Mat4,
}

/// Cyclic Jacobi rotations until the off-diagonal mass falls below
/// `1e-12` relative to the matrix norm.
pub fn jacobi_eigen(a: &Mat4) -> SymmetricEigen {
    let mut m = *a;
    // symmetrize from the upper triangle
    for i in 0..4 {
        for j in (i + 1)..4 {
            let v = 0.5 * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    let mut v = IDENTITY;
    let norm = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return SymmetricEigen {
            values: [0.0; 4],
            vectors: v,
        };
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * norm {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..4 {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen {
        values: [m[0][0], m[1][1], m[2][2], m[3][3]],
        vectors: v,
    }
}

pub fn min_eigenvalue(a: &Mat4) -> f64 {
    jacobi_eigen(a)
        .values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Pseudo-inverse and numerical rank of a symmetric matrix.
pub fn pseudo_inverse_with_rank(s: &Mat4) -> Result<(Mat4, usize)> {
    let asym = asymmetry(s);
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = jacobi_eigen(s);
    let lmax = eig.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut out = ZERO;
    let mut rank = 0;
    if lmax == 0.0 {
        return Ok((out, 0));
    }
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() < PINV_RTOL * lmax {
            continue;
        }
        rank += 1;
        let inv = 1.0 / lambda;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += inv * eig.vectors[i][k] * eig.vectors[j][k];
            }
        }
    }
    Ok((out, rank))
}

pub fn pseudo_inverse(s: &Mat4) -> Result<Mat4> {
    pseudo_inverse_with_rank(s).map(|(p, _)| p)
}

/// Largest violation of the four Moore–Penrose identities, relative to the
/// size of the matrices involved.
pub fn penrose_residual(a: &Mat4, a_pinv: &Mat4) -> f64 {
    let scale_a = max_abs(a).max(f64::MIN_POSITIVE);
    let scale_p = max_abs(a_pinv).max(f64::MIN_POSITIVE);
    let apa = matmul(&matmul(a, a_pinv), a);
    let pap = matmul(&matmul(a_pinv, a), a_pinv);
    let ap = matmul(a, a_pinv);
    let pa = matmul(a_pinv, a);
    [
        max_abs(&sub(&apa, a)) / scale_a,
        max_abs(&sub(&pap, a_pinv)) / scale_p,
        max_abs(&sub(&ap, &transpose(&ap))),
        max_abs(&sub(&pa, &transpose(&pa))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nalgebra_eigenvalues(a: &Mat4) -> Vec<f64> {
        let m = nalgebra::Matrix4::from_fn(|i, j| a[i][j]);
        let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn identity_and_zero() {
        assert_eq!(pseudo_inverse(&IDENTITY).unwrap(), IDENTITY);
        assert_eq!(pseudo_inverse_with_rank(&ZERO).unwrap(), (ZERO, 0));
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut a = IDENTITY;
        a[0][1] = 0.5;
        assert!(matches!(pseudo_inverse(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn diagonal_rank_deficient() {
        let mut a = ZERO;
        a[0][0] = 2.0;
        a[2][2] = 4.0;
        let (p, rank) = pseudo_inverse_with_rank(&a).unwrap();
        assert_eq!(rank, 2);
        assert!((p[0][0] - 0.5).abs() < 1e-15);
        assert!((p[2][2] - 0.25).abs() < 1e-15);
        assert_eq!(p[1][1], 0.0);
    }

    prop_compose! {
        fn rank3_psd()(cols in proptest::collection::vec(proptest::array::uniform4(-2.0f64..2.0), 3)) -> Mat4 {
            let mut a = ZERO;
            for c in &cols {
                for i in 0..4 {
                    for j in 0..4 {
                        a[i][j] += c[i] * c[j];
                    }
                }
            }
            a
        }
    }

    proptest! {
        #[test]
        fn penrose_identities_on_rank3_psd(a in rank3_psd()) {
            let (p, rank) = pseudo_inverse_with_rank(&a).unwrap();
            prop_assume!(rank == 3);
            prop_assert!(penrose_residual(&a, &p) < 1e-8);
        }

        #[test]
        fn jacobi_matches_nalgebra(a in rank3_psd(), shift in -1.0f64..1.0) {
            let mut a = a;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += shift;
            }
            let mut ours = jacobi_eigen(&a).values.to_vec();
            ours.sort_by(f64::total_cmp);
            let theirs = nalgebra_eigenvalues(&a);
            let scale = max_abs(&a).max(1.0);
            for (x, y) in ours.iter().zip(theirs.iter()) {
                prop_assert!((x - y).abs() < 1e-10 * scale, "{ours:?} vs {theirs:?}");
            }
        }

        #[test]
        fn eigenvectors_reconstruct(a in rank3_psd()) {
            let e = jacobi_eigen(&a);
            let mut d = ZERO;
            for k in 0..4 {
                d[k][k] = e.values[k];
            }
            let back = matmul(&matmul(&e.vectors, &d), &transpose(&e.vectors));
            prop_assert!(max_abs(&sub(&back, &a)) < 1e-10 * max_abs(&a).max(1.0));
        }
    }
}
