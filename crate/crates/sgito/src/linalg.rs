//! Small dense symmetric linear algebra (the parameter space is 6-dimensional).
//!
//! Inversions go through a Cholesky factorization with a condition-number
//! guard instead of a silent pseudo-inverse: a regularized inverse inside the
//! Wald statistic would corrupt the test size, so ill-conditioned systems are
//! reported as [`Error::Singular`].

use crate::error::{Error, Result};

/// Condition-number ceiling for accepting a factorization.
pub const COND_LIMIT: f64 = 1e12;

/// Cholesky factor L (lower triangular, row-major) of a symmetric matrix.
///
/// Fails when a pivot is non-positive or the squared ratio of extreme pivots
/// (a cheap spectral-condition proxy) exceeds [`COND_LIMIT`].
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid("cholesky: matrix must be square".into()));
    }
    let mut l = vec![vec![0.0; n]; n];
    let mut dmax: f64 = f64::MIN;
    let mut dmin: f64 = f64::MAX;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Singular(format!(
                        "non-positive pivot {s:.3e} at row {i}"
                    )));
                }
                l[i][j] = s.sqrt();
                dmax = dmax.max(l[i][j]);
                dmin = dmin.min(l[i][j]);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let cond = (dmax / dmin).powi(2);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::Singular(format!(
            "condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e}"
        )));
    }
    Ok(l)
}

/// Solve A x = b given the Cholesky factor of A.
pub fn chol_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn sym_inverse(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    // symmetrize to kill round-off asymmetry
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = m;
            inv[j][i] = m;
        }
    }
    Ok(inv)
}

/// C = A · B.
pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k) = (a.len(), b.len());
    let m = b[0].len();
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            if ail == 0.0 {
                continue;
            }
            for j in 0..m {
                c[i][j] += ail * b[l][j];
            }
        }
    }
    c
}

/// y = A x.
pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
        .collect()
}

/// Transpose.
pub fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = a[0].len();
    let mut t = vec![vec![0.0; n]; m];
    for i in 0..n {
        for j in 0..m {
            t[j][i] = a[i][j];
        }
    }
    t
}

/// Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues, V) with columns of V the eigenvectors, A = V diag(w) Vᵀ.
pub fn sym_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let w = (0..n).map(|i| m[i][i]).collect();
    (w, v)
}

/// Minimal-norm least-squares solution of X b ≈ y through an eigen
/// pseudo-inverse of the normal equations. Rank-deficient designs (for
/// example a constant regressor column equal to the intercept times a scalar)
/// get the minimum-norm coefficient vector, whose fitted values are exact.
pub fn lstsq_minnorm(x: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::Invalid("lstsq: empty or mismatched inputs".into()));
    }
    let p = x[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..p {
                xtx[i][j] += row[i] * row[j];
            }
        }
    }
    let (w, v) = sym_eigen(&xtx);
    let wmax = w.iter().cloned().fold(0.0f64, f64::max);
    let tol = wmax * 1e-12 * p as f64;
    let mut beta = vec![0.0; p];
    for k in 0..p {
        if w[k] <= tol {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..p {
            proj += v[i][k] * xty[i];
        }
        let scale = proj / w[k];
        for i in 0..p {
            beta[i] += scale * v[i][k];
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cholesky_identity() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let l = cholesky(&a).unwrap();
        assert_eq!(l[0][0], 1.0);
        assert_eq!(l[1][1], 1.0);
    }

    #[test]
    fn rejects_indefinite() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(cholesky(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn rejects_ill_conditioned() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1e-14]];
        assert!(matches!(cholesky(&a), Err(Error::Singular(_))));
    }

    #[test]
    fn inverse_roundtrip() {
        let a = vec![
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 2.0],
        ];
        let inv = sym_inverse(&a).unwrap();
        let prod = mat_mul(&a, &inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[i][j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_known_eigenvalues() {
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let (mut w, _) = sym_eigen(&a);
        w.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!((w[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn minnorm_rank_deficient_fits_exactly() {
        // identical rows [1, c, c]: rank 1, fitted values must equal y exactly
        let c = 0.37;
        let x: Vec<Vec<f64>> = (0..10).map(|_| vec![1.0, c, c]).collect();
        let y = vec![c; 10];
        let b = lstsq_minnorm(&x, &y).unwrap();
        let fit = b[0] + b[1] * c + b[2] * c;
        assert!((fit - c).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn chol_solve_recovers_solution(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            // SPD by construction: A = G Gᵀ + I
            let g: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mut a = mat_mul(&g, &transpose(&g));
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += 1.0;
            }
            let xtrue: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = mat_vec(&a, &xtrue);
            let l = cholesky(&a).unwrap();
            let x = chol_solve(&l, &b);
            for i in 0..n {
                prop_assert!((x[i] - xtrue[i]).abs() < 1e-8);
            }
        }
    }
}
