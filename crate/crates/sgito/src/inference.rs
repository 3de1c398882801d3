//! Sandwich covariance, standard errors, and the Wald-type test for state
//! heterogeneity.
//!
//! With gₙ = ∂hₙ/∂θ at θ̂ and residual rₙ = yₙ − hₙ(θ̂) (yₙ = RVₙ in
//! high-frequency mode, Zₙ² in low-frequency mode):
//!
//! ```text
//! V̂ = (1/4N) Σ gₙgₙᵀ hₙ⁻⁴ rₙ²,    Ŵ = (1/2N) Σ gₙgₙᵀ hₙ⁻²
//! ```
//!
//! The estimator covariance is Ŵ⁻¹V̂Ŵ⁻¹/N and the Wald statistic for a
//! restriction Rθ = r is
//!
//! ```text
//! T = N (Rθ̂ − r)ᵀ [R Ŵ⁻¹V̂Ŵ⁻¹ Rᵀ]⁻¹ (Rθ̂ − r)  →  χ²(rank R).
//! ```
//!
//! The middle matrix is the covariance of Rθ̂, so the statistic is invariant
//! to replacing (R, r) by (AR, Ar) for invertible A.

use crate::error::{Error, Result};
use crate::estimate::{innovations, LikelihoodMode};
use crate::linalg;
use crate::model;
use crate::special;
use crate::types::{DailySeries, FitResult, ModelParams};

/// A Wald-type restriction test result.
#[derive(Debug, Clone)]
pub struct WaldTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl WaldTest {
    pub fn reject(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// The information-type and Hessian-type matrices (V̂, Ŵ) at θ̂.
pub fn sandwich(
    theta_hat: &ModelParams,
    daily: &DailySeries,
    mode: LikelihoodMode,
    h1: f64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let hn = model::h_gradient(theta_hat, daily, h1)?;
    let grads = hn.grad.as_ref().unwrap();
    let y = innovations(daily, mode);
    let n = daily.len() as f64;
    let mut v = vec![vec![0.0; 6]; 6];
    let mut w = vec![vec![0.0; 6]; 6];
    for ((h, g), yn) in hn.h.iter().zip(grads).zip(&y) {
        let h2 = h * h;
        let resid = yn - h;
        let vw = resid * resid / (h2 * h2);
        let ww = 1.0 / h2;
        for i in 0..6 {
            for j in 0..=i {
                let gg = g[i] * g[j];
                v[i][j] += gg * vw;
                w[i][j] += gg * ww;
            }
        }
    }
    for i in 0..6 {
        for j in 0..=i {
            v[i][j] /= 4.0 * n;
            w[i][j] /= 2.0 * n;
            v[j][i] = v[i][j];
            w[j][i] = w[i][j];
        }
    }
    Ok((v, w))
}

/// Fill a fit's covariance (Ŵ⁻¹V̂Ŵ⁻¹/N) and standard errors in place.
pub fn attach_inference(
    fit: &mut FitResult,
    daily: &DailySeries,
    mode: LikelihoodMode,
) -> Result<()> {
    let (v, w) = sandwich(&fit.theta_hat, daily, mode, fit.h1)?;
    let cov = covariance_of_theta(&v, &w, daily.len())?;
    let mut cov_arr = [[0.0; 6]; 6];
    let mut se = [0.0; 6];
    for i in 0..6 {
        for j in 0..6 {
            cov_arr[i][j] = cov[i][j];
        }
        if cov[i][i] < -1e-12 {
            return Err(Error::Numerical(format!(
                "negative variance {} for parameter {i}",
                cov[i][i]
            )));
        }
        se[i] = cov[i][i].max(0.0).sqrt();
    }
    fit.covariance = Some(cov_arr);
    fit.std_errors = Some(se);
    Ok(())
}

/// Ŵ⁻¹V̂Ŵ⁻¹ scaled by 1/N: the finite-sample covariance of θ̂.
pub fn covariance_of_theta(
    v: &[Vec<f64>],
    w: &[Vec<f64>],
    n_days: usize,
) -> Result<Vec<Vec<f64>>> {
    let w_inv = linalg::sym_inverse(w)
        .map_err(|e| Error::Singular(format!("W-hat not invertible ({e}); a regime may be unidentified")))?;
    let mut cov = linalg::mat_mul(&linalg::mat_mul(&w_inv, v), &w_inv);
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= n_days as f64;
        }
    }
    // exact symmetry for downstream factorizations
    for i in 0..6 {
        for j in 0..i {
            let m = 0.5 * (cov[i][j] + cov[j][i]);
            cov[i][j] = m;
            cov[j][i] = m;
        }
    }
    Ok(cov)
}

/// The default heterogeneity restriction H₀: ω₁ = ω₂, γ₁ = γ₂, β₁ = β₂
/// in the canonical (ω₁, ω₂, γ₁, γ₂, β₁, β₂) ordering, r = 0.
pub fn default_restriction() -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        vec![
            vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, -1.0],
        ],
        vec![0.0; 3],
    )
}

/// Wald-type statistic for Rθ = r given (V̂, Ŵ) from [`sandwich`].
pub fn wald_test(
    fit: &FitResult,
    v: &[Vec<f64>],
    w: &[Vec<f64>],
    r_mat: &[Vec<f64>],
    r_vec: &[f64],
) -> Result<WaldTest> {
    let dof = r_mat.len();
    if dof == 0 || dof > 6 || r_vec.len() != dof || r_mat.iter().any(|row| row.len() != 6) {
        return Err(Error::Invalid("restriction must be a v×6 matrix with matching r".into()));
    }
    let n_days = fit.h_series.len();
    let cov = covariance_of_theta(v, w, n_days)?;
    // covariance of Rθ̂ (without the 1/N scaling: reapply N explicitly below)
    let rc = linalg::mat_mul(r_mat, &cov);
    let mut middle = linalg::mat_mul(&rc, &linalg::transpose(r_mat));
    for row in middle.iter_mut() {
        for x in row.iter_mut() {
            *x *= n_days as f64;
        }
    }
    let l = linalg::cholesky(&middle)
        .map_err(|e| Error::Singular(format!("restricted covariance not invertible ({e})")))?;
    let theta = fit.theta_hat.as_array();
    let diff: Vec<f64> = r_mat
        .iter()
        .zip(r_vec)
        .map(|(row, r)| row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() - r)
        .collect();
    let sol = linalg::chol_solve(&l, &diff);
    let statistic = n_days as f64 * diff.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>();
    if statistic < -1e-8 {
        return Err(Error::Numerical(format!("negative Wald statistic {statistic}")));
    }
    let statistic = statistic.max(0.0);
    Ok(WaldTest {
        statistic,
        dof,
        p_value: chi2_survival(statistic, dof),
    })
}

/// Upper-tail probability of the chi-squared distribution with `dof` degrees
/// of freedom, via the regularized incomplete gamma function.
pub fn chi2_survival(x: f64, dof: usize) -> f64 {
    assert!(x >= 0.0 && dof > 0, "chi2_survival requires x >= 0, dof > 0");
    special::gamma_q(dof as f64 / 2.0, x / 2.0)
}

/// Chi-squared quantile (inverse survival of `1 − p`) by bisection; used for
/// QQ plot data against the limiting distribution.
pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    assert!((0.0..1.0).contains(&p), "quantile level must be in [0, 1)");
    if p == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while chi2_survival(hi, dof) > 1.0 - p {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_survival(mid, dof) > 1.0 - p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * (1.0 + hi) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{fit, LikelihoodSpec, OptimizerConfig};
    use crate::model::h_recursion_zs;
    use crate::realized_vol::{build_daily_series_from_sim, RvConfig};
    use crate::simulate::{simulate_path, SimConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn theta_alt() -> ModelParams {
        ModelParams::new(0.15, 0.165, 0.2, 0.22, 0.1, 0.11)
    }

    #[test]
    fn chi2_survival_values() {
        assert_eq!(chi2_survival(0.0, 3), 1.0);
        // dof = 2 closed form e^{−x/2}
        let x = 2.0 * 2.0f64.ln();
        assert!(rel(chi2_survival(x, 2), 0.5) < 1e-12);
        // standard 5% critical value of χ²(3)
        assert!(rel(chi2_survival(7.8147, 3), 0.05000062528476009) < 1e-10);
        assert!(rel(chi2_survival(1.5, 1), 0.22067136191984679) < 1e-12);
        assert!(rel(chi2_survival(12.5, 6), 0.05169997483584834) < 1e-12);
        assert!(rel(chi2_survival(0.3, 5), 0.9976430862605289) < 1e-12);
    }

    #[test]
    fn chi2_quantile_roundtrip() {
        for dof in [1usize, 3, 6] {
            for p in [0.5, 0.9, 0.95, 0.99] {
                let q = chi2_quantile(p, dof);
                assert!(rel(chi2_survival(q, dof), 1.0 - p) < 1e-8);
            }
        }
    }

    #[test]
    fn single_day_sandwich_closed_form() {
        // N = 1: V̂ = ¼ g gᵀ h⁻⁴(RV − h)², Ŵ = ½ g gᵀ h⁻², with g = 0 at n = 1
        let daily = DailySeries::new(vec![0.3], vec![0.1], vec![0], 0.0).unwrap();
        let (v, w) = sandwich(&theta_alt(), &daily, LikelihoodMode::HighFrequency, 0.25).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(v[i][j], 0.0);
                assert_eq!(w[i][j], 0.0);
            }
        }
    }

    #[test]
    fn two_day_sandwich_closed_form() {
        let theta = theta_alt();
        let daily = DailySeries::new(vec![0.3, 0.2], vec![0.1, -0.05], vec![0, 1], 0.0).unwrap();
        let h1 = 0.25;
        let hn = model::h_gradient(&theta, &daily, h1).unwrap();
        let g = hn.grad.unwrap()[1];
        let h = hn.h[1];
        let resid = daily.rv[1] - h;
        let (v, w) = sandwich(&theta, &daily, LikelihoodMode::HighFrequency, h1).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let vexp = g[i] * g[j] * resid * resid / h.powi(4) / (4.0 * 2.0);
                let wexp = g[i] * g[j] / (h * h) / (2.0 * 2.0);
                assert!((v[i][j] - vexp).abs() < 1e-15);
                assert!((w[i][j] - wexp).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_residuals_give_zero_v_and_pd_w() {
        // feed rv ≡ h(θ) so residuals vanish exactly
        let theta = theta_alt();
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let s: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let h1 = 0.2;
        let h = h_recursion_zs(&theta, &z, &s, h1).unwrap();
        let daily = DailySeries::new(h.clone(), z, s, 0.0).unwrap();
        let (v, w) = sandwich(&theta, &daily, LikelihoodMode::HighFrequency, h1).unwrap();
        for row in &v {
            for x in row {
                assert_eq!(*x, 0.0);
            }
        }
        // Ŵ is PD when both regimes are visited
        let (evals, _) = linalg::sym_eigen(&w);
        for e in evals {
            assert!(e > 0.0, "W-hat eigenvalue {e} not positive");
        }
    }

    #[test]
    fn unvisited_regime_makes_w_singular() {
        let theta = theta_alt();
        let n = 50;
        let z: Vec<f64> = (0..n).map(|i| 0.02 * ((i as f64).sin() + 0.4)).collect();
        let daily = DailySeries::new(vec![0.2; n], z, vec![0; n], 0.0).unwrap();
        let (v, w) = sandwich(&theta, &daily, LikelihoodMode::HighFrequency, 0.2).unwrap();
        assert!(covariance_of_theta(&v, &w, n).is_err());
    }

    fn fitted_example(seed: u64) -> (FitResult, DailySeries) {
        let mut cfg = SimConfig::new(theta_alt(), 250, 390, seed);
        cfg.keep_true_ticks = false;
        let sim = simulate_path(&cfg).unwrap();
        let daily = build_daily_series_from_sim(&sim, &RvConfig::default())
            .unwrap()
            .daily;
        let fit = fit(
            &daily,
            &LikelihoodSpec::high_frequency(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        (fit, daily)
    }

    #[test]
    fn exact_restriction_gives_zero_statistic() {
        let (mut fit, daily) = fitted_example(88);
        // force the homogeneous point: Rθ̂ = r exactly
        fit.theta_hat = ModelParams::new(0.15, 0.15, 0.2, 0.2, 0.1, 0.1);
        let (v, w) = sandwich(&fit.theta_hat, &daily, LikelihoodMode::HighFrequency, fit.h1).unwrap();
        let (r, rv) = default_restriction();
        let t = wald_test(&fit, &v, &w, &r, &rv).unwrap();
        assert!(t.statistic.abs() < 1e-18);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn statistic_invariant_under_equivalent_restrictions() {
        let (fit, daily) = fitted_example(1234);
        let (v, w) = sandwich(&fit.theta_hat, &daily, LikelihoodMode::HighFrequency, fit.h1).unwrap();
        let (r, rv) = default_restriction();
        let base = wald_test(&fit, &v, &w, &r, &rv).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            // random invertible A (diagonally dominant)
            let mut a = vec![vec![0.0; 3]; 3];
            for (i, row) in a.iter_mut().enumerate() {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = rng.random_range(-1.0..1.0);
                    if i == j {
                        *x += 3.0;
                    }
                }
            }
            let r2 = linalg::mat_mul(&a, &r);
            let rv2 = linalg::mat_vec(&a, &rv);
            let t2 = wald_test(&fit, &v, &w, &r2, &rv2).unwrap();
            assert!(
                rel(t2.statistic, base.statistic) < 1e-8,
                "{} vs {}",
                t2.statistic,
                base.statistic
            );
        }
    }

    #[test]
    fn attach_inference_fills_covariance_and_se() {
        let (mut fit, daily) = fitted_example(4321);
        attach_inference(&mut fit, &daily, LikelihoodMode::HighFrequency).unwrap();
        let cov = fit.covariance.unwrap();
        let se = fit.std_errors.unwrap();
        let cov_vec: Vec<Vec<f64>> = cov.iter().map(|r| r.to_vec()).collect();
        let (evals, _) = linalg::sym_eigen(&cov_vec);
        for e in evals {
            assert!(e > -1e-15, "covariance eigenvalue {e} negative");
        }
        for i in 0..6 {
            assert!(rel(se[i], cov[i][i].sqrt()) < 1e-12);
            assert!(se[i] > 0.0);
        }
    }
}
