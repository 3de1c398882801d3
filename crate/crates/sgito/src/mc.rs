//! Monte Carlo study drivers: simulate → estimate → test replicate
//! pipelines used by the size/power/MSE experiments and the acceptance
//! suite. Replicates are embarrassingly parallel and seeded per replicate
//! (seed = base + replicate index), so results do not depend on the worker
//! count.

use crate::error::{Error, Result};
use crate::estimate::{fit, LikelihoodMode, LikelihoodSpec, OptimizerConfig};
use crate::inference::{chi2_quantile, default_restriction, sandwich, wald_test};
use crate::realized_vol::{build_daily_series_from_sim, RvConfig};
use crate::simulate::{simulate_path, SimConfig, StateRule};
use crate::types::ModelParams;
use rayon::prelude::*;

/// One (N, M) grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McCell {
    pub n_days: usize,
    pub m_per_day: usize,
}

/// Configuration of a replicated simulate→fit→test experiment.
#[derive(Debug, Clone)]
pub struct McConfig {
    pub theta0: ModelParams,
    pub reps: usize,
    pub seed: u64,
    pub sigma_eps: f64,
    pub x0: f64,
    pub mu: f64,
    pub refine: usize,
    pub opt: OptimizerConfig,
    pub rv: RvConfig,
}

impl McConfig {
    pub fn new(theta0: ModelParams, reps: usize, seed: u64) -> Self {
        Self {
            theta0,
            reps,
            seed,
            sigma_eps: 0.01,
            x0: 10.0,
            mu: 0.0,
            refine: 1,
            opt: OptimizerConfig::default(),
            rv: RvConfig::default(),
        }
    }
}

/// One replicate's estimate and test outcome.
#[derive(Debug, Clone)]
pub struct RepOutcome {
    pub rep: usize,
    pub theta_hat: [f64; 6],
    pub std_errors: [f64; 6],
    pub statistic: f64,
    pub p_value: f64,
}

/// A completed cell: successful outcomes plus failure diagnostics.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: McCell,
    pub outcomes: Vec<RepOutcome>,
    pub failures: Vec<(usize, String)>,
}

impl CellResult {
    pub fn statistics(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.statistic).collect()
    }

    /// Rejection rate of the heterogeneity test at each significance level.
    pub fn rejection_rates(&self, alphas: &[f64]) -> Vec<f64> {
        let n = self.outcomes.len().max(1) as f64;
        alphas
            .iter()
            .map(|a| self.outcomes.iter().filter(|o| o.p_value < *a).count() as f64 / n)
            .collect()
    }

    /// Per-parameter Monte Carlo mean squared error against θ₀.
    pub fn mse(&self, theta0: &ModelParams) -> [f64; 6] {
        let t0 = theta0.as_array();
        let mut acc = [0.0; 6];
        for o in &self.outcomes {
            for k in 0..6 {
                let d = o.theta_hat[k] - t0[k];
                acc[k] += d * d;
            }
        }
        let n = self.outcomes.len().max(1) as f64;
        acc.map(|v| v / n)
    }

    /// Per-parameter Monte Carlo mean of θ̂.
    pub fn mean_theta(&self) -> [f64; 6] {
        let mut acc = [0.0; 6];
        for o in &self.outcomes {
            for k in 0..6 {
                acc[k] += o.theta_hat[k];
            }
        }
        let n = self.outcomes.len().max(1) as f64;
        acc.map(|v| v / n)
    }

    /// Empirical coverage of θ̂ₖ ± z·SEₖ for the true θ₀ₖ.
    pub fn coverage(&self, theta0: &ModelParams, z: f64, k: usize) -> f64 {
        let t0 = theta0.as_array()[k];
        let hits = self
            .outcomes
            .iter()
            .filter(|o| (o.theta_hat[k] - t0).abs() <= z * o.std_errors[k])
            .count();
        hits as f64 / self.outcomes.len().max(1) as f64
    }
}

/// Simulate one replicate and run the full estimation + Wald pipeline.
pub fn run_replicate(cfg: &McConfig, cell: McCell, rep: usize) -> Result<RepOutcome> {
    let mut sim_cfg = SimConfig::new(cfg.theta0, cell.n_days, cell.m_per_day, cfg.seed + rep as u64);
    sim_cfg.sigma_eps = cfg.sigma_eps;
    sim_cfg.x0 = cfg.x0;
    sim_cfg.mu = cfg.mu;
    sim_cfg.refine = cfg.refine;
    sim_cfg.state_rule = StateRule::Leverage;
    sim_cfg.keep_true_ticks = false;
    let sim = simulate_path(&sim_cfg)?;
    let daily = build_daily_series_from_sim(&sim, &cfg.rv)?.daily;
    let spec = LikelihoodSpec::high_frequency();
    let fit_res = fit(&daily, &spec, &cfg.opt)?;
    if !fit_res.converged {
        return Err(Error::Numerical(format!(
            "replicate {rep}: fit did not converge ({:?})",
            fit_res.notes
        )));
    }
    let (v, w) = sandwich(
        &fit_res.theta_hat,
        &daily,
        LikelihoodMode::HighFrequency,
        fit_res.h1,
    )?;
    let (r_mat, r_vec) = default_restriction();
    let test = wald_test(&fit_res, &v, &w, &r_mat, &r_vec)?;
    let cov = crate::inference::covariance_of_theta(&v, &w, daily.len())?;
    let mut se = [0.0; 6];
    for k in 0..6 {
        se[k] = cov[k][k].max(0.0).sqrt();
    }
    Ok(RepOutcome {
        rep,
        theta_hat: fit_res.theta_hat.as_array(),
        std_errors: se,
        statistic: test.statistic,
        p_value: test.p_value,
    })
}

/// Run every replicate of one cell in parallel. Per-replicate failures are
/// collected, excluded from summaries, and counted.
pub fn run_cell(cfg: &McConfig, cell: McCell) -> CellResult {
    let results: Vec<(usize, Result<RepOutcome>)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| (rep, run_replicate(cfg, cell, rep)))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    CellResult {
        cell,
        outcomes,
        failures,
    }
}

/// Sorted statistics paired with the limiting chi-squared(3) quantiles at
/// the midpoint plotting positions — QQ plot data.
pub fn qq_data(statistics: &[f64], dof: usize) -> Vec<(f64, f64)> {
    let mut sorted = statistics.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let p = (i as f64 + 0.5) / n as f64;
            (s, chi2_quantile(p, dof))
        })
        .collect()
}

/// Two-sided Kolmogorov-Smirnov distance of the statistics against the
/// chi-squared(dof) distribution.
pub fn ks_distance(statistics: &[f64], dof: usize) -> f64 {
    let mut sorted = statistics.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        let cdf = 1.0 - crate::inference::chi2_survival(*s, dof);
        let hi = (i as f64 + 1.0) / n - cdf;
        let lo = cdf - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

/// Asymptotic Kolmogorov-Smirnov critical value at level α for n samples.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    // c(α) = sqrt(−ln(α/2)/2), with the standard finite-sample denominator
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let sn = (n as f64).sqrt();
    c / (sn + 0.12 + 0.11 / sn)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta_null() -> ModelParams {
        ModelParams::new(0.15, 0.15, 0.2, 0.2, 0.1, 0.1)
    }

    #[test]
    fn replicate_pipeline_runs_end_to_end() {
        let cfg = McConfig::new(theta_null(), 1, 321);
        let out = run_replicate(
            &cfg,
            McCell {
                n_days: 120,
                m_per_day: 390,
            },
            0,
        )
        .unwrap();
        assert!(out.statistic >= 0.0);
        assert!((0.0..=1.0).contains(&out.p_value));
        assert!(out.theta_hat.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn cell_results_are_deterministic_and_worker_independent() {
        let cfg = McConfig::new(theta_null(), 4, 99);
        let cell = McCell {
            n_days: 60,
            m_per_day: 390,
        };
        let a = run_cell(&cfg, cell);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_cell(&cfg, cell));
        assert_eq!(a.outcomes.len(), b.outcomes.len());
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.rep, y.rep);
            assert_eq!(x.statistic, y.statistic);
            assert_eq!(x.theta_hat, y.theta_hat);
        }
    }

    #[test]
    fn ks_distance_zero_for_exact_quantiles() {
        // feed the exact χ²(3) quantiles at midpoints: distance ≈ 1/(2n)
        let n = 50;
        let stats: Vec<f64> = (0..n)
            .map(|i| chi2_quantile((i as f64 + 0.5) / n as f64, 3))
            .collect();
        let d = ks_distance(&stats, 3);
        assert!(d <= 0.5 / n as f64 + 1e-9, "{d}");
    }

    #[test]
    fn ks_critical_value_scale() {
        // classical asymptotic value at α = 0.01 is ~1.628/√n
        let v = ks_critical(0.01, 200);
        assert!((v - 0.1141).abs() < 0.002, "{v}");
    }

    #[test]
    fn qq_data_is_sorted_and_paired() {
        let stats = vec![3.0, 1.0, 7.0, 0.5];
        let qq = qq_data(&stats, 3);
        assert_eq!(qq.len(), 4);
        assert!(qq.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    }
}
