//! Quasi-maximum-likelihood estimation.
//!
//! The quasi-likelihood over N days is
//!
//! ```text
//! Q(θ) = −(1/2N) Σₙ [ log hₙ(θ) + yₙ / hₙ(θ) ]
//! ```
//!
//! with innovation yₙ = RVₙ (high-frequency mode) or yₙ = Zₙ² (low-frequency
//! mode). Optimization runs in a componentwise logit reparameterization of
//! the parameter box; candidates violating the integrated-form constraints
//! (positivity of all twelve coefficients, γʰ + βʰ < 1 per regime pair)
//! receive a penalty proportional to the violation, which keeps both the
//! simplex and the gradient path usable without a constrained solver.
//!
//! μ is never optimized jointly: daily returns arrive already demeaned by
//! the sample mean inside [`DailySeries`].

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, h_recursion_zs};
use crate::optim::{self, BoxMap, MinOptions, MinResult};
use crate::types::{DailySeries, FitResult, ModelParams, ParamSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which innovation series drives the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// yₙ = RVₙ.
    HighFrequency,
    /// yₙ = Zₙ².
    LowFrequency,
}

/// Initial-value rule for h₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum H1Rule {
    /// Sample mean of the active innovation series (the default; the choice
    /// is asymptotically negligible).
    MeanInnovation,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct LikelihoodSpec {
    pub mode: LikelihoodMode,
    pub h1_rule: H1Rule,
    pub space: ParamSpace,
}

impl LikelihoodSpec {
    pub fn high_frequency() -> Self {
        Self {
            mode: LikelihoodMode::HighFrequency,
            h1_rule: H1Rule::MeanInnovation,
            space: ParamSpace::default(),
        }
    }

    pub fn low_frequency() -> Self {
        Self {
            mode: LikelihoodMode::LowFrequency,
            ..Self::high_frequency()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Derivative-free simplex (the default).
    NelderMead,
    /// Quasi-Newton with the analytic likelihood gradient.
    Bfgs,
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub multistart: usize,
    pub tol_obj: f64,
    pub tol_param: f64,
    pub max_iters: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::NelderMead,
            multistart: 5,
            tol_obj: 1e-9,
            tol_param: 1e-7,
            max_iters: 2000,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multistart == 0 {
            return Err(Error::Invalid("multistart must be at least 1".into()));
        }
        if !(self.tol_obj > 0.0 && self.tol_param > 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn min_options(&self) -> MinOptions {
        MinOptions {
            max_iters: self.max_iters,
            tol_obj: self.tol_obj,
            tol_param: self.tol_param,
            init_step: 0.25,
        }
    }
}

/// The innovation series selected by the likelihood mode.
pub fn innovations(daily: &DailySeries, mode: LikelihoodMode) -> Vec<f64> {
    match mode {
        LikelihoodMode::HighFrequency => daily.rv.clone(),
        LikelihoodMode::LowFrequency => daily.z.iter().map(|z| z * z).collect(),
    }
}

/// Resolve h₁ for a daily series under the given spec.
pub fn h1_value(daily: &DailySeries, spec: &LikelihoodSpec) -> Result<f64> {
    let h1 = match spec.h1_rule {
        H1Rule::Fixed(v) => v,
        H1Rule::MeanInnovation => {
            let y = innovations(daily, spec.mode);
            y.iter().sum::<f64>() / y.len() as f64
        }
    };
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::Numerical(format!(
            "h1 = {h1} is not positive; supply H1Rule::Fixed for degenerate data"
        )));
    }
    Ok(h1)
}

/// Quasi-log-likelihood at θ. Requires θ valid in the spec's space.
pub fn quasi_loglik(theta: &ModelParams, daily: &DailySeries, spec: &LikelihoodSpec) -> Result<f64> {
    let report = crate::types::validate_params(theta, &spec.space);
    if !report.is_valid() {
        return Err(Error::Invalid(format!("theta invalid:\n{report}")));
    }
    let h1 = h1_value(daily, spec)?;
    let y = innovations(daily, spec.mode);
    let h = h_recursion_zs(theta, &daily.z, &daily.state, h1)?;
    Ok(neg_avg_loglik_from(&h, &y).map(|v| -v)?)
}

fn neg_avg_loglik_from(h: &[f64], y: &[f64]) -> Result<f64> {
    let n = h.len() as f64;
    let mut acc = 0.0;
    for (hn, yn) in h.iter().zip(y) {
        if !(hn > &0.0) {
            return Err(Error::Numerical(format!("non-positive h_n = {hn}")));
        }
        acc += hn.ln() + yn / hn;
    }
    Ok(acc / (2.0 * n))
}

const PENALTY_BASE: f64 = 1e6;
const PENALTY_SLOPE: f64 = 1e4;

/// Constraint violation of the integrated form: non-positive coefficients
/// or γʰ + βʰ ≥ 1 on any regime pair. Zero inside the admissible region.
fn integrated_violation(theta: &ModelParams) -> f64 {
    let ip = model::integrated_params(theta);
    let mut v = 0.0;
    for i in 0..2u8 {
        for j in 0..2u8 {
            let (wh, gh, bh) = ip.pair(i, j);
            for c in [wh, gh, bh] {
                if !(c > 0.0 && c.is_finite()) {
                    v += if c.is_finite() { 1e-9 - c.min(0.0) } else { 1.0 };
                }
            }
            let sum = gh + bh;
            if sum.is_finite() {
                v += (sum - (1.0 - 1e-9)).max(0.0);
            } else {
                v += 1.0;
            }
        }
    }
    v
}

struct QmlProblem<'a> {
    daily: &'a DailySeries,
    y: Vec<f64>,
    h1: f64,
}

impl QmlProblem<'_> {
    /// Penalized −Q(θ). Proportional penalty outside the admissible region.
    fn objective(&self, theta: &ModelParams) -> f64 {
        let v = integrated_violation(theta);
        if v > 0.0 {
            return PENALTY_BASE + PENALTY_SLOPE * v;
        }
        match h_recursion_zs(theta, &self.daily.z, &self.daily.state, self.h1)
            .and_then(|h| neg_avg_loglik_from(&h, &self.y))
        {
            Ok(f) if f.is_finite() => f,
            _ => PENALTY_BASE,
        }
    }

    /// Penalized −Q plus its gradient in θ.
    fn objective_grad(&self, theta: &ModelParams, grad: &mut [f64; 6]) -> f64 {
        let v = integrated_violation(theta);
        if v > 0.0 {
            // gradient of the proportional penalty through the closed forms
            let (ip, gr) = model::integrated_params_with_grad(theta);
            *grad = [0.0; 6];
            for i in 0..2usize {
                for j in 0..2usize {
                    let sum = ip.gamma_h[i][j] + ip.beta_h[i][j];
                    if sum > 1.0 - 1e-9 {
                        for k in 0..6 {
                            grad[k] += PENALTY_SLOPE * (gr.gamma_h[i][j][k] + gr.beta_h[i][j][k]);
                        }
                    }
                    for (coeff, cg) in [
                        (ip.omega_h[i][j], &gr.omega_h[i][j]),
                        (ip.gamma_h[i][j], &gr.gamma_h[i][j]),
                        (ip.beta_h[i][j], &gr.beta_h[i][j]),
                    ] {
                        if coeff <= 0.0 {
                            for k in 0..6 {
                                grad[k] -= PENALTY_SLOPE * cg[k];
                            }
                        }
                    }
                }
            }
            return PENALTY_BASE + PENALTY_SLOPE * v;
        }
        let daily = self.daily;
        let hn = match model::h_gradient(theta, daily, self.h1) {
            Ok(hn) => hn,
            Err(_) => {
                *grad = [0.0; 6];
                return PENALTY_BASE;
            }
        };
        let g = hn.grad.as_ref().unwrap();
        let n = daily.len() as f64;
        let mut acc = 0.0;
        *grad = [0.0; 6];
        for (idx, (h, y)) in hn.h.iter().zip(&self.y).enumerate() {
            acc += h.ln() + y / h;
            let w = (1.0 / h - y / (h * h)) / (2.0 * n);
            for k in 0..6 {
                grad[k] += w * g[idx][k];
            }
        }
        acc / (2.0 * n)
    }
}

fn default_starts(
    mean_y: f64,
    space: &ParamSpace,
    count: usize,
    extra: &[ModelParams],
) -> Vec<[f64; 6]> {
    let clamp = |v: f64, k: usize| v.clamp(space.lower[k] * 1.0001, space.upper[k] * 0.9999);
    let omega0 = 0.1 * mean_y;
    let heuristic = [
        clamp(omega0, 0),
        clamp(omega0, 1),
        clamp(0.7, 2),
        clamp(0.7, 3),
        clamp(0.15, 4),
        clamp(0.15, 5),
    ];
    let mut starts: Vec<[f64; 6]> = extra.iter().map(|p| p.as_array()).collect();
    starts.push(heuristic);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    while starts.len() < count + extra.len() {
        let mut s = heuristic;
        for (k, v) in s.iter_mut().enumerate() {
            let jitter: f64 = rng.random_range(-0.8..0.8);
            *v = clamp(*v * jitter.exp(), k);
        }
        starts.push(s);
    }
    starts
}

fn run_one_start(
    problem: &QmlProblem<'_>,
    boxmap: &BoxMap,
    start: &[f64; 6],
    opt: &OptimizerConfig,
) -> MinResult {
    let u0 = boxmap.to_internal(start);
    match opt.algorithm {
        Algorithm::NelderMead => optim::nelder_mead(
            |u| {
                let x = boxmap.to_external(u);
                problem.objective(&ModelParams::from_array(x.try_into().unwrap()))
            },
            &u0,
            &opt.min_options(),
        ),
        Algorithm::Bfgs => optim::bfgs(
            |u, gslot| {
                let x = boxmap.to_external(u);
                let theta = ModelParams::from_array(x.clone().try_into().unwrap());
                match gslot {
                    None => problem.objective(&theta),
                    Some(gu) => {
                        let mut gx = [0.0; 6];
                        let f = problem.objective_grad(&theta, &mut gx);
                        let jac = boxmap.jacobian_diag(u);
                        for k in 0..6 {
                            gu[k] = gx[k] * jac[k];
                        }
                        f
                    }
                }
            },
            &u0,
            &opt.min_options(),
        ),
    }
}

/// Maximize the quasi-likelihood over the constrained space from multiple
/// starts (one GARCH-style heuristic, the rest jittered; deterministic).
/// Covariance and standard errors are attached later by the inference layer.
pub fn fit(daily: &DailySeries, spec: &LikelihoodSpec, opt: &OptimizerConfig) -> Result<FitResult> {
    fit_with_starts(daily, spec, opt, &[])
}

/// [`fit`] with additional caller-supplied warm starts (used by rolling
/// backtests to reuse the previous window's estimate).
pub fn fit_with_starts(
    daily: &DailySeries,
    spec: &LikelihoodSpec,
    opt: &OptimizerConfig,
    warm: &[ModelParams],
) -> Result<FitResult> {
    opt.validate()?;
    spec.space.validate()?;
    if daily.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "need at least 20 days to fit, got {}",
            daily.len()
        )));
    }
    let y = innovations(daily, spec.mode);
    let h1 = h1_value(daily, spec)?;
    let problem = QmlProblem { daily, y: y.clone(), h1 };
    let boxmap = BoxMap::new(&spec.space.lower, &spec.space.upper)?;
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let starts = default_starts(mean_y, &spec.space, opt.multistart, warm);

    let mut best: Option<MinResult> = None;
    for start in &starts {
        let r = run_one_start(&problem, &boxmap, start, opt);
        if best.as_ref().map_or(true, |b| r.fmin < b.fmin) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let theta_arr: [f64; 6] = boxmap.to_external(&best.x).try_into().unwrap();
    let theta_hat = ModelParams::from_array(theta_arr);

    let mut notes = Vec::new();
    let feasible = integrated_violation(&theta_hat) == 0.0;
    if !feasible {
        notes.push("optimum violates the integrated-form constraints".into());
    }
    for v in [0u8, 1] {
        if !daily.state.iter().any(|s| *s == v) {
            notes.push(format!(
                "state {v} never observed in the window; its parameters are not identified"
            ));
        }
    }
    let converged = best.converged && feasible;
    let h_series = h_recursion_zs(&theta_hat, &daily.z, &daily.state, h1)?;
    let loglik = -neg_avg_loglik_from(&h_series, &y)?;
    if !converged {
        notes.push(format!(
            "optimizer stopped after {} iterations without meeting tolerances; best point returned",
            best.iters
        ));
    }
    Ok(FitResult {
        theta_hat,
        covariance: None,
        std_errors: None,
        loglik,
        h_series,
        converged,
        iterations: best.iters,
        h1,
        notes,
    })
}

/// Benchmark model identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkModel {
    /// GARCH(1,1) on squared daily returns.
    Garch,
    /// Regime-switching GARCH(1,1), coefficients selected by the current state.
    RsGarch,
    /// Single-regime GARCH-Ito on realized volatility.
    GarchIto,
    /// Heterogeneous autoregression of RV on (1, 5, 22)-day lag means, OLS.
    Har,
}

impl BenchmarkModel {
    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkModel::Garch => "garch",
            BenchmarkModel::RsGarch => "rs_garch",
            BenchmarkModel::GarchIto => "garch_ito",
            BenchmarkModel::Har => "har",
        }
    }
}

/// HAR lag structure (daily, weekly, monthly).
pub const HAR_LAGS: [usize; 3] = [1, 5, 22];

#[derive(Debug, Clone)]
pub struct BenchmarkFit {
    pub model: BenchmarkModel,
    /// Garch/GarchIto: [ω, γ, β]; RsGarch: [ω₀, γ₀, β₀, ω₁, γ₁, β₁];
    /// Har: [intercept, daily, weekly, monthly].
    pub params: Vec<f64>,
    pub h_series: Vec<f64>,
    pub loglik: Option<f64>,
    pub converged: bool,
    pub h1: f64,
    pub notes: Vec<String>,
}

/// GARCH-family recursion over the window given coefficient lookup by state.
fn garch_recursion(
    coeffs: impl Fn(u8) -> (f64, f64, f64),
    z: &[f64],
    s: &[u8],
    h1: f64,
) -> Vec<f64> {
    let mut h = Vec::with_capacity(z.len());
    h.push(h1);
    for n in 1..z.len() {
        let (w, g, b) = coeffs(s[n]);
        h.push(w + g * h[n - 1] + b * z[n - 1] * z[n - 1]);
    }
    h
}

fn fit_garch_family(
    daily: &DailySeries,
    model: BenchmarkModel,
    opt: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> Result<BenchmarkFit> {
    let (y, dim): (Vec<f64>, usize) = match model {
        BenchmarkModel::Garch => (innovations(daily, LikelihoodMode::LowFrequency), 3),
        BenchmarkModel::RsGarch => (innovations(daily, LikelihoodMode::LowFrequency), 6),
        BenchmarkModel::GarchIto => (innovations(daily, LikelihoodMode::HighFrequency), 3),
        BenchmarkModel::Har => unreachable!(),
    };
    let mean_y = y.iter().sum::<f64>() / y.len() as f64;
    let h1 = mean_y;
    if !(h1 > 0.0) {
        return Err(Error::Numerical("degenerate innovation series".into()));
    }
    let space_lo: Vec<f64> = vec![1e-10, 1e-6, 1e-6];
    let space_hi: Vec<f64> = vec![(10.0 * mean_y).max(1.0), 0.9999, 5.0];
    let (lo, hi) = if dim == 6 {
        (
            [space_lo.clone(), space_lo.clone()].concat(),
            [space_hi.clone(), space_hi.clone()].concat(),
        )
    } else {
        (space_lo, space_hi)
    };
    let boxmap = BoxMap::new(&lo, &hi)?;

    // effective (ω, γ, β) per state; for 3-parameter models both states share
    let effective = |p: &[f64], s: u8| -> (f64, f64, f64) {
        let off = if p.len() == 6 && s == 1 { 3 } else { 0 };
        match model {
            BenchmarkModel::GarchIto => {
                model::reduce_to_garch_ito(p[off], p[off + 1], p[off + 2])
                    .unwrap_or((f64::NAN, f64::NAN, f64::NAN))
            }
            _ => (p[off], p[off + 1], p[off + 2]),
        }
    };
    let objective = |p: &[f64]| -> f64 {
        // stationarity of the effective recursion per state
        let mut viol = 0.0;
        for s in 0..=(dim as u8 / 6) {
            let (w, g, b) = effective(p, s);
            if !(w > 0.0 && g > 0.0 && b > 0.0) || !(w + g + b).is_finite() {
                return PENALTY_BASE;
            }
            viol += (g + b - (1.0 - 1e-9)).max(0.0);
        }
        if viol > 0.0 {
            return PENALTY_BASE + PENALTY_SLOPE * viol;
        }
        let h = garch_recursion(|s| effective(p, s), &daily.z, &daily.state, h1);
        match neg_avg_loglik_from(&h, &y) {
            Ok(f) if f.is_finite() => f,
            _ => PENALTY_BASE,
        }
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm {
        starts.push(w.to_vec());
    }
    let base3 = vec![0.1 * mean_y, 0.7, 0.15];
    let base = if dim == 6 {
        [base3.clone(), base3.clone()].concat()
    } else {
        base3
    };
    starts.push(base.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0002);
    while starts.len() < opt.multistart.max(1) + warm.map_or(0, |_| 1) {
        let jittered: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let j: f64 = rng.random_range(-0.8..0.8);
                (v * j.exp()).clamp(lo[k] * 1.0001, hi[k] * 0.9999)
            })
            .collect();
        starts.push(jittered);
    }

    let mut best: Option<MinResult> = None;
    for s in &starts {
        let clamped: Vec<f64> = s
            .iter()
            .enumerate()
            .map(|(k, v)| v.clamp(lo[k] * 1.0001, hi[k] * 0.9999))
            .collect();
        let r = optim::nelder_mead(
            |u| objective(&boxmap.to_external(u)),
            &boxmap.to_internal(&clamped),
            &opt.min_options(),
        );
        if best.as_ref().map_or(true, |b| r.fmin < b.fmin) {
            best = Some(r);
        }
    }
    let best = best.unwrap();
    let params = boxmap.to_external(&best.x);
    let h_series = garch_recursion(|s| effective(&params, s), &daily.z, &daily.state, h1);
    let loglik = -neg_avg_loglik_from(&h_series, &y)?;
    let mut notes = Vec::new();
    if model == BenchmarkModel::RsGarch {
        for v in [0u8, 1] {
            if !daily.state.iter().any(|s| *s == v) {
                notes.push(format!("state {v} never observed; regime parameters unidentified"));
            }
        }
    }
    Ok(BenchmarkFit {
        model,
        params,
        h_series,
        loglik: Some(loglik),
        converged: best.converged,
        h1,
        notes,
    })
}

fn fit_har(daily: &DailySeries) -> Result<BenchmarkFit> {
    let rv = &daily.rv;
    let max_lag = HAR_LAGS[2];
    if rv.len() < max_lag + 4 {
        return Err(Error::InsufficientData(format!(
            "HAR needs at least {} days of history, got {}",
            max_lag + 4,
            rv.len()
        )));
    }
    let lag_mean = |n: usize, l: usize| rv[n - l..n].iter().sum::<f64>() / l as f64;
    let mut x = Vec::new();
    let mut yv = Vec::new();
    for n in max_lag..rv.len() {
        x.push(vec![1.0, rv[n - 1], lag_mean(n, 5), lag_mean(n, 22)]);
        yv.push(rv[n]);
    }
    let beta = linalg::lstsq_minnorm(&x, &yv)?;
    let mean_rv = rv.iter().sum::<f64>() / rv.len() as f64;
    let mut h_series = vec![mean_rv; max_lag];
    for row in &x {
        h_series.push(row.iter().zip(&beta).map(|(a, b)| a * b).sum());
    }
    Ok(BenchmarkFit {
        model: BenchmarkModel::Har,
        params: beta,
        h_series,
        loglik: None,
        converged: true,
        h1: mean_rv,
        notes: vec![format!("first {max_lag} fitted values padded with the sample mean")],
    })
}

/// Fit one benchmark model. GARCH and RS-GARCH maximize the low-frequency
/// likelihood on Z², the unified GARCH-Ito the realized-volatility
/// likelihood, and HAR solves ordinary least squares on lagged RV means.
pub fn fit_benchmark(
    daily: &DailySeries,
    model: BenchmarkModel,
    opt: &OptimizerConfig,
) -> Result<BenchmarkFit> {
    fit_benchmark_warm(daily, model, opt, None)
}

/// [`fit_benchmark`] with a warm start from a previous window's parameters.
pub fn fit_benchmark_warm(
    daily: &DailySeries,
    model: BenchmarkModel,
    opt: &OptimizerConfig,
    warm: Option<&[f64]>,
) -> Result<BenchmarkFit> {
    if daily.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "need at least 20 days to fit, got {}",
            daily.len()
        )));
    }
    match model {
        BenchmarkModel::Har => fit_har(daily),
        m => fit_garch_family(daily, m, opt, warm),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realized_vol::{build_daily_series_from_sim, RvConfig};
    use crate::simulate::{simulate_path, SimConfig, StateRule};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn theta_alt() -> ModelParams {
        ModelParams::new(0.15, 0.165, 0.2, 0.22, 0.1, 0.11)
    }

    fn fixture_daily() -> DailySeries {
        // frozen N = 5 fixture used by the transcription oracle
        let rv = vec![0.21, 0.13, 0.35, 0.18, 0.27];
        let z = vec![0.11, -0.22, 0.31, -0.05, 0.17];
        let s = vec![0u8, 1, 1, 0, 0];
        DailySeries::new(rv, z, s, 0.0).unwrap()
    }

    #[test]
    fn single_day_value() {
        // N = 1, h₁ = y₁ = c: Q = −(1/2)(log c + 1)
        let c = 0.37;
        let daily = DailySeries::new(vec![c], vec![0.0], vec![0], 0.0).unwrap();
        let q = quasi_loglik(&theta_alt(), &daily, &LikelihoodSpec::high_frequency()).unwrap();
        assert!(rel(q, -0.5 * (c.ln() + 1.0)) < 1e-14);
    }

    #[test]
    fn matches_scalar_transcription_oracle() {
        // independently transcribed values at θ with h₁ = mean(rv) = 0.228
        let daily = fixture_daily();
        let q_hf = quasi_loglik(&theta_alt(), &daily, &LikelihoodSpec::high_frequency()).unwrap();
        assert!(rel(q_hf, 0.23852142946945355) < 1e-13, "{q_hf}");
        let mut spec_lf = LikelihoodSpec::low_frequency();
        // the oracle evaluates both modes on the same h-path: pin h₁
        spec_lf.h1_rule = H1Rule::Fixed(0.228);
        let q_lf = quasi_loglik(&theta_alt(), &daily, &spec_lf).unwrap();
        assert!(rel(q_lf, 0.6762904326746755) < 1e-13, "{q_lf}");
    }

    #[test]
    fn homogeneous_case_equals_garch_ito_likelihood() {
        let theta = ModelParams::new(0.2, 0.2, 0.4, 0.4, 0.15, 0.15);
        let n = 40;
        let z: Vec<f64> = (0..n).map(|i| 0.02 * ((i as f64 * 0.7).sin() + 0.3)).collect();
        let rv: Vec<f64> = (0..n).map(|i| 0.05 + 0.01 * ((i as f64).cos().abs())).collect();
        let daily = DailySeries::new(rv.clone(), z.clone(), vec![1; n], 0.0).unwrap();
        let q = quasi_loglik(&theta, &daily, &LikelihoodSpec::high_frequency()).unwrap();
        // literal unified GARCH-Ito likelihood at the mapped coefficients
        let (ws, gs, bs) = model::reduce_to_garch_ito(0.2, 0.4, 0.15).unwrap();
        let h1 = rv.iter().sum::<f64>() / n as f64;
        let mut h = vec![h1];
        for i in 1..n {
            h.push(ws + gs * h[i - 1] + bs * z[i - 1] * z[i - 1]);
        }
        let qg = -h
            .iter()
            .zip(&rv)
            .map(|(h, y)| h.ln() + y / h)
            .sum::<f64>()
            / (2.0 * n as f64);
        assert!(rel(q, qg) < 1e-12);
    }

    #[test]
    fn objective_is_sequential_not_permutation_invariant() {
        let daily = fixture_daily();
        let spec = LikelihoodSpec::high_frequency();
        let q = quasi_loglik(&theta_alt(), &daily, &spec).unwrap();
        let rev = DailySeries::new(
            daily.rv.iter().rev().cloned().collect(),
            daily.z.iter().rev().cloned().collect(),
            daily.state.iter().rev().cloned().collect(),
            0.0,
        )
        .unwrap();
        let q_rev = quasi_loglik(&theta_alt(), &rev, &spec).unwrap();
        assert!((q - q_rev).abs() > 1e-6, "reordering must change the objective");
    }

    #[test]
    fn rejects_invalid_theta() {
        let daily = fixture_daily();
        let bad = ModelParams::new(0.0, 0.1, 0.2, 0.2, 0.1, 0.1);
        assert!(quasi_loglik(&bad, &daily, &LikelihoodSpec::high_frequency()).is_err());
    }

    fn simulated_daily(n: usize, m: usize, seed: u64, rule: StateRule) -> DailySeries {
        let mut cfg = SimConfig::new(theta_alt(), n, m, seed);
        cfg.state_rule = rule;
        cfg.keep_true_ticks = false;
        let sim = simulate_path(&cfg).unwrap();
        build_daily_series_from_sim(&sim, &RvConfig::default())
            .unwrap()
            .daily
    }

    #[test]
    fn fit_is_local_maximum() {
        let daily = simulated_daily(250, 390, 2211, StateRule::Leverage);
        let spec = LikelihoodSpec::high_frequency();
        let fit = fit(&daily, &spec, &OptimizerConfig::default()).unwrap();
        assert!(fit.converged, "notes: {:?}", fit.notes);
        let q_hat = fit.loglik;
        let base = fit.theta_hat.as_array();
        for k in 0..6 {
            for sign in [-1.0, 1.0] {
                let mut p = base;
                p[k] *= 1.0 + sign * 0.05;
                let theta = ModelParams::from_array(p);
                if crate::types::validate_params(&theta, &spec.space).is_valid() {
                    let q = quasi_loglik(&theta, &daily, &spec).unwrap();
                    assert!(
                        q <= q_hat + 1e-9,
                        "perturbation {k} improved the objective: {q} > {q_hat}"
                    );
                }
            }
        }
    }

    #[test]
    fn bfgs_and_simplex_agree() {
        let daily = simulated_daily(200, 390, 77, StateRule::Leverage);
        let spec = LikelihoodSpec::high_frequency();
        let nm = fit(&daily, &spec, &OptimizerConfig::default()).unwrap();
        let bf = fit(
            &daily,
            &spec,
            &OptimizerConfig {
                algorithm: Algorithm::Bfgs,
                max_iters: 500,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            (nm.loglik - bf.loglik).abs() < 1e-4,
            "NM {} vs BFGS {}",
            nm.loglik,
            bf.loglik
        );
    }

    #[test]
    fn homogeneous_states_match_garch_ito_fit() {
        let daily = simulated_daily(300, 390, 909, StateRule::External(vec![0; 300]));
        let spec = LikelihoodSpec::high_frequency();
        let opt = OptimizerConfig::default();
        let sg = fit(&daily, &spec, &opt).unwrap();
        assert!(
            sg.notes.iter().any(|n| n.contains("state 1 never observed")),
            "unidentified regime must be reported: {:?}",
            sg.notes
        );
        let gi = fit_benchmark(&daily, BenchmarkModel::GarchIto, &opt).unwrap();
        // identified state-1 parameters coincide with the 3-parameter fit
        let a = sg.theta_hat;
        assert!(rel(a.omega1, gi.params[0]) < 2e-2, "{} vs {}", a.omega1, gi.params[0]);
        assert!(rel(a.gamma1, gi.params[1]) < 2e-2, "{} vs {}", a.gamma1, gi.params[1]);
        assert!(rel(a.beta1, gi.params[2]) < 2e-2, "{} vs {}", a.beta1, gi.params[2]);
        assert!((sg.loglik - gi.loglik.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn rs_garch_with_single_state_reduces_to_garch() {
        let daily = simulated_daily(200, 390, 313, StateRule::External(vec![0; 200]));
        let opt = OptimizerConfig::default();
        let rs = fit_benchmark(&daily, BenchmarkModel::RsGarch, &opt).unwrap();
        let g = fit_benchmark(&daily, BenchmarkModel::Garch, &opt).unwrap();
        assert!((rs.loglik.unwrap() - g.loglik.unwrap()).abs() < 1e-6);
        for k in 0..3 {
            let denom = g.params[k].abs().max(1e-6);
            assert!(
                (rs.params[k] - g.params[k]).abs() / denom < 2e-2,
                "param {k}: {} vs {}",
                rs.params[k],
                g.params[k]
            );
        }
    }

    #[test]
    fn har_constant_rv_fits_exactly() {
        let c = 0.23;
        let n = 60;
        let daily = DailySeries::new(vec![c; n], vec![0.0; n], vec![0; n], 0.0).unwrap();
        let har = fit_benchmark(&daily, BenchmarkModel::Har, &OptimizerConfig::default()).unwrap();
        for h in &har.h_series {
            assert!((h - c).abs() < 1e-9, "fitted {h} vs {c}");
        }
    }

    #[test]
    fn har_requires_history() {
        let daily = DailySeries::new(vec![0.1; 24], vec![0.0; 24], vec![0; 24], 0.0).unwrap();
        assert!(matches!(
            fit_benchmark(&daily, BenchmarkModel::Har, &OptimizerConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
