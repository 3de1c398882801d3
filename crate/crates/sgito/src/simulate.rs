//! Euler-scheme simulation of SG-Ito sample paths.
//!
//! On the grid t = n − 1 + m/M the day-n instantaneous variance under state
//! s ∈ {0, 1} (coefficients ω, γ, β of that state) is
//!
//! ```text
//! σ²(t) = σ²ₐ + (t − n + 1)·{ω + (γ − 1)σ²ₐ} + β·(X_t − Xₐ − (t − n + 1)μ)²
//! ```
//!
//! with the anchor (σ²ₐ, Xₐ) reset at each integer time, and the price update
//! X ← X + μΔt + σ√Δt·ξ, ξ ~ N(0, 1). Observed prices add i.i.d. Gaussian
//! microstructure noise. Positivity of σ² is asserted at every step, never
//! forced: a violating grid aborts the replicate with a diagnostic.

use crate::error::{Error, Result};
use crate::model::{self, StateAvailability, StatePath, TransitionMatrix};
use crate::types::{ModelParams, ParamSpace, TickDay, TickSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Daily state generator.
#[derive(Debug, Clone)]
pub enum StateRule {
    /// Leverage indicator: sₙ = 1 when the previous day's return is negative
    /// (s₁ = 0 by convention).
    Leverage,
    /// i.i.d. Bernoulli(p) states.
    Bernoulli { p: f64 },
    /// Two-state Markov chain started in state 0.
    Markov { matrix: TransitionMatrix },
    /// Externally supplied sequence (must cover every simulated day).
    External(Vec<u8>),
}

/// Simulation configuration. The seed fully determines the output.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub theta0: ModelParams,
    pub n_days: usize,
    /// Observations per day (the number of intraday increments; a day has
    /// `m_per_day + 1` ticks including open and close).
    pub m_per_day: usize,
    pub x0: f64,
    /// Drift per day.
    pub mu: f64,
    /// Microstructure noise standard deviation.
    pub sigma_eps: f64,
    pub seed: u64,
    pub state_rule: StateRule,
    /// Initial instantaneous variance; defaults to [`default_sigma0`].
    pub sigma0_sq: Option<f64>,
    /// Euler sub-steps per observation (1 = discretize at observation frequency).
    pub refine: usize,
    /// Retain the true (noise-free) tick paths in the output.
    pub keep_true_ticks: bool,
}

impl SimConfig {
    pub fn new(theta0: ModelParams, n_days: usize, m_per_day: usize, seed: u64) -> Self {
        Self {
            theta0,
            n_days,
            m_per_day,
            x0: 10.0,
            mu: 0.0,
            sigma_eps: 0.01,
            seed,
            state_rule: StateRule::Leverage,
            sigma0_sq: None,
            refine: 1,
            keep_true_ticks: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_days < 2 {
            return Err(Error::Invalid("need at least 2 days".into()));
        }
        if self.m_per_day < 2 {
            return Err(Error::Invalid("need at least 2 observations per day".into()));
        }
        if self.sigma_eps < 0.0 || !self.sigma_eps.is_finite() {
            return Err(Error::Invalid("sigma_eps must be non-negative".into()));
        }
        if self.refine == 0 {
            return Err(Error::Invalid("refine must be at least 1".into()));
        }
        if let StateRule::Bernoulli { p } = self.state_rule {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid("Bernoulli p must lie in [0, 1]".into()));
            }
        }
        if let StateRule::External(s) = &self.state_rule {
            if s.len() < self.n_days {
                return Err(Error::Invalid(format!(
                    "external state sequence has {} days, need {}",
                    s.len(),
                    self.n_days
                )));
            }
            if s.iter().any(|v| *v > 1) {
                return Err(Error::Invalid("external states must be 0 or 1".into()));
            }
        }
        let report = crate::types::validate_params(&self.theta0, &ParamSpace::default());
        if !report.is_valid() {
            return Err(Error::Invalid(format!("theta0 invalid:\n{report}")));
        }
        Ok(())
    }
}

/// Simulated path: noisy observations, true prices, realized state sequence,
/// per-day integrated volatility (Riemann sum of σ²), and daily returns.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// Observed (noisy) intraday log prices, one block per day.
    pub ticks: TickSeries,
    /// True intraday log prices on the same grid (empty when not retained).
    pub true_ticks: Vec<Vec<f64>>,
    /// Per-day integrated volatility accumulated as Σ σ²(t)·Δt.
    pub true_iv: Vec<f64>,
    pub states: StatePath,
    /// Raw daily close-to-close returns X_n − X_{n−1}, n = 1..N (X₀ = x0).
    pub z: Vec<f64>,
    /// Daily closes X₀, X₁, …, X_N (N + 1 values).
    pub closes: Vec<f64>,
    pub seed: u64,
}

/// The stationary-targeted initial instantaneous variance, evaluated at the
/// state-1 integrated coefficients:
///
/// ```text
/// σ₀² = [ωʰ(1 − βʰ − γ) + β ωʰ] / [(1 − βʰ − γ)(1 − γ)]
/// ```
pub fn default_sigma0(theta: &ModelParams) -> Result<f64> {
    let ip = model::integrated_params(theta);
    let (wh, _, bh) = ip.pair(0, 0);
    let gamma = theta.gamma1;
    let beta = theta.beta1;
    let d1 = 1.0 - bh - gamma;
    let d2 = 1.0 - gamma;
    if d1 <= 0.0 || d2 <= 0.0 {
        return Err(Error::Numerical(format!(
            "sigma0 denominator non-positive (1-beta_h-gamma = {d1}, 1-gamma = {d2}); \
             parameters outside the stationarity region"
        )));
    }
    Ok((wh * d1 + beta * wh) / (d1 * d2))
}

/// RNG streams: each day draws its Brownian increments, noise, and state
/// from dedicated ChaCha streams keyed off one seed, so per-day and
/// per-replicate streams are independent and replayable.
fn day_rng(seed: u64, day: usize, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3 * day as u64 + lane);
    rng
}

/// Generate one SG-Ito sample path.
pub fn simulate_path(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let n_days = cfg.n_days;
    let m = cfg.m_per_day;
    let sub = m * cfg.refine;
    let dt = 1.0 / sub as f64;
    let sqrt_dt = dt.sqrt();

    let mut sig2 = match cfg.sigma0_sq {
        Some(v) if v > 0.0 && v.is_finite() => v,
        Some(v) => return Err(Error::Invalid(format!("sigma0_sq = {v} must be positive"))),
        None => default_sigma0(&cfg.theta0)?,
    };
    let mut x = cfg.x0;
    let mut closes = Vec::with_capacity(n_days + 1);
    closes.push(x);
    let mut states: Vec<u8> = Vec::with_capacity(n_days);
    let mut days: Vec<TickDay> = Vec::with_capacity(n_days);
    let mut true_ticks: Vec<Vec<f64>> = Vec::new();
    let mut true_iv = Vec::with_capacity(n_days);

    for day in 1..=n_days {
        let s_n: u8 = match &cfg.state_rule {
            StateRule::Leverage => {
                if day == 1 {
                    0
                } else {
                    u8::from(closes[day - 1] < closes[day - 2])
                }
            }
            StateRule::Bernoulli { p } => {
                let u: f64 = day_rng(cfg.seed, day, 2).random();
                u8::from(u < *p)
            }
            StateRule::Markov { matrix } => {
                if day == 1 {
                    0
                } else {
                    let prev = states[day - 2];
                    let u: f64 = day_rng(cfg.seed, day, 2).random();
                    u8::from(u >= matrix.prob(prev, 0))
                }
            }
            StateRule::External(s) => s[day - 1],
        };
        states.push(s_n);
        let (w, g, b) = cfg.theta0.state(s_n);

        let mut path_rng = day_rng(cfg.seed, day, 0);
        let mut noise_rng = day_rng(cfg.seed, day, 1);
        let anchor = sig2;
        let x_anchor = x;
        let mut iv = 0.0;
        let mut t = Vec::with_capacity(m + 1);
        let mut y = Vec::with_capacity(m + 1);
        let mut xs = Vec::with_capacity(m + 1);

        let record = |k: usize, x: f64, noise_rng: &mut ChaCha8Rng, t: &mut Vec<f64>, y: &mut Vec<f64>, xs: &mut Vec<f64>| {
            t.push(k as f64 / m as f64);
            let eps = if cfg.sigma_eps > 0.0 {
                cfg.sigma_eps * noise_rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            y.push(x + eps);
            xs.push(x);
        };

        for step in 0..sub {
            let tau = step as f64 * dt;
            let r = x - x_anchor;
            let dev = r - tau * cfg.mu;
            let var = anchor + tau * (w + (g - 1.0) * anchor) + b * dev * dev;
            if !(var > 0.0 && var.is_finite()) {
                return Err(Error::Numerical(format!(
                    "instantaneous variance {var} not positive at day {day}, step {step}; \
                     grid too coarse for these parameters"
                )));
            }
            iv += var * dt;
            if step % cfg.refine == 0 {
                record(step / cfg.refine, x, &mut noise_rng, &mut t, &mut y, &mut xs);
            }
            let xi: f64 = path_rng.sample(StandardNormal);
            x += cfg.mu * dt + var.sqrt() * sqrt_dt * xi;
        }
        // close of the day: τ = 1 variance becomes the next anchor
        let dev = (x - x_anchor) - cfg.mu;
        let var_close = anchor + (w + (g - 1.0) * anchor) + b * dev * dev;
        if !(var_close > 0.0 && var_close.is_finite()) {
            return Err(Error::Numerical(format!(
                "close variance {var_close} not positive at day {day}"
            )));
        }
        sig2 = var_close;
        record(m, x, &mut noise_rng, &mut t, &mut y, &mut xs);

        closes.push(x);
        true_iv.push(iv);
        days.push(TickDay::new(t, y)?);
        if cfg.keep_true_ticks {
            true_ticks.push(xs);
        }
    }

    let z: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(SimOutput {
        ticks: TickSeries::new(days)?,
        true_ticks,
        true_iv,
        states: StatePath::new(states, StateAvailability::AtOpen)?,
        z,
        closes,
        seed: cfg.seed,
    })
}
