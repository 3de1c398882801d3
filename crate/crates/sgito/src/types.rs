//! Shared domain types and parameter validation.
//!
//! All types here are immutable after construction and safe to share
//! read-only across parallel workers.

use crate::error::{Error, Result};
use crate::model;

/// Canonical parameter ordering used everywhere a six-vector appears
/// (gradients, covariance rows, restriction matrices, CSV output).
pub const PARAM_NAMES: [&str; 6] = ["omega1", "omega2", "gamma1", "gamma2", "beta1", "beta2"];

/// The six SG-Ito parameters θ = (ω₁, ω₂, γ₁, γ₂, β₁, β₂).
///
/// ω are variance-rate intercepts per day, γ volatility-persistence
/// coefficients, β return-feedback coefficients. All strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub omega1: f64,
    pub omega2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ModelParams {
    pub fn new(omega1: f64, omega2: f64, gamma1: f64, gamma2: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            omega1,
            omega2,
            gamma1,
            gamma2,
            beta1,
            beta2,
        }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn as_array(&self) -> [f64; 6] {
        [
            self.omega1,
            self.omega2,
            self.gamma1,
            self.gamma2,
            self.beta1,
            self.beta2,
        ]
    }

    /// (ω, γ, β) of state `i` ∈ {0, 1}.
    pub fn state(&self, i: u8) -> (f64, f64, f64) {
        match i {
            0 => (self.omega1, self.gamma1, self.beta1),
            1 => (self.omega2, self.gamma2, self.beta2),
            _ => panic!("state index must be 0 or 1"),
        }
    }

    /// Both states carry identical coefficients.
    pub fn is_homogeneous(&self) -> bool {
        self.omega1 == self.omega2 && self.gamma1 == self.gamma2 && self.beta1 == self.beta2
    }
}

/// Box bounds for the raw parameters plus the integrated-form stationarity
/// switch. The reference formulation only requires "known positive
/// constants"; the defaults below cover every parameter value the model is
/// expected to produce on daily equity data with wide margin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpace {
    /// Lower bounds in [`PARAM_NAMES`] order; all strictly positive.
    pub lower: [f64; 6],
    /// Upper bounds, elementwise above `lower`.
    pub upper: [f64; 6],
    /// Enforce γʰᵢⱼ + βʰᵢⱼ < 1 for all four regime pairs.
    pub enforce_stationarity: bool,
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self {
            lower: [1e-6; 6],
            upper: [5.0, 5.0, 0.999, 0.999, 5.0, 5.0],
            enforce_stationarity: true,
        }
    }
}

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        for k in 0..6 {
            if !(self.lower[k] > 0.0 && self.lower[k] < self.upper[k]) {
                return Err(Error::Invalid(format!(
                    "param space bounds for {} must satisfy 0 < lower < upper",
                    PARAM_NAMES[k]
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &ModelParams) -> bool {
        theta
            .as_array()
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (lo, hi))| v.is_finite() && *v >= *lo && *v <= *hi)
    }
}

/// The twelve integrated-form coefficients θʰ, indexed `[prev_state][curr_state]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratedParams {
    pub omega_h: [[f64; 2]; 2],
    pub gamma_h: [[f64; 2]; 2],
    pub beta_h: [[f64; 2]; 2],
}

impl IntegratedParams {
    /// (ωʰ, γʰ, βʰ) for the regime pair (previous state `i`, current state `j`).
    pub fn pair(&self, i: u8, j: u8) -> (f64, f64, f64) {
        let (i, j) = (i as usize, j as usize);
        (self.omega_h[i][j], self.gamma_h[i][j], self.beta_h[i][j])
    }
}

/// One violated constraint found by [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotFinite { name: &'static str, value: f64 },
    NotPositive { name: &'static str, value: f64 },
    OutOfBounds { name: &'static str, value: f64, lower: f64, upper: f64 },
    IntegratedNotPositive { coeff: String, value: f64 },
    NotStationary { prev: u8, curr: u8, sum: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotFinite { name, value } => write!(f, "{name} = {value} is not finite"),
            Violation::NotPositive { name, value } => {
                write!(f, "{name} = {value} must be strictly positive")
            }
            Violation::OutOfBounds { name, value, lower, upper } => {
                write!(f, "{name} = {value} outside [{lower}, {upper}]")
            }
            Violation::IntegratedNotPositive { coeff, value } => {
                write!(f, "integrated coefficient {coeff} = {value} must be positive")
            }
            Violation::NotStationary { prev, curr, sum } => write!(
                f,
                "gamma_h[{}{}] + beta_h[{}{}] = {sum} >= 1",
                prev + 1,
                curr + 1,
                prev + 1,
                curr + 1
            ),
        }
    }
}

/// Full validity report: every violated bound plus the stationarity check
/// for all four regime pairs. A report, not an exception.
#[derive(Debug, Clone, Default)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "valid")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Check θ against positivity, the box bounds, positivity of all twelve
/// integrated coefficients, and γʰ + βʰ < 1 for the four regime pairs.
pub fn validate_params(theta: &ModelParams, space: &ParamSpace) -> ValidityReport {
    let mut report = ValidityReport::default();
    let vals = theta.as_array();
    for (k, &v) in vals.iter().enumerate() {
        if !v.is_finite() {
            report.violations.push(Violation::NotFinite {
                name: PARAM_NAMES[k],
                value: v,
            });
        } else if v <= 0.0 {
            report.violations.push(Violation::NotPositive {
                name: PARAM_NAMES[k],
                value: v,
            });
        } else if v < space.lower[k] || v > space.upper[k] {
            report.violations.push(Violation::OutOfBounds {
                name: PARAM_NAMES[k],
                value: v,
                lower: space.lower[k],
                upper: space.upper[k],
            });
        }
    }
    if !report.is_valid() {
        // integrated forms are meaningless off the positive orthant
        if vals.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return report;
        }
    }
    let ip = model::integrated_params(theta);
    for i in 0..2u8 {
        for j in 0..2u8 {
            let (wh, gh, bh) = ip.pair(i, j);
            for (tag, v) in [("omega_h", wh), ("gamma_h", gh), ("beta_h", bh)] {
                if !(v > 0.0 && v.is_finite()) {
                    report.violations.push(Violation::IntegratedNotPositive {
                        coeff: format!("{tag}[{}{}]", i + 1, j + 1),
                        value: v,
                    });
                }
            }
            if space.enforce_stationarity && !(gh + bh < 1.0) {
                report.violations.push(Violation::NotStationary {
                    prev: i,
                    curr: j,
                    sum: gh + bh,
                });
            }
        }
    }
    report
}

/// One day of intraday observations: strictly increasing timestamp fractions
/// in [0, 1] with both endpoints observed, paired with observed log prices.
#[derive(Debug, Clone, PartialEq)]
pub struct TickDay {
    t: Vec<f64>,
    y: Vec<f64>,
}

impl TickDay {
    pub fn new(t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::Invalid("tick day: time/price length mismatch".into()));
        }
        if t.len() < 2 {
            return Err(Error::InsufficientData(
                "tick day needs at least 2 observations".into(),
            ));
        }
        if t[0] != 0.0 || *t.last().unwrap() != 1.0 {
            return Err(Error::Invalid(
                "tick day must observe both the open (t=0) and the close (t=1)".into(),
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("tick timestamps must strictly increase".into()));
        }
        if y.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("tick prices must be finite".into()));
        }
        Ok(Self { t, y })
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn prices(&self) -> &[f64] {
        &self.y
    }

    /// Number of intraday increments (observations minus one).
    pub fn n_increments(&self) -> usize {
        self.y.len() - 1
    }

    pub fn open(&self) -> f64 {
        self.y[0]
    }

    pub fn close(&self) -> f64 {
        *self.y.last().unwrap()
    }
}

/// Intraday observed log prices partitioned into daily blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TickSeries {
    pub days: Vec<TickDay>,
}

impl TickSeries {
    pub fn new(days: Vec<TickDay>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::InsufficientData("tick series has no days".into()));
        }
        Ok(Self { days })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }
}

/// Per-day aligned estimation input: realized volatility, demeaned daily
/// close-to-close log return Zₙ, and the binary state, all the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub rv: Vec<f64>,
    pub z: Vec<f64>,
    pub state: Vec<u8>,
    /// Sample mean of the raw returns used to demean `z`.
    pub mu_hat: f64,
}

impl DailySeries {
    pub fn new(rv: Vec<f64>, z: Vec<f64>, state: Vec<u8>, mu_hat: f64) -> Result<Self> {
        if rv.len() != z.len() || rv.len() != state.len() {
            return Err(Error::Invalid(format!(
                "daily series length mismatch: rv {}, z {}, state {}",
                rv.len(),
                z.len(),
                state.len()
            )));
        }
        if rv.is_empty() {
            return Err(Error::InsufficientData("daily series is empty".into()));
        }
        if rv.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("rv must be finite and non-negative".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("returns must be finite".into()));
        }
        if state.iter().any(|s| *s > 1) {
            return Err(Error::Invalid("states must be 0 or 1".into()));
        }
        Ok(Self { rv, z, state, mu_hat })
    }

    /// Assemble from raw (not demeaned) returns; μ̂ is their sample mean.
    pub fn from_raw_returns(rv: Vec<f64>, raw: &[f64], state: Vec<u8>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InsufficientData("no returns".into()));
        }
        let mu_hat = raw.iter().sum::<f64>() / raw.len() as f64;
        let z = raw.iter().map(|r| r - mu_hat).collect();
        Self::new(rv, z, state, mu_hat)
    }

    pub fn len(&self) -> usize {
        self.rv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rv.is_empty()
    }

    /// Raw (not demeaned) returns.
    pub fn raw_returns(&self) -> Vec<f64> {
        self.z.iter().map(|z| z + self.mu_hat).collect()
    }

    /// Contiguous sub-window `[start, start + len)`, re-demeaned with the
    /// window's own sample mean so rolling fits never peek outside it.
    pub fn window(&self, start: usize, len: usize) -> Result<DailySeries> {
        if start + len > self.len() || len == 0 {
            return Err(Error::Invalid("window out of range".into()));
        }
        let raw: Vec<f64> = self.z[start..start + len]
            .iter()
            .map(|z| z + self.mu_hat)
            .collect();
        DailySeries::from_raw_returns(
            self.rv[start..start + len].to_vec(),
            &raw,
            self.state[start..start + len].to_vec(),
        )
    }
}

/// Fitted-model summary: point estimate, sandwich covariance of θ̂ (scaled by
/// 1/N), standard errors, quasi-log-likelihood at the optimum, fitted h
/// series, and convergence diagnostics. Covariance and standard errors are
/// attached by the inference layer after the fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ModelParams,
    pub covariance: Option<[[f64; 6]; 6]>,
    pub std_errors: Option<[f64; 6]>,
    pub loglik: f64,
    pub h_series: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Initial value h₁ used by the recursion (needed to reproduce gradients).
    pub h1: f64,
    pub notes: Vec<String>,
}
