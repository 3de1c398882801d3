//! Closed-form machinery of the integrated SG-Ito volatility process.
//!
//! Daily conditional expected integrated volatility follows a four-regime
//! GARCH(1,1)-type recursion
//!
//! ```text
//! h_n = ωʰ(i,j) + γʰ(i,j)·h_{n−1} + βʰ(i,j)·Z²_{n−1},   i = s_{n−1}, j = s_n,
//! ```
//!
//! where the twelve integrated coefficients θʰ derive from the six raw
//! parameters through
//!
//! ```text
//! H_c(ω, β)    = ω · β⁻²(eᵝ − 1 − β)
//! H_β(γ, β)    = (γ − 1) · β⁻²(eᵝ − 1 − β) + β⁻¹(eᵝ − 1)
//! ωʰ(i,j)      = H_c(j) − γᵢ H_c(i) H_β(j)/H_β(i) + ωᵢ H_β(j)
//! γʰ(i,j)      = γᵢ H_β(j)/H_β(i)          (= γᵢ exactly when i = j)
//! βʰ(i,j)      = βᵢ H_β(j)
//! ```
//!
//! This module provides those closed forms together with their analytic
//! gradients, the recursion and its forward-mode derivative ∂h_n/∂θ, the
//! one-day-ahead forecast for observed or latent next states, and the
//! reduction to the single-regime GARCH-Ito recursion under homogeneous
//! states.

use crate::error::{Error, Result};
use crate::types::{DailySeries, IntegratedParams, ModelParams};

/// Below this β the direct forms lose precision to cancellation; a 3-term
/// Taylor series keeps relative error under 1e−12 there.
const BETA_SERIES_THRESHOLD: f64 = 1e-4;

/// β⁻²(eᵝ − 1 − β); series limit 1/2 as β → 0.
fn phi(b: f64) -> f64 {
    if b.abs() < BETA_SERIES_THRESHOLD {
        0.5 + b / 6.0 + b * b / 24.0
    } else {
        (b.exp() - 1.0 - b) / (b * b)
    }
}

/// The derivative numerators cancel three leading orders, so their direct
/// forms degrade much earlier than the value forms; a longer series below
/// β = 1e−2 keeps them at full precision.
const BETA_DERIV_SERIES_THRESHOLD: f64 = 1e-2;

/// d/dβ of [`phi`]; series limit 1/6.
fn phi_prime(b: f64) -> f64 {
    if b.abs() < BETA_DERIV_SERIES_THRESHOLD {
        let b2 = b * b;
        1.0 / 6.0 + b / 12.0 + b2 / 40.0 + b2 * b / 180.0 + b2 * b2 / 1008.0
            + b2 * b2 * b / 6720.0
    } else {
        ((b - 2.0) * b.exp() + b + 2.0) / (b * b * b)
    }
}

/// β⁻¹(eᵝ − 1); series limit 1 as β → 0.
fn psi(b: f64) -> f64 {
    if b.abs() < BETA_SERIES_THRESHOLD {
        1.0 + b / 2.0 + b * b / 6.0
    } else {
        (b.exp() - 1.0) / b
    }
}

/// d/dβ of [`psi`]; series limit 1/2.
fn psi_prime(b: f64) -> f64 {
    if b.abs() < BETA_DERIV_SERIES_THRESHOLD {
        let b2 = b * b;
        0.5 + b / 3.0 + b2 / 8.0 + b2 * b / 30.0 + b2 * b2 / 144.0 + b2 * b2 * b / 840.0
    } else {
        ((b - 1.0) * b.exp() + 1.0) / (b * b)
    }
}

/// H_c, H_β of one state together with partials in (ω, γ, β).
#[derive(Clone, Copy)]
struct StateH {
    hc: f64,
    hb: f64,
    dhc_dw: f64,
    dhc_db: f64,
    dhb_dg: f64,
    dhb_db: f64,
}

fn state_h(omega: f64, gamma: f64, beta: f64) -> StateH {
    let p = phi(beta);
    let pp = phi_prime(beta);
    StateH {
        hc: omega * p,
        hb: (gamma - 1.0) * p + psi(beta),
        dhc_dw: p,
        dhc_db: omega * pp,
        dhb_dg: p,
        dhb_db: (gamma - 1.0) * pp + psi_prime(beta),
    }
}

/// Gradients of the twelve integrated coefficients with respect to θ,
/// indexed `[prev][curr]` like [`IntegratedParams`].
#[derive(Debug, Clone)]
pub struct IntegratedGrads {
    pub omega_h: [[[f64; 6]; 2]; 2],
    pub gamma_h: [[[f64; 6]; 2]; 2],
    pub beta_h: [[[f64; 6]; 2]; 2],
}

/// Integrated coefficients θʰ from the closed forms above.
pub fn integrated_params(theta: &ModelParams) -> IntegratedParams {
    let h = [state_h(theta.omega1, theta.gamma1, theta.beta1),
             state_h(theta.omega2, theta.gamma2, theta.beta2)];
    let mut omega_h = [[0.0; 2]; 2];
    let mut gamma_h = [[0.0; 2]; 2];
    let mut beta_h = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let (wi, gi, bi) = theta.state(i as u8);
            let ratio = h[j].hb / h[i].hb;
            omega_h[i][j] = h[j].hc - gi * h[i].hc * ratio + wi * h[j].hb;
            gamma_h[i][j] = gi * ratio;
            beta_h[i][j] = bi * h[j].hb;
        }
    }
    IntegratedParams { omega_h, gamma_h, beta_h }
}

/// Integrated coefficients plus their analytic gradients.
///
/// Parameter slots follow the canonical order: state `i`'s ω sits at index
/// `i`, γ at `2 + i`, β at `4 + i`. Diagonal pairs accumulate the chain rule
/// through both the "previous state" and "current state" roles, which is why
/// γʰ(i,i) has gradient exactly eᵧᵢ.
pub fn integrated_params_with_grad(theta: &ModelParams) -> (IntegratedParams, IntegratedGrads) {
    let h = [state_h(theta.omega1, theta.gamma1, theta.beta1),
             state_h(theta.omega2, theta.gamma2, theta.beta2)];
    let ip = integrated_params(theta);
    let mut g = IntegratedGrads {
        omega_h: [[[0.0; 6]; 2]; 2],
        gamma_h: [[[0.0; 6]; 2]; 2],
        beta_h: [[[0.0; 6]; 2]; 2],
    };
    for i in 0..2usize {
        for j in 0..2usize {
            let (wi, gi, bi) = theta.state(i as u8);
            let (wslot_i, gslot_i, bslot_i) = (i, 2 + i, 4 + i);
            let (wslot_j, gslot_j, bslot_j) = (j, 2 + j, 4 + j);
            let ratio = h[j].hb / h[i].hb;

            // ∂ratio/∂θ: j-role numerator, i-role denominator
            let mut dratio = [0.0; 6];
            dratio[gslot_j] += h[j].dhb_dg / h[i].hb;
            dratio[bslot_j] += h[j].dhb_db / h[i].hb;
            dratio[gslot_i] -= h[j].hb * h[i].dhb_dg / (h[i].hb * h[i].hb);
            dratio[bslot_i] -= h[j].hb * h[i].dhb_db / (h[i].hb * h[i].hb);

            // ωʰ = hc_j − γᵢ hc_i ratio + ωᵢ hb_j
            let dw = &mut g.omega_h[i][j];
            dw[wslot_j] += h[j].dhc_dw;
            dw[bslot_j] += h[j].dhc_db;
            dw[gslot_i] -= h[i].hc * ratio;
            dw[wslot_i] -= gi * h[i].dhc_dw * ratio;
            dw[bslot_i] -= gi * h[i].dhc_db * ratio;
            for k in 0..6 {
                dw[k] -= gi * h[i].hc * dratio[k];
            }
            dw[wslot_i] += h[j].hb;
            dw[gslot_j] += wi * h[j].dhb_dg;
            dw[bslot_j] += wi * h[j].dhb_db;

            // γʰ = γᵢ ratio
            let dg = &mut g.gamma_h[i][j];
            dg[gslot_i] += ratio;
            for k in 0..6 {
                dg[k] += gi * dratio[k];
            }

            // βʰ = βᵢ hb_j
            let db = &mut g.beta_h[i][j];
            db[bslot_i] += h[j].hb;
            db[gslot_j] += bi * h[j].dhb_dg;
            db[bslot_j] += bi * h[j].dhb_db;
        }
    }
    (ip, g)
}

/// Binary state sequence plus when each day's state becomes known.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub s: Vec<u8>,
    pub availability: StateAvailability,
}

/// Whether sₙ is observable at the start of day n (usable directly in
/// forecasting) or only revealed at the end of the day (forecasts must mix
/// over the transition probabilities).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateAvailability {
    AtOpen,
    AtClose,
}

impl StatePath {
    pub fn new(s: Vec<u8>, availability: StateAvailability) -> Result<Self> {
        if s.iter().any(|v| *v > 1) {
            return Err(Error::Invalid("state values must be 0 or 1".into()));
        }
        Ok(Self { s, availability })
    }

    pub fn observed(s: Vec<u8>) -> Result<Self> {
        Self::new(s, StateAvailability::AtOpen)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Time-constant state transition probabilities p[i][j] = p(sₙ = j | sₙ₋₁ = i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix {
    p: [[f64; 2]; 2],
}

impl TransitionMatrix {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self> {
        for row in &p {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Invalid("transition probabilities must be non-negative".into()));
            }
            if ((row[0] + row[1]) - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid("transition matrix rows must sum to 1".into()));
            }
        }
        Ok(Self { p })
    }

    pub fn prob(&self, from: u8, to: u8) -> f64 {
        self.p[from as usize][to as usize]
    }

    /// Empirical transition frequencies from a state sequence. Rows with no
    /// observed transitions fall back to add-one smoothing (uniform 1/2);
    /// the returned flags mark which rows were smoothed.
    pub fn estimate(states: &[u8]) -> Result<(Self, [bool; 2])> {
        if states.len() < 2 {
            return Err(Error::InsufficientData(
                "need at least 2 days to estimate transitions".into(),
            ));
        }
        let mut counts = [[0usize; 2]; 2];
        for w in states.windows(2) {
            counts[w[0] as usize][w[1] as usize] += 1;
        }
        let mut p = [[0.0; 2]; 2];
        let mut smoothed = [false; 2];
        for i in 0..2 {
            let row_total = counts[i][0] + counts[i][1];
            if row_total == 0 {
                p[i] = [0.5, 0.5];
                smoothed[i] = true;
            } else {
                p[i][0] = counts[i][0] as f64 / row_total as f64;
                p[i][1] = counts[i][1] as f64 / row_total as f64;
            }
        }
        Ok((Self { p }, smoothed))
    }
}

/// Conditional expected daily integrated volatility series, with the N×6
/// gradient ∂h_n/∂θ when requested.
#[derive(Debug, Clone)]
pub struct HnSeries {
    pub h: Vec<f64>,
    pub grad: Option<Vec<[f64; 6]>>,
}

/// Core recursion over explicit slices. `z[n]` and `s[n]` must align;
/// day n ≥ 1 selects the regime pair (s[n−1], s[n]) and feeds z[n−1].
pub fn h_recursion_zs(theta: &ModelParams, z: &[f64], s: &[u8], h1: f64) -> Result<Vec<f64>> {
    if z.len() != s.len() {
        return Err(Error::Invalid("z and state length mismatch".into()));
    }
    if z.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::Invalid(format!("h1 = {h1} must be positive and finite")));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite return in series".into()));
    }
    let ip = integrated_params(theta);
    let mut h = Vec::with_capacity(z.len());
    h.push(h1);
    for n in 1..z.len() {
        let (wh, gh, bh) = ip.pair(s[n - 1], s[n]);
        let prev = h[n - 1];
        h.push(wh + gh * prev + bh * z[n - 1] * z[n - 1]);
    }
    Ok(h)
}

/// The h recursion on a daily series.
pub fn h_recursion(theta: &ModelParams, daily: &DailySeries, h1: f64) -> Result<HnSeries> {
    Ok(HnSeries {
        h: h_recursion_zs(theta, &daily.z, &daily.state, h1)?,
        grad: None,
    })
}

/// Forward-mode differentiation of the recursion:
///
/// ```text
/// ∂h_n/∂θ = ∂ωʰ/∂θ + ∂γʰ/∂θ·h_{n−1} + γʰ·∂h_{n−1}/∂θ + ∂βʰ/∂θ·Z²_{n−1}
/// ```
///
/// with ∂h₁/∂θ = 0 (h₁ is treated as a data-driven constant; the influence
/// of that convention decays geometrically in n).
pub fn h_gradient(theta: &ModelParams, daily: &DailySeries, h1: f64) -> Result<HnSeries> {
    let n_days = daily.len();
    let (ip, gr) = integrated_params_with_grad(theta);
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::Invalid(format!("h1 = {h1} must be positive and finite")));
    }
    let mut h = Vec::with_capacity(n_days);
    let mut grad: Vec<[f64; 6]> = Vec::with_capacity(n_days);
    h.push(h1);
    grad.push([0.0; 6]);
    for n in 1..n_days {
        let (i, j) = (daily.state[n - 1] as usize, daily.state[n] as usize);
        let z2 = daily.z[n - 1] * daily.z[n - 1];
        let prev_h = h[n - 1];
        let prev_g = grad[n - 1];
        h.push(ip.omega_h[i][j] + ip.gamma_h[i][j] * prev_h + ip.beta_h[i][j] * z2);
        let mut g = [0.0; 6];
        for k in 0..6 {
            g[k] = gr.omega_h[i][j][k]
                + gr.gamma_h[i][j][k] * prev_h
                + ip.gamma_h[i][j] * prev_g[k]
                + gr.beta_h[i][j][k] * z2;
        }
        grad.push(g);
    }
    Ok(HnSeries { h, grad: Some(grad) })
}

/// How the next day's state enters a forecast: directly when observed, or
/// mixed over the reachable regime branches when only transition
/// probabilities are available.
#[derive(Debug, Clone, Copy)]
pub enum NextState<'a> {
    Observed(u8),
    Latent(&'a TransitionMatrix),
}

/// One-day-ahead conditional expected integrated volatility.
pub fn forecast_next(
    theta: &ModelParams,
    h_prev: f64,
    z_prev: f64,
    s_prev: u8,
    next: NextState<'_>,
) -> Result<f64> {
    if !(h_prev > 0.0 && h_prev.is_finite()) {
        return Err(Error::Invalid(format!("h_prev = {h_prev} must be positive")));
    }
    if s_prev > 1 {
        return Err(Error::Invalid("s_prev must be 0 or 1".into()));
    }
    let ip = integrated_params(theta);
    let branch = |j: u8| {
        let (wh, gh, bh) = ip.pair(s_prev, j);
        wh + gh * h_prev + bh * z_prev * z_prev
    };
    Ok(match next {
        NextState::Observed(j) => {
            if j > 1 {
                return Err(Error::Invalid("next state must be 0 or 1".into()));
            }
            branch(j)
        }
        NextState::Latent(p) => p.prob(s_prev, 0) * branch(0) + p.prob(s_prev, 1) * branch(1),
    })
}

/// Integrated coefficients of the single-regime GARCH-Ito model:
///
/// ```text
/// ω* = ω β⁻¹(eᵝ − 1),   β* = β[(γ − 1)β⁻²(eᵝ − 1 − β) + β⁻¹(eᵝ − 1)],
/// ```
///
/// so its recursion h_n = ω* + γ h_{n−1} + β* Z²_{n−1} coincides with the
/// SG-Ito recursion under homogeneous states and parameters. As β → 0⁺,
/// ω* → ω and β* → 0 with slope (γ + 1)/2.
pub fn reduce_to_garch_ito(omega_g: f64, gamma_g: f64, beta_g: f64) -> Result<(f64, f64, f64)> {
    if !(omega_g > 0.0 && gamma_g > 0.0 && beta_g > 0.0)
        || !(omega_g.is_finite() && gamma_g.is_finite() && beta_g.is_finite())
    {
        return Err(Error::Invalid("GARCH-Ito parameters must be positive and finite".into()));
    }
    let omega_star = omega_g * psi(beta_g);
    let beta_star = beta_g * ((gamma_g - 1.0) * phi(beta_g) + psi(beta_g));
    Ok((omega_star, gamma_g, beta_star))
}
