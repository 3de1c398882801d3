//! Pre-averaging realized volatility, robust to microstructure noise.
//!
//! For a day with M intraday increments d₁…d_M (M + 1 tick observations) and
//! tuning parameter K, weight function f(x) = min(x, 1 − x):
//!
//! ```text
//! RV = (1/φ_K)·(M/(M−K))·Σ_{k=1}^{M−K+1} ( Ȳ_k² − ½Ŷ_k )
//! Ȳ_k = Σ_{i=1}^{K−1} f(i/K)·d_{k+i−1+1}        (window of K increments)
//! Ŷ_k = Σ_{i=1}^{K}  (f(i/K) − f((i−1)/K))²·d²_{k+i−1+1}
//! φ_K = Σ_{i=1}^{K} f(i/K)²
//! ```
//!
//! Window k uses increments k…k+K−1 (0-based start = k−1); since f(1) = 0
//! the Ȳ sum can equivalently run to i = K, and the last window's Ŷ reaches
//! increment M exactly. The estimator is index-based: no time rescaling is
//! applied to irregular grids, and K is recomputed per day from that day's
//! M. The triangular weight makes both window sums piecewise-affine in the
//! increment index, so each window evaluates in O(1) from prefix sums; the
//! literal O(M·K) transcription is kept in the tests as the oracle.

use crate::error::{Error, Result};
use crate::model::StatePath;
use crate::simulate::SimOutput;
use crate::types::{DailySeries, TickDay, TickSeries};

/// Rule for the pre-averaging window length K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KRule {
    /// K = ⌊√Mₙ⌋, recomputed per day (the default).
    SqrtM,
    /// K = ⌊c·√Mₙ⌋ for a positive multiplier c.
    SqrtMScaled(f64),
    /// Fixed K for every day.
    Fixed(usize),
}

impl KRule {
    fn k_for(&self, m: usize) -> Result<usize> {
        let k = match self {
            KRule::SqrtM => (m as f64).sqrt().floor() as usize,
            KRule::SqrtMScaled(c) => {
                if !(*c > 0.0) {
                    return Err(Error::Invalid("K multiplier must be positive".into()));
                }
                (c * (m as f64).sqrt()).floor() as usize
            }
            KRule::Fixed(k) => *k,
        };
        if k < 2 {
            return Err(Error::Invalid(format!("K = {k} must be at least 2")));
        }
        if m < k + 1 {
            return Err(Error::InsufficientData(format!(
                "day has {m} increments, need at least K+1 = {}",
                k + 1
            )));
        }
        Ok(k)
    }
}

/// Pre-averaging weight function identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreavWeight {
    /// f(x) = min(x, 1 − x).
    #[default]
    TriangleMin,
}

/// Realized-volatility estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvConfig {
    pub k_rule: KRule,
    pub weight: PreavWeight,
    /// Minimum increments per day to attempt estimation.
    pub min_obs: usize,
}

impl Default for RvConfig {
    fn default() -> Self {
        Self {
            k_rule: KRule::SqrtM,
            weight: PreavWeight::TriangleMin,
            min_obs: 4,
        }
    }
}

/// Per-day estimator output. `raw` keeps the pre-floor value; a negative
/// estimate is floored to zero and flagged because every downstream use
/// requires RV ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvDay {
    pub rv: f64,
    pub raw: f64,
    pub k: usize,
    pub m: usize,
    pub floored: bool,
}

/// Pre-averaging realized volatility of one daily block.
pub fn preaveraged_rv(day: &TickDay, cfg: &RvConfig) -> Result<RvDay> {
    let m = day.n_increments();
    if m < cfg.min_obs.max(4) {
        return Err(Error::InsufficientData(format!(
            "day has {m} increments, below the minimum {}",
            cfg.min_obs.max(4)
        )));
    }
    let k = cfg.k_rule.k_for(m)?;
    let PreavWeight::TriangleMin = cfg.weight;

    let y = day.prices();
    let mut d = Vec::with_capacity(m);
    let mut s_pref = vec![0.0; m + 1]; // Σ d
    let mut t_pref = vec![0.0; m + 1]; // Σ u·d[u]
    let mut q_pref = vec![0.0; m + 1]; // Σ d²
    for u in 0..m {
        let du = y[u + 1] - y[u];
        d.push(du);
        s_pref[u + 1] = s_pref[u] + du;
        t_pref[u + 1] = t_pref[u] + u as f64 * du;
        q_pref[u + 1] = q_pref[u] + du * du;
    }

    let kf = k as f64;
    let f = |x: f64| x.min(1.0 - x);
    let phi_k: f64 = (1..=k).map(|i| f(i as f64 / kf).powi(2)).sum();
    let a = k / 2; // ascending weights i/K for i ≤ a, descending (K−i)/K after
    let inv_k = 1.0 / kf;
    let inv_k2 = inv_k * inv_k;
    let mid = if k % 2 == 1 { Some((k - 1) / 2) } else { None };

    let mut acc = 0.0;
    for start in 0..=(m - k) {
        let s1 = s_pref[start + a] - s_pref[start];
        let t1 = t_pref[start + a] - t_pref[start];
        let p_up = t1 - (start as f64 - 1.0) * s1;
        let s2 = s_pref[start + k] - s_pref[start + a];
        let t2 = t_pref[start + k] - t_pref[start + a];
        let p_down = (kf + start as f64 - 1.0) * s2 - t2;
        let ybar = (p_up + p_down) * inv_k;
        let mut yhat = q_pref[start + k] - q_pref[start];
        if let Some(off) = mid {
            let dm = d[start + off];
            yhat -= dm * dm;
        }
        yhat *= inv_k2;
        acc += ybar * ybar - 0.5 * yhat;
    }
    let raw = acc * (m as f64 / (m - k) as f64) / phi_k;
    let floored = raw < 0.0;
    Ok(RvDay {
        rv: raw.max(0.0),
        raw,
        k,
        m,
        floored,
    })
}

/// Sum of squared tick-to-tick increments — the noise-biased diagnostic
/// baseline (its expectation under i.i.d. noise grows like 2Mσ²).
pub fn naive_rv(day: &TickDay) -> Result<f64> {
    let y = day.prices();
    if y.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 ticks".into()));
    }
    Ok(y.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum())
}

/// Assembled per-day estimation inputs.
#[derive(Debug, Clone)]
pub struct DailyBuild {
    /// Aligned (rv, z, state) series for estimation.
    pub daily: DailySeries,
    /// Per-input-day estimator diagnostics (all days, including any dropped
    /// from the aligned series).
    pub days: Vec<RvDay>,
    /// Leading days consumed to form the first close-to-close return.
    pub dropped_days: usize,
}

/// Build the aligned daily series from ingested tick data.
///
/// Daily returns are close-to-close, so the first day has no return of its
/// own and is consumed as the return anchor: the aligned series covers days
/// 2..D with μ̂ the sample mean of the D−1 returns. Its RV diagnostics stay
/// available in `days`.
pub fn build_daily_series(
    ticks: &TickSeries,
    states: &StatePath,
    cfg: &RvConfig,
) -> Result<DailyBuild> {
    let d = ticks.n_days();
    if states.len() != d {
        return Err(Error::Invalid(format!(
            "states cover {} days, ticks {}",
            states.len(),
            d
        )));
    }
    if d < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 days for close-to-close returns".into(),
        ));
    }
    let days: Vec<RvDay> = ticks
        .days
        .iter()
        .map(|day| preaveraged_rv(day, cfg))
        .collect::<Result<_>>()?;
    let closes: Vec<f64> = ticks.days.iter().map(|day| day.close()).collect();
    let raw: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    let rv: Vec<f64> = days[1..].iter().map(|r| r.rv).collect();
    let daily = DailySeries::from_raw_returns(rv, &raw, states.s[1..].to_vec())?;
    Ok(DailyBuild {
        daily,
        days,
        dropped_days: 1,
    })
}

/// Build the aligned daily series from a simulated path.
///
/// Simulation knows X₀ (the price at t = 0), so every one of the N days has
/// a genuine close-to-close return and nothing is dropped.
pub fn build_daily_series_from_sim(sim: &SimOutput, cfg: &RvConfig) -> Result<DailyBuild> {
    let days: Vec<RvDay> = sim
        .ticks
        .days
        .iter()
        .map(|day| preaveraged_rv(day, cfg))
        .collect::<Result<_>>()?;
    let rv: Vec<f64> = days.iter().map(|r| r.rv).collect();
    let daily = DailySeries::from_raw_returns(rv, &sim.z, sim.states.s.clone())?;
    Ok(DailyBuild {
        daily,
        days,
        dropped_days: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StatePath;
    use crate::simulate::{simulate_path, SimConfig};
    use crate::types::ModelParams;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Literal transcription of the displayed pre-averaging formula, O(M·K).
    fn preav_direct(d: &[f64], k: usize) -> f64 {
        let m = d.len();
        let kf = k as f64;
        let f = |x: f64| x.min(1.0 - x);
        let phi: f64 = (1..=k).map(|i| f(i as f64 / kf).powi(2)).sum();
        let mut acc = 0.0;
        for start in 0..=(m - k) {
            let mut ybar = 0.0;
            let mut yhat = 0.0;
            for i in 1..=k {
                let w = f(i as f64 / kf);
                let g = w - f((i - 1) as f64 / kf);
                let du = d[start + i - 1];
                ybar += w * du;
                yhat += g * g * du * du;
            }
            acc += ybar * ybar - 0.5 * yhat;
        }
        acc * (m as f64 / (m - k) as f64) / phi
    }

    fn day_from_prices(y: Vec<f64>) -> TickDay {
        let m = y.len() - 1;
        let t: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        TickDay::new(t, y).unwrap()
    }

    fn brownian_day(rng: &mut ChaCha8Rng, m: usize, sigma2: f64, sigma_eps: f64) -> (TickDay, Vec<f64>) {
        let mut x = 0.0;
        let mut xs = vec![x];
        let sd = (sigma2 / m as f64).sqrt();
        for _ in 0..m {
            x += sd * rng.sample::<f64, _>(StandardNormal);
            xs.push(x);
        }
        let y: Vec<f64> = xs
            .iter()
            .map(|x| x + sigma_eps * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (day_from_prices(y), xs)
    }

    #[test]
    fn constant_price_gives_zero_exactly() {
        let day = day_from_prices(vec![3.7; 200]);
        let out = preaveraged_rv(&day, &RvConfig::default()).unwrap();
        assert_eq!(out.rv, 0.0);
        assert!(!out.floored);
        assert_eq!(naive_rv(&day).unwrap(), 0.0);
    }

    #[test]
    fn naive_two_ticks_is_squared_increment() {
        let day = day_from_prices(vec![1.0, 1.25]);
        assert_eq!(naive_rv(&day).unwrap(), 0.0625);
    }

    #[test]
    fn fast_path_matches_direct_transcription() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for &(m, k_rule) in &[
            (30usize, KRule::SqrtM),
            (31, KRule::SqrtM),
            (200, KRule::SqrtM),
            (513, KRule::Fixed(23)),
            (512, KRule::Fixed(22)),
            (977, KRule::SqrtMScaled(2.0)),
        ] {
            let (day, _) = brownian_day(&mut rng, m, 0.09, 0.003);
            let cfg = RvConfig {
                k_rule,
                ..RvConfig::default()
            };
            let fast = preaveraged_rv(&day, &cfg).unwrap();
            let d: Vec<f64> = day.prices().windows(2).map(|w| w[1] - w[0]).collect();
            let direct = preav_direct(&d, fast.k);
            let denom = direct.abs().max(1e-12);
            assert!(
                (fast.raw - direct).abs() / denom < 1e-10,
                "m={m}: fast {} vs direct {direct}",
                fast.raw
            );
        }
    }

    #[test]
    fn pure_noise_block_estimates_zero() {
        // X constant, only microstructure noise: mean RV within 3 MC
        // standard errors of zero over 100 replicates
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let m = 23_400;
        let sigma_eps = 0.01;
        let reps = 100;
        let mut vals = Vec::with_capacity(reps);
        for _ in 0..reps {
            let y: Vec<f64> = (0..=m)
                .map(|_| 5.0 + sigma_eps * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let day = day_from_prices(y);
            vals.push(preaveraged_rv(&day, &RvConfig::default()).unwrap().raw);
        }
        let mean = vals.iter().sum::<f64>() / reps as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps - 1) as f64;
        let se = (var / reps as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn noiseless_brownian_recovers_quadratic_variation() {
        // constant σ² = 0.09/day at M = 23400: MC mean within 5% of 0.09
        let mut rng = ChaCha8Rng::seed_from_u64(808);
        let reps = 60;
        let mut sum = 0.0;
        for _ in 0..reps {
            let (day, _) = brownian_day(&mut rng, 23_400, 0.09, 0.0);
            sum += preaveraged_rv(&day, &RvConfig::default()).unwrap().rv;
        }
        let mean = sum / reps as f64;
        assert!((mean / 0.09 - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn naive_bias_grows_linearly_in_m() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma_eps = 0.01;
        let mut means = Vec::new();
        for &m in &[1000usize, 4000] {
            let reps = 60;
            let mut sum = 0.0;
            for _ in 0..reps {
                let (day, _) = brownian_day(&mut rng, m, 0.09, sigma_eps);
                sum += naive_rv(&day).unwrap();
            }
            means.push(sum / reps as f64);
        }
        // expectation ≈ IV + 2Mσ² = 0.09 + {0.2, 0.8}
        assert!((means[0] - 0.29).abs() / 0.29 < 0.1, "{}", means[0]);
        assert!((means[1] - 0.89).abs() / 0.89 < 0.1, "{}", means[1]);
        let noise_ratio = (means[1] - 0.09) / (means[0] - 0.09);
        assert!((noise_ratio - 4.0).abs() < 0.4, "ratio {noise_ratio}");
    }

    #[test]
    fn k_rule_doubling_agrees_on_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 40;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let (day, _) = brownian_day(&mut rng, 4000, 0.09, 0.0);
            s1 += preaveraged_rv(&day, &RvConfig::default()).unwrap().rv;
            let cfg2 = RvConfig {
                k_rule: KRule::SqrtMScaled(2.0),
                ..RvConfig::default()
            };
            s2 += preaveraged_rv(&day, &cfg2).unwrap().rv;
        }
        let (m1, m2) = (s1 / reps as f64, s2 / reps as f64);
        assert!((m1 / m2 - 1.0).abs() < 0.05, "{m1} vs {m2}");
    }

    #[test]
    fn rmse_decreases_with_sampling_frequency() {
        // one 23400-tick master path per day, subsampled to coarser grids
        let theta = ModelParams::new(0.15, 0.15, 0.2, 0.2, 0.1, 0.1);
        let mut cfg = SimConfig::new(theta, 60, 23_400, 2024);
        cfg.sigma_eps = 0.01;
        cfg.keep_true_ticks = false;
        let sim = simulate_path(&cfg).unwrap();
        let steps = [60usize, 10, 5, 1]; // M = 390, 2340, 4680, 23400
        let mut rmse = Vec::new();
        for &step in &steps {
            let mut sq = 0.0;
            for (day, iv) in sim.ticks.days.iter().zip(&sim.true_iv) {
                let y: Vec<f64> = day.prices().iter().step_by(step).cloned().collect();
                let t: Vec<f64> = day.times().iter().step_by(step).cloned().collect();
                let sub = TickDay::new(t, y).unwrap();
                let rv = preaveraged_rv(&sub, &RvConfig::default()).unwrap().rv;
                sq += (rv - iv) * (rv - iv);
            }
            rmse.push((sq / sim.true_iv.len() as f64).sqrt());
        }
        for w in rmse.windows(2) {
            assert!(w[1] < w[0], "RMSE not decreasing: {rmse:?}");
        }
    }

    #[test]
    fn build_from_two_constant_days() {
        let days = vec![day_from_prices(vec![2.0; 50]), day_from_prices(vec![2.0; 50])];
        let ticks = TickSeries::new(days).unwrap();
        let states = StatePath::observed(vec![0, 0]).unwrap();
        let out = build_daily_series(&ticks, &states, &RvConfig::default()).unwrap();
        assert_eq!(out.dropped_days, 1);
        assert_eq!(out.days.len(), 2);
        assert_eq!(out.days[0].rv, 0.0);
        assert_eq!(out.days[1].rv, 0.0);
        assert_eq!(out.daily.z, vec![0.0]);
        assert_eq!(out.daily.mu_hat, 0.0);
        assert_eq!(out.daily.len(), 1);
    }

    #[test]
    fn build_demeans_close_to_close_returns() {
        let closes = [10.0, 10.1, 10.05];
        let days: Vec<TickDay> = closes
            .iter()
            .map(|c| day_from_prices(vec![*c; 30]))
            .collect();
        let ticks = TickSeries::new(days).unwrap();
        let states = StatePath::observed(vec![0, 1, 0]).unwrap();
        let out = build_daily_series(&ticks, &states, &RvConfig::default()).unwrap();
        assert!((out.daily.mu_hat - 0.025).abs() < 1e-12);
        assert!((out.daily.z[0] - 0.075).abs() < 1e-12);
        assert!((out.daily.z[1] + 0.075).abs() < 1e-12);
        assert_eq!(out.daily.state, vec![1, 0]);
    }

    #[test]
    fn simulated_rv_tracks_true_iv() {
        let theta = ModelParams::new(0.15, 0.15, 0.2, 0.2, 0.1, 0.1);
        let mut cfg = SimConfig::new(theta, 40, 4680, 515);
        cfg.sigma_eps = 0.01;
        cfg.keep_true_ticks = false;
        let sim = simulate_path(&cfg).unwrap();
        let out = build_daily_series_from_sim(&sim, &RvConfig::default()).unwrap();
        assert_eq!(out.dropped_days, 0);
        assert_eq!(out.daily.len(), 40);
        let mean_rv = out.daily.rv.iter().sum::<f64>() / 40.0;
        let mean_iv = sim.true_iv.iter().sum::<f64>() / 40.0;
        assert!((mean_rv / mean_iv - 1.0).abs() < 0.1, "{mean_rv} vs {mean_iv}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_equivariance(seed in 0u64..1000, c in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (day, _) = brownian_day(&mut rng, 300, 0.04, 0.002);
            let base = preaveraged_rv(&day, &RvConfig::default()).unwrap().raw;
            let y0 = day.prices()[0];
            let scaled: Vec<f64> = day.prices().iter().map(|y| y0 + c * (y - y0)).collect();
            let sday = day_from_prices(scaled);
            let s = preaveraged_rv(&sday, &RvConfig::default()).unwrap().raw;
            let denom = (c * c * base).abs().max(1e-12);
            prop_assert!(((s - c * c * base) / denom).abs() < 1e-9);
        }
    }
}
