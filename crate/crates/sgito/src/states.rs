//! Empirical exogenous state variables constructed from daily market data.
//!
//! Seven builders: previous-day open-to-close return decile, overnight
//! return sign, external index return decile, pre-/post-holiday indicators,
//! abnormal trading volume, and the value-weighted Corwin-Schultz
//! illiquidity decile. Every builder emits a binary path aligned to its
//! input after dropping warm-up days it cannot compute, and reports the
//! drop count. Quantiles are type-7 (linear interpolation); decile ties are
//! resolved ≤-inclusively and the flagged count is reported.

use crate::error::{Error, Result};
use crate::model::{StateAvailability, StatePath};
use chrono::NaiveDate;

/// One trading day of market data. `prev_close` carries the true previous
/// close (which spans weekends/holidays), `aux_index_return` an external
/// daily return column (for example an Asian index known before the open),
/// and the holiday flags mark calendar context at the sample edges where
/// neighbouring rows cannot reveal it.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDay {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub prev_close: f64,
    pub dollar_volume: f64,
    pub aux_index_return: f64,
    pub holiday_prev: bool,
    pub holiday_next: bool,
}

impl MarketDay {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("prev_close", self.prev_close),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "{}: {name} = {v} must be a positive price",
                    self.date
                )));
            }
        }
        if self.high < self.open.max(self.close) || self.low > self.open.min(self.close) {
            return Err(Error::Invalid(format!(
                "{}: high/low must bracket open and close",
                self.date
            )));
        }
        if !(self.dollar_volume >= 0.0) {
            return Err(Error::Invalid(format!(
                "{}: dollar volume must be non-negative",
                self.date
            )));
        }
        Ok(())
    }
}

fn validate_days(days: &[MarketDay]) -> Result<()> {
    for d in days {
        d.validate()?;
    }
    if days.windows(2).any(|w| w[1].date <= w[0].date) {
        return Err(Error::Invalid("market days must be sorted by date".into()));
    }
    Ok(())
}

/// A constructed state path plus alignment metadata.
#[derive(Debug, Clone)]
pub struct StateBuild {
    pub path: StatePath,
    /// Leading input days dropped because the state was not computable.
    pub offset: usize,
    /// Number of days flagged sₙ = 1.
    pub flagged: usize,
    pub notes: Vec<String>,
}

fn finish(s: Vec<u8>, offset: usize, availability: StateAvailability, notes: Vec<String>) -> Result<StateBuild> {
    let flagged = s.iter().filter(|v| **v == 1).count();
    Ok(StateBuild {
        path: StatePath::new(s, availability)?,
        offset,
        flagged,
        notes,
    })
}

/// Type-7 quantile (linear interpolation between order statistics).
pub fn quantile_type7(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    } else {
        Ok(sorted[lo])
    }
}

/// sₙ = 1 iff day n−1's open-to-close return lies in the lowest
/// `decile_cut` fraction of the sample (≤-inclusive at the cut).
/// Day 1 has no previous-day return and is dropped.
pub fn state_open_close_decile(days: &[MarketDay], decile_cut: f64) -> Result<StateBuild> {
    validate_days(days)?;
    if days.len() < 10 {
        return Err(Error::InsufficientData("need at least 10 days for deciles".into()));
    }
    let returns: Vec<f64> = days.iter().map(|d| (d.close / d.open).ln()).collect();
    let cut = quantile_type7(&returns, decile_cut)?;
    let s: Vec<u8> = returns[..returns.len() - 1]
        .iter()
        .map(|r| u8::from(*r <= cut))
        .collect();
    let notes = vec![format!("lagged open-to-close cut at {cut:.6e} (<= inclusive)")];
    finish(s, 1, StateAvailability::AtOpen, notes)
}

/// sₙ = 1 iff the overnight return is strictly negative (openₙ < prev_closeₙ).
pub fn state_overnight(days: &[MarketDay]) -> Result<StateBuild> {
    validate_days(days)?;
    let s: Vec<u8> = days.iter().map(|d| u8::from(d.open < d.prev_close)).collect();
    finish(s, 0, StateAvailability::AtOpen, Vec::new())
}

/// sₙ = 1 iff the external index return lies in the lowest `decile_cut`
/// fraction of the sample. Generic over any auxiliary daily return column.
pub fn state_external_decile(aux_returns: &[f64], decile_cut: f64) -> Result<StateBuild> {
    if aux_returns.len() < 10 {
        return Err(Error::InsufficientData("need at least 10 days for deciles".into()));
    }
    if aux_returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Invalid("auxiliary returns must be finite".into()));
    }
    let cut = quantile_type7(aux_returns, decile_cut)?;
    let s: Vec<u8> = aux_returns.iter().map(|r| u8::from(*r <= cut)).collect();
    finish(
        s,
        0,
        StateAvailability::AtOpen,
        vec![format!("external return cut at {cut:.6e} (<= inclusive)")],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HolidaySide {
    /// Day before a market closure (weekend or holiday follows).
    Pre,
    /// Day after a market closure.
    Post,
}

/// Holiday indicators from the trading-calendar day gaps: a gap of more
/// than one calendar day to the next (pre) or from the previous (post)
/// trading day flags the state. The sample edges, where no neighbouring row
/// exists, fall back to the supplied `holiday_next`/`holiday_prev` columns.
pub fn state_holiday(days: &[MarketDay], side: HolidaySide) -> Result<StateBuild> {
    validate_days(days)?;
    if days.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 days".into()));
    }
    let gap = |a: &MarketDay, b: &MarketDay| (b.date - a.date).num_days() > 1;
    let n = days.len();
    let s: Vec<u8> = match side {
        HolidaySide::Pre => (0..n)
            .map(|i| {
                if i + 1 < n {
                    u8::from(gap(&days[i], &days[i + 1]))
                } else {
                    u8::from(days[i].holiday_next)
                }
            })
            .collect(),
        HolidaySide::Post => (0..n)
            .map(|i| {
                if i > 0 {
                    u8::from(gap(&days[i - 1], &days[i]))
                } else {
                    u8::from(days[i].holiday_prev)
                }
            })
            .collect(),
    };
    finish(s, 0, StateAvailability::AtOpen, Vec::new())
}

/// Abnormal trading volume: abtvₙ = volₙ / Σ_{k=1..window} volₙ₋ₖ, with
/// sₙ = 1 iff abtvₙ strictly exceeds the sample mean of abtv. The first
/// `window` days have no trailing sum and are dropped. The day's own volume
/// is only known at the close, so the state is revealed at day end.
pub fn state_abtv(days: &[MarketDay], window: usize) -> Result<StateBuild> {
    validate_days(days)?;
    if window == 0 {
        return Err(Error::Invalid("abtv window must be positive".into()));
    }
    if days.len() < window + 1 {
        return Err(Error::InsufficientData(format!(
            "need at least {} days for a {window}-day trailing volume sum",
            window + 1
        )));
    }
    let vol: Vec<f64> = days.iter().map(|d| d.dollar_volume).collect();
    let mut abtv = Vec::with_capacity(days.len() - window);
    for n in window..days.len() {
        let trailing: f64 = vol[n - window..n].iter().sum();
        if trailing <= 0.0 {
            return Err(Error::Numerical(format!(
                "zero trailing volume sum at {}",
                days[n].date
            )));
        }
        abtv.push(vol[n] / trailing);
    }
    let mean = abtv.iter().sum::<f64>() / abtv.len() as f64;
    // relative epsilon so "strictly greater" is stable when every abtv is
    // identical and the mean differs from them only by summation round-off
    let s: Vec<u8> = abtv
        .iter()
        .map(|a| u8::from(*a > mean + mean.abs() * 1e-12))
        .collect();
    finish(
        s,
        window,
        StateAvailability::AtClose,
        vec![format!("abtv mean {mean:.6e} (strictly greater flags)")],
    )
}

/// Corwin-Schultz high-low spread proxy for one day pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsSpread {
    pub cs: f64,
    /// A negative estimate was floored to zero.
    pub floored: bool,
}

/// The Corwin-Schultz spread from two consecutive days' highs and lows:
///
/// ```text
/// τ = ln²(H₋/L₋) + ln²(H/L),  ρ = ln²(max(H₋,H)/min(L₋,L)),
/// δ = (√(2τ) − √τ)/(3 − 2√2) − √(ρ/(3 − 2√2)),  cs = 2(eᵟ − 1)/(1 + eᵟ).
/// ```
///
/// Negative spreads (large two-day range) are floored at zero and flagged,
/// the standard treatment for this estimator.
pub fn corwin_schultz(h_prev: f64, l_prev: f64, h_cur: f64, l_cur: f64) -> Result<CsSpread> {
    for v in [h_prev, l_prev, h_cur, l_cur] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("prices must be positive, got {v}")));
        }
    }
    if h_prev < l_prev || h_cur < l_cur {
        return Err(Error::Invalid("high must be at least low".into()));
    }
    let tau = (h_prev / l_prev).ln().powi(2) + (h_cur / l_cur).ln().powi(2);
    let rho = (h_prev.max(h_cur) / l_prev.min(l_cur)).ln().powi(2);
    let c = 3.0 - 2.0 * std::f64::consts::SQRT_2;
    let delta = ((2.0 * tau).sqrt() - tau.sqrt()) / c - (rho / c).sqrt();
    let cs = 2.0 * (delta.exp() - 1.0) / (1.0 + delta.exp());
    Ok(CsSpread {
        cs: cs.max(0.0),
        floored: cs < 0.0,
    })
}

/// Per-day CS spreads of one firm's high/low series (day 1 has no previous
/// day and is dropped; returns the floored-count alongside).
pub fn corwin_schultz_series(days: &[MarketDay]) -> Result<(Vec<f64>, usize)> {
    validate_days(days)?;
    if days.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 days".into()));
    }
    let mut out = Vec::with_capacity(days.len() - 1);
    let mut floored = 0;
    for w in days.windows(2) {
        let cs = corwin_schultz(w[0].high, w[0].low, w[1].high, w[1].low)?;
        if cs.floored {
            floored += 1;
        }
        out.push(cs.cs);
    }
    Ok((out, floored))
}

/// Value-weighted aggregate illiquidity state: vwcsₙ = Σᵢ wᵢ csᵢₙ / Σᵢ wᵢ,
/// sₙ = 1 iff vwcsₙ lies at or above the `1 − decile_cut`… quantile given as
/// `high_cut` (0.7 flags the highest three deciles, ≥-inclusive). The
/// measure needs the day's own range, so it is revealed at the close.
pub fn state_illiquidity(cs_panel: &[Vec<f64>], weights: &[f64], high_cut: f64) -> Result<StateBuild> {
    if cs_panel.is_empty() {
        return Err(Error::InsufficientData("empty firm panel".into()));
    }
    if cs_panel.len() != weights.len() {
        return Err(Error::Invalid("one weight per firm required".into()));
    }
    if weights.iter().any(|w| !(w > &0.0) || !w.is_finite()) {
        return Err(Error::Invalid("weights must be positive".into()));
    }
    let n = cs_panel[0].len();
    if n == 0 || cs_panel.iter().any(|f| f.len() != n) {
        return Err(Error::Invalid("firm series must be non-empty and aligned".into()));
    }
    let wsum: f64 = weights.iter().sum();
    let vwcs: Vec<f64> = (0..n)
        .map(|d| {
            cs_panel
                .iter()
                .zip(weights)
                .map(|(f, w)| w * f[d])
                .sum::<f64>()
                / wsum
        })
        .collect();
    let cut = quantile_type7(&vwcs, high_cut)?;
    let s: Vec<u8> = vwcs.iter().map(|v| u8::from(*v >= cut)).collect();
    finish(
        s,
        0,
        StateAvailability::AtClose,
        vec![format!("vwcs cut at {cut:.6e} (>= inclusive)")],
    )
}
