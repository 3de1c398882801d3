//! Flat-file formats: tick CSV, daily CSV, market CSV, key-value config
//! files, and run manifests.
//!
//! All files are UTF-8 with `.` decimal separators and no thousands
//! separators. Formats:
//!
//! - tick CSV: `day_index,t_frac,log_price` — day_index 1-based, t_frac
//!   strictly increasing in [0, 1] per day with both endpoints present;
//! - daily CSV: `day_index,rv,ret,state,m_n,k,floored` — `ret` is the raw
//!   (not demeaned) close-to-close return, `m_n` the day's increment count,
//!   `k` the pre-averaging window, `floored` 0/1;
//! - market CSV: `date,open,high,low,close,prev_close,dollar_volume,`
//!   `aux_return,holiday_prev,holiday_next`;
//! - config / manifest: `key = value` lines, `#` comments.

use crate::error::{Error, Result};
use crate::realized_vol::RvDay;
use crate::states::MarketDay;
use crate::types::{DailySeries, TickDay, TickSeries};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const TICK_HEADER: &str = "day_index,t_frac,log_price";
pub const DAILY_HEADER: &str = "day_index,rv,ret,state,m_n,k,floored";
pub const MARKET_HEADER: &str =
    "date,open,high,low,close,prev_close,dollar_volume,aux_return,holiday_prev,holiday_next";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("bad {field} '{s}'")))
}

/// Serialize a tick series (1-based day indices).
pub fn tick_csv_string(ticks: &TickSeries) -> String {
    let mut out = String::with_capacity(64 * ticks.days.len());
    out.push_str(TICK_HEADER);
    out.push('\n');
    for (d, day) in ticks.days.iter().enumerate() {
        for (t, y) in day.times().iter().zip(day.prices()) {
            let _ = writeln!(out, "{},{},{}", d + 1, t, y);
        }
    }
    out
}

pub fn write_tick_csv(path: &Path, ticks: &TickSeries) -> Result<()> {
    fs::write(path, tick_csv_string(ticks))?;
    Ok(())
}

pub fn read_tick_csv(path: &Path) -> Result<TickSeries> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TICK_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header '{TICK_HEADER}'"))),
    }
    let mut days: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut current: usize = 0;
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (a, b, c) = (
            parts.next().ok_or_else(|| parse_err(path, i + 1, "missing day_index"))?,
            parts.next().ok_or_else(|| parse_err(path, i + 1, "missing t_frac"))?,
            parts.next().ok_or_else(|| parse_err(path, i + 1, "missing log_price"))?,
        );
        if parts.next().is_some() {
            return Err(parse_err(path, i + 1, "too many fields"));
        }
        let day: usize = a
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad day_index '{a}'")))?;
        if day == 0 || day < current || day > current + 1 {
            return Err(parse_err(
                path,
                i + 1,
                format!("day_index {day} out of order (previous {current})"),
            ));
        }
        if day == current + 1 {
            days.push((Vec::new(), Vec::new()));
            current = day;
        }
        let t = parse_f64(path, i + 1, "t_frac", b)?;
        let y = parse_f64(path, i + 1, "log_price", c)?;
        let slot = days.last_mut().unwrap();
        slot.0.push(t);
        slot.1.push(y);
    }
    let days = days
        .into_iter()
        .map(|(t, y)| TickDay::new(t, y))
        .collect::<Result<Vec<_>>>()?;
    TickSeries::new(days)
}

/// One daily CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyRow {
    pub day_index: usize,
    pub rv: f64,
    /// Raw (not demeaned) close-to-close return.
    pub ret: f64,
    pub state: u8,
    pub m_n: usize,
    pub k: usize,
    pub floored: bool,
}

pub fn daily_csv_string(rows: &[DailyRow]) -> String {
    let mut out = String::with_capacity(32 * rows.len());
    out.push_str(DAILY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.day_index,
            r.rv,
            r.ret,
            r.state,
            r.m_n,
            r.k,
            u8::from(r.floored)
        );
    }
    out
}

pub fn write_daily_csv(path: &Path, rows: &[DailyRow]) -> Result<()> {
    fs::write(path, daily_csv_string(rows))?;
    Ok(())
}

pub fn read_daily_csv(path: &Path) -> Result<Vec<DailyRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == DAILY_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header '{DAILY_HEADER}'"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(parse_err(path, i + 1, format!("expected 7 fields, got {}", f.len())));
        }
        let state: u8 = f[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad state '{}'", f[3])))?;
        if state > 1 {
            return Err(parse_err(path, i + 1, format!("state {state} must be 0 or 1")));
        }
        rows.push(DailyRow {
            day_index: f[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad day_index '{}'", f[0])))?,
            rv: parse_f64(path, i + 1, "rv", f[1])?,
            ret: parse_f64(path, i + 1, "ret", f[2])?,
            state,
            m_n: f[4]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad m_n '{}'", f[4])))?,
            k: f[5]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("bad k '{}'", f[5])))?,
            floored: match f[6].trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(path, i + 1, format!("bad floored flag '{other}'"))),
            },
        });
    }
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Assemble daily rows from per-day estimator output and raw returns.
pub fn daily_rows(
    first_day_index: usize,
    rv_days: &[RvDay],
    raw_returns: &[f64],
    states: &[u8],
) -> Vec<DailyRow> {
    rv_days
        .iter()
        .zip(raw_returns)
        .zip(states)
        .enumerate()
        .map(|(i, ((rv, ret), state))| DailyRow {
            day_index: first_day_index + i,
            rv: rv.rv,
            ret: *ret,
            state: *state,
            m_n: rv.m,
            k: rv.k,
            floored: rv.floored,
        })
        .collect()
}

/// Rebuild an estimation series from daily rows (returns are demeaned with
/// the rows' sample mean).
pub fn daily_series_from_rows(rows: &[DailyRow]) -> Result<DailySeries> {
    let rv: Vec<f64> = rows.iter().map(|r| r.rv).collect();
    let raw: Vec<f64> = rows.iter().map(|r| r.ret).collect();
    let states: Vec<u8> = rows.iter().map(|r| r.state).collect();
    DailySeries::from_raw_returns(rv, &raw, states)
}

pub fn market_csv_string(days: &[MarketDay]) -> String {
    let mut out = String::with_capacity(64 * days.len());
    out.push_str(MARKET_HEADER);
    out.push('\n');
    for d in days {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            d.date.format("%Y-%m-%d"),
            d.open,
            d.high,
            d.low,
            d.close,
            d.prev_close,
            d.dollar_volume,
            d.aux_index_return,
            u8::from(d.holiday_prev),
            u8::from(d.holiday_next)
        );
    }
    out
}

pub fn write_market_csv(path: &Path, days: &[MarketDay]) -> Result<()> {
    fs::write(path, market_csv_string(days))?;
    Ok(())
}

pub fn read_market_csv(path: &Path) -> Result<Vec<MarketDay>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MARKET_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header '{MARKET_HEADER}'"))),
    }
    let mut days = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(parse_err(path, i + 1, format!("expected 10 fields, got {}", f.len())));
        }
        let date = NaiveDate::parse_from_str(f[0].trim(), "%Y-%m-%d")
            .map_err(|_| parse_err(path, i + 1, format!("bad date '{}'", f[0])))?;
        let flag = |s: &str| match s.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(parse_err(path, i + 1, format!("bad flag '{other}'"))),
        };
        let day = MarketDay {
            date,
            open: parse_f64(path, i + 1, "open", f[1])?,
            high: parse_f64(path, i + 1, "high", f[2])?,
            low: parse_f64(path, i + 1, "low", f[3])?,
            close: parse_f64(path, i + 1, "close", f[4])?,
            prev_close: parse_f64(path, i + 1, "prev_close", f[5])?,
            dollar_volume: parse_f64(path, i + 1, "dollar_volume", f[6])?,
            aux_index_return: parse_f64(path, i + 1, "aux_return", f[7])?,
            holiday_prev: flag(f[8])?,
            holiday_next: flag(f[9])?,
        };
        day.validate()?;
        days.push(day);
    }
    if days.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(days)
}

/// Parse a flat `key = value` config file. `#` starts a comment.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, i + 1, "expected 'key = value'"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Write a manifest of the exact resolved configuration, sorted by key.
pub fn write_manifest(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate_path, SimConfig};
    use crate::types::ModelParams;
    use tempfile::tempdir;

    #[test]
    fn tick_csv_roundtrip() {
        let cfg = SimConfig::new(ModelParams::new(0.15, 0.15, 0.2, 0.2, 0.1, 0.1), 3, 25, 5);
        let sim = simulate_path(&cfg).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("ticks.csv");
        write_tick_csv(&path, &sim.ticks).unwrap();
        let back = read_tick_csv(&path).unwrap();
        assert_eq!(back, sim.ticks);
    }

    #[test]
    fn daily_csv_roundtrip() {
        let rows = vec![
            DailyRow { day_index: 1, rv: 0.12, ret: 0.01, state: 0, m_n: 390, k: 19, floored: false },
            DailyRow { day_index: 2, rv: 0.0, ret: -0.02, state: 1, m_n: 390, k: 19, floored: true },
        ];
        let dir = tempdir().unwrap();
        let path = dir.path().join("daily.csv");
        write_daily_csv(&path, &rows).unwrap();
        assert_eq!(read_daily_csv(&path).unwrap(), rows);
        let daily = daily_series_from_rows(&rows).unwrap();
        assert!((daily.mu_hat - (-0.005)).abs() < 1e-15);
        assert_eq!(daily.state, vec![0, 1]);
    }

    #[test]
    fn malformed_csv_is_reported_with_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "day_index,t_frac,log_price\n1,0.0,ten\n").unwrap();
        match read_tick_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn market_csv_roundtrip() {
        let days = vec![MarketDay {
            date: NaiveDate::from_ymd_opt(2021, 3, 5).unwrap(),
            open: 100.0,
            high: 102.0,
            low: 99.0,
            close: 101.0,
            prev_close: 99.5,
            dollar_volume: 1.5e9,
            aux_index_return: -0.004,
            holiday_prev: false,
            holiday_next: true,
        }];
        let dir = tempdir().unwrap();
        let path = dir.path().join("market.csv");
        write_market_csv(&path, &days).unwrap();
        assert_eq!(read_market_csv(&path).unwrap(), days);
    }

    #[test]
    fn config_parse_and_manifest_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nseed = 42\n n_days = 100 # trailing\n").unwrap();
        let cfg = read_config(&path).unwrap();
        assert_eq!(cfg["seed"], "42");
        assert_eq!(cfg["n_days"], "100");
        let mpath = dir.path().join("manifest.txt");
        write_manifest(&mpath, &cfg).unwrap();
        assert_eq!(read_config(&mpath).unwrap(), cfg);
    }
}
