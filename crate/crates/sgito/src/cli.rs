//! The `sgito` command line: simulate | rv | fit | test | mc-study |
//! backtest | states.
//!
//! Every value flag can also come from a flat `key = value` config file
//! (`--config`); explicit flags win over the file, the file over defaults.
//! Each run writes a `manifest.txt` holding the exact resolved
//! configuration — re-running with `--config manifest.txt` reproduces the
//! outputs byte for byte. Exit codes: 0 success, 1 validation failure,
//! 2 numerical failure.

use crate::benchmarks::{self, BacktestConfig, ModelId};
use crate::error::{Error, Result};
use crate::estimate::{self, Algorithm, LikelihoodMode, LikelihoodSpec, OptimizerConfig};
use crate::inference;
use crate::io::{self, DailyRow};
use crate::mc::{self, McCell, McConfig};
use crate::model::{StatePath, TransitionMatrix};
use crate::realized_vol::{self, KRule, RvConfig};
use crate::simulate::{simulate_path, SimConfig, StateRule};
use crate::states;
use crate::types::{validate_params, ModelParams, ParamSpace, PARAM_NAMES};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(name = "sgito", version, about = "State-heterogeneous GARCH-Ito volatility toolkit")]
struct Cli {
    /// Worker threads for replicate-level parallelism (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate SG-Ito sample paths and write tick/daily CSV files.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Six comma-separated parameters ω1,ω2,γ1,γ2,β1,β2.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        n_days: Option<usize>,
        #[arg(long)]
        m_per_day: Option<usize>,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma_eps: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// leverage | bernoulli:<p> | markov:<p00>,<p11> | file:<path>
        #[arg(long)]
        state_rule: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Euler sub-steps per observation.
        #[arg(long)]
        refine: Option<usize>,
        /// Initial instantaneous variance (default: stationary formula).
        #[arg(long)]
        sigma0_sq: Option<f64>,
    },
    /// Pre-averaging realized volatility from a tick CSV to a daily CSV.
    Rv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ticks: Option<PathBuf>,
        /// sqrt | sqrt:<mult> | fixed:<k>
        #[arg(long)]
        k_rule: Option<String>,
        #[arg(long)]
        min_obs: Option<usize>,
        /// Treat day 1's opening tick as X0 so day 1 keeps its return.
        #[arg(long)]
        x0_from_open: bool,
    },
    /// Quasi-maximum-likelihood fit from a daily CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        daily: Option<PathBuf>,
        /// hf (realized volatility) | lf (squared returns)
        #[arg(long)]
        mode: Option<String>,
        /// nm | bfgs
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        multistart: Option<usize>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Wald state-heterogeneity test (fits first, then tests).
    Test {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        daily: Option<PathBuf>,
        #[arg(long)]
        mode: Option<String>,
        /// CSV file with v rows of 7 numbers: six R entries then r.
        #[arg(long)]
        restriction: Option<PathBuf>,
        /// Comma-separated significance levels.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(long)]
        multistart: Option<usize>,
    },
    /// Monte Carlo size/power/MSE/QQ study over an (N, M) grid.
    McStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        reps: Option<usize>,
        /// Grid cells "250x390;500x2340".
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        alphas: Option<String>,
        /// null | alt | both
        #[arg(long)]
        hypothesis: Option<String>,
        #[arg(long)]
        theta_null: Option<String>,
        #[arg(long)]
        theta_alt: Option<String>,
        #[arg(long)]
        sigma_eps: Option<f64>,
        #[arg(long)]
        refine: Option<usize>,
        /// Run the full published grid (N up to 1000, M up to 23400, 1000
        /// replicates); hours of compute, not a desk-scale run.
        #[arg(long)]
        full: bool,
    },
    /// Rolling one-day-ahead forecast backtest from a daily CSV.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        daily: Option<PathBuf>,
        #[arg(long)]
        est_window: Option<usize>,
        #[arg(long)]
        pred_window: Option<usize>,
        #[arg(long)]
        refit_every: Option<usize>,
        /// Comma-separated: sg_ito,garch_ito,garch,rs_garch,har
        #[arg(long)]
        models: Option<String>,
        /// Models forecasting with latent next-day states (Proposition-style
        /// transition mixing): subset of --models.
        #[arg(long)]
        latent: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        multistart: Option<usize>,
    },
    /// Build a binary state series from a market CSV.
    States {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        market: Option<PathBuf>,
        /// open-close | overnight | external | pre-holiday | post-holiday |
        /// abtv | illiquidity
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        decile: Option<f64>,
        #[arg(long)]
        high_cut: Option<f64>,
        #[arg(long)]
        window: Option<usize>,
    },
}

/// Config-file/flag/default resolution with a manifest trace.
struct Resolver {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&PathBuf>) -> Result<Self> {
        let file = match config {
            Some(p) => io::read_config(p)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn get<T: FromStr + ToString + Clone>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T> {
        let v = match cli {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse::<T>()
                    .map_err(|_| Error::Invalid(format!("config key '{key}': bad value '{s}'")))?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn get_flag(&mut self, key: &str, cli: bool) -> Result<bool> {
        let v = if cli {
            true
        } else {
            match self.file.get(key).map(String::as_str) {
                Some("true") | Some("1") => true,
                Some("false") | Some("0") | None => false,
                Some(other) => {
                    return Err(Error::Invalid(format!("config key '{key}': bad flag '{other}'")))
                }
            }
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn record(&mut self, key: &str, value: impl ToString) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    fn manifest(&self, out_dir: &Path) -> Result<()> {
        io::write_manifest(&out_dir.join("manifest.txt"), &self.resolved)
    }
}

fn parse_theta(s: &str) -> Result<ModelParams> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad theta component '{p}'")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 6 {
        return Err(Error::Invalid(format!(
            "theta needs 6 comma-separated values, got {}",
            parts.len()
        )));
    }
    Ok(ModelParams::from_array(parts.try_into().unwrap()))
}

fn parse_state_rule(s: &str) -> Result<StateRule> {
    if s == "leverage" {
        return Ok(StateRule::Leverage);
    }
    if let Some(p) = s.strip_prefix("bernoulli:") {
        let p: f64 = p
            .parse()
            .map_err(|_| Error::Invalid(format!("bad bernoulli probability '{p}'")))?;
        return Ok(StateRule::Bernoulli { p });
    }
    if let Some(spec) = s.strip_prefix("markov:") {
        let parts: Vec<f64> = spec
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad markov probability '{x}'")))
            })
            .collect::<Result<_>>()?;
        if parts.len() != 2 {
            return Err(Error::Invalid("markov rule needs p00,p11".into()));
        }
        let matrix = TransitionMatrix::new([[parts[0], 1.0 - parts[0]], [1.0 - parts[1], parts[1]]])?;
        return Ok(StateRule::Markov { matrix });
    }
    if let Some(path) = s.strip_prefix("file:") {
        let text = std::fs::read_to_string(path)?;
        let states: Vec<u8> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<u8>()
                    .map_err(|_| Error::Invalid(format!("bad state value '{l}'")))
            })
            .collect::<Result<_>>()?;
        return Ok(StateRule::External(states));
    }
    Err(Error::Invalid(format!("unknown state rule '{s}'")))
}

fn parse_k_rule(s: &str) -> Result<KRule> {
    if s == "sqrt" {
        return Ok(KRule::SqrtM);
    }
    if let Some(m) = s.strip_prefix("sqrt:") {
        let c: f64 = m
            .parse()
            .map_err(|_| Error::Invalid(format!("bad K multiplier '{m}'")))?;
        return Ok(KRule::SqrtMScaled(c));
    }
    if let Some(k) = s.strip_prefix("fixed:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Invalid(format!("bad fixed K '{k}'")))?;
        return Ok(KRule::Fixed(k));
    }
    Err(Error::Invalid(format!("unknown K rule '{s}'")))
}

fn parse_mode(s: &str) -> Result<LikelihoodMode> {
    match s {
        "hf" | "high_frequency" => Ok(LikelihoodMode::HighFrequency),
        "lf" | "low_frequency" => Ok(LikelihoodMode::LowFrequency),
        other => Err(Error::Invalid(format!("unknown likelihood mode '{other}'"))),
    }
}

fn parse_alphas(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|a| {
            let v: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("bad alpha '{a}'")))?;
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Invalid(format!("alpha {v} outside (0, 1)")));
            }
            Ok(v)
        })
        .collect()
}

fn parse_grid(s: &str) -> Result<Vec<McCell>> {
    s.split(';')
        .map(|cell| {
            let (n, m) = cell
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Invalid(format!("grid cell '{cell}' must be NxM")))?;
            Ok(McCell {
                n_days: n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad N '{n}'")))?,
                m_per_day: m
                    .trim()
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad M '{m}'")))?,
            })
        })
        .collect()
}

fn ensure_out_dir(resolver: &mut Resolver, flag: Option<PathBuf>, default: &str) -> Result<PathBuf> {
    let dir = match flag {
        Some(d) => d,
        None => match resolver.file.get("out_dir") {
            Some(s) => PathBuf::from(s),
            None => PathBuf::from(default),
        },
    };
    std::fs::create_dir_all(&dir)?;
    resolver.record("out_dir", dir.display());
    Ok(dir)
}

fn required_path(resolver: &Resolver, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
    match flag {
        Some(p) => Ok(p),
        None => resolver
            .file
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Invalid(format!("--{key} is required"))),
    }
}

fn optimizer_config(
    resolver: &mut Resolver,
    algorithm: Option<String>,
    multistart: Option<usize>,
    max_iters: Option<usize>,
) -> Result<OptimizerConfig> {
    let algo_s = resolver.get("algorithm", algorithm, "nm".to_string())?;
    let algorithm = match algo_s.as_str() {
        "nm" | "nelder-mead" => Algorithm::NelderMead,
        "bfgs" => Algorithm::Bfgs,
        other => return Err(Error::Invalid(format!("unknown algorithm '{other}'"))),
    };
    Ok(OptimizerConfig {
        algorithm,
        multistart: resolver.get("multistart", multistart, 5usize)?,
        max_iters: resolver.get("max_iters", max_iters, 2000usize)?,
        ..OptimizerConfig::default()
    })
}

/// Parse argv and execute; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate {
            common,
            theta,
            n_days,
            m_per_day,
            x0,
            mu,
            sigma_eps,
            seed,
            state_rule,
            replicates,
            refine,
            sigma0_sq,
        } => cmd_simulate(
            common, theta, n_days, m_per_day, x0, mu, sigma_eps, seed, state_rule, replicates,
            refine, sigma0_sq,
        ),
        Command::Rv {
            common,
            ticks,
            k_rule,
            min_obs,
            x0_from_open,
        } => cmd_rv(common, ticks, k_rule, min_obs, x0_from_open),
        Command::Fit {
            common,
            daily,
            mode,
            algorithm,
            multistart,
            max_iters,
        } => cmd_fit(common, daily, mode, algorithm, multistart, max_iters),
        Command::Test {
            common,
            daily,
            mode,
            restriction,
            alphas,
            multistart,
        } => cmd_test(common, daily, mode, restriction, alphas, multistart),
        Command::McStudy {
            common,
            reps,
            grid,
            seed,
            alphas,
            hypothesis,
            theta_null,
            theta_alt,
            sigma_eps,
            refine,
            full,
        } => cmd_mc_study(
            common, reps, grid, seed, alphas, hypothesis, theta_null, theta_alt, sigma_eps,
            refine, full,
        ),
        Command::Backtest {
            common,
            daily,
            est_window,
            pred_window,
            refit_every,
            models,
            latent,
            mode,
            multistart,
        } => cmd_backtest(
            common, daily, est_window, pred_window, refit_every, models, latent, mode, multistart,
        ),
        Command::States {
            common,
            market,
            kind,
            decile,
            high_cut,
            window,
        } => cmd_states(common, market, kind, decile, high_cut, window),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    common: Common,
    theta: Option<String>,
    n_days: Option<usize>,
    m_per_day: Option<usize>,
    x0: Option<f64>,
    mu: Option<f64>,
    sigma_eps: Option<f64>,
    seed: Option<u64>,
    state_rule: Option<String>,
    replicates: Option<usize>,
    refine: Option<usize>,
    sigma0_sq: Option<f64>,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "simulate");
    let theta_s = r.get("theta", theta, "0.15,0.15,0.2,0.2,0.1,0.1".to_string())?;
    let theta = parse_theta(&theta_s)?;
    let report = validate_params(&theta, &ParamSpace::default());
    if !report.is_valid() {
        return Err(Error::Invalid(format!("theta rejected:\n{report}")));
    }
    let n_days = r.get("n_days", n_days, 100usize)?;
    let m_per_day = r.get("m_per_day", m_per_day, 390usize)?;
    let replicates = r.get("replicates", replicates, 1usize)?;
    let seed = r.get("seed", seed, 1u64)?;
    let rule_s = r.get("state_rule", state_rule, "leverage".to_string())?;
    let rule = parse_state_rule(&rule_s)?;
    let mut cfg = SimConfig::new(theta, n_days, m_per_day, seed);
    cfg.x0 = r.get("x0", x0, 10.0)?;
    cfg.mu = r.get("mu", mu, 0.0)?;
    cfg.sigma_eps = r.get("sigma_eps", sigma_eps, 0.01)?;
    cfg.refine = r.get("refine", refine, 1usize)?;
    cfg.state_rule = rule;
    if let Some(v) = sigma0_sq.or_else(|| r.file.get("sigma0_sq").and_then(|s| s.parse().ok())) {
        cfg.sigma0_sq = Some(v);
        r.record("sigma0_sq", v);
    }
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "sim_out")?;

    for rep in 0..replicates {
        let mut rep_cfg = cfg.clone();
        rep_cfg.seed = seed + rep as u64;
        let sim = simulate_path(&rep_cfg)?;
        let build = realized_vol::build_daily_series_from_sim(&sim, &RvConfig::default())?;
        let rows = io::daily_rows(1, &build.days, &sim.z, &sim.states.s);
        let (tick_name, daily_name) = if replicates == 1 {
            ("ticks.csv".to_string(), "daily.csv".to_string())
        } else {
            (
                format!("rep{:04}_ticks.csv", rep + 1),
                format!("rep{:04}_daily.csv", rep + 1),
            )
        };
        io::write_tick_csv(&out_dir.join(tick_name), &sim.ticks)?;
        io::write_daily_csv(&out_dir.join(daily_name), &rows)?;
    }
    r.manifest(&out_dir)?;
    println!(
        "simulated {replicates} replicate(s) of {n_days} days x {m_per_day} obs into {}",
        out_dir.display()
    );
    Ok(())
}

fn cmd_rv(
    common: Common,
    ticks: Option<PathBuf>,
    k_rule: Option<String>,
    min_obs: Option<usize>,
    x0_from_open: bool,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "rv");
    let ticks_path = required_path(&r, "ticks", ticks)?;
    r.record("ticks", ticks_path.display());
    let k_rule_s = r.get("k_rule", k_rule, "sqrt".to_string())?;
    let rv_cfg = RvConfig {
        k_rule: parse_k_rule(&k_rule_s)?,
        min_obs: r.get("min_obs", min_obs, 4usize)?,
        ..RvConfig::default()
    };
    let x0_from_open = r.get_flag("x0_from_open", x0_from_open)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "rv_out")?;

    let series = io::read_tick_csv(&ticks_path)?;
    // states are not part of tick data; emit zeros (fit callers overwrite)
    let zeros = StatePath::observed(vec![0; series.n_days()])?;
    let rows: Vec<DailyRow> = if x0_from_open {
        let days: Vec<_> = series
            .days
            .iter()
            .map(|d| realized_vol::preaveraged_rv(d, &rv_cfg))
            .collect::<Result<_>>()?;
        let x0 = series.days[0].open();
        let mut closes = vec![x0];
        closes.extend(series.days.iter().map(|d| d.close()));
        let raw: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
        io::daily_rows(1, &days, &raw, &zeros.s)
    } else {
        let build = realized_vol::build_daily_series(&series, &zeros, &rv_cfg)?;
        let raw = build.daily.raw_returns();
        io::daily_rows(2, &build.days[1..], &raw, &build.daily.state)
    };
    io::write_daily_csv(&out_dir.join("daily.csv"), &rows)?;
    r.manifest(&out_dir)?;
    println!("wrote {} daily rows to {}", rows.len(), out_dir.display());
    Ok(())
}

fn load_daily(path: &Path) -> Result<(crate::types::DailySeries, Vec<DailyRow>)> {
    let rows = io::read_daily_csv(path)?;
    let daily = io::daily_series_from_rows(&rows)?;
    Ok((daily, rows))
}

fn write_fit_report(
    out_dir: &Path,
    fit: &crate::types::FitResult,
) -> Result<()> {
    let mut params = String::from("param,estimate,std_error\n");
    let se = fit.std_errors.unwrap_or([f64::NAN; 6]);
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let _ = writeln!(params, "{name},{},{}", fit.theta_hat.as_array()[k], se[k]);
    }
    std::fs::write(out_dir.join("params.csv"), &params)?;

    let ip = crate::model::integrated_params(&fit.theta_hat);
    let mut integ = String::from("param,estimate\n");
    for i in 0..2 {
        for j in 0..2 {
            let _ = writeln!(integ, "omega_h{}{},{}", i + 1, j + 1, ip.omega_h[i][j]);
            let _ = writeln!(integ, "gamma_h{}{},{}", i + 1, j + 1, ip.gamma_h[i][j]);
            let _ = writeln!(integ, "beta_h{}{},{}", i + 1, j + 1, ip.beta_h[i][j]);
        }
    }
    std::fs::write(out_dir.join("integrated.csv"), &integ)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "loglik = {}", fit.loglik);
    let _ = writeln!(summary, "converged = {}", fit.converged);
    let _ = writeln!(summary, "iterations = {}", fit.iterations);
    let _ = writeln!(summary, "h1 = {}", fit.h1);
    for n in &fit.notes {
        let _ = writeln!(summary, "note = {n}");
    }
    std::fs::write(out_dir.join("summary.txt"), &summary)?;
    print!("{params}");
    print!("{summary}");
    Ok(())
}

fn cmd_fit(
    common: Common,
    daily: Option<PathBuf>,
    mode: Option<String>,
    algorithm: Option<String>,
    multistart: Option<usize>,
    max_iters: Option<usize>,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "fit");
    let daily_path = required_path(&r, "daily", daily)?;
    r.record("daily", daily_path.display());
    let mode = parse_mode(&r.get("mode", mode, "hf".to_string())?)?;
    let opt = optimizer_config(&mut r, algorithm, multistart, max_iters)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "fit_out")?;

    let (series, _) = load_daily(&daily_path)?;
    let spec = match mode {
        LikelihoodMode::HighFrequency => LikelihoodSpec::high_frequency(),
        LikelihoodMode::LowFrequency => LikelihoodSpec::low_frequency(),
    };
    let mut fit = estimate::fit(&series, &spec, &opt)?;
    if let Err(e) = inference::attach_inference(&mut fit, &series, mode) {
        fit.notes.push(format!("standard errors unavailable: {e}"));
    }
    write_fit_report(&out_dir, &fit)?;
    r.manifest(&out_dir)?;
    Ok(())
}

fn read_restriction(path: &Path) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut r_mat = Vec::new();
    let mut r_vec = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("bad number '{v}'"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != 7 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: format!("expected 7 numbers (6 R entries + r), got {}", vals.len()),
            });
        }
        r_mat.push(vals[..6].to_vec());
        r_vec.push(vals[6]);
    }
    if r_mat.is_empty() {
        return Err(Error::Invalid("restriction file has no rows".into()));
    }
    Ok((r_mat, r_vec))
}

fn cmd_test(
    common: Common,
    daily: Option<PathBuf>,
    mode: Option<String>,
    restriction: Option<PathBuf>,
    alphas: Option<String>,
    multistart: Option<usize>,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "test");
    let daily_path = required_path(&r, "daily", daily)?;
    r.record("daily", daily_path.display());
    let mode = parse_mode(&r.get("mode", mode, "hf".to_string())?)?;
    let alphas = parse_alphas(&r.get("alphas", alphas, "0.1,0.05,0.025,0.01".to_string())?)?;
    let opt = optimizer_config(&mut r, None, multistart, None)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "test_out")?;

    let (series, _) = load_daily(&daily_path)?;
    let spec = match mode {
        LikelihoodMode::HighFrequency => LikelihoodSpec::high_frequency(),
        LikelihoodMode::LowFrequency => LikelihoodSpec::low_frequency(),
    };
    let fit = estimate::fit(&series, &spec, &opt)?;
    let (v, w) = inference::sandwich(&fit.theta_hat, &series, mode, fit.h1)?;
    let (r_mat, r_vec) = match restriction.or_else(|| r.file.get("restriction").map(PathBuf::from)) {
        Some(p) => {
            r.record("restriction", p.display());
            read_restriction(&p)?
        }
        None => inference::default_restriction(),
    };
    let test = inference::wald_test(&fit, &v, &w, &r_mat, &r_vec)?;

    let mut header = String::from("statistic,dof,p_value");
    let mut row = format!("{},{},{}", test.statistic, test.dof, test.p_value);
    for a in &alphas {
        let _ = write!(header, ",reject_{a}");
        let _ = write!(row, ",{}", u8::from(test.reject(*a)));
    }
    std::fs::write(out_dir.join("wald.csv"), format!("{header}\n{row}\n"))?;
    println!("{header}");
    println!("{row}");
    r.manifest(&out_dir)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_mc_study(
    common: Common,
    reps: Option<usize>,
    grid: Option<String>,
    seed: Option<u64>,
    alphas: Option<String>,
    hypothesis: Option<String>,
    theta_null: Option<String>,
    theta_alt: Option<String>,
    sigma_eps: Option<f64>,
    refine: Option<usize>,
    full: bool,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "mc-study");
    let full = r.get_flag("full", full)?;
    let default_reps = if full { 1000 } else { 200 };
    let default_grid = if full {
        "250x390;250x2340;250x4680;250x23400;500x390;500x2340;500x4680;500x23400;\
         750x390;750x2340;750x4680;750x23400;1000x390;1000x2340;1000x4680;1000x23400"
    } else {
        "250x390;500x2340"
    };
    let reps = r.get("reps", reps, default_reps)?;
    let grid = parse_grid(&r.get("grid", grid, default_grid.to_string())?)?;
    let seed = r.get("seed", seed, 20_240_101u64)?;
    let alphas = parse_alphas(&r.get("alphas", alphas, "0.1,0.05,0.025,0.01".to_string())?)?;
    let hyp = r.get("hypothesis", hypothesis, "both".to_string())?;
    let theta_null = parse_theta(&r.get("theta_null", theta_null, "0.15,0.15,0.2,0.2,0.1,0.1".to_string())?)?;
    let theta_alt = parse_theta(&r.get("theta_alt", theta_alt, "0.15,0.165,0.2,0.22,0.1,0.11".to_string())?)?;
    let sigma_eps = r.get("sigma_eps", sigma_eps, 0.01)?;
    let refine = r.get("refine", refine, 1usize)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "mc_out")?;

    let hypotheses: Vec<(&str, ModelParams)> = match hyp.as_str() {
        "null" => vec![("null", theta_null)],
        "alt" => vec![("alt", theta_alt)],
        "both" => vec![("null", theta_null), ("alt", theta_alt)],
        other => return Err(Error::Invalid(format!("unknown hypothesis '{other}'"))),
    };

    let mut rej = String::from("hypothesis,n,m,reps_ok,reps_failed");
    for a in &alphas {
        let _ = write!(rej, ",alpha_{a}");
    }
    rej.push('\n');
    let mut mse = String::from("hypothesis,n,m,param,mse\n");
    let mut qq = String::from("hypothesis,n,m,idx,statistic,chi2_quantile\n");

    for (name, theta0) in &hypotheses {
        let mut cfg = McConfig::new(*theta0, reps, seed);
        cfg.sigma_eps = sigma_eps;
        cfg.refine = refine;
        for cell in &grid {
            let result = mc::run_cell(&cfg, *cell);
            let rates = result.rejection_rates(&alphas);
            let _ = write!(
                rej,
                "{name},{},{},{},{}",
                cell.n_days,
                cell.m_per_day,
                result.outcomes.len(),
                result.failures.len()
            );
            for rate in rates {
                let _ = write!(rej, ",{rate}");
            }
            rej.push('\n');
            for (k, v) in result.mse(theta0).iter().enumerate() {
                let _ = writeln!(mse, "{name},{},{},{},{v}", cell.n_days, cell.m_per_day, PARAM_NAMES[k]);
            }
            for (idx, (stat, q)) in mc::qq_data(&result.statistics(), 3).iter().enumerate() {
                let _ = writeln!(
                    qq,
                    "{name},{},{},{},{stat},{q}",
                    cell.n_days, cell.m_per_day, idx + 1
                );
            }
            println!(
                "cell {name} N={} M={}: {} ok, {} failed",
                cell.n_days,
                cell.m_per_day,
                result.outcomes.len(),
                result.failures.len()
            );
        }
    }
    std::fs::write(out_dir.join("rejection_rates.csv"), &rej)?;
    std::fs::write(out_dir.join("mse.csv"), &mse)?;
    std::fs::write(out_dir.join("qq.csv"), &qq)?;
    r.manifest(&out_dir)?;
    print!("{rej}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_backtest(
    common: Common,
    daily: Option<PathBuf>,
    est_window: Option<usize>,
    pred_window: Option<usize>,
    refit_every: Option<usize>,
    models: Option<String>,
    latent: Option<String>,
    mode: Option<String>,
    multistart: Option<usize>,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "backtest");
    let daily_path = required_path(&r, "daily", daily)?;
    r.record("daily", daily_path.display());
    let (series, _) = load_daily(&daily_path)?;
    let est_window = r.get("est_window", est_window, 750usize)?;
    let default_pred = series.len().saturating_sub(est_window).max(1);
    let pred_window = r.get("pred_window", pred_window, default_pred)?;
    let refit_every = r.get("refit_every", refit_every, 1usize)?;
    let models_s = r.get("models", models, "sg_ito,garch_ito,garch,rs_garch,har".to_string())?;
    let latent_s = r.get("latent", latent, String::new())?;
    let mode = parse_mode(&r.get("mode", mode, "hf".to_string())?)?;
    let opt = optimizer_config(&mut r, None, multistart, None)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "backtest_out")?;

    let parse_models = |s: &str| -> Result<Vec<ModelId>> {
        s.split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(ModelId::parse)
            .collect()
    };
    let mut cfg = BacktestConfig::new(est_window, pred_window, parse_models(&models_s)?);
    cfg.latent_models = parse_models(&latent_s)?;
    cfg.refit_every = refit_every;
    cfg.opt = opt;
    cfg.spec = match mode {
        LikelihoodMode::HighFrequency => LikelihoodSpec::high_frequency(),
        LikelihoodMode::LowFrequency => LikelihoodSpec::low_frequency(),
    };
    let result = benchmarks::rolling_forecast(&series, &cfg)?;

    let mut scores = String::from("model,n_pred,n_skipped,mspe,mape,mape_excluded\n");
    for s in &result.scores {
        let _ = writeln!(
            scores,
            "{},{},{},{},{},{}",
            s.model.name(),
            s.n_pred,
            s.n_skipped,
            s.mspe,
            s.mape,
            s.mape_excluded
        );
    }
    std::fs::write(out_dir.join("scores.csv"), &scores)?;

    let mut fc = String::from("day_offset,model,forecast,target\n");
    for mf in &result.forecasts {
        for (t, f) in mf.forecasts.iter().enumerate() {
            let _ = writeln!(fc, "{},{},{},{}", t + 1, mf.model.name(), f, result.targets[t]);
        }
    }
    std::fs::write(out_dir.join("forecasts.csv"), &fc)?;
    r.manifest(&out_dir)?;
    print!("{scores}");
    Ok(())
}

fn cmd_states(
    common: Common,
    market: Option<PathBuf>,
    kind: Option<String>,
    decile: Option<f64>,
    high_cut: Option<f64>,
    window: Option<usize>,
) -> Result<()> {
    let mut r = Resolver::new(common.config.as_ref())?;
    r.record("command", "states");
    let market_path = required_path(&r, "market", market)?;
    r.record("market", market_path.display());
    let kind = r.get("kind", kind, "open-close".to_string())?;
    let decile = r.get("decile", decile, 0.3)?;
    let high_cut = r.get("high_cut", high_cut, 0.7)?;
    let window = r.get("window", window, 20usize)?;
    let out_dir = ensure_out_dir(&mut r, common.out_dir, "states_out")?;

    let days = io::read_market_csv(&market_path)?;
    let build = match kind.as_str() {
        "open-close" => states::state_open_close_decile(&days, decile)?,
        "overnight" => states::state_overnight(&days)?,
        "external" => {
            let aux: Vec<f64> = days.iter().map(|d| d.aux_index_return).collect();
            states::state_external_decile(&aux, decile)?
        }
        "pre-holiday" => states::state_holiday(&days, states::HolidaySide::Pre)?,
        "post-holiday" => states::state_holiday(&days, states::HolidaySide::Post)?,
        "abtv" => states::state_abtv(&days, window)?,
        "illiquidity" => {
            // single-series proxy: the market's own high-low spread panel
            let (cs, floored) = states::corwin_schultz_series(&days)?;
            let mut b = states::state_illiquidity(&[cs].to_vec(), &[1.0], high_cut)?;
            b.offset += 1; // the CS series itself drops day 1
            if floored > 0 {
                b.notes.push(format!("{floored} negative spreads floored"));
            }
            b
        }
        other => return Err(Error::Invalid(format!("unknown state kind '{other}'"))),
    };

    let mut out = String::from("date,state\n");
    for (day, s) in days[build.offset..].iter().zip(&build.path.s) {
        let _ = writeln!(out, "{},{}", day.date.format("%Y-%m-%d"), s);
    }
    std::fs::write(out_dir.join("states.csv"), &out)?;
    r.manifest(&out_dir)?;
    println!(
        "kind {kind}: {} days ({} warm-up dropped), {} flagged",
        build.path.len(),
        build.offset,
        build.flagged
    );
    for n in &build.notes {
        println!("note: {n}");
    }
    Ok(())
}
