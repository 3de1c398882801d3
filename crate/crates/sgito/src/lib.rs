//! State-heterogeneous GARCH-Ito (SG-Ito) volatility modelling toolkit.
//!
//! The SG-Ito model is a continuous-time diffusion whose intraday
//! instantaneous volatility evolves under coefficients that switch with a
//! daily binary exogenous state. Its conditional expected daily integrated
//! volatility follows a four-regime GARCH(1,1)-type recursion, which this
//! crate estimates by quasi-maximum likelihood against a noise-robust
//! realized-volatility proxy.
//!
//! Pipeline, end to end:
//!
//! - [`simulate`] — Euler-scheme sample paths of the price/volatility
//!   process with microstructure noise and configurable state rules;
//! - [`realized_vol`] — pre-averaging realized volatility from noisy
//!   intraday prices, plus daily-series assembly;
//! - [`model`] — integrated-parameter closed forms, the `h_n` recursion and
//!   its analytic gradient, latent-state forecasting, and the reduction to
//!   the single-regime GARCH-Ito model;
//! - [`estimate`] — QMLE under high-frequency (realized volatility) or
//!   low-frequency (squared return) innovations, and benchmark model fits;
//! - [`inference`] — sandwich covariance, standard errors, and the Wald
//!   state-heterogeneity test;
//! - [`benchmarks`] — rolling one-day-ahead forecast evaluation (MSPE/MAPE);
//! - [`states`] — empirical state-variable builders from daily market data;
//! - [`mc`] — Monte Carlo size/power/MSE study drivers;
//! - [`cli`] — the `sgito` command-line interface and file formats ([`io`]).

pub mod benchmarks;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod optim;
pub mod realized_vol;
pub mod simulate;
pub mod special;
pub mod states;
pub mod types;

pub use error::{Error, Result};
