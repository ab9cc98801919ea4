//! Ornstein-Uhlenbeck modelling of noisy intraday spreads: simulation,
//! noise-robust estimation, first-passage times of the trading cycle,
//! signal optimization, daily parameter forecasts, tick cleaning and backtests.

mod dd;
pub mod backtest;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod fpt;
pub mod ingest;
pub mod model;
pub mod optim;
pub mod series;
pub mod signal;
pub mod sim;
pub mod study;
pub mod synth;

pub use error::{Error, Result};
pub use estimate::{Method, OuFit};
pub use model::{NoisyOuParams, OuParams};
pub use series::TickSeries;
