//! Monte Carlo comparison of the estimators on simulated noisy paths, laid
//! out as mean absolute errors per method and parameter.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, realized_variance, Method, OuFit};
use crate::model::NoisyOuParams;
use crate::series::TickSeries;
use crate::sim::{poisson_grid_for_path, simulate, InitialState, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub params: NoisyOuParams,
    /// Expected observations per path on the Poisson clock.
    pub n: usize,
    pub reps: u32,
    pub seed: u64,
}

/// Which sampling an estimator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    OneMinute,
    Tick,
}

impl Sampling {
    fn prefix(self) -> &'static str {
        match self {
            Sampling::OneMinute => "1MIN",
            Sampling::Tick => "TICK",
        }
    }
}

/// Rows in table order.
pub const STUDY_METHODS: [(Sampling, Method); 10] = [
    (Sampling::OneMinute, Method::Mom),
    (Sampling::OneMinute, Method::MomNr),
    (Sampling::OneMinute, Method::ArCss),
    (Sampling::OneMinute, Method::ArmaNrCss),
    (Sampling::OneMinute, Method::Mle),
    (Sampling::Tick, Method::Mle),
    (Sampling::OneMinute, Method::MleNr),
    (Sampling::Tick, Method::MleNr),
    (Sampling::OneMinute, Method::Rv),
    (Sampling::Tick, Method::Rv),
];

pub fn study_label(sampling: Sampling, method: Method) -> String {
    format!("{}-{}", sampling.prefix(), method.label())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeRow {
    pub method: String,
    /// One of `mu`, `tau`, `sigma`, `omega`.
    pub param: &'static str,
    pub mae: f64,
    /// Replications whose fit succeeded.
    pub used: usize,
}

/// Estimates from one replication; `None` where the fit failed.
type Estimates = Vec<Option<[Option<f64>; 4]>>;

fn estimates_of(fit: &OuFit) -> [Option<f64>; 4] {
    let p = &fit.params;
    let omega = fit.method.is_noise_robust().then(|| p.omega2.sqrt());
    [Some(p.mu()), Some(p.tau()), Some(p.sigma2().sqrt()), omega]
}

fn one_replication(cfg: &StudyConfig, path: u32) -> Result<Estimates> {
    let grid = poisson_grid_for_path(cfg.n, cfg.seed, path)?;
    let sim = simulate(&SimConfig { params: cfg.params, grid, seed: cfg.seed, path, init: InitialState::Stationary })?;
    let tick = sim.observed;
    let minute = tick.one_minute()?;
    Ok(STUDY_METHODS
        .iter()
        .map(|&(sampling, method)| {
            let ts: &TickSeries = match sampling {
                Sampling::OneMinute => &minute,
                Sampling::Tick => &tick,
            };
            if method == Method::Rv {
                return Some([None, None, Some(realized_variance(ts).sqrt()), None]);
            }
            estimate::fit(ts, method).ok().map(|f| estimates_of(&f))
        })
        .collect())
}

/// MAE of every method and parameter over `cfg.reps` Poisson-sampled paths.
/// Failed fits are left out of that method's average.
pub fn simulation_study(cfg: &StudyConfig) -> Result<Vec<MaeRow>> {
    cfg.params.validate()?;
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let reps: Vec<Estimates> = (0..cfg.reps).into_par_iter().map(|p| one_replication(cfg, p)).collect::<Result<_>>()?;
    let p = &cfg.params;
    let truth = [p.mu(), p.tau(), p.sigma2().sqrt(), p.omega2.sqrt()];
    let names = ["mu", "tau", "sigma", "omega"];
    let mut rows = Vec::new();
    for (m, &(sampling, method)) in STUDY_METHODS.iter().enumerate() {
        for (k, name) in names.iter().enumerate() {
            let errs: Vec<f64> = reps
                .iter()
                .filter_map(|r| r[m].and_then(|e| e[k]))
                .map(|v| (v - truth[k]).abs())
                .collect();
            let applies = reps.iter().any(|r| r[m].is_none_or(|e| e[k].is_some()));
            if !applies {
                continue;
            }
            let mae = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
            rows.push(MaeRow { method: study_label(sampling, method), param: name, mae, used: errs.len() });
        }
    }
    Ok(rows)
}

pub fn find<'a>(rows: &'a [MaeRow], method: &str, param: &str) -> Option<&'a MaeRow> {
    rows.iter().find(|r| r.method == method && r.param == param)
}
