//! Synthetic pair-days for end-to-end testing of the trading pipeline.
//!
//! Daily parameters evolve by the same three models the forecaster fits: the
//! mean is AR(1) in itself plus the day's open, the reversion speed is i.i.d.
//! around a constant and the log variance follows a HAR recursion. Within a
//! day the log spread is an OU path started at the open. Two legs are then
//! emitted as raw trade ticks on independent Poisson clocks, each with its
//! own additive noise, so the spread seen after cleaning carries both noise
//! and the staleness of previous-tick synchronization.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::HAR_LAGS;
use crate::ingest::{RawTick, SESSION_CLOSE_NS, SESSION_OPEN_NS};
use crate::model::{conditional_moments, OuParams};
use crate::sim::{poisson_grid_for_path, stream_rng, StreamTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairWorld {
    pub days: usize,
    /// `mu_i = a + b mu_{i-1} + c open_i + eps`.
    pub mu_coef: [f64; 3],
    pub mu_noise_sd: f64,
    pub tau_mean: f64,
    pub tau_sd: f64,
    /// Draws of `tau` below this are reflected above it.
    pub tau_floor: f64,
    /// `ln s2_i = a + b ln s2_{i-1} + c week + d month + eps`.
    pub har_coef: [f64; 4],
    pub har_noise_sd: f64,
    /// Overnight change of the spread, close to next open.
    pub overnight_sd: f64,
    pub ticks_per_leg: usize,
    /// Observation noise variance of each leg's log price.
    pub leg_noise_var: f64,
    /// Daily variance of the common random walk in both legs.
    pub leg_var: f64,
    /// Both legs trade on one clock, so the spread has no stale observations.
    pub synchronous: bool,
    /// Junk ticks from another exchange, per leg tick.
    pub foreign_share: f64,
    pub seed: u64,
}

impl Default for PairWorld {
    fn default() -> Self {
        Self {
            days: 300,
            mu_coef: [0.01, 0.3, 0.6],
            mu_noise_sd: 5e-4,
            tau_mean: 8.0,
            tau_sd: 1.5,
            tau_floor: 1.0,
            // long-run level ln(6.4e-5)
            har_coef: [0.15 * 6.4e-5_f64.ln(), 0.35, 0.3, 0.2],
            har_noise_sd: 0.25,
            overnight_sd: 2e-3,
            ticks_per_leg: 3000,
            leg_noise_var: 5e-9,
            leg_var: 1e-4,
            synchronous: false,
            foreign_share: 0.01,
            seed: 1,
        }
    }
}

impl PairWorld {
    fn validate(&self) -> Result<()> {
        let persistence = self.har_coef[1] + self.har_coef[2] + self.har_coef[3];
        if self.days == 0 || self.ticks_per_leg < 2 {
            return Err(Error::InvalidArgument("need at least one day and two ticks per leg".into()));
        }
        if !(self.mu_coef[1] + self.mu_coef[2]).abs().lt(&1.0) || !persistence.abs().lt(&1.0) {
            return Err(Error::InvalidArgument("mean and variance recursions must be stationary".into()));
        }
        if !(self.tau_floor > 0.0 && self.tau_mean > self.tau_floor) {
            return Err(Error::InvalidArgument("tau mean must exceed a positive floor".into()));
        }
        let sds = [self.mu_noise_sd, self.tau_sd, self.har_noise_sd, self.overnight_sd, self.leg_noise_var, self.leg_var];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(0.0..1.0).contains(&self.foreign_share) {
            return Err(Error::InvalidArgument("noise scales must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn long_run_ln_sigma2(&self) -> f64 {
        let [a, b, c, d] = self.har_coef;
        a / (1.0 - b - c - d)
    }
}

const PRIMARY: &str = "N";
const FOREIGN: &str = "T";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDay {
    pub day: i64,
    pub truth: OuParams,
    /// Latent spread at the session open.
    pub open: f64,
    pub leg_a: Vec<RawTick>,
    pub leg_b: Vec<RawTick>,
}

impl SynthDay {
    pub const EXCHANGE: &'static str = PRIMARY;
}

fn to_ns(t: f64) -> i64 {
    SESSION_OPEN_NS + (t * (SESSION_CLOSE_NS - SESSION_OPEN_NS) as f64).round() as i64
}

fn tick(ns: i64, log_price: f64, exchange: &str) -> RawTick {
    RawTick {
        timestamp: ns,
        price: log_price.exp(),
        exchange: exchange.into(),
        corr: 0,
        cond: String::new(),
        suffix: String::new(),
    }
}

/// Generate all days in order. Deterministic in `world.seed`.
pub fn generate(world: &PairWorld) -> Result<Vec<SynthDay>> {
    world.validate()?;
    let [ma, mb, mc] = world.mu_coef;
    let [ha, hb, hc, hd] = world.har_coef;
    let mut ln_s2: Vec<f64> = vec![world.long_run_ln_sigma2(); HAR_LAGS];
    let mut mu_prev = ma / (1.0 - mb - mc);
    let mut close = mu_prev;
    let mut log_b = 40f64.ln();
    let mut out = Vec::with_capacity(world.days);

    for d in 0..world.days {
        let path = u32::try_from(d).map_err(|_| Error::InvalidArgument("too many days".into()))?;
        let mut rng = stream_rng(world.seed, path, StreamTag::Aux, 0);
        let mut normal = || -> f64 { rng.sample(StandardNormal) };

        let open = close + world.overnight_sd * normal();
        let mu = ma + mb * mu_prev + mc * open + world.mu_noise_sd * normal();
        let mut tau = world.tau_mean + world.tau_sd * normal();
        if tau < world.tau_floor {
            tau = 2.0 * world.tau_floor - tau;
        }
        let n = ln_s2.len();
        let week = ln_s2[n - 5..].iter().sum::<f64>() / 5.0;
        let month = ln_s2[n - HAR_LAGS..].iter().sum::<f64>() / HAR_LAGS as f64;
        let ln = ha + hb * ln_s2[n - 1] + hc * week + hd * month + world.har_noise_sd * normal();
        ln_s2.push(ln);
        let truth = OuParams::new(mu, tau, ln.exp())?;

        let grid_a = poisson_grid_for_path(world.ticks_per_leg, world.seed, 2 * path)?.times;
        let grid_b = if world.synchronous {
            grid_a.clone()
        } else {
            poisson_grid_for_path(world.ticks_per_leg, world.seed, 2 * path + 1)?.times
        };
        let mut union: Vec<f64> = grid_a.iter().chain(&grid_b).copied().collect();
        union.sort_by(f64::total_cmp);
        union.dedup();

        // latent spread and the common leg factor on the union clock
        let mut latent_rng = stream_rng(world.seed, path, StreamTag::Latent, 0);
        let (mut p, mut b, mut t0) = (open, log_b, 0.0);
        let mut spread = Vec::with_capacity(union.len());
        let mut base = Vec::with_capacity(union.len());
        for &t in &union {
            let m = conditional_moments(&truth, p, t - t0)?;
            let z1: f64 = latent_rng.sample(StandardNormal);
            let z2: f64 = latent_rng.sample(StandardNormal);
            p = m.mean + m.variance.sqrt() * z1;
            b += (world.leg_var * (t - t0)).sqrt() * z2;
            t0 = t;
            spread.push(p);
            base.push(b);
        }
        let m = conditional_moments(&truth, p, 1.0 - t0)?;
        let z: f64 = latent_rng.sample(StandardNormal);
        close = m.mean + m.variance.sqrt() * z;
        log_b = b + (world.leg_var * (1.0 - t0)).sqrt() * latent_rng.sample::<f64, _>(StandardNormal);

        let noise_sd = world.leg_noise_var.sqrt();
        let emit = |grid: &[f64], with_spread: bool, attempt: u8| -> Vec<RawTick> {
            let mut noise = stream_rng(world.seed, path, StreamTag::Noise, attempt);
            let mut junk = stream_rng(world.seed, path, StreamTag::Aux, attempt + 1);
            let mut ticks = Vec::with_capacity(grid.len());
            for &t in grid {
                let k = union.partition_point(|&u| u < t);
                let level = base[k] + if with_spread { spread[k] } else { 0.0 };
                let e: f64 = noise.sample(StandardNormal);
                let ns = to_ns(t);
                ticks.push(tick(ns, level + noise_sd * e, PRIMARY));
                if junk.random::<f64>() < world.foreign_share {
                    ticks.push(tick(ns, level + 0.01, FOREIGN));
                }
            }
            ticks
        };
        let leg_a = emit(&grid_a, true, 0);
        let leg_b = emit(&grid_b, false, 1);

        mu_prev = mu;
        out.push(SynthDay { day: d as i64, truth, open, leg_a, leg_b });
    }
    Ok(out)
}
