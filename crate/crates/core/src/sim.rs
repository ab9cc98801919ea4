//! Exact simulation of (noisy) OU paths on equidistant or Poisson grids.
//!
//! Random streams: every draw comes from a ChaCha8 generator keyed by
//! `seed_from_u64(seed)` with stream id `path << 16 | attempt << 8 | tag`.
//! The layout is versioned by [`RNG_SCHEME`] and recorded in output metadata.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{conditional_moments, NoisyOuParams};
use crate::series::TickSeries;

pub const RNG_SCHEME: &str = "chacha8:seed_from_u64:stream=path<<16|attempt<<8|tag:v1";

/// Purpose tags for stream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamTag {
    Grid = 1,
    Latent = 2,
    Noise = 3,
    Aux = 4,
}

pub fn stream_rng(seed: u64, path: u32, tag: StreamTag, attempt: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(path) << 16) | (u64::from(attempt) << 8) | tag as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `n` intervals, `n + 1` points at `j / n`.
    Equidistant(usize),
    /// Homogeneous Poisson process with the given rate on `[0, 1]`.
    Poisson(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    pub times: Vec<f64>,
    pub kind: GridKind,
}

impl SamplingGrid {
    pub fn equidistant(intervals: usize) -> Result<Self> {
        if intervals < 1 {
            return Err(Error::InvalidArgument("need at least one interval".into()));
        }
        let n = intervals as f64;
        Ok(Self {
            times: (0..=intervals).map(|j| j as f64 / n).collect(),
            kind: GridKind::Equidistant(intervals),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Event times of a rate-`expected_count` Poisson process on `[0, 1]`.
pub fn sample_poisson_grid(expected_count: usize, seed: u64) -> Result<SamplingGrid> {
    poisson_grid_for_path(expected_count, seed, 0)
}

pub fn poisson_grid_for_path(expected_count: usize, seed: u64, path: u32) -> Result<SamplingGrid> {
    if expected_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "expected count must be >= 2, got {expected_count}"
        )));
    }
    let exp = Exp::new(expected_count as f64).expect("positive rate");
    for attempt in 0..=u8::MAX {
        let mut rng = stream_rng(seed, path, StreamTag::Grid, attempt);
        let mut times = Vec::with_capacity(expected_count + 6 * (expected_count as f64).sqrt() as usize);
        let mut t: f64 = exp.sample(&mut rng);
        while t <= 1.0 {
            // exponential gaps can underflow to a repeated time only at absurd rates
            if times.last().is_none_or(|&last| t > last) {
                times.push(t);
            }
            t += exp.sample(&mut rng);
        }
        if times.len() >= 2 {
            return Ok(SamplingGrid { times, kind: GridKind::Poisson(expected_count) });
        }
    }
    Err(Error::Numerical("poisson grid kept producing fewer than 2 events".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `P_0 ~ N(mu, sigma2 / 2tau)`.
    Stationary,
    /// Latent value at time 0.
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: NoisyOuParams,
    pub grid: SamplingGrid,
    pub seed: u64,
    /// Path index used for stream derivation.
    pub path: u32,
    pub init: InitialState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub latent: TickSeries,
    pub observed: TickSeries,
}

/// Latent path by exact Gaussian transitions; observed = latent + N(0, omega2).
pub fn simulate(cfg: &SimConfig) -> Result<SimPath> {
    cfg.params.validate()?;
    let p = &cfg.params;
    let times = &cfg.grid.times;
    if times.len() < 2 {
        return Err(Error::InsufficientData("grid needs at least 2 points".into()));
    }
    let mut latent_rng = stream_rng(cfg.seed, cfg.path, StreamTag::Latent, 0);
    let mut noise_rng = stream_rng(cfg.seed, cfg.path, StreamTag::Noise, 0);

    let mut latent = Vec::with_capacity(times.len());
    let first = match cfg.init {
        InitialState::Stationary => {
            let z: f64 = latent_rng.sample(StandardNormal);
            p.mu() + p.ou.stationary_variance().sqrt() * z
        }
        InitialState::Fixed(p0) if times[0] > 0.0 => {
            let m = conditional_moments(&p.ou, p0, times[0])?;
            let z: f64 = latent_rng.sample(StandardNormal);
            m.mean + m.variance.sqrt() * z
        }
        InitialState::Fixed(p0) => p0,
    };
    latent.push(first);
    let mut prev = first;
    for w in times.windows(2) {
        let m = conditional_moments(&p.ou, prev, w[1] - w[0])?;
        let z: f64 = latent_rng.sample(StandardNormal);
        prev = m.mean + m.variance.sqrt() * z;
        latent.push(prev);
    }

    let noise_sd = p.omega2.sqrt();
    let observed: Vec<f64> = if p.omega2 == 0.0 {
        latent.clone()
    } else {
        latent
            .iter()
            .map(|&x| {
                let z: f64 = noise_rng.sample(StandardNormal);
                x + noise_sd * z
            })
            .collect()
    };
    Ok(SimPath {
        latent: TickSeries::new(times.clone(), latent)?,
        observed: TickSeries::new(times.clone(), observed)?,
    })
}

/// How each replicate's grid is produced in [`simulate_many`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Equidistant(usize),
    Poisson(usize),
}

/// Independent replicates `0..count`, each on its own streams (and own
/// Poisson grid, if requested). Output order follows the path index.
pub fn simulate_many(
    params: NoisyOuParams,
    grid: GridSpec,
    seed: u64,
    count: u32,
    init: InitialState,
) -> Result<Vec<SimPath>> {
    (0..count)
        .into_par_iter()
        .map(|path| {
            let grid = match grid {
                GridSpec::Equidistant(n) => SamplingGrid::equidistant(n)?,
                GridSpec::Poisson(n) => poisson_grid_for_path(n, seed, path)?,
            };
            simulate(&SimConfig { params, grid, seed, path, init })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoisyOuParams;

    fn params(omega2: f64) -> NoisyOuParams {
        NoisyOuParams::new(1.0, 10.0, 1e-4, omega2).unwrap()
    }

    #[test]
    fn poisson_count_within_five_sd() {
        let g = sample_poisson_grid(23_400, 7).unwrap();
        let dev = (g.len() as f64 - 23_400.0).abs();
        assert!(dev < 5.0 * 23_400f64.sqrt(), "count {}", g.len());
        assert!(g.times.windows(2).all(|w| w[1] > w[0]));
        assert!(g.times[0] > 0.0 && *g.times.last().unwrap() <= 1.0);
    }

    #[test]
    fn poisson_grid_is_deterministic() {
        assert_eq!(sample_poisson_grid(500, 3).unwrap(), sample_poisson_grid(500, 3).unwrap());
        assert_ne!(sample_poisson_grid(500, 3).unwrap(), sample_poisson_grid(500, 4).unwrap());
    }

    #[test]
    fn tiny_rate_still_gives_two_points() {
        for seed in 0..50 {
            assert!(sample_poisson_grid(2, seed).unwrap().len() >= 2);
        }
    }

    #[test]
    fn inter_arrivals_pass_ks_against_exponential() {
        let g = sample_poisson_grid(23_400, 11).unwrap();
        let mut gaps: Vec<f64> = g.times.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean * 23_400.0 - 1.0).abs() < 0.03, "mean gap {mean}");
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let d = gaps
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = 1.0 - (-23_400.0 * x).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(d < 1.628 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn zero_noise_observed_equals_latent() {
        let cfg = SimConfig {
            params: params(0.0),
            grid: SamplingGrid::equidistant(1000).unwrap(),
            seed: 1,
            path: 0,
            init: InitialState::Stationary,
        };
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.latent, out.observed);
    }

    #[test]
    fn reproducible_and_path_dependent() {
        let cfg = |path| SimConfig {
            params: params(1e-8),
            grid: SamplingGrid::equidistant(500).unwrap(),
            seed: 99,
            path,
            init: InitialState::Fixed(1.01),
        };
        let a = simulate(&cfg(0)).unwrap();
        assert_eq!(a, simulate(&cfg(0)).unwrap());
        assert_ne!(a, simulate(&cfg(1)).unwrap());
        assert_eq!(a.latent.values()[0], 1.01);
    }

    #[test]
    fn long_path_mean_is_ergodic() {
        // slow-decorrelating setting stretched over many reversion times
        let p = NoisyOuParams::new(1.0, 500.0, 1e-4, 0.0).unwrap();
        let cfg = SimConfig {
            params: p,
            grid: SamplingGrid::equidistant(100_000).unwrap(),
            seed: 5,
            path: 0,
            init: InitialState::Stationary,
        };
        let xs = simulate(&cfg).unwrap().latent.into_parts().1;
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        // effective sample size ~ tau * T / 2 independent blocks
        let n_eff = 500.0 / 2.0;
        let tol = 4.0 * (p.ou.stationary_variance() / n_eff).sqrt();
        assert!((mean - 1.0).abs() < tol, "mean {mean} tol {tol}");
    }
}
