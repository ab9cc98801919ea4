//! Quasi maximum likelihood on possibly irregular tick data.
//!
//! The likelihood conditions each observation on the previous one only. The
//! search runs on standardized data `(x - m) / s` in coordinates
//! `(mu, ln tau, ln sigma2[, ln omega2])`, which makes fits exactly
//! equivariant to shifts and rescaling of the input.

use crate::error::{Error, Result};
use crate::model::{gaussian_logpdf, noisy_conditional_moments, NoisyOuParams};
use crate::optim::{newton_polish, Minimum, NelderMead};
use crate::series::{TickSeries, SESSION_MINUTES};

use super::moments::{mom_fit, mom_nr_fit};
use super::realized::realized_variance;
use super::{Diagnostics, Method, OuFit};

/// Noise variances below this are reported as 0 with a clamp flag.
pub const OMEGA2_CLAMP: f64 = 1e-18;

const MIN_MLE_LEN: usize = 10;
/// Difference step of the final Newton polish, in search coordinates.
const POLISH_STEP: f64 = 1e-3;

/// Starting point for [`mle_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MleInit {
    /// Noise-robust moments on the one-minute aggregate, with fallbacks.
    Auto,
    From(NoisyOuParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub optimizer: NelderMead,
    /// Restarts from the best point found so far. The first always runs; later
    /// ones only while the search has not converged.
    pub restarts: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { optimizer: NelderMead::default(), restarts: 2 }
    }
}

/// Per-observation conditional log-densities `log f(x_i | x_{i-1})`, `i = 1..n`.
pub fn per_observation_loglik(ts: &TickSeries, p: &NoisyOuParams, robust: bool) -> Result<Vec<f64>> {
    p.validate()?;
    let p = if robust { *p } else { p.ou.with_noise(0.0) };
    let (t, x) = (ts.times(), ts.values());
    (1..x.len())
        .map(|i| {
            let m = noisy_conditional_moments(&p, x[i - 1], t[i] - t[i - 1])?;
            Ok(gaussian_logpdf(x[i], &m))
        })
        .collect()
}

/// Sum of [`per_observation_loglik`]. The noise-sensitive version ignores `omega2`.
pub fn loglik(ts: &TickSeries, p: &NoisyOuParams, robust: bool) -> Result<f64> {
    Ok(per_observation_loglik(ts, p, robust)?.iter().sum())
}

/// Objective for the search: negative log-likelihood on standardized data,
/// infinite when the parameters are unusable.
fn neg_loglik(t: &[f64], z: &[f64], theta: &[f64]) -> f64 {
    let tau = theta[1].exp();
    let s2 = theta[2].exp();
    let w2 = theta.get(3).map_or(0.0, |v| v.exp());
    let Ok(p) = NoisyOuParams::new(theta[0], tau, s2, w2) else {
        return f64::INFINITY;
    };
    let mut total = 0.0;
    for i in 1..z.len() {
        match noisy_conditional_moments(&p, z[i - 1], t[i] - t[i - 1]) {
            Ok(m) if m.variance > 0.0 => total += gaussian_logpdf(z[i], &m),
            _ => return f64::INFINITY,
        }
    }
    -total
}

fn mean_and_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Starting parameters for standardized data.
fn auto_init(z: &TickSeries) -> NoisyOuParams {
    let coarse = if z.len() <= SESSION_MINUTES + 1 && z.spacing().is_ok() {
        Ok(z.clone())
    } else {
        z.one_minute()
    };
    let n = (z.len() - 1) as f64;
    let rv_noise = realized_variance(z) / (2.0 * n);
    let from_moments = coarse.as_ref().ok().and_then(|c| {
        mom_nr_fit(c)
            .ok()
            .filter(|f| f.params.tau().is_finite() && f.params.sigma2() > 0.0)
            .or_else(|| mom_fit(c).ok())
    });
    let mut p = match from_moments {
        Some(f) => f.params,
        // unit standardized variance with a moderate daily reversion
        None => NoisyOuParams::new(0.0, 5.0, 10.0, 0.0).expect("valid defaults"),
    };
    if !(p.omega2 > 0.0) {
        p.omega2 = (0.5 * rv_noise).max(1e-12);
    }
    p.ou.tau = p.ou.tau.clamp(1e-3, 1e5);
    p.ou.sigma2 = p.ou.sigma2.max(1e-12);
    p
}

fn to_theta(p: &NoisyOuParams, robust: bool) -> Vec<f64> {
    let mut th = vec![p.mu(), p.tau().ln(), p.sigma2().ln()];
    if robust {
        th.push(p.omega2.max(1e-300).ln());
    }
    th
}

/// Maximum likelihood with default options.
pub fn mle_fit(ts: &TickSeries, robust: bool, init: MleInit) -> Result<OuFit> {
    mle_fit_with(ts, robust, init, &MleOptions::default())
}

pub fn mle_fit_with(ts: &TickSeries, robust: bool, init: MleInit, opts: &MleOptions) -> Result<OuFit> {
    if ts.len() < MIN_MLE_LEN {
        return Err(Error::InsufficientData(format!(
            "likelihood fit needs at least {MIN_MLE_LEN} observations, got {}",
            ts.len()
        )));
    }
    let (m, s) = mean_and_sd(ts.values());
    if !(s > 0.0) {
        return Err(Error::Degenerate("all observations are equal".into()));
    }
    let z = ts.map_values(|v| (v - m) / s)?;

    let start = match init {
        MleInit::Auto => auto_init(&z),
        MleInit::From(p) => {
            p.validate()?;
            let mut q = NoisyOuParams::new((p.mu() - m) / s, p.tau(), p.sigma2() / (s * s), p.omega2 / (s * s))?;
            if robust && !(q.omega2 > 0.0) {
                q.omega2 = (0.5 * realized_variance(&z) / (2.0 * (z.len() - 1) as f64)).max(1e-12);
            }
            if !(q.tau() > 0.0 && q.sigma2() > 0.0) {
                return Err(Error::InvalidParams("initial tau and sigma2 must be > 0".into()));
            }
            q
        }
    };

    let (t, zv) = (z.times(), z.values());
    let objective = |th: &[f64]| neg_loglik(t, zv, th);
    let theta0 = to_theta(&start, robust);
    let steps: Vec<f64> = theta0.iter().enumerate().map(|(i, _)| if i == 0 { 0.1 } else { 0.5 }).collect();

    let mut best: Minimum = opts.optimizer.minimize(objective, &theta0, &steps);
    let mut iterations = best.iterations;
    let mut restarts = 0;
    while restarts < opts.restarts && (restarts == 0 || !best.converged) {
        let again = opts.optimizer.minimize(objective, &best.x, &steps);
        iterations += again.iterations;
        restarts += 1;
        let converged = again.converged;
        if again.fx <= best.fx {
            best = again;
        }
        best.converged = converged;
    }
    if !best.fx.is_finite() {
        return Err(Error::Numerical("likelihood is not finite anywhere on the search path".into()));
    }
    // settle on the stationary point of the difference-quotient gradient so the
    // answer does not depend on the simplex path (affine changes of units then
    // give the same standardized estimate)
    let mut polished = false;
    if best.converged {
        if let Some(x) = newton_polish(objective, &best.x, POLISH_STEP, 0.05) {
            let fx = objective(&x);
            if fx <= best.fx + 1e-9 * (1.0 + best.fx.abs()) {
                best.x = x;
                best.fx = fx;
                polished = true;
            }
        }
    }

    let th = &best.x;
    let raw_omega2 = if robust { th[3].exp() * s * s } else { 0.0 };
    let omega2_clamped = robust && raw_omega2 < OMEGA2_CLAMP;
    let params = NoisyOuParams::new(
        m + s * th[0],
        th[1].exp(),
        th[2].exp() * s * s,
        if omega2_clamped { 0.0 } else { raw_omega2 },
    )?;
    let ll = loglik(ts, &params, robust)?;
    Ok(OuFit {
        params,
        loglik: Some(ll),
        method: if robust { Method::MleNr } else { Method::Mle },
        n_used: ts.len(),
        converged: best.converged,
        diagnostics: Diagnostics {
            iterations,
            final_tolerance: best.diameter,
            omega2_clamped,
            sigma2_clamped: false,
            restarts,
            note: (!polished).then(|| "newton polish skipped".to_string()),
        },
    })
}
