//! Ornstein-Uhlenbeck parameter types and closed-form moments.
//!
//! Time is measured in trading days: one session maps onto `[0, 1]`, so
//! `tau` and `sigma2` are per-day quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Latent OU process `dP = tau (mu - P) dt + sigma dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Long-term mean.
    pub mu: f64,
    /// Speed of reversion, per day.
    pub tau: f64,
    /// Instantaneous variance, per day.
    pub sigma2: f64,
}

impl OuParams {
    pub fn new(mu: f64, tau: f64, sigma2: f64) -> Result<Self> {
        let p = Self { mu, tau, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.tau.is_finite() && self.sigma2.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite field in {self:?}")));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParams(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.sigma2 < 0.0 {
            return Err(Error::InvalidParams(format!(
                "sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    /// Stationary variance `sigma2 / (2 tau)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma2 / (2.0 * self.tau)
    }

    pub fn with_noise(self, omega2: f64) -> NoisyOuParams {
        NoisyOuParams { ou: self, omega2 }
    }
}

/// OU process observed through additive Gaussian white noise of variance `omega2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyOuParams {
    pub ou: OuParams,
    pub omega2: f64,
}

impl NoisyOuParams {
    pub fn new(mu: f64, tau: f64, sigma2: f64, omega2: f64) -> Result<Self> {
        let p = Self { ou: OuParams { mu, tau, sigma2 }, omega2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.ou.validate()?;
        if !self.omega2.is_finite() || self.omega2 < 0.0 {
            return Err(Error::InvalidParams(format!(
                "omega2 must be finite and >= 0, got {}",
                self.omega2
            )));
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        self.ou.mu
    }

    pub fn tau(&self) -> f64 {
        self.ou.tau
    }

    pub fn sigma2(&self) -> f64 {
        self.ou.sigma2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Stationary mean and variance together with the autocovariance at a lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryMoments {
    pub mean: f64,
    pub variance: f64,
    pub autocov: f64,
}

impl StationaryMoments {
    pub fn autocorrelation(&self) -> f64 {
        self.autocov / self.variance
    }
}

/// Stationary moments of the latent process; `autocov` at `lag = 0` equals the variance.
pub fn unconditional_moments(p: &OuParams, lag: f64) -> StationaryMoments {
    let v = p.stationary_variance();
    StationaryMoments { mean: p.mu, variance: v, autocov: v * (-p.tau * lag.abs()).exp() }
}

/// Moments of `P_t` given `P_0 = p0`.
pub fn conditional_moments(p: &OuParams, p0: f64, t: f64) -> Result<GaussianMoments> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be > 0, got {t}")));
    }
    let decay = (-p.tau * t).exp();
    // 1 - e^{-x} via expm1 keeps tick-scale horizons accurate.
    let one_minus = -(-p.tau * t).exp_m1();
    let one_minus_sq = -(-2.0 * p.tau * t).exp_m1();
    Ok(GaussianMoments {
        mean: p0 * decay + p.mu * one_minus,
        variance: p.stationary_variance() * one_minus_sq,
    })
}

/// Stationary moments of the observed process. For `lag > 0` the noise
/// does not enter the autocovariance; at `lag = 0` the autocovariance is the
/// full observed variance.
pub fn noisy_unconditional_moments(p: &NoisyOuParams, lag: f64) -> StationaryMoments {
    let latent = unconditional_moments(&p.ou, lag);
    let variance = latent.variance + p.omega2;
    let autocov = if lag == 0.0 { variance } else { latent.autocov };
    StationaryMoments { mean: latent.mean, variance, autocov }
}

/// Distribution of the latent value `P_0` given one noisy observation `X_0 = x0`
/// under the stationary prior `N(mu, sigma2 / 2tau)`.
pub fn posterior_initial(p: &NoisyOuParams, x0: f64) -> Result<GaussianMoments> {
    let (mu, tau, s2, w2) = (p.mu(), p.tau(), p.sigma2(), p.omega2);
    if w2 == 0.0 {
        if s2 == 0.0 {
            return Err(Error::Degenerate("sigma2 and omega2 are both zero".into()));
        }
        return Ok(GaussianMoments { mean: x0, variance: 0.0 });
    }
    let denom = s2 + 2.0 * tau * w2;
    Ok(GaussianMoments {
        mean: (x0 * s2 + 2.0 * tau * mu * w2) / denom,
        variance: s2 * w2 / denom,
    })
}

/// Moments of `X_i` given `X_{i-1} = x_prev` observed `dt` earlier, using the
/// pairwise (previous-observation-only) conditioning.
pub fn noisy_conditional_moments(
    p: &NoisyOuParams,
    x_prev: f64,
    dt: f64,
) -> Result<GaussianMoments> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be > 0, got {dt}")));
    }
    if p.omega2 == 0.0 {
        return conditional_moments(&p.ou, x_prev, dt);
    }
    let post = posterior_initial(p, x_prev)?;
    let tau = p.tau();
    let decay = (-tau * dt).exp();
    let one_minus = -(-tau * dt).exp_m1();
    let decay_sq = (-2.0 * tau * dt).exp();
    let one_minus_sq = -(-2.0 * tau * dt).exp_m1();
    Ok(GaussianMoments {
        mean: post.mean * decay + p.mu() * one_minus,
        variance: post.variance * decay_sq
            + p.ou.stationary_variance() * one_minus_sq
            + p.omega2,
    })
}

/// Log-density of `N(mean, variance)` at `x`.
pub(crate) fn gaussian_logpdf(x: f64, m: &GaussianMoments) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let d = x - m.mean;
    -0.5 * (LN_2PI + m.variance.ln() + d * d / m.variance)
}
