use crate::error::{Error, Result};
use crate::model::{NoisyOuParams, OuParams};
use crate::series::TickSeries;

use super::{Method, OuFit};

/// Sample moments of `x_0..x_n`: mean, variance (divisor `n`), lag-1
/// autocovariance (divisor `n - 1`) and lag-2 autocovariance (divisor `n - 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl SampleMoments {
    /// Requires at least 4 observations (`n >= 3`).
    pub fn from_values(x: &[f64]) -> Result<Self> {
        if x.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "moment estimators need at least 4 observations, got {}",
                x.len()
            )));
        }
        let n = (x.len() - 1) as f64;
        let m1 = x.iter().sum::<f64>() / (n + 1.0);
        let c: Vec<f64> = x.iter().map(|v| v - m1).collect();
        let m2 = c.iter().map(|v| v * v).sum::<f64>() / n;
        let m3 = c.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0);
        let m4 = c.windows(3).map(|w| w[0] * w[2]).sum::<f64>() / (n - 2.0);
        Ok(Self { m1, m2, m3, m4 })
    }
}

fn degenerate(what: &str, m: &SampleMoments) -> Error {
    Error::MomentDegenerate(format!(
        "{what} (M2={:.6e}, M3={:.6e}, M4={:.6e})",
        m.m2, m.m3, m.m4
    ))
}

/// Noise-sensitive method of moments on an equidistant series.
pub fn mom_fit(ts: &TickSeries) -> Result<OuFit> {
    let delta = ts.spacing()?;
    let m = SampleMoments::from_values(ts.values())?;
    if !(m.m2 > 0.0) || !(m.m3 > 0.0) || !(m.m2 > m.m3) {
        return Err(degenerate("need M2 > M3 > 0", &m));
    }
    let log_ratio = (m.m2 / m.m3).ln();
    let tau = log_ratio / delta;
    let sigma2 = 2.0 * m.m2 * log_ratio / delta;
    let params = OuParams::new(m.m1, tau, sigma2)?.with_noise(0.0);
    Ok(OuFit::closed_form(params, Method::Mom, ts.len()))
}

/// Invert the four stationary moments of the noisy process for spacing `delta`.
/// Returns the parameters and whether the noise variance was clamped at 0.
pub fn mom_nr_from_moments(m: &SampleMoments, delta: f64) -> Result<(NoisyOuParams, bool)> {
    if !(m.m3 > 0.0) || !(m.m4 > 0.0) || !(m.m3 > m.m4) {
        return Err(degenerate("need M3 > M4 > 0", m));
    }
    let log_ratio = (m.m3 / m.m4).ln();
    let latent_var = m.m3 * m.m3 / m.m4;
    let tau = log_ratio / delta;
    let sigma2 = 2.0 * latent_var * log_ratio / delta;
    let raw_omega2 = m.m2 - latent_var;
    let clamped = raw_omega2 < 0.0;
    let params = NoisyOuParams::new(m.m1, tau, sigma2, raw_omega2.max(0.0))?;
    Ok((params, clamped))
}

/// Noise-robust method of moments on an equidistant series.
pub fn mom_nr_fit(ts: &TickSeries) -> Result<OuFit> {
    if ts.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "noise-robust moments need at least 5 observations, got {}",
            ts.len()
        )));
    }
    let delta = ts.spacing()?;
    let m = SampleMoments::from_values(ts.values())?;
    let (params, clamped) = mom_nr_from_moments(&m, delta)?;
    let mut fit = OuFit::closed_form(params, Method::MomNr, ts.len());
    fit.diagnostics.omega2_clamped = clamped;
    Ok(fit)
}

/// Population values the naive moment estimator converges to when the data
/// carry noise, for an equidistant grid with `n` intervals on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomBias {
    pub tau_x: f64,
    pub sigma2_x: f64,
}

pub fn predict_mom_bias(p: &NoisyOuParams, n: usize) -> Result<MomBias> {
    let (tau, s2, w2) = (p.tau(), p.sigma2(), p.omega2);
    if n < 1 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if s2 == 0.0 {
        return Err(Error::InvalidParams(
            "bias formulas need sigma2 > 0 (log of zero correlation)".into(),
        ));
    }
    let n = n as f64;
    // log(sigma2 / (sigma2 + 2 tau omega2)) without cancellation for tiny noise
    let log_ratio = -(2.0 * tau * w2 / s2).ln_1p();
    Ok(MomBias {
        tau_x: tau - n * log_ratio,
        sigma2_x: s2 + 2.0 * tau * w2 - 2.0 * n * (s2 / (2.0 * tau) + w2) * log_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_series_is_degenerate() {
        let ts = TickSeries::equidistant(vec![1.5; 50]).unwrap();
        assert!(matches!(mom_fit(&ts), Err(Error::MomentDegenerate(_))));
        assert!(matches!(mom_nr_fit(&ts), Err(Error::MomentDegenerate(_))));
    }

    #[test]
    fn irregular_series_rejected() {
        let ts = TickSeries::new(vec![0.0, 0.1, 0.3, 0.35, 0.9], vec![1.0, 2.0, 1.0, 3.0, 2.0])
            .unwrap();
        assert!(matches!(mom_fit(&ts), Err(Error::NotEquidistant(_))));
    }

    #[test]
    fn moment_divisors() {
        let x = [1.0, 2.0, 4.0, 3.0, 5.0];
        let m = SampleMoments::from_values(&x).unwrap();
        assert_relative_eq!(m.m1, 3.0);
        assert_relative_eq!(m.m2, 10.0 / 4.0);
        // centered: -2,-1,1,0,2
        assert_relative_eq!(m.m3, (2.0 - 1.0 + 0.0 + 0.0) / 3.0);
        assert_relative_eq!(m.m4, (-2.0 + 0.0 + 2.0) / 2.0);
    }

    #[test]
    fn exact_inversion_from_theoretical_moments() {
        let truth = NoisyOuParams::new(1.0, 10.0, 1e-4, 1e-8).unwrap();
        let delta = 1.0 / 390.0;
        let v = truth.ou.stationary_variance();
        let phi = (-truth.tau() * delta).exp();
        let m = SampleMoments { m1: 1.0, m2: v + truth.omega2, m3: v * phi, m4: v * phi * phi };
        let (p, clamped) = mom_nr_from_moments(&m, delta).unwrap();
        assert!(!clamped);
        assert_relative_eq!(p.mu(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(p.tau(), 10.0, max_relative = 1e-10);
        assert_relative_eq!(p.sigma2(), 1e-4, max_relative = 1e-10);
        assert_relative_eq!(p.omega2, 1e-8, max_relative = 1e-6);
    }

    #[test]
    fn negative_noise_estimate_is_clamped() {
        let m = SampleMoments { m1: 0.0, m2: 1.0, m3: 0.99, m4: 0.9 };
        let (p, clamped) = mom_nr_from_moments(&m, 0.01).unwrap();
        assert!(clamped);
        assert_eq!(p.omega2, 0.0);
    }

    #[test]
    fn bias_prediction_values() {
        let clean = NoisyOuParams::new(1.0, 10.0, 1e-4, 0.0).unwrap();
        let b = predict_mom_bias(&clean, 23_400).unwrap();
        assert_eq!(b.tau_x, 10.0);
        assert_relative_eq!(b.sigma2_x, 1e-4, max_relative = 1e-15);

        let noisy = NoisyOuParams::new(1.0, 10.0, 1e-4, 1e-8).unwrap();
        let b = predict_mom_bias(&noisy, 23_400).unwrap();
        // direct evaluation: 10 + 23400 * ln(1.002) and
        // 1.002e-4 + 2 * 23400 * 5.01e-6 * ln(1.002)
        let l = 1.002f64.ln();
        assert_relative_eq!(b.tau_x, 10.0 + 23_400.0 * l, max_relative = 1e-12);
        assert_relative_eq!(b.sigma2_x, 1.002e-4 + 2.0 * 23_400.0 * 5.01e-6 * l, max_relative = 1e-12);
        assert!((b.tau_x - 56.75).abs() < 0.01);
        assert!((b.sigma2_x - 5.69e-4).abs() < 0.005e-4);
    }
}
