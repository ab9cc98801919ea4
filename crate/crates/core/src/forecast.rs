//! Daily parameter dynamics and one-step-ahead forecasts.
//!
//! * `mu_i = a + b mu_{i-1} + c X0_i` (the day's opening value is known when
//!   the forecast is issued),
//! * `tau_i = a'`,
//! * `ln sigma2_i = a'' + b'' ln sigma2_{i-1} + c'' mean_5 + d'' mean_22`, HAR
//!   averages over the previous 5 and 22 days.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OuParams;

pub const DEFAULT_WINDOW: usize = 132;
pub const HAR_LAGS: usize = 22;
const HAR_WEEK: usize = 5;
/// Relative singular-value cutoff below which a design is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub day: i64,
    pub mu: f64,
    pub tau: f64,
    pub sigma2: f64,
    /// First cleaned value of the day.
    pub open_value: f64,
}

/// Per-day parameter estimates ordered by day index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DailyParamHistory {
    records: Vec<DailyRecord>,
}

impl DailyParamHistory {
    /// Sorts by day; rejects duplicate days, non-finite values and
    /// nonpositive `tau` or `sigma2`.
    pub fn new(mut records: Vec<DailyRecord>) -> Result<Self> {
        for r in &records {
            if !(r.mu.is_finite() && r.open_value.is_finite()) {
                return Err(Error::InvalidHistory(format!("non-finite values on day {}", r.day)));
            }
            if !(r.tau > 0.0 && r.tau.is_finite()) || !(r.sigma2 > 0.0 && r.sigma2.is_finite()) {
                return Err(Error::InvalidHistory(format!(
                    "day {}: tau = {}, sigma2 = {} must be positive",
                    r.day, r.tau, r.sigma2
                )));
            }
        }
        records.sort_by_key(|r| r.day);
        if let Some(w) = records.windows(2).find(|w| w[0].day == w[1].day) {
            return Err(Error::InvalidHistory(format!("day {} appears twice", w[0].day)));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First `n` records.
    pub fn head(&self, n: usize) -> Self {
        Self { records: self.records[..n.min(self.len())].to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModels {
    /// `(a, b, c)`.
    pub mu_coef: [f64; 3],
    pub tau_mean: f64,
    /// `(a'', b'', c'', d'')`.
    pub har_coef: [f64; 4],
    pub window: usize,
    /// In-sample coefficient of determination of the mean model.
    pub r2_mu: f64,
    /// In-sample coefficient of determination of the HAR model (log scale).
    pub r2_sigma: f64,
    /// OLS standard errors of `mu_coef` and `har_coef`.
    pub mu_se: [f64; 3],
    pub har_se: [f64; 4],
    /// A design matrix was rank deficient; the minimum-norm solution is used.
    pub collinear: bool,
}

struct Ols {
    coef: Vec<f64>,
    se: Vec<f64>,
    r2: f64,
    rank_deficient: bool,
}

fn ols(rows: &[Vec<f64>], y: &[f64]) -> Result<Ols> {
    let (n, k) = (rows.len(), rows.first().map_or(0, Vec::len));
    if n < k || k == 0 {
        return Err(Error::InsufficientData(format!("{n} rows for {k} coefficients")));
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::Collinear("design matrix is zero".into()));
    }
    let rank = svd.singular_values.iter().filter(|s| **s > RANK_TOL * smax).count();
    let beta = svd
        .solve(&yv, RANK_TOL * smax)
        .map_err(|e| Error::Collinear(e.to_string()))?;
    let resid = &yv - &x * &beta;
    let sse = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };

    let mut se = vec![f64::NAN; k];
    if rank == k && n > k {
        let s2 = sse / (n - k) as f64;
        if let Some(inv) = (x.transpose() * &x).try_inverse() {
            for (j, v) in se.iter_mut().enumerate() {
                *v = (s2 * inv[(j, j)]).sqrt();
            }
        }
    }
    Ok(Ols { coef: beta.iter().copied().collect(), se, r2, rank_deficient: rank < k })
}

fn har_regressors(ln_s2: &[f64], i: usize) -> [f64; 4] {
    let prev = &ln_s2[i - HAR_LAGS..i];
    let week = prev[HAR_LAGS - HAR_WEEK..].iter().sum::<f64>() / HAR_WEEK as f64;
    let month = prev.iter().sum::<f64>() / HAR_LAGS as f64;
    [1.0, ln_s2[i - 1], week, month]
}

/// Fit all three models with the last `window` days as responses. Lagged
/// regressors may reach before the window when the history has them.
pub fn fit_models(hist: &DailyParamHistory, window: usize) -> Result<ForecastModels> {
    if window < HAR_LAGS + 1 {
        return Err(Error::InvalidArgument(format!("window must be >= {}, got {window}", HAR_LAGS + 1)));
    }
    if hist.len() < window {
        return Err(Error::InsufficientData(format!(
            "history has {} days, window needs {window}",
            hist.len()
        )));
    }
    let r = hist.records();
    let start = r.len() - window;

    let (mut x_mu, mut y_mu) = (Vec::new(), Vec::new());
    for i in start.max(1)..r.len() {
        x_mu.push(vec![1.0, r[i - 1].mu, r[i].open_value]);
        y_mu.push(r[i].mu);
    }
    let tau_mean = r[start..].iter().map(|d| d.tau).sum::<f64>() / window as f64;

    let ln_s2: Vec<f64> = r.iter().map(|d| d.sigma2.ln()).collect();
    let (mut x_h, mut y_h) = (Vec::new(), Vec::new());
    for i in start.max(HAR_LAGS)..r.len() {
        x_h.push(har_regressors(&ln_s2, i).to_vec());
        y_h.push(ln_s2[i]);
    }

    let mu = ols(&x_mu, &y_mu)?;
    let har = ols(&x_h, &y_h)?;
    Ok(ForecastModels {
        mu_coef: [mu.coef[0], mu.coef[1], mu.coef[2]],
        tau_mean,
        har_coef: [har.coef[0], har.coef[1], har.coef[2], har.coef[3]],
        window,
        r2_mu: mu.r2,
        r2_sigma: har.r2,
        mu_se: [mu.se[0], mu.se[1], mu.se[2]],
        har_se: [har.se[0], har.se[1], har.se[2], har.se[3]],
        collinear: mu.rank_deficient || har.rank_deficient,
    })
}

/// Parameters for the day after the last history record, given that day's open.
pub fn forecast_day(models: &ForecastModels, hist: &DailyParamHistory, next_open: f64) -> Result<OuParams> {
    let r = hist.records();
    if r.len() < HAR_LAGS {
        return Err(Error::InsufficientData(format!(
            "forecast needs {HAR_LAGS} days of history, got {}",
            r.len()
        )));
    }
    let [a, b, c] = models.mu_coef;
    let mu = a + b * r[r.len() - 1].mu + c * next_open;
    let mut ln_s2: Vec<f64> = r[r.len() - HAR_LAGS..].iter().map(|d| d.sigma2.ln()).collect();
    ln_s2.push(0.0);
    let x = har_regressors(&ln_s2, HAR_LAGS);
    let ln = models.har_coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
    OuParams::new(mu, models.tau_mean, ln.exp())
}

/// Forecast for the day after the last record: models are fitted with
/// `window` responses on the trailing `window + HAR_LAGS` records.
pub fn forecast_next(hist: &DailyParamHistory, window: usize, next_open: f64) -> Result<OuParams> {
    let need = window + HAR_LAGS;
    let r = hist.records();
    if r.len() < need {
        return Err(Error::InsufficientData(format!("{} records, need {need}", r.len())));
    }
    let trailing = DailyParamHistory { records: r[r.len() - need..].to_vec() };
    let models = fit_models(&trailing, window)?;
    forecast_day(&models, &trailing, next_open)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastEvaluation {
    pub med_r2_mu: f64,
    pub med_r2_sigma: f64,
    pub med_ae_mu: f64,
    pub med_ae_tau: f64,
    /// In `sigma2` units.
    pub med_ae_sigma2: f64,
    pub forecasts: usize,
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Rolling-origin one-step-ahead evaluation over every day that has a full
/// window plus 22 lags behind it.
pub fn evaluate_forecasts(hist: &DailyParamHistory, window: usize) -> Result<ForecastEvaluation> {
    let need = window + HAR_LAGS + 1;
    if hist.len() < need {
        return Err(Error::InsufficientData(format!(
            "evaluation needs {need} days, got {}",
            hist.len()
        )));
    }
    let r = hist.records();
    let (mut r2m, mut r2s, mut em, mut et, mut es) = (vec![], vec![], vec![], vec![], vec![]);
    for j in (window + HAR_LAGS)..r.len() {
        let past = hist.head(j);
        let models = fit_models(&past, window)?;
        let f = forecast_day(&models, &past, r[j].open_value)?;
        r2m.push(models.r2_mu);
        r2s.push(models.r2_sigma);
        em.push((f.mu - r[j].mu).abs());
        et.push((f.tau - r[j].tau).abs());
        es.push((f.sigma2 - r[j].sigma2).abs());
    }
    Ok(ForecastEvaluation {
        med_r2_mu: median(&r2m),
        med_r2_sigma: median(&r2s),
        med_ae_mu: median(&em),
        med_ae_tau: median(&et),
        med_ae_sigma2: median(&es),
        forecasts: em.len(),
    })
}
