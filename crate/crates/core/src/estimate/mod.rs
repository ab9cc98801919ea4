//! Parameter estimators for the (noisy) OU process.
//!
//! Closed-form moment estimators and the ARMA reparametrization require an
//! equidistant series; the likelihood estimators accept irregular spacing.

mod arma;
mod mle;
mod moments;
mod realized;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NoisyOuParams;
use crate::series::TickSeries;

pub use arma::{ar_css_fit, arma_from_ou, arma_nr_css_fit, ou_from_arma, ArmaBackTransform, ArmaParams};
pub use mle::{
    loglik, mle_fit, mle_fit_with, per_observation_loglik, MleInit, MleOptions, OMEGA2_CLAMP,
};
pub use moments::{
    mom_fit, mom_nr_fit, mom_nr_from_moments, predict_mom_bias, MomBias, SampleMoments,
};
pub use realized::{noise_var_from_rv, realized_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MOM")]
    Mom,
    #[serde(rename = "MOM_NR")]
    MomNr,
    #[serde(rename = "AR_CSS")]
    ArCss,
    #[serde(rename = "ARMA_NR_CSS")]
    ArmaNrCss,
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "MLE_NR")]
    MleNr,
    #[serde(rename = "RV")]
    Rv,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mom,
        Method::MomNr,
        Method::ArCss,
        Method::ArmaNrCss,
        Method::Mle,
        Method::MleNr,
        Method::Rv,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Mom => "MOM",
            Method::MomNr => "MOM-NR",
            Method::ArCss => "AR",
            Method::ArmaNrCss => "ARMA-NR",
            Method::Mle => "MLE",
            Method::MleNr => "MLE-NR",
            Method::Rv => "RV",
        }
    }

    /// Whether the method estimates the noise variance.
    pub fn is_noise_robust(self) -> bool {
        matches!(self, Method::MomNr | Method::ArmaNrCss | Method::MleNr)
    }

    pub fn needs_equidistant(self) -> bool {
        matches!(self, Method::Mom | Method::MomNr | Method::ArCss | Method::ArmaNrCss)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> std::result::Result<Self, Error> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "mom" => Method::Mom,
            "mom-nr" | "mom_nr" => Method::MomNr,
            "ar" | "ar-css" | "ar_css" => Method::ArCss,
            "arma-nr" | "arma_nr" | "arma-nr-css" | "arma_nr_css" => Method::ArmaNrCss,
            "mle" => Method::Mle,
            "mle-nr" | "mle_nr" => Method::MleNr,
            "rv" => Method::Rv,
            other => return Err(Error::Parse(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Final simplex diameter for iterative fits, 0 for closed forms.
    pub final_tolerance: f64,
    /// A negative (or vanishing) noise-variance estimate was set to 0.
    pub omega2_clamped: bool,
    /// A negative variance estimate from the ARMA back-transform was set to 0.
    pub sigma2_clamped: bool,
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuFit {
    /// `omega2` is 0 for noise-sensitive methods.
    pub params: NoisyOuParams,
    pub loglik: Option<f64>,
    pub method: Method,
    pub n_used: usize,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl OuFit {
    pub(crate) fn closed_form(params: NoisyOuParams, method: Method, n_used: usize) -> Self {
        Self {
            params,
            loglik: None,
            method,
            n_used,
            converged: true,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Fit `ts` with a parametric method. Equidistant methods reject irregular
/// input; aggregate with [`TickSeries::one_minute`] first. `Rv` estimates only
/// `sigma2` and is served by [`realized_variance`].
pub fn fit(ts: &TickSeries, method: Method) -> Result<OuFit> {
    match method {
        Method::Mom => mom_fit(ts),
        Method::MomNr => mom_nr_fit(ts),
        Method::ArCss => ar_css_fit(ts),
        Method::ArmaNrCss => arma_nr_css_fit(ts),
        Method::Mle => mle_fit(ts, false, MleInit::Auto),
        Method::MleNr => mle_fit(ts, true, MleInit::Auto),
        Method::Rv => Err(Error::InvalidArgument("RV is not a parametric fit".into())),
    }
}
