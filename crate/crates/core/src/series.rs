//! Irregularly spaced observations on a single trading day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative spacing tolerance for treating a series as equidistant.
pub const EQUIDISTANT_TOL: f64 = 1e-9;

/// Minutes in the 9:30-16:00 session.
pub const SESSION_MINUTES: usize = 390;

/// Observation times in `[0, 1]` (fraction of the session) with values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct TickSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSeries> for TickSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        TickSeries::new(raw.times, raw.values)
    }
}

impl TickSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "times and values differ in length ({} vs {})",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "series needs at least 2 points, got {}",
                times.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {v}")));
        }
        if !(times[0] >= 0.0) || !(times[times.len() - 1] <= 1.0) {
            return Err(Error::InvalidArgument("times must lie in [0, 1]".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { times, values })
    }

    /// Equally spaced series covering `[0, 1]` with `values.len() - 1` intervals.
    pub fn equidistant(values: Vec<f64>) -> Result<Self> {
        let n = values.len().saturating_sub(1).max(1) as f64;
        let times = (0..values.len()).map(|i| i as f64 / n).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.times, self.values)
    }

    /// Common spacing if the series is equidistant within [`EQUIDISTANT_TOL`].
    pub fn spacing(&self) -> Result<f64> {
        let n = self.len() - 1;
        let delta = (self.times[n] - self.times[0]) / n as f64;
        let worst = self
            .times
            .windows(2)
            .map(|w| ((w[1] - w[0]) - delta).abs() / delta)
            .fold(0.0, f64::max);
        if worst < EQUIDISTANT_TOL {
            Ok(delta)
        } else {
            Err(Error::NotEquidistant(worst))
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.times.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Every `k`-th observation starting with the first.
    pub fn every_kth(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("subsampling step must be >= 1".into()));
        }
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .step_by(k)
            .map(|(t, v)| (*t, *v))
            .unzip();
        Self::new(times, values)
    }

    /// Previous-tick sampling at `bins + 1` equally spaced boundaries `j / bins`.
    ///
    /// Each boundary takes the last value observed at or before it; boundaries
    /// preceding the first tick take the first observed value.
    pub fn previous_tick(&self, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("need at least one bin".into()));
        }
        let mut values = Vec::with_capacity(bins + 1);
        let mut idx = 0usize;
        for j in 0..=bins {
            let boundary = j as f64 / bins as f64;
            while idx + 1 < self.len() && self.times[idx + 1] <= boundary {
                idx += 1;
            }
            values.push(self.values[idx]);
        }
        Self::equidistant(values)
    }

    /// One-minute previous-tick aggregation over the session.
    pub fn one_minute(&self) -> Result<Self> {
        self.previous_tick(SESSION_MINUTES)
    }

    /// Return a copy without the observations at the given (sorted or unsorted) indices.
    pub fn without(&self, drop: &[usize]) -> Result<Self> {
        let mut keep = vec![true; self.len()];
        for &i in drop {
            if i < keep.len() {
                keep[i] = false;
            }
        }
        let (times, values) = self
            .times
            .iter()
            .zip(&self.values)
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|((t, v), _)| (*t, *v))
            .unzip();
        Self::new(times, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_series() {
        assert!(TickSeries::new(vec![0.0], vec![1.0]).is_err());
        assert!(TickSeries::new(vec![0.0, 0.5], vec![1.0]).is_err());
        assert!(TickSeries::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(TickSeries::new(vec![0.5, 0.2], vec![1.0, 2.0]).is_err());
        assert!(TickSeries::new(vec![0.0, 1.5], vec![1.0, 2.0]).is_err());
        assert!(TickSeries::new(vec![0.0, 0.5], vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn equidistant_spacing() {
        let s = TickSeries::equidistant(vec![0.0; 391]).unwrap();
        assert!((s.spacing().unwrap() - 1.0 / 390.0).abs() < 1e-15);
        let s = TickSeries::new(vec![0.0, 0.1, 0.3], vec![0.0; 3]).unwrap();
        assert!(matches!(s.spacing(), Err(Error::NotEquidistant(_))));
    }

    #[test]
    fn previous_tick_carries_values() {
        let s = TickSeries::new(vec![0.1, 0.3, 0.55], vec![1.0, 2.0, 3.0]).unwrap();
        let agg = s.previous_tick(4).unwrap();
        // boundaries 0, .25, .5, .75, 1
        assert_eq!(agg.values(), &[1.0, 1.0, 2.0, 3.0, 3.0]);
        let exact = TickSeries::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(exact.previous_tick(2).unwrap().values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn subsampling() {
        let s = TickSeries::equidistant((0..10).map(f64::from).collect()).unwrap();
        assert_eq!(s.every_kth(3).unwrap().values(), &[0.0, 3.0, 6.0, 9.0]);
        assert_eq!(s.without(&[0, 5, 9]).unwrap().len(), 7);
    }

    #[test]
    fn deserialization_enforces_invariants() {
        let raw = RawSeries { times: vec![0.5, 0.1], values: vec![1.0, 2.0] };
        assert!(TickSeries::try_from(raw).is_err());
    }
}
