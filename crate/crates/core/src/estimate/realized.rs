//! Realized-variance baselines.

use crate::series::TickSeries;

/// Sum of squared increments.
pub fn realized_variance(ts: &TickSeries) -> f64 {
    ts.values().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

/// Noise variance implied by the gap between realized variance `rv` and a
/// noise-robust variance measure `rm` over `n` increments, clamped at 0.
pub fn noise_var_from_rv(rv: f64, rm: f64, n: usize) -> f64 {
    ((rv - rm) / (2.0 * n.max(1) as f64)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_simple() {
        assert_eq!(realized_variance(&TickSeries::equidistant(vec![3.0; 10]).unwrap()), 0.0);
        let ts = TickSeries::equidistant(vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(realized_variance(&ts), 5.0);
        assert_eq!(noise_var_from_rv(5.0, 1.0, 2), 1.0);
        assert_eq!(noise_var_from_rv(1.0, 5.0, 2), 0.0);
    }
}
