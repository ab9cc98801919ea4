//! Helpers shared by integration tests.

#![allow(dead_code)]

use ounoise::fpt::DimensionlessLevels;
use ounoise::signal::strategy_moments;

/// Brute-force optimum of the scaled profit rate: a 0.02 grid over the
/// search box, then a 0.001 grid around the best coarse cell.
pub fn grid_optimum(c_t: f64, eta_t: f64) -> (f64, f64, f64) {
    let value = |a: f64, b: f64| {
        let lv = DimensionlessLevels::new(a, b).ok()?;
        let m = strategy_moments(&lv, c_t).ok()?;
        (m.z_v <= eta_t && m.z_m.is_finite()).then_some(m.z_m)
    };
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    let scan = |a_range: (f64, f64), b_range: (f64, f64), step: f64, best: &mut (f64, f64, f64)| {
        let na = ((a_range.1 - a_range.0) / step).round() as i64;
        let nb = ((b_range.1 - b_range.0) / step).round() as i64;
        for i in 0..=na {
            let a = a_range.0 + i as f64 * step;
            for j in 0..=nb {
                let b = b_range.0 + j as f64 * step;
                if a < 0.0 || b > a || a > 3.0 || b < -3.0 {
                    continue;
                }
                if let Some(z) = value(a, b) {
                    if z > best.2 {
                        *best = (a, b, z);
                    }
                }
            }
        }
    };
    scan((0.0, 3.0), (-3.0, 3.0), 0.02, &mut best);
    let (a0, b0) = (best.0, best.1);
    scan((a0 - 0.04, a0 + 0.04), (b0 - 0.04, b0 + 0.04), 0.001, &mut best);
    best
}
