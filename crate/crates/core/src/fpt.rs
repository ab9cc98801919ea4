//! First-passage-time moments of the dimensionless OU process
//! `dP = -P dt + sqrt(2) dW`.
//!
//! The moments are power series in `sqrt(2) z` whose terms grow to about
//! `e^{z^2/2}` before converging. For negative `z` they alternate, so every
//! sum is carried in double-double arithmetic; plain `f64` loses all digits
//! near `z = -8`.
//!
//! The term recurrence uses exact two-step ratios
//! `t_{k+2} = t_k z^2 k / ((k+1)(k+2))` seeded with `t_1 = sqrt(2 pi) z`,
//! `t_2 = z^2`, and the digamma weights follow `psi(k/2 + 1) = psi(k/2) + 2/k`.

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Largest `|z|` at which the series are evaluated.
pub const Z_MAX: f64 = 8.0;

const MAX_TERMS: usize = 400;
const REL_STOP: f64 = 1e-15;
const SQRT_2PI: Dd = Dd::new(2.5066282746310007, -1.8328579980459167e-16);
/// `psi(1/2) - psi(1) = -2 ln 2`.
const MINUS_TWO_LN2: Dd = Dd::new(-1.3862943611198906, -4.638093627692599e-17);

/// Entry and exit levels in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessLevels {
    a_t: f64,
    b_t: f64,
}

impl DimensionlessLevels {
    /// Requires `a_t >= 0` and `b_t <= a_t`.
    pub fn new(a_t: f64, b_t: f64) -> Result<Self> {
        if !(a_t.is_finite() && b_t.is_finite()) {
            return Err(Error::InvalidArgument(format!("levels must be finite, got ({a_t}, {b_t})")));
        }
        if a_t < 0.0 || b_t > a_t {
            return Err(Error::InvalidArgument(format!(
                "need a >= 0 and b <= a, got a = {a_t}, b = {b_t}"
            )));
        }
        Ok(Self { a_t, b_t })
    }

    pub fn a(&self) -> f64 {
        self.a_t
    }

    pub fn b(&self) -> f64 {
        self.b_t
    }
}

/// Raw series sums at one argument, split into odd and even powers.
#[derive(Debug, Clone, Copy)]
struct Sums {
    odd: Dd,
    even: Dd,
    odd_w: Dd,
    even_w: Dd,
    terms: usize,
    last_ratio: f64,
}

fn check_domain(z: f64) -> Result<()> {
    if z.is_finite() && z.abs() <= Z_MAX {
        Ok(())
    } else {
        Err(Error::Domain(z, Z_MAX))
    }
}

/// Sums of `t_k = (sqrt(2) z)^k Gamma(k/2) / k!` and of `t_k (psi(k/2) - psi(1))`.
fn sums(z: f64) -> Result<Sums> {
    check_domain(z)?;
    let mut s = Sums {
        odd: Dd::ZERO,
        even: Dd::ZERO,
        odd_w: Dd::ZERO,
        even_w: Dd::ZERO,
        terms: 0,
        last_ratio: 0.0,
    };
    if z == 0.0 {
        return Ok(s);
    }
    let z2 = Dd::square(z);
    let mut t_odd = SQRT_2PI.mul_f64(z);
    let mut t_even = z2;
    let mut w_odd = MINUS_TWO_LN2;
    let mut w_even = Dd::ZERO;
    let mut k = 1usize;
    while k < MAX_TERMS {
        s.odd = s.odd + t_odd;
        s.odd_w = s.odd_w + t_odd * w_odd;
        s.even = s.even + t_even;
        s.even_w = s.even_w + t_even * w_even;
        s.terms = k + 1;

        let total = (s.odd + s.even).to_f64().abs();
        let total_w = (s.odd_w + s.even_w).to_f64().abs();
        let big = t_odd.to_f64().abs().max(t_even.to_f64().abs());
        let big_w = (t_odd * w_odd).to_f64().abs().max((t_even * w_even).to_f64().abs());
        s.last_ratio = big / total;
        if big < REL_STOP * total && big_w <= REL_STOP * total_w {
            break;
        }

        // advance odd term k -> k + 2 and even term k + 1 -> k + 3
        let ko = k as f64;
        let ke = (k + 1) as f64;
        t_odd = (t_odd * z2).mul_f64(ko).div_f64((ko + 1.0) * (ko + 2.0));
        t_even = (t_even * z2).mul_f64(ke).div_f64((ke + 1.0) * (ke + 2.0));
        w_odd = w_odd + Dd::from_f64(2.0).div_f64(ko);
        w_even = w_even + Dd::from_f64(2.0).div_f64(ke);
        k += 2;
    }
    Ok(s)
}

fn half(x: Dd) -> Dd {
    x.mul_f64(0.5)
}

/// `phi_1(z) = 1/2 sum_{k>=1} (sqrt(2) z)^k Gamma(k/2) / k!`.
pub fn phi1(z: f64) -> Result<f64> {
    let s = sums(z)?;
    Ok(half(s.odd + s.even).to_f64())
}

/// `phi_2(z) = 1/2 sum_{k>=1} (sqrt(2) z)^k Gamma(k/2) (psi(k/2) - psi(1)) / k!`.
pub fn phi2(z: f64) -> Result<f64> {
    let s = sums(z)?;
    Ok(half(s.odd_w + s.even_w).to_f64())
}

/// Convergence report for the series at `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesStats {
    pub phi1: f64,
    pub phi2: f64,
    /// Number of terms summed.
    pub terms: usize,
    /// Largest final term relative to the partial sum.
    pub last_ratio: f64,
}

pub fn series_stats(z: f64) -> Result<SeriesStats> {
    let s = sums(z)?;
    Ok(SeriesStats {
        phi1: half(s.odd + s.even).to_f64(),
        phi2: half(s.odd_w + s.even_w).to_f64(),
        terms: s.terms,
        last_ratio: s.last_ratio,
    })
}

/// Expected first passage time from `from` to `to`.
pub fn passage_mean(from: f64, to: f64) -> Result<f64> {
    let (x, y) = if to >= from { (from, to) } else { (-from, -to) };
    let (sx, sy) = (sums(x)?, sums(y)?);
    Ok(half((sy.odd + sy.even) - (sx.odd + sx.even)).to_f64())
}

/// Variance of the first passage time from `from` to `to`.
pub fn passage_var(from: f64, to: f64) -> Result<f64> {
    let (x, y) = if to >= from { (from, to) } else { (-from, -to) };
    let (sx, sy) = (sums(x)?, sums(y)?);
    let p1 = |s: &Sums| half(s.odd + s.even);
    let p2 = |s: &Sums| half(s.odd_w + s.even_w);
    let v = p1(&sy) * p1(&sy) - p2(&sy) + p2(&sx) - p1(&sx) * p1(&sx);
    Ok(v.to_f64())
}

/// Expected duration of a trading cycle `a -> b -> a`.
pub fn cycle_mean(levels: &DimensionlessLevels) -> Result<f64> {
    if levels.a_t == levels.b_t {
        return Ok(0.0);
    }
    let (sa, sb) = (sums(levels.a_t)?, sums(levels.b_t)?);
    Ok((sa.odd - sb.odd).to_f64())
}

/// `w_1(z) = phi_1(z)^2 - phi_1(-z)^2` and `w_2(z) = phi_2(z) - phi_2(-z)`.
fn w_pair(s: &Sums) -> (Dd, Dd) {
    // (E + O)^2 - (E - O)^2 = 4 E O with E, O the halved even and odd sums
    let w1 = s.even * s.odd;
    (w1, s.odd_w)
}

/// Variance of the trading-cycle duration, the sum of the two leg variances.
pub fn cycle_var(levels: &DimensionlessLevels) -> Result<f64> {
    if levels.a_t == levels.b_t {
        return Ok(0.0);
    }
    let (sa, sb) = (sums(levels.a_t)?, sums(levels.b_t)?);
    let (w1a, w2a) = w_pair(&sa);
    let (w1b, w2b) = w_pair(&sb);
    let v = (w1a - w1b - w2a + w2b).to_f64();
    if v < -1e-12 {
        return Err(Error::Numerical(format!("negative cycle variance {v:.3e}")));
    }
    Ok(v.max(0.0))
}

/// Both cycle moments with a single series evaluation per level.
pub fn cycle_moments(levels: &DimensionlessLevels) -> Result<(f64, f64)> {
    if levels.a_t == levels.b_t {
        return Ok((0.0, 0.0));
    }
    let (sa, sb) = (sums(levels.a_t)?, sums(levels.b_t)?);
    let mean = (sa.odd - sb.odd).to_f64();
    let (w1a, w2a) = w_pair(&sa);
    let (w1b, w2b) = w_pair(&sb);
    let v = (w1a - w1b - w2a + w2b).to_f64();
    if v < -1e-12 {
        return Err(Error::Numerical(format!("negative cycle variance {v:.3e}")));
    }
    Ok((mean, v.max(0.0)))
}
