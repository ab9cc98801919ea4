//! Entry/exit signals maximizing expected profit per unit time under a cap on
//! the profit variance per unit time.
//!
//! Work happens in the dimensionless system `P~ = sqrt(2 tau / sigma2) (P - mu)`,
//! `t~ = tau t`, where the problem depends only on the cost `c~` and the cap `eta~`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpt::{cycle_moments, DimensionlessLevels, Z_MAX};
use crate::model::OuParams;
use crate::optim::{bisect, golden_section, newton_polish, NelderMead};

/// Narrowest cycle the optimizer considers. Without costs the profit rate is
/// maximized in the limit of a zero-width cycle, which is not a tradeable policy.
pub const MIN_WIDTH: f64 = 1e-3;

/// Entry level `a`, exit level `b <= a` and round-trip cost `c >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPolicy {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SignalPolicy {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) || b > a || c < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "policy needs finite b <= a and c >= 0, got a = {a}, b = {b}, c = {c}"
            )));
        }
        Ok(Self { a, b, c })
    }
}

/// Long-run profit mean and variance per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyMoments {
    pub z_m: f64,
    pub z_v: f64,
}

/// A policy and variance cap expressed in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledProblem {
    pub a_t: f64,
    pub b_t: f64,
    pub c_t: f64,
    pub eta_t: f64,
}

fn scale(p: &OuParams) -> Result<f64> {
    p.validate()?;
    if !(p.sigma2 > 0.0) {
        return Err(Error::Degenerate("sigma2 = 0 has no dimensionless form".into()));
    }
    Ok((2.0 * p.tau / p.sigma2).sqrt())
}

pub fn to_dimensionless(p: &OuParams, policy: &SignalPolicy, eta: f64) -> Result<ScaledProblem> {
    let k = scale(p)?;
    Ok(ScaledProblem {
        a_t: k * (policy.a - p.mu),
        b_t: k * (policy.b - p.mu),
        c_t: k * policy.c,
        eta_t: 2.0 * eta / p.sigma2,
    })
}

/// Inverse of [`to_dimensionless`]: `(policy, eta)`.
pub fn from_dimensionless(p: &OuParams, s: &ScaledProblem) -> Result<(SignalPolicy, f64)> {
    let k = scale(p)?;
    let policy = SignalPolicy { a: p.mu + s.a_t / k, b: p.mu + s.b_t / k, c: s.c_t / k };
    Ok((policy, s.eta_t * p.sigma2 / 2.0))
}

/// Map dimensionless moments to original units.
pub fn moments_to_original(p: &OuParams, m: &StrategyMoments) -> StrategyMoments {
    StrategyMoments {
        z_m: (p.tau * p.sigma2 / 2.0).sqrt() * m.z_m,
        z_v: p.sigma2 / 2.0 * m.z_v,
    }
}

/// Renewal-reward moments of the dimensionless strategy.
pub fn strategy_moments(levels: &DimensionlessLevels, c_t: f64) -> Result<StrategyMoments> {
    if !(c_t >= 0.0) {
        return Err(Error::InvalidArgument(format!("cost must be >= 0, got {c_t}")));
    }
    let (mean, var) = cycle_moments(levels)?;
    if !(mean > 0.0) {
        return Err(Error::UndefinedMoments("zero expected cycle duration (a = b)".into()));
    }
    let profit = levels.a() - levels.b() - c_t;
    Ok(StrategyMoments { z_m: profit / mean, z_v: profit * profit * var / mean.powi(3) })
}

/// Moments of a policy in original units under parameters `p`.
pub fn policy_moments(p: &OuParams, policy: &SignalPolicy) -> Result<StrategyMoments> {
    let s = to_dimensionless(p, policy, 0.0)?;
    let levels = DimensionlessLevels::new(s.a_t, s.b_t)?;
    Ok(moments_to_original(p, &strategy_moments(&levels, s.c_t)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Dimensionless policy; `c` holds `c~`.
    pub policy: SignalPolicy,
    pub z_m_star: f64,
    pub z_v_at_opt: f64,
    /// The variance cap is active at the optimum.
    pub binding: bool,
    /// No policy with positive expected profit exists; levels are 0.
    pub no_trade: bool,
}

impl OptResult {
    fn no_trade(c_t: f64) -> Self {
        Self {
            policy: SignalPolicy { a: 0.0, b: 0.0, c: c_t },
            z_m_star: 0.0,
            z_v_at_opt: 0.0,
            binding: false,
            no_trade: true,
        }
    }
}

const GRID_STEP: f64 = 0.05;

/// Cycle moments split per level: `E T = g(a) - g(b)`, `var T = h(a) - h(b)`.
struct LevelTable {
    z: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
}

fn level_table() -> &'static LevelTable {
    static TABLE: OnceLock<LevelTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = (2.0 * Z_MAX / GRID_STEP).round() as usize;
        let z: Vec<f64> = (0..=n).map(|i| -Z_MAX + i as f64 * GRID_STEP).collect();
        let (mut g, mut h) = (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
        // moments of (z, 0) minus those of (0, 0) = the per-level split, for z >= 0;
        // for z < 0 use (0, z) with opposite sign
        for &zi in &z {
            let (m, v) = if zi >= 0.0 {
                cycle_moments(&DimensionlessLevels::new(zi, 0.0).expect("valid"))
            } else {
                cycle_moments(&DimensionlessLevels::new(0.0, zi).expect("valid"))
                    .map(|(m, v)| (-m, -v))
            }
            .expect("grid inside series domain");
            g.push(m);
            h.push(v);
        }
        LevelTable { z, g, h }
    })
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    z_m: f64,
    z_v: f64,
}

fn evaluate(a: f64, b: f64, c_t: f64) -> Option<Eval> {
    if !(a >= 0.0 && a <= Z_MAX && b >= -Z_MAX && a - b >= MIN_WIDTH) {
        return None;
    }
    let levels = DimensionlessLevels::new(a, b).ok()?;
    let m = strategy_moments(&levels, c_t).ok()?;
    Some(Eval { z_m: m.z_m, z_v: m.z_v })
}

/// Up to `count` well-separated grid points with the highest feasible profit rate.
fn grid_starts(c_t: f64, eta_t: f64, count: usize) -> Vec<[f64; 2]> {
    let t = level_table();
    let min_gap = (MIN_WIDTH / GRID_STEP).ceil() as usize;
    let zero = t.z.iter().position(|z| z.abs() < 1e-12).expect("grid contains 0");
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for i in zero..t.z.len() {
        for j in 0..=i.saturating_sub(min_gap) {
            let e = t.g[i] - t.g[j];
            let profit = t.z[i] - t.z[j] - c_t;
            if !(e > 0.0) || profit <= 0.0 {
                continue;
            }
            let zv = profit * profit * (t.h[i] - t.h[j]) / (e * e * e);
            if zv <= eta_t {
                cands.push((profit / e, i, j));
            }
        }
    }
    cands.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut starts: Vec<[f64; 2]> = Vec::new();
    for (_, i, j) in cands {
        let p = [t.z[i], t.z[j]];
        if starts.iter().all(|s| (s[0] - p[0]).abs().max((s[1] - p[1]).abs()) > 0.2) {
            starts.push(p);
            if starts.len() == count {
                break;
            }
        }
    }
    starts
}

const MULTISTARTS: usize = 5;
const PENALTY: f64 = 1e4;

/// Maximize `Z~_M` subject to `Z~_V <= eta_t`, `b <= a`, `a >= 0`.
/// `eta_t` may be `f64::INFINITY`.
pub fn optimize_signals(c_t: f64, eta_t: f64) -> Result<OptResult> {
    if !(c_t >= 0.0 && c_t.is_finite()) {
        return Err(Error::InvalidArgument(format!("cost must be finite and >= 0, got {c_t}")));
    }
    if !(eta_t >= 0.0) {
        return Err(Error::InvalidArgument(format!("variance cap must be >= 0, got {eta_t}")));
    }
    if eta_t == 0.0 {
        return Ok(OptResult::no_trade(c_t));
    }
    let starts = grid_starts(c_t, eta_t, MULTISTARTS);
    if starts.is_empty() {
        return Ok(OptResult::no_trade(c_t));
    }

    let nm = NelderMead::default().with_xtol(1e-10).with_max_iter(4000);
    let objective = |x: &[f64]| match evaluate(x[0], x[1], c_t) {
        Some(e) => {
            let excess = if eta_t.is_finite() { ((e.z_v - eta_t) / eta_t).max(0.0) } else { 0.0 };
            -e.z_m + PENALTY * excess * excess
        }
        None => f64::INFINITY,
    };
    let best = starts
        .iter()
        .map(|s| nm.minimize(objective, s, &[0.05, 0.05]))
        .min_by(|x, y| x.fx.total_cmp(&y.fx))
        .expect("at least one start");
    let (mut a, mut b) = (best.x[0], best.x[1]);
    let at = evaluate(a, b, c_t).ok_or_else(|| Error::Numerical("optimizer left the domain".into()))?;

    let binding = eta_t.is_finite() && at.z_v > eta_t * (1.0 - 1e-6);
    if !binding {
        // the simplex stops anywhere in a flat bowl; Newton pins the stationary point
        let neg_z_m = |x: &[f64]| evaluate(x[0], x[1], c_t).map_or(f64::INFINITY, |e| -e.z_m);
        if let Some(x) = newton_polish(neg_z_m, &[a, b], 1e-4, 0.01) {
            let ok = evaluate(x[0], x[1], c_t)
                .is_some_and(|e| e.z_m >= at.z_m - 1e-12 && !(eta_t.is_finite() && e.z_v > eta_t));
            if ok {
                (a, b) = (x[0], x[1]);
            }
        }
    }
    if binding {
        (a, b) = polish_on_cap(a, b, c_t, eta_t).unwrap_or((a, b));
        // a penalty solution that still violates the cap is pulled back onto it
        if evaluate(a, b, c_t).is_some_and(|e| e.z_v > eta_t * (1.0 + 1e-9)) {
            if let Some(bb) = cap_crossing(a, b, c_t, eta_t) {
                b = bb;
            }
        }
    }
    let fin = evaluate(a, b, c_t).ok_or_else(|| Error::Numerical("polish left the domain".into()))?;
    if !(fin.z_m > 0.0) {
        return Ok(OptResult::no_trade(c_t));
    }
    Ok(OptResult {
        policy: SignalPolicy { a, b, c: c_t },
        z_m_star: fin.z_m,
        z_v_at_opt: fin.z_v,
        binding,
        no_trade: false,
    })
}

/// Exit level near `b0` on the curve `Z~_V(a, b) = eta_t` for fixed `a`.
fn cap_crossing(a: f64, b0: f64, c_t: f64, eta_t: f64) -> Option<f64> {
    let f = |b: f64| evaluate(a, b, c_t).map_or(f64::NAN, |e| e.z_v - eta_t);
    let upper = a - c_t.max(MIN_WIDTH);
    let mut delta = 0.02;
    while delta < 2.0 {
        let lo = (b0 - delta).max(-Z_MAX);
        let hi = (b0 + delta).min(upper);
        if lo < hi {
            if let Some(r) = bisect(f, lo, hi, 1e-14) {
                return Some(r);
            }
        }
        delta *= 2.0;
    }
    None
}

/// One-dimensional search along the active variance cap.
fn polish_on_cap(a0: f64, b0: f64, c_t: f64, eta_t: f64) -> Option<(f64, f64)> {
    let b_of = |a: f64| cap_crossing(a, b0, c_t, eta_t);
    let neg_zm = |a: f64| {
        b_of(a).and_then(|b| evaluate(a, b, c_t)).map_or(f64::INFINITY, |e| -e.z_m)
    };
    let lo = (a0 - 0.05).max(0.0);
    let hi = (a0 + 0.05).min(Z_MAX);
    let (a, fa) = golden_section(neg_zm, lo, hi, 1e-11);
    if !fa.is_finite() {
        return None;
    }
    Some((a, b_of(a)?))
}

/// Optimal profit rate over a sweep of variance caps.
pub fn frontier(c_t: f64, etas_t: &[f64]) -> Result<Vec<OptResult>> {
    etas_t.iter().map(|&e| optimize_signals(c_t, e)).collect()
}

/// Profit rate promised by optimizing under `biased` versus what the chosen
/// policy earns under `truth`, both in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasImpact {
    pub claimed_z_m: f64,
    pub actual_z_m: f64,
    pub policy: SignalPolicy,
}

pub fn bias_impact(truth: &OuParams, biased: &OuParams, c: f64, eta: f64) -> Result<BiasImpact> {
    let probe = to_dimensionless(biased, &SignalPolicy { a: biased.mu, b: biased.mu, c }, eta)?;
    let opt = optimize_signals(probe.c_t, probe.eta_t)?;
    if opt.no_trade {
        let policy = SignalPolicy { a: biased.mu, b: biased.mu, c };
        return Ok(BiasImpact { claimed_z_m: 0.0, actual_z_m: 0.0, policy });
    }
    let scaled = ScaledProblem { a_t: opt.policy.a, b_t: opt.policy.b, c_t: probe.c_t, eta_t: probe.eta_t };
    let (policy, _) = from_dimensionless(biased, &scaled)?;
    let claimed = moments_to_original(biased, &StrategyMoments { z_m: opt.z_m_star, z_v: opt.z_v_at_opt });
    let actual = policy_moments(truth, &policy)?;
    Ok(BiasImpact { claimed_z_m: claimed.z_m, actual_z_m: actual.z_m, policy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fpt::cycle_mean;
    use approx::assert_relative_eq;

    #[test]
    fn dimensionless_arithmetic_and_round_trip() {
        let p = OuParams::new(1.0, 10.0, 1e-4).unwrap();
        let pol = SignalPolicy::new(1.01, 0.99, 0.0015).unwrap();
        let s = to_dimensionless(&p, &pol, 5e-5).unwrap();
        assert_relative_eq!(s.a_t, 0.01 * (2.0f64 * 10.0 / 1e-4).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(s.a_t, 4.47213595499958, max_relative = 1e-12);
        assert_relative_eq!(s.eta_t, 1.0, max_relative = 1e-14);
        let (back, eta) = from_dimensionless(&p, &s).unwrap();
        assert_relative_eq!(back.a, pol.a, max_relative = 1e-12);
        assert_relative_eq!(back.b, pol.b, max_relative = 1e-12);
        assert_relative_eq!(back.c, pol.c, max_relative = 1e-12);
        assert_relative_eq!(eta, 5e-5, max_relative = 1e-12);
        let at_mean = to_dimensionless(&p, &SignalPolicy::new(1.0, 0.9, 0.0).unwrap(), 1.0).unwrap();
        assert_eq!(at_mean.a_t, 0.0);
        assert!(to_dimensionless(&OuParams::new(0.0, 1.0, 0.0).unwrap(), &pol, 1.0).is_err());
    }

    #[test]
    fn moments_basic_identities() {
        let lv = DimensionlessLevels::new(1.0, -1.0).unwrap();
        let zero = strategy_moments(&lv, 2.0).unwrap();
        assert_eq!((zero.z_m, zero.z_v), (0.0, 0.0));
        let m = strategy_moments(&lv, 0.5).unwrap();
        assert_relative_eq!(m.z_m, 1.5 / cycle_mean(&lv).unwrap(), max_relative = 1e-15);
        let m2 = strategy_moments(&lv, 1.0).unwrap();
        let m0 = strategy_moments(&lv, 0.0).unwrap();
        assert_relative_eq!(m0.z_m - m.z_m, m.z_m - m2.z_m, max_relative = 1e-12);
        let flat = DimensionlessLevels::new(0.4, 0.4).unwrap();
        assert!(matches!(strategy_moments(&flat, 0.0), Err(Error::UndefinedMoments(_))));
    }

    #[test]
    fn unconstrained_optimum_is_symmetric() {
        for c in [0.1, 0.5, 1.0] {
            let r = optimize_signals(c, f64::INFINITY).unwrap();
            assert!(!r.binding && !r.no_trade);
            assert!((r.policy.a + r.policy.b).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn zero_cost_stays_finite() {
        let r = optimize_signals(0.0, f64::INFINITY).unwrap();
        assert!(r.policy.a > 0.0);
        // supremum 1 / sqrt(2 pi) is reached only by a zero-width cycle
        assert!(r.z_m_star < 1.0 / (2.0 * std::f64::consts::PI).sqrt());
        assert!(r.z_m_star > 0.398);
    }

    #[test]
    fn binding_cap_is_met_and_tighter_caps_cost_profit() {
        let loose = optimize_signals(0.5, 2.0).unwrap();
        let tight = optimize_signals(0.5, 0.05).unwrap();
        assert!(tight.binding);
        assert_relative_eq!(tight.z_v_at_opt, 0.05, max_relative = 1e-8);
        assert!(tight.z_m_star <= loose.z_m_star + 1e-12);
        assert!(optimize_signals(0.5, 0.0).unwrap().no_trade);
        assert!(optimize_signals(-1.0, 1.0).is_err());
    }

    #[test]
    fn bias_impact_identity_and_sign() {
        let truth = OuParams::new(0.0, 10.0, 1e-4).unwrap();
        let same = bias_impact(&truth, &truth, 0.0015, 5e-5).unwrap();
        assert_relative_eq!(same.claimed_z_m, same.actual_z_m, max_relative = 1e-9);
        let biased = OuParams::new(0.0, 100.0, 1e-4).unwrap();
        let r = bias_impact(&truth, &biased, 0.0015, 5e-5).unwrap();
        assert!(r.claimed_z_m > r.actual_z_m, "{r:?}");
        assert!(r.actual_z_m <= same.actual_z_m * (1.0 + 1e-9));
    }
}
