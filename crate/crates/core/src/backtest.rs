//! Daily pairs-trading loop: forecast the day's parameters from past fits,
//! choose signals, decide whether to trade, then run the switching policy
//! over the day's spread path.
//!
//! Planning never sees intraday data of the day being traded: it is built from
//! a [`PlanningInput`], which holds past fits and the opening value only.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{self, Method};
use crate::forecast::{forecast_next, DailyParamHistory, DailyRecord, HAR_LAGS};
use crate::ingest::{build_spread, clean, RawTick};
use crate::model::OuParams;
use crate::series::TickSeries;
use crate::signal::{from_dimensionless, moments_to_original, optimize_signals, ScaledProblem, SignalPolicy, StrategyMoments};

pub const DEFAULT_COST: f64 = 0.0015;
pub const DEFAULT_ETAS: [f64; 3] = [1e-5, 5e-5, f64::INFINITY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Round-trip cost in log-return units.
    pub cost: f64,
    /// Variance caps per day; `inf` means unconstrained.
    pub etas: Vec<f64>,
    /// Minimum expected profit per day.
    pub zetas: Vec<f64>,
    /// Days of responses in each forecast regression.
    pub history: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            cost: DEFAULT_COST,
            etas: DEFAULT_ETAS.to_vec(),
            zetas: default_zetas(),
            history: crate::forecast::DEFAULT_WINDOW,
        }
    }
}

/// 0, 0.001, ..., 0.02, then coarser up to 0.7.
pub fn default_zetas() -> Vec<f64> {
    let mut z: Vec<f64> = (0..=20).map(|i| f64::from(i) / 1000.0).collect();
    z.extend([0.025, 0.03, 0.04, 0.05, 0.075, 0.1, 0.2, 0.35, 0.5, 0.7]);
    z
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost must be finite and >= 0, got {}", self.cost)));
        }
        if self.history < HAR_LAGS + 1 {
            return Err(Error::InvalidArgument(format!(
                "history must be >= {}, got {}",
                HAR_LAGS + 1,
                self.history
            )));
        }
        if self.etas.is_empty() || self.etas.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidArgument("need at least one variance cap, all > 0".into()));
        }
        if self.zetas.is_empty() || self.zetas.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::InvalidArgument("need at least one profit threshold, all >= 0".into()));
        }
        Ok(())
    }

    /// Past days with a usable fit required before the first traded day.
    pub fn required_history(&self) -> usize {
        self.history + HAR_LAGS + 1
    }
}

/// Signals for one day in spread units. The policy is two-sided: short the
/// spread at or above `upper`, long at or below `lower`, switch on the far side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradePlan {
    pub forecast: OuParams,
    /// `a` is the upper level, `b` the lower, `c` the round-trip cost.
    pub policy: SignalPolicy,
    /// Expected profit per day under the forecast.
    pub z_m: f64,
    pub z_v: f64,
    pub eta: f64,
}

impl TradePlan {
    pub fn upper(&self) -> f64 {
        self.policy.a
    }

    pub fn lower(&self) -> f64 {
        self.policy.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SkipReason {
    /// Best expected profit is below the threshold.
    BelowThreshold { z_m: f64 },
    /// No policy has positive expected profit within the variance cap.
    NoTrade,
    /// Forecast could not be turned into a policy.
    Degenerate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plan {
    Trade(TradePlan),
    Skip(SkipReason),
}

/// Optimal policy for a forecast before the profit threshold is applied.
pub fn optimize_day(forecast: &OuParams, cost: f64, eta: f64) -> std::result::Result<TradePlan, SkipReason> {
    if forecast.validate().is_err() || !(forecast.sigma2 > 0.0) {
        return Err(SkipReason::Degenerate(format!("unusable forecast {forecast:?}")));
    }
    let k = (2.0 * forecast.tau / forecast.sigma2).sqrt();
    let c_t = k * cost;
    let eta_t = 2.0 * eta / forecast.sigma2;
    let opt = optimize_signals(c_t, eta_t).map_err(|e| SkipReason::Degenerate(e.to_string()))?;
    if opt.no_trade {
        return Err(SkipReason::NoTrade);
    }
    let scaled = ScaledProblem { a_t: opt.policy.a, b_t: opt.policy.b, c_t, eta_t };
    let (policy, _) = from_dimensionless(forecast, &scaled).map_err(|e| SkipReason::Degenerate(e.to_string()))?;
    let m = moments_to_original(forecast, &StrategyMoments { z_m: opt.z_m_star, z_v: opt.z_v_at_opt });
    Ok(TradePlan { forecast: *forecast, policy, z_m: m.z_m, z_v: m.z_v, eta })
}

/// Trade when the optimal expected profit per day reaches `zeta`.
pub fn plan_day(forecast: &OuParams, cost: f64, eta: f64, zeta: f64) -> Plan {
    match optimize_day(forecast, cost, eta) {
        Ok(plan) if plan.z_m >= zeta => Plan::Trade(plan),
        Ok(plan) => Plan::Skip(SkipReason::BelowThreshold { z_m: plan.z_m }),
        Err(reason) => Plan::Skip(reason),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Sold the spread; gains when it falls.
    Short,
    /// Bought the spread; gains when it rises.
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub side: Side,
    pub entry_time: f64,
    pub entry_value: f64,
    pub exit_time: f64,
    pub exit_value: f64,
    pub cost: f64,
    /// Closed by the end of the session rather than by a signal.
    pub forced: bool,
}

impl Trade {
    pub fn pnl(&self) -> f64 {
        match self.side {
            Side::Short => self.entry_value - self.exit_value - self.cost,
            Side::Long => self.exit_value - self.entry_value - self.cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub traded: bool,
    /// Completed round trips, the forced close included.
    pub n_trades: usize,
    pub profit: f64,
    pub forced_close_pnl: f64,
    pub policy: Option<SignalPolicy>,
    pub trades: Vec<Trade>,
}

impl DayResult {
    pub fn idle() -> Self {
        Self { traded: false, n_trades: 0, profit: 0.0, forced_close_pnl: 0.0, policy: None, trades: Vec::new() }
    }
}

/// Run the switching policy over one day, filling at observed values.
/// The first position may open at either level; the last tick only closes.
pub fn execute_day(plan: &TradePlan, spread: &TickSeries) -> DayResult {
    let (upper, lower, cost) = (plan.upper(), plan.lower(), plan.policy.c);
    let (t, x) = (spread.times(), spread.values());
    let mut trades = Vec::new();
    let mut open: Option<(Side, f64, f64)> = None;
    let close = |(side, t0, x0): (Side, f64, f64), t1: f64, x1: f64, forced: bool| Trade {
        side,
        entry_time: t0,
        entry_value: x0,
        exit_time: t1,
        exit_value: x1,
        cost,
        forced,
    };
    let last = x.len().saturating_sub(1);
    for i in 0..x.len() {
        if i == last {
            if let Some(pos) = open.take() {
                trades.push(close(pos, t[i], x[i], true));
            }
            break;
        }
        open = match open {
            None if x[i] >= upper => Some((Side::Short, t[i], x[i])),
            None if x[i] <= lower => Some((Side::Long, t[i], x[i])),
            Some(pos @ (Side::Short, ..)) if x[i] <= lower => {
                trades.push(close(pos, t[i], x[i], false));
                Some((Side::Long, t[i], x[i]))
            }
            Some(pos @ (Side::Long, ..)) if x[i] >= upper => {
                trades.push(close(pos, t[i], x[i], false));
                Some((Side::Short, t[i], x[i]))
            }
            keep => keep,
        };
    }
    let forced_close_pnl = trades.iter().filter(|tr| tr.forced).map(Trade::pnl).sum();
    DayResult {
        traded: true,
        n_trades: trades.len(),
        profit: trades.iter().map(Trade::pnl).sum(),
        forced_close_pnl,
        policy: Some(plan.policy),
        trades,
    }
}

/// One pair-day: the day's estimated parameters (if estimation succeeded)
/// and its full cleaned spread path.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDay {
    pub day: i64,
    pub fit: Option<OuParams>,
    pub spread: TickSeries,
}

impl PairDay {
    pub fn open_value(&self) -> f64 {
        self.spread.values()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    pub pair: String,
    /// Ordered by day.
    pub days: Vec<PairDay>,
}

/// Clean both legs, form the spread and estimate the day's parameters.
/// Equidistant methods are fitted to the one-minute sampling of the spread.
/// A failed estimate leaves `fit` empty; a failed clean is an error.
pub fn prepare_pair_day(
    day: i64,
    leg_a: &[RawTick],
    leg_b: &[RawTick],
    exchange: &str,
    method: Method,
) -> Result<PairDay> {
    let (a, _) = clean(leg_a, exchange)?;
    let (b, _) = clean(leg_b, exchange)?;
    let spread = build_spread(&a, &b)?;
    // equidistant estimators see the one-minute previous-tick grid
    let sample = if method.needs_equidistant() { spread.one_minute()? } else { spread.clone() };
    let fit = estimate::fit(&sample, method)
        .ok()
        .map(|f| f.params.ou)
        .filter(|p| p.validate().is_ok() && p.sigma2 > 0.0);
    Ok(PairDay { day, fit, spread })
}

/// Everything planning may look at: fits of earlier days and today's open.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningInput {
    pub history: DailyParamHistory,
    pub open: f64,
}

impl PlanningInput {
    /// Built from days strictly before the planned one; days without a fit are dropped.
    pub fn new(past: &[PairDay], open: f64) -> Result<Self> {
        let records = past
            .iter()
            .filter_map(|d| {
                d.fit.map(|f| DailyRecord {
                    day: d.day,
                    mu: f.mu,
                    tau: f.tau,
                    sigma2: f.sigma2,
                    open_value: d.open_value(),
                })
            })
            .collect();
        Ok(Self { history: DailyParamHistory::new(records)?, open })
    }

    pub fn forecast(&self, history: usize) -> Result<OuParams> {
        forecast_next(&self.history, history, self.open)
    }
}

/// Outcome of one pair-day under one variance cap, before thresholding.
#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    z_m: f64,
    result: DayResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub pair: String,
    pub eta: f64,
    pub zeta: f64,
    pub eval_days: usize,
    pub traded_days: usize,
    pub total_profit: f64,
    pub avg_daily_profit: f64,
    pub avg_daily_trades: f64,
}

/// A trade with its context. Whether it is taken under threshold `zeta`
/// is `z_m >= zeta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub pair: String,
    pub day: i64,
    pub eta: f64,
    pub z_m: f64,
    pub trade: Trade,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Ordered by pair, then eta, then zeta as configured.
    pub rows: Vec<ReportRow>,
    pub trades: Vec<TradeRecord>,
}

impl BacktestReport {
    /// Sum over pairs of the average daily profit.
    pub fn total_profit(&self, eta: f64, zeta: f64) -> f64 {
        self.rows.iter().filter(|r| r.eta == eta && r.zeta == zeta).map(|r| r.avg_daily_profit).sum()
    }

    pub fn traded_days(&self, eta: f64, zeta: f64) -> usize {
        self.rows.iter().filter(|r| r.eta == eta && r.zeta == zeta).map(|r| r.traded_days).sum()
    }
}

/// Index of the first day with enough usable history before it.
fn first_eval_day(days: &[PairDay], required: usize) -> Option<usize> {
    let mut seen = 0;
    for (i, d) in days.iter().enumerate() {
        if seen >= required {
            return Some(i);
        }
        seen += usize::from(d.fit.is_some());
    }
    None
}

fn run_pair_day(pair: &PairData, i: usize, cfg: &BacktestConfig) -> Vec<Option<Candidate>> {
    let day = &pair.days[i];
    let forecast = PlanningInput::new(&pair.days[..i], day.open_value()).and_then(|p| p.forecast(cfg.history));
    cfg.etas
        .iter()
        .map(|&eta| {
            let plan = optimize_day(forecast.as_ref().ok()?, cfg.cost, eta).ok()?;
            Some(Candidate { z_m: plan.z_m, result: execute_day(&plan, &day.spread) })
        })
        .collect()
}

/// Walk every pair forward day by day over the full `eta` x `zeta` sweep.
/// Errors when a pair never accumulates enough history to be traded.
pub fn run_backtest(pairs: &[PairData], cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate()?;
    let mut report = BacktestReport::default();
    for pair in pairs {
        if pair.days.windows(2).any(|w| w[0].day >= w[1].day) {
            return Err(Error::InvalidHistory(format!("days of pair {} are not increasing", pair.pair)));
        }
        let first = first_eval_day(&pair.days, cfg.required_history()).ok_or_else(|| {
            Error::InsufficientData(format!(
                "pair {} has fewer than {} usable days before any trading day",
                pair.pair,
                cfg.required_history()
            ))
        })?;
        let outcomes: Vec<Vec<Option<Candidate>>> =
            (first..pair.days.len()).into_par_iter().map(|i| run_pair_day(pair, i, cfg)).collect();
        let eval_days = outcomes.len();

        for (k, &eta) in cfg.etas.iter().enumerate() {
            for &zeta in &cfg.zetas {
                let taken = outcomes.iter().filter_map(|o| o[k].as_ref()).filter(|c| c.z_m >= zeta);
                let (mut traded, mut profit, mut n) = (0usize, 0.0, 0usize);
                for c in taken {
                    traded += 1;
                    profit += c.result.profit;
                    n += c.result.n_trades;
                }
                report.rows.push(ReportRow {
                    pair: pair.pair.clone(),
                    eta,
                    zeta,
                    eval_days,
                    traded_days: traded,
                    total_profit: profit,
                    avg_daily_profit: profit / eval_days as f64,
                    avg_daily_trades: n as f64 / eval_days as f64,
                });
            }
            for (o, i) in outcomes.iter().zip(first..) {
                if let Some(c) = &o[k] {
                    report.trades.extend(c.result.trades.iter().map(|&trade| TradeRecord {
                        pair: pair.pair.clone(),
                        day: pair.days[i].day,
                        eta,
                        z_m: c.z_m,
                        trade,
                    }));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plan(upper: f64, lower: f64, c: f64) -> TradePlan {
        TradePlan {
            forecast: OuParams::new(0.0, 10.0, 1e-4).unwrap(),
            policy: SignalPolicy { a: upper, b: lower, c },
            z_m: 1.0,
            z_v: 0.0,
            eta: f64::INFINITY,
        }
    }

    fn series(values: &[f64]) -> TickSeries {
        let n = values.len();
        TickSeries::new((0..n).map(|i| i as f64 / n as f64).collect(), values.to_vec()).unwrap()
    }

    #[test]
    fn sawtooth_books_one_round_trip() {
        let r = execute_day(&plan(0.005, -0.005, 0.0015), &series(&[0.0, 0.003, 0.005, 0.0, -0.005, -0.004]));
        // short at 0.005, switch at -0.005, forced close of the long at -0.004
        assert_eq!(r.n_trades, 2);
        assert_relative_eq!(r.trades[0].pnl(), 0.0085, epsilon = 1e-15);
        assert!(r.trades[1].forced);
        assert_relative_eq!(r.forced_close_pnl, 0.001 - 0.0015, epsilon = 1e-15);

        let r = execute_day(&plan(0.005, -0.005, 0.0015), &series(&[0.0, 0.005, 0.0, -0.005]));
        assert_eq!(r.n_trades, 1);
        assert_relative_eq!(r.profit, 0.0085, epsilon = 1e-15);
    }

    #[test]
    fn quiet_day_has_no_trades() {
        let r = execute_day(&plan(0.01, -0.01, 0.0015), &series(&[0.0, 0.004, -0.009, 0.0099]));
        assert!(r.traded);
        assert_eq!(r.n_trades, 0);
        assert_eq!(r.profit, 0.0);
    }

    #[test]
    fn first_entry_can_be_long() {
        let r = execute_day(&plan(0.01, -0.01, 0.0), &series(&[0.0, -0.012, 0.0, 0.011, 0.011]));
        assert_eq!(r.trades[0].side, Side::Long);
        assert_relative_eq!(r.trades[0].pnl(), 0.023, epsilon = 1e-15);
        assert_eq!(r.trades[1].side, Side::Short);
        assert!(r.trades[1].forced);
    }

    #[test]
    fn infinite_threshold_always_skips() {
        let f = OuParams::new(1.0, 10.0, 1e-4).unwrap();
        assert!(matches!(plan_day(&f, 0.0015, 5e-5, f64::INFINITY), Plan::Skip(SkipReason::BelowThreshold { .. })));
        assert!(matches!(plan_day(&f, 0.0015, f64::INFINITY, 0.0), Plan::Trade(_)));
        let flat = OuParams { mu: 1.0, tau: 10.0, sigma2: 0.0 };
        assert!(matches!(plan_day(&flat, 0.0015, 5e-5, 0.0), Plan::Skip(SkipReason::Degenerate(_))));
    }

    #[test]
    fn plan_levels_are_symmetric_about_the_mean() {
        let f = OuParams::new(1.0, 10.0, 1e-4).unwrap();
        let Plan::Trade(p) = plan_day(&f, 0.0015, f64::INFINITY, 0.0) else { panic!("expected a trade") };
        assert_relative_eq!(p.upper() - 1.0, 1.0 - p.lower(), epsilon = 1e-7);
        assert_eq!(p.policy.c, 0.0015);
        assert!(p.z_m > 0.0);
    }

    #[test]
    fn short_history_is_an_error() {
        let days: Vec<PairDay> = (0..50)
            .map(|d| PairDay {
                day: d,
                fit: Some(OuParams::new(0.0, 5.0, 1e-4).unwrap()),
                spread: series(&[0.0, 0.01]),
            })
            .collect();
        let pair = PairData { pair: "X/Y".into(), days };
        assert!(matches!(run_backtest(&[pair], &BacktestConfig::default()), Err(Error::InsufficientData(_))));
    }
}
