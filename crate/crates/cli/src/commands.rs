//! Subcommand implementations. Each resolves its settings (flag over config
//! file over default), runs one pipeline stage and writes headed output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};

use ounoise::backtest::{self, BacktestConfig, PairData};
use ounoise::estimate::{self, predict_mom_bias, realized_variance, Method};
use ounoise::forecast::{forecast_next, DailyParamHistory, DailyRecord, DEFAULT_WINDOW, HAR_LAGS};
use ounoise::ingest;
use ounoise::signal::{
    bias_impact, from_dimensionless, moments_to_original, optimize_signals, to_dimensionless, OptResult,
    ScaledProblem, SignalPolicy, StrategyMoments,
};
use ounoise::sim::{poisson_grid_for_path, simulate as simulate_path, simulate_many, GridSpec, InitialState, SamplingGrid, SimConfig};
use ounoise::study::{simulation_study, StudyConfig};
use ounoise::synth::{self, PairWorld, SynthDay};
use ounoise::{NoisyOuParams, OuParams, TickSeries};

use crate::output::{self, num, CsvOut};
use crate::settings::{Header, Settings};
use crate::CliError;

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Directory of the config file; relative paths inside it resolve here.
    pub config_dir: Option<PathBuf>,
}

impl Context {
    fn header(&self, s: &Settings, command: &str) -> Header {
        Header { command: command.into(), seed: self.seed, config_hash: s.hash(command) }
    }

    fn config_path(&self, raw: &str) -> PathBuf {
        let p = PathBuf::from(raw);
        match &self.config_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p,
        }
    }
}

fn path_setting(s: &mut Settings, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
    Ok(s.optional(key, flag.map(|p| p.display().to_string()))?.map(PathBuf::from))
}

fn params3(s: &mut Settings, mu: Option<f64>, tau: Option<f64>, sigma2: Option<f64>) -> Result<OuParams, CliError> {
    let mu = s.get("mu", mu, 1.0)?;
    let tau = s.get("tau", tau, 10.0)?;
    let sigma2 = s.get("sigma2", sigma2, 1e-4)?;
    Ok(OuParams::new(mu, tau, sigma2)?)
}

fn cell<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `ou` for one noisy path, `pair` for raw tick files of a synthetic pair.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega2: Option<f64>,
    /// Intervals (equidistant) or expected events (poisson).
    #[arg(long)]
    n: Option<usize>,
    /// `poisson` or `equidistant`.
    #[arg(long)]
    grid: Option<String>,
    /// `stationary` or a starting value.
    #[arg(long, allow_negative_numbers = true)]
    init: Option<String>,
    /// Path index for the random streams.
    #[arg(long)]
    path: Option<u32>,
    /// Also write the latent value.
    #[arg(long)]
    latent: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Synthetic pair: number of days.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    ticks_per_leg: Option<usize>,
}

pub fn simulate(a: SimulateArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    match s.get("kind", a.kind.clone(), "ou".into())?.as_str() {
        "ou" => simulate_ou(a, ctx, s),
        "pair" => simulate_pair(a, ctx, s),
        other => Err(CliError::usage(format!("unknown simulate kind '{other}' (ou, pair)"))),
    }
}

fn simulate_ou(a: SimulateArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let ou = params3(&mut s, a.mu, a.tau, a.sigma2)?;
    let params = ou.with_noise(s.get("omega2", a.omega2, 1e-8)?);
    let n = s.get("n", a.n, 23_400usize)?;
    let path = s.get("path", a.path, 0u32)?;
    let grid = match s.get("grid", a.grid, "poisson".into())?.as_str() {
        "poisson" => poisson_grid_for_path(n, ctx.seed, path)?,
        "equidistant" => SamplingGrid::equidistant(n)?,
        other => return Err(CliError::usage(format!("unknown grid '{other}' (poisson, equidistant)"))),
    };
    let init = match s.get("init", a.init, "stationary".into())?.as_str() {
        "stationary" => InitialState::Stationary,
        v => InitialState::Fixed(v.parse().map_err(|_| CliError::parse(format!("init: cannot parse '{v}'")))?),
    };
    let latent = s.get("latent", a.latent.then_some(true), false)?;
    let output = path_setting(&mut s, "output", a.output)?;
    let sim = simulate_path(&SimConfig { params, grid, seed: ctx.seed, path, init })?;

    let header = ctx.header(&s, "simulate");
    let cols: &[&str] = if latent { &["time", "value", "latent"] } else { &["time", "value"] };
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, cols)?;
    let (t, y, x) = (sim.observed.times(), sim.observed.values(), sim.latent.values());
    for i in 0..t.len() {
        if latent {
            out.row(&[num(t[i]), num(y[i]), num(x[i])])?;
        } else {
            out.row(&[num(t[i]), num(y[i])])?;
        }
    }
    out.finish()
}

fn world_from(s: &mut Settings, a: &SimulateArgs, seed: u64) -> Result<PairWorld, CliError> {
    let d = PairWorld::default();
    let list3 = |s: &mut Settings, key: &str, def: [f64; 3]| -> Result<[f64; 3], CliError> {
        let dflt = def.map(|x| x.to_string()).join(",");
        let v: Vec<f64> = s.list(key, None, &dflt)?;
        v.try_into().map_err(|_| CliError::parse(format!("setting '{key}' needs 3 values")))
    };
    let mu_coef = list3(s, "mu_coef", d.mu_coef)?;
    let dflt = d.har_coef.map(|x| x.to_string()).join(",");
    let har: Vec<f64> = s.list("har_coef", None, &dflt)?;
    let har_coef = har.try_into().map_err(|_| CliError::parse("setting 'har_coef' needs 4 values"))?;
    Ok(PairWorld {
        days: s.get("days", a.days, d.days)?,
        mu_coef,
        mu_noise_sd: s.get("mu_noise_sd", None, d.mu_noise_sd)?,
        tau_mean: s.get("tau_mean", None, d.tau_mean)?,
        tau_sd: s.get("tau_sd", None, d.tau_sd)?,
        tau_floor: s.get("tau_floor", None, d.tau_floor)?,
        har_coef,
        har_noise_sd: s.get("har_noise_sd", None, d.har_noise_sd)?,
        overnight_sd: s.get("overnight_sd", None, d.overnight_sd)?,
        ticks_per_leg: s.get("ticks_per_leg", a.ticks_per_leg, d.ticks_per_leg)?,
        leg_noise_var: s.get("leg_noise_var", None, d.leg_noise_var)?,
        leg_var: s.get("leg_var", None, d.leg_var)?,
        synchronous: s.get("synchronous", None, d.synchronous)?,
        foreign_share: s.get("foreign_share", None, d.foreign_share)?,
        seed,
    })
}

fn tick_file(dir: &Path, day: i64, leg: char) -> PathBuf {
    dir.join(format!("day_{day:04}_{leg}.csv"))
}

fn write_tick_file(path: &Path, header: &Header, ticks: &[ingest::RawTick]) -> Result<(), CliError> {
    let mut w = output::create(path)?;
    w.write_all(header.lines().as_bytes()).map_err(CliError::write)?;
    ingest::write_ticks(&mut w, ticks)?;
    w.flush().map_err(CliError::write)
}

fn simulate_pair(a: SimulateArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let world = world_from(&mut s, &a, ctx.seed)?;
    let days = synth::generate(&world)?;
    let header = ctx.header(&s, "simulate");
    let dir = ctx.out_dir.join("ticks");
    for d in &days {
        write_tick_file(&tick_file(&dir, d.day, 'A'), &header, &d.leg_a)?;
        write_tick_file(&tick_file(&dir, d.day, 'B'), &header, &d.leg_b)?;
    }
    let mut out = CsvOut::new(output::create(&ctx.out_dir.join("truth.csv"))?, &header, &["day", "mu", "tau", "sigma2", "open"])?;
    for d in &days {
        out.row(&[cell(d.day), num(d.truth.mu), num(d.truth.tau), num(d.truth.sigma2), num(d.open)])?;
    }
    out.finish()
}

// ------------------------------------------------------------------- clean

#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Raw trades: timestamp,price,exchange,corr,cond,suffix.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Primary exchange code.
    #[arg(long)]
    exchange: Option<String>,
    /// Second leg; the output becomes the log spread input minus this.
    #[arg(long)]
    minus: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-rule deletion counts as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn clean(a: CleanArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let input = path_setting(&mut s, "input", a.input)?.ok_or_else(|| CliError::usage("clean needs --input"))?;
    let exchange = s.get("exchange", a.exchange, SynthDay::EXCHANGE.to_string())?;
    let minus = path_setting(&mut s, "minus", a.minus)?;
    let output = path_setting(&mut s, "output", a.output)?;
    let report = path_setting(&mut s, "report", a.report)?;

    let (mut series, rep) = ingest::clean(&output::read_ticks(&input)?, &exchange)?;
    let mut reports = json!({ "input": rep });
    if let Some(m) = &minus {
        let (b, rep_b) = ingest::clean(&output::read_ticks(m)?, &exchange)?;
        series = ingest::build_spread(&series, &b)?;
        reports["minus"] = json!(rep_b);
    }
    let header = ctx.header(&s, "clean");
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &["time", "value"])?;
    for (t, v) in series.times().iter().zip(series.values()) {
        out.row(&[num(*t), num(*v)])?;
    }
    out.finish()?;
    if let Some(r) = report {
        output::write_json(output::create(&r)?, &header, json!({ "reports": reports }))?;
    }
    Ok(())
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// mom, mom-nr, ar, arma-nr, mle, mle-nr or rv.
    #[arg(long)]
    method: Option<String>,
    /// `time,value` files, one per day, in day order.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// `tick` uses every observation, `1min` the previous-tick minute grid.
    #[arg(long)]
    grid: Option<String>,
    /// Day index of the first input.
    #[arg(long, allow_negative_numbers = true)]
    first_day: Option<i64>,
    /// JSON lines; the first line holds run metadata.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn fit_record(ts: &TickSeries, method: Method, one_minute: bool) -> Result<Value, ounoise::Error> {
    let data = if one_minute { ts.one_minute()? } else { ts.clone() };
    if method == Method::Rv {
        return Ok(json!({ "sigma2": realized_variance(&data), "n_used": data.len() }));
    }
    let f = estimate::fit(&data, method)?;
    Ok(json!({
        "mu": f.params.mu(),
        "tau": f.params.tau(),
        "sigma2": f.params.sigma2(),
        "omega2": f.params.omega2,
        "loglik": f.loglik,
        "converged": f.converged,
        "n_used": f.n_used,
        "diagnostics": f.diagnostics,
    }))
}

pub fn estimate(a: EstimateArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let method: Method = s.get("method", a.method, "mle-nr".into())?.parse::<Method>()?;
    let one_minute = match s.get("grid", a.grid, "tick".into())?.as_str() {
        "tick" => false,
        "1min" => true,
        other => return Err(CliError::usage(format!("unknown grid '{other}' (tick, 1min)"))),
    };
    let inputs: Vec<PathBuf> = if a.inputs.is_empty() {
        s.list::<String>("inputs", None, "")?.iter().map(|p| ctx.config_path(p)).collect()
    } else {
        let joined = a.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        s.list::<String>("inputs", Some(&joined), "")?;
        a.inputs
    };
    if inputs.is_empty() {
        return Err(CliError::usage("estimate needs at least one --input"));
    }
    let first_day = s.get("first_day", a.first_day, 0i64)?;
    let output = path_setting(&mut s, "output", a.output)?;

    let series = inputs.iter().map(|p| output::read_series(p)).collect::<Result<Vec<_>, _>>()?;
    let fits: Vec<Result<Value, ounoise::Error>> = series.par_iter().map(|ts| fit_record(ts, method, one_minute)).collect();

    let header = ctx.header(&s, "estimate");
    let mut w = output::sink(output.as_deref())?;
    writeln!(w, "{}", json!({ "meta": output::meta(&header) })).map_err(CliError::write)?;
    for (i, ((path, ts), fit)) in inputs.iter().zip(&series).zip(fits).enumerate() {
        let mut rec = json!({
            "day": first_day + i as i64,
            "source": path.display().to_string(),
            "method": method.label(),
            "grid": if one_minute { "1min" } else { "tick" },
            "open_value": ts.values()[0],
        });
        match fit {
            Ok(Value::Object(m)) => rec.as_object_mut().expect("object").extend(m),
            Ok(_) => unreachable!("fit records are objects"),
            Err(e) => {
                let e = CliError::from(e);
                rec["error"] = json!({ "kind": e.kind(), "message": e.message() });
            }
        }
        writeln!(w, "{rec}").map_err(CliError::write)?;
    }
    w.flush().map_err(CliError::write)
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Args)]
pub struct ForecastArgs {
    /// Fit records written by `estimate`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Regression window in days.
    #[arg(long)]
    window: Option<usize>,
    /// Opening value of the day after the last record; adds one more forecast.
    #[arg(long, allow_negative_numbers = true)]
    next_open: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn daily_records(path: &Path) -> Result<Vec<DailyRecord>, CliError> {
    let mut out = Vec::new();
    for v in output::read_json_lines(path)? {
        if v.get("error").is_some() {
            continue;
        }
        let field = |k: &str| v.get(k).and_then(Value::as_f64);
        let day = v.get("day").and_then(Value::as_i64).ok_or_else(|| CliError::schema(path, "record without integer 'day'"))?;
        let (Some(mu), Some(tau), Some(sigma2), Some(open_value)) = (field("mu"), field("tau"), field("sigma2"), field("open_value")) else {
            return Err(CliError::schema(path, format!("day {day}: need mu, tau, sigma2 and open_value")));
        };
        // fits with a vanishing variance carry no information for the regressions
        if tau > 0.0 && sigma2 > 0.0 {
            out.push(DailyRecord { day, mu, tau, sigma2, open_value });
        }
    }
    Ok(out)
}

pub fn forecast(a: ForecastArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let input = path_setting(&mut s, "input", a.input)?.ok_or_else(|| CliError::usage("forecast needs --input"))?;
    let window = s.get("window", a.window, DEFAULT_WINDOW)?;
    let next_open = s.optional("next_open", a.next_open)?;
    let output = path_setting(&mut s, "output", a.output)?;

    let hist = DailyParamHistory::new(daily_records(&input)?)?;
    let recs = hist.records();
    let need = window + HAR_LAGS;
    let mut targets: Vec<(usize, i64, f64)> = (need..recs.len()).map(|i| (i, recs[i].day, recs[i].open_value)).collect();
    if let (Some(open), Some(last)) = (next_open, recs.last()) {
        if recs.len() >= need {
            targets.push((recs.len(), last.day + 1, open));
        }
    }
    if targets.is_empty() {
        return Err(ounoise::Error::InsufficientData(format!("{} usable fits, need more than {need}", recs.len())).into());
    }
    let fc: Vec<OuParams> = targets
        .par_iter()
        .map(|&(i, _, open)| forecast_next(&hist.head(i), window, open))
        .collect::<Result<_, _>>()?;

    let header = ctx.header(&s, "forecast");
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &["day", "mu", "tau", "sigma2"])?;
    for (&(_, day, _), p) in targets.iter().zip(&fc) {
        out.row(&[cell(day), num(p.mu), num(p.tau), num(p.sigma2)])?;
    }
    out.finish()
}

// ---------------------------------------------------------------- optimize

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    /// Round-trip transaction cost.
    #[arg(long, allow_negative_numbers = true)]
    cost: Option<f64>,
    /// Cap on the profit variance per unit time (`inf` for none).
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Optimum for `p` in both unit systems; `None` policy when nothing pays.
fn solve(p: &OuParams, cost: f64, eta: f64) -> Result<(ScaledProblem, OptResult, Option<(SignalPolicy, StrategyMoments)>), CliError> {
    let probe = to_dimensionless(p, &SignalPolicy::new(p.mu, p.mu, cost)?, eta)?;
    let opt = optimize_signals(probe.c_t, probe.eta_t)?;
    if opt.no_trade {
        return Ok((probe, opt, None));
    }
    let scaled = ScaledProblem { a_t: opt.policy.a, b_t: opt.policy.b, ..probe };
    let (policy, _) = from_dimensionless(p, &scaled)?;
    let m = moments_to_original(p, &StrategyMoments { z_m: opt.z_m_star, z_v: opt.z_v_at_opt });
    Ok((probe, opt, Some((policy, m))))
}

pub fn optimize(a: OptimizeArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let p = params3(&mut s, a.mu, a.tau, a.sigma2)?;
    let cost = s.get("cost", a.cost, backtest::DEFAULT_COST)?;
    let eta = s.get("eta", a.eta, 5e-5)?;
    let output = path_setting(&mut s, "output", a.output)?;
    let (probe, opt, orig) = solve(&p, cost, eta)?;

    let original = match orig {
        Some((policy, m)) => json!({
            "entry": policy.a, "exit": policy.b, "lower_entry": 2.0 * p.mu - policy.a,
            "cost": cost, "eta": eta, "z_m": m.z_m, "z_v": m.z_v,
        }),
        None => json!({ "entry": null, "exit": null, "cost": cost, "eta": eta, "z_m": 0.0, "z_v": 0.0 }),
    };
    let value = json!({
        "params": p,
        "no_trade": opt.no_trade,
        "binding": opt.binding,
        "dimensionless": {
            "a": opt.policy.a, "b": opt.policy.b, "c": probe.c_t, "eta": probe.eta_t,
            "z_m": opt.z_m_star, "z_v": opt.z_v_at_opt,
        },
        "original": original,
    });
    let header = ctx.header(&s, "optimize");
    output::write_json(output::sink(output.as_deref())?, &header, value)
}

// ---------------------------------------------------------------- frontier

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// Dimensionless cost; selects the dimensionless sweep.
    #[arg(long, allow_negative_numbers = true)]
    c_t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    cost: Option<f64>,
    /// Parameters the policy is optimized under, if not the true ones.
    #[arg(long, allow_negative_numbers = true)]
    biased_tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    biased_sigma2: Option<f64>,
    /// Smallest and largest variance cap of the log-spaced sweep.
    #[arg(long, allow_negative_numbers = true)]
    eta_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, CliError> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(CliError::usage("need 0 < eta_min <= eta_max < inf and points >= 1"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| if i + 1 == n { hi } else { lo * (step * i as f64).exp() }).collect())
}

pub fn frontier(a: FrontierArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let output = path_setting(&mut s, "output", a.output)?;
    let points = s.get("points", a.points, 40usize)?;
    if let Some(c_t) = s.optional("c_t", a.c_t)? {
        let etas = log_grid(s.get("eta_min", a.eta_min, 0.01)?, s.get("eta_max", a.eta_max, 100.0)?, points)?;
        let rows = ounoise::signal::frontier(c_t, &etas)?;
        let header = ctx.header(&s, "frontier");
        let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &["eta", "z_m_star", "a_star", "b_star", "z_v", "binding"])?;
        for (eta, r) in etas.iter().zip(&rows) {
            out.row(&[num(*eta), num(r.z_m_star), num(r.policy.a), num(r.policy.b), num(r.z_v_at_opt), cell(r.binding)])?;
        }
        return out.finish();
    }

    let p = params3(&mut s, a.mu, a.tau, a.sigma2)?;
    let cost = s.get("cost", a.cost, backtest::DEFAULT_COST)?;
    let etas = log_grid(s.get("eta_min", a.eta_min, 1e-6)?, s.get("eta_max", a.eta_max, 1e-3)?, points)?;
    let bt = s.optional("biased_tau", a.biased_tau)?;
    let bs = s.optional("biased_sigma2", a.biased_sigma2)?;
    let biased = match (bt, bs) {
        (None, None) => None,
        (t, v) => Some(OuParams::new(p.mu, t.unwrap_or(p.tau), v.unwrap_or(p.sigma2))?),
    };
    let rows: Vec<_> = etas
        .par_iter()
        .map(|&eta| -> Result<_, CliError> {
            let (_, opt, orig) = solve(&p, cost, eta)?;
            let impact = biased.map(|b| bias_impact(&p, &b, cost, eta)).transpose()?;
            Ok((eta, opt, orig, impact))
        })
        .collect::<Result<_, _>>()?;

    let header = ctx.header(&s, "frontier");
    let mut cols = vec!["eta", "z_m_star", "a_star", "b_star", "z_v", "binding"];
    if biased.is_some() {
        cols.extend(["claimed_z_m", "actual_z_m"]);
    }
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &cols)?;
    for (eta, opt, orig, impact) in rows {
        let (a_star, b_star, m) = match orig {
            Some((pol, m)) => (pol.a, pol.b, m),
            None => (p.mu, p.mu, StrategyMoments { z_m: 0.0, z_v: 0.0 }),
        };
        let mut r = vec![num(eta), num(m.z_m), num(a_star), num(b_star), num(m.z_v), cell(opt.binding)];
        if let Some(i) = impact {
            r.extend([num(i.claimed_z_m), num(i.actual_z_m)]);
        }
        out.row(&r)?;
    }
    out.finish()
}

// ---------------------------------------------------------------- backtest

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long, allow_negative_numbers = true)]
    cost: Option<f64>,
    /// Comma-separated variance caps (`inf` allowed).
    #[arg(long)]
    etas: Option<String>,
    /// Comma-separated minimum expected profits.
    #[arg(long)]
    zetas: Option<String>,
    /// Regression window in days.
    #[arg(long)]
    history: Option<usize>,
    /// Comma-separated pair names.
    #[arg(long)]
    pairs: Option<String>,
    /// `PAIR=DIR` with `day_NNNN_A.csv` / `day_NNNN_B.csv` tick files.
    #[arg(long = "data")]
    data: Vec<String>,
    /// Daily estimator.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    exchange: Option<String>,
}

/// Day indices with both leg files present, ascending.
fn pair_days(dir: &Path) -> Result<Vec<i64>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut days = Vec::new();
    for e in entries {
        let name = e.map_err(|e| CliError::io(dir, e))?.file_name();
        let name = name.to_string_lossy();
        let Some(day) = name.strip_prefix("day_").and_then(|r| r.strip_suffix("_A.csv")).and_then(|d| d.parse::<i64>().ok()) else {
            continue;
        };
        if !tick_file(dir, day, 'B').exists() {
            return Err(CliError::schema(&tick_file(dir, day, 'B'), "missing second leg"));
        }
        days.push(day);
    }
    days.sort_unstable();
    if days.is_empty() {
        return Err(CliError::schema(dir, "no day_NNNN_A.csv files"));
    }
    Ok(days)
}

fn load_pair(name: &str, dir: &Path, exchange: &str, method: Method) -> Result<PairData, CliError> {
    let days = pair_days(dir)?;
    let raw = days
        .iter()
        .map(|&d| Ok((d, output::read_ticks(&tick_file(dir, d, 'A'))?, output::read_ticks(&tick_file(dir, d, 'B'))?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let days = raw
        .par_iter()
        .map(|(d, a, b)| backtest::prepare_pair_day(*d, a, b, exchange, method))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PairData { pair: name.into(), days })
}

pub fn backtest(a: BacktestArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let dflt_etas = backtest::DEFAULT_ETAS.map(|x| x.to_string()).join(",");
    let dflt_zetas = backtest::default_zetas().iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let cfg = BacktestConfig {
        cost: s.get("cost", a.cost, backtest::DEFAULT_COST)?,
        etas: s.list("etas", a.etas.as_deref(), &dflt_etas)?,
        zetas: s.list("zetas", a.zetas.as_deref(), &dflt_zetas)?,
        history: s.get("history", a.history, DEFAULT_WINDOW)?,
    };
    let method: Method = s.get("method", a.method, "mle-nr".into())?.parse::<Method>()?;
    let exchange = s.get("exchange", a.exchange, SynthDay::EXCHANGE.to_string())?;
    let pairs: Vec<String> = s.list("pairs", a.pairs.as_deref(), "")?;
    if pairs.is_empty() {
        return Err(CliError::usage("backtest needs at least one pair"));
    }
    let mut dirs: BTreeMap<String, PathBuf> = s.with_prefix("data.").into_iter().map(|(k, v)| (k, ctx.config_path(&v))).collect();
    for d in &a.data {
        let (k, v) = d.split_once('=').ok_or_else(|| CliError::usage(format!("--data expects PAIR=DIR, got '{d}'")))?;
        s.get(&format!("data.{k}"), Some(v.to_string()), String::new())?;
        dirs.insert(k.into(), PathBuf::from(v));
    }
    cfg.validate()?;

    let data = pairs
        .iter()
        .map(|p| {
            let dir = dirs.get(p).ok_or_else(|| CliError::usage(format!("no data directory for pair '{p}'")))?;
            load_pair(p, dir, &exchange, method)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let report = backtest::run_backtest(&data, &cfg)?;

    let header = ctx.header(&s, "backtest");
    let cols = ["pair", "zeta", "eta", "avg_daily_profit", "avg_daily_trades", "traded_days", "eval_days", "total_profit"];
    let mut out = CsvOut::new(output::create(&ctx.out_dir.join("report.csv"))?, &header, &cols)?;
    for r in &report.rows {
        out.row(&[
            r.pair.clone(),
            num(r.zeta),
            num(r.eta),
            num(r.avg_daily_profit),
            num(r.avg_daily_trades),
            cell(r.traded_days),
            cell(r.eval_days),
            num(r.total_profit),
        ])?;
    }
    if pairs.len() > 1 {
        // portfolio rows: per-pair daily averages summed, as in a table's total line
        for &eta in &cfg.etas {
            for &zeta in &cfg.zetas {
                let rows: Vec<_> = report.rows.iter().filter(|r| r.eta == eta && r.zeta == zeta).collect();
                let sum = |f: fn(&backtest::ReportRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>();
                out.row(&[
                    "SUM".to_string(),
                    num(zeta),
                    num(eta),
                    num(sum(|r| r.avg_daily_profit)),
                    num(sum(|r| r.avg_daily_trades)),
                    cell(rows.iter().map(|r| r.traded_days).sum::<usize>()),
                    cell(rows.iter().map(|r| r.eval_days).sum::<usize>()),
                    num(sum(|r| r.total_profit)),
                ])?;
            }
        }
    }
    out.finish()?;

    let cols = ["pair", "day", "eta", "z_m", "side", "entry_time", "entry_value", "exit_time", "exit_value", "cost", "forced", "pnl"];
    let mut out = CsvOut::new(output::create(&ctx.out_dir.join("trades.csv"))?, &header, &cols)?;
    for t in &report.trades {
        let side = match t.trade.side {
            backtest::Side::Short => "short",
            backtest::Side::Long => "long",
        };
        out.row(&[
            t.pair.clone(),
            cell(t.day),
            num(t.eta),
            num(t.z_m),
            side.to_string(),
            num(t.trade.entry_time),
            num(t.trade.entry_value),
            num(t.trade.exit_time),
            num(t.trade.exit_value),
            num(t.trade.cost),
            cell(t.trade.forced),
            num(t.trade.pnl()),
        ])?;
    }
    out.finish()
}

// ---------------------------------------------------------------- simstudy

#[derive(Debug, Args)]
pub struct SimstudyArgs {
    #[arg(long)]
    reps: Option<u32>,
    /// Expected observations per path.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega2: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn simstudy(a: SimstudyArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let ou = params3(&mut s, a.mu, a.tau, a.sigma2)?;
    let cfg = StudyConfig {
        params: ou.with_noise(s.get("omega2", a.omega2, 1e-8)?),
        n: s.get("n", a.n, 23_400usize)?,
        reps: s.get("reps", a.reps, 50u32)?,
        seed: ctx.seed,
    };
    let output = path_setting(&mut s, "output", a.output)?;
    let rows = simulation_study(&cfg)?;
    let header = ctx.header(&s, "simstudy");
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &["method", "param", "mae", "used"])?;
    for r in &rows {
        out.row(&[r.method.clone(), r.param.to_string(), num(r.mae), cell(r.used)])?;
    }
    out.finish()
}

// ---------------------------------------------------------------- biasplot

#[derive(Debug, Args)]
pub struct BiasplotArgs {
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    /// Comma-separated noise variances.
    #[arg(long)]
    omega2s: Option<String>,
    /// Comma-separated interval counts.
    #[arg(long)]
    ns: Option<String>,
    /// Simulated paths per point for empirical means (0 = formulas only).
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn biasplot(a: BiasplotArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let ou = params3(&mut s, a.mu, a.tau, a.sigma2)?;
    let omega2s: Vec<f64> = s.list("omega2s", a.omega2s.as_deref(), "0,1e-9,1e-8,1e-7")?;
    let ns: Vec<usize> = s.list("ns", a.ns.as_deref(), "390,780,1170,2340,4680,7800,11700,23400")?;
    let reps = s.get("reps", a.reps, 0u32)?;
    let output = path_setting(&mut s, "output", a.output)?;

    let mut cols = vec!["omega2", "n", "tau_x", "sigma2_x"];
    if reps > 0 {
        cols.extend(["tau_mom_mean", "sigma2_mom_mean", "fits"]);
    }
    let header = ctx.header(&s, "biasplot");
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &cols)?;
    for &w2 in &omega2s {
        let p: NoisyOuParams = ou.with_noise(w2);
        for &n in &ns {
            let b = predict_mom_bias(&p, n)?;
            let mut row = vec![num(w2), cell(n), num(b.tau_x), num(b.sigma2_x)];
            if reps > 0 {
                let paths = simulate_many(p, GridSpec::Equidistant(n), ctx.seed, reps, InitialState::Stationary)?;
                let fits: Vec<_> = paths.par_iter().filter_map(|sp| estimate::fit(&sp.observed, Method::Mom).ok()).collect();
                let k = fits.len() as f64;
                let mean = |f: fn(&estimate::OuFit) -> f64| fits.iter().map(f).sum::<f64>() / k;
                row.extend([num(mean(|f| f.params.tau())), num(mean(|f| f.params.sigma2())), cell(fits.len())]);
            }
            out.row(&row)?;
        }
    }
    out.finish()
}

// --------------------------------------------------------------- signature

#[derive(Debug, Args)]
pub struct SignatureArgs {
    /// `time,value` series; simulated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Comma-separated subsampling steps.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega2: Option<f64>,
    /// Expected observations of the simulated path.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn signature(a: SignatureArgs, ctx: &Context, mut s: Settings) -> Result<(), CliError> {
    let ks: Vec<usize> = s.list("ks", a.ks.as_deref(), "1,2,3,5,10,20,30,60,120,300")?;
    if ks.contains(&0) {
        return Err(CliError::usage("subsampling steps must be >= 1"));
    }
    let series = match path_setting(&mut s, "input", a.input)? {
        Some(p) => output::read_series(&p)?,
        None => {
            let ou = params3(&mut s, a.mu, a.tau, a.sigma2)?;
            let params = ou.with_noise(s.get("omega2", a.omega2, 1e-8)?);
            let grid = poisson_grid_for_path(s.get("n", a.n, 23_400usize)?, ctx.seed, 0)?;
            simulate_path(&SimConfig { params, grid, seed: ctx.seed, path: 0, init: InitialState::Stationary })?.observed
        }
    };
    let output = path_setting(&mut s, "output", a.output)?;

    let rows: Vec<(usize, usize, f64, f64)> = ks
        .par_iter()
        .map(|&k| {
            let sub = series.every_kth(k)?;
            let s2 = |m| estimate::fit(&sub, m).map_or(f64::NAN, |f| f.params.sigma2());
            Ok((k, sub.len(), s2(Method::Mle), s2(Method::MleNr)))
        })
        .collect::<Result<_, ounoise::Error>>()?;
    let header = ctx.header(&s, "signature");
    let mut out = CsvOut::new(output::sink(output.as_deref())?, &header, &["k", "n", "sigma2_mle", "sigma2_mle_nr"])?;
    for (k, n, a, b) in rows {
        out.row(&[cell(k), cell(n), num(a), num(b)])?;
    }
    out.finish()
}
