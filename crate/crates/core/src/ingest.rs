//! Trade-file ingestion, the eight-step cleaning procedure, spread
//! construction and likelihood-based jump filtering.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::per_observation_loglik;
use crate::model::NoisyOuParams;
use crate::series::TickSeries;

const NS_PER_SEC: i64 = 1_000_000_000;
/// 09:30:00 and 16:00:00 Eastern, in nanoseconds since midnight.
pub const SESSION_OPEN_NS: i64 = (9 * 3600 + 30 * 60) * NS_PER_SEC;
pub const SESSION_CLOSE_NS: i64 = 16 * 3600 * NS_PER_SEC;

const ROLLING_HALF: usize = 25;
const ROLLING_MIN_OBS: usize = 2 * ROLLING_HALF + 1;
const MAD_MULTIPLE: f64 = 10.0;
const MIN_CLEAN_TICKS: usize = 10;

/// One trade record as delivered, before any filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTick {
    /// Nanoseconds since midnight Eastern time.
    pub timestamp: i64,
    pub price: f64,
    pub exchange: String,
    pub corr: i64,
    pub cond: String,
    pub suffix: String,
}

/// Parse `HH:MM:SS[.fffffffff]` into nanoseconds since midnight.
pub fn parse_timestamp(s: &str) -> Result<i64> {
    let bad = || Error::Parse(format!("bad timestamp '{s}'"));
    let (hms, frac) = match s.trim().split_once('.') {
        Some((a, b)) => (a, b),
        None => (s.trim(), ""),
    };
    let mut parts = hms.split(':');
    let mut field = |max: i64| -> Result<i64> {
        let v: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if (0..max).contains(&v) {
            Ok(v)
        } else {
            Err(bad())
        }
    };
    let (h, m, sec) = (field(24)?, field(60)?, field(61)?);
    if parts.next().is_some() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let frac_ns = if frac.is_empty() { 0 } else { format!("{frac:0<9}").parse::<i64>().map_err(|_| bad())? };
    Ok(((h * 60 + m) * 60 + sec) * NS_PER_SEC + frac_ns)
}

pub fn format_timestamp(ns: i64) -> String {
    let secs = ns.div_euclid(NS_PER_SEC);
    let frac = ns.rem_euclid(NS_PER_SEC);
    format!("{:02}:{:02}:{:02}.{frac:09}", secs / 3600, secs / 60 % 60, secs % 60)
}

#[derive(Debug, Deserialize, Serialize)]
struct TickRow {
    timestamp: String,
    price: f64,
    exchange: String,
    corr: i64,
    cond: String,
    suffix: String,
}

/// Read CSV with header `timestamp,price,exchange,corr,cond,suffix`.
pub fn read_ticks<R: Read>(reader: R) -> Result<Vec<RawTick>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::Fields).from_reader(reader);
    rdr.deserialize::<TickRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            Ok(RawTick {
                timestamp: parse_timestamp(&row.timestamp)?,
                price: row.price,
                exchange: row.exchange,
                corr: row.corr,
                cond: row.cond,
                suffix: row.suffix,
            })
        })
        .collect()
}

pub fn write_ticks<W: Write>(writer: W, ticks: &[RawTick]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in ticks {
        w.serialize(TickRow {
            timestamp: format_timestamp(t.timestamp),
            price: t.price,
            exchange: t.exchange.clone(),
            corr: t.corr,
            cond: t.cond.clone(),
            suffix: t.suffix.clone(),
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Entries removed by each cleaning step, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleanReport {
    pub input: usize,
    pub other_exchange: usize,
    pub outside_session: usize,
    pub corrected: usize,
    pub abnormal_condition: usize,
    pub preferred_or_warrant: usize,
    pub merged: usize,
    pub zero_price: usize,
    pub rolling_outlier: usize,
    pub retained: usize,
}

impl CleanReport {
    pub fn deleted(&self) -> [usize; 8] {
        [
            self.other_exchange,
            self.outside_session,
            self.corrected,
            self.abnormal_condition,
            self.preferred_or_warrant,
            self.merged,
            self.zero_price,
            self.rolling_outlier,
        ]
    }
}

/// A sale condition is abnormal if it carries a letter other than E, F or I.
fn abnormal(cond: &str) -> bool {
    cond.chars().any(|c| c.is_ascii_alphabetic() && !matches!(c.to_ascii_uppercase(), 'E' | 'F' | 'I'))
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Flags prices further than 10 mean absolute deviations from the median of
/// up to 25 neighbours on each side (the point itself excluded).
fn rolling_outliers(prices: &[f64]) -> Vec<bool> {
    let n = prices.len();
    if n < ROLLING_MIN_OBS {
        return vec![false; n];
    }
    let mut buf = Vec::with_capacity(2 * ROLLING_HALF);
    (0..n)
        .map(|i| {
            buf.clear();
            let lo = i.saturating_sub(ROLLING_HALF);
            let hi = (i + ROLLING_HALF).min(n - 1);
            buf.extend(prices[lo..i].iter().chain(&prices[i + 1..=hi]));
            let med = median_of(&mut buf);
            let mad = buf.iter().map(|p| (p - med).abs()).sum::<f64>() / buf.len() as f64;
            (prices[i] - med).abs() > MAD_MULTIPLE * mad
        })
        .collect()
}

/// Session fraction of a timestamp: 09:30 maps to 0, 16:00 to 1.
pub fn session_fraction(ns: i64) -> f64 {
    (ns - SESSION_OPEN_NS) as f64 / (SESSION_CLOSE_NS - SESSION_OPEN_NS) as f64
}

/// Apply the eight rules in order; returns surviving `(timestamp, price)`
/// pairs and the report. Prices are merged by median at equal timestamps.
pub fn clean_ticks(ticks: &[RawTick], primary_exchange: &str) -> (Vec<(i64, f64)>, CleanReport) {
    let mut rep = CleanReport { input: ticks.len(), ..Default::default() };
    let mut keep: Vec<&RawTick> = ticks.iter().collect();
    let step = |keep: &mut Vec<&RawTick>, pred: &dyn Fn(&RawTick) -> bool| {
        let before = keep.len();
        keep.retain(|t| pred(t));
        before - keep.len()
    };
    rep.other_exchange = step(&mut keep, &|t| t.exchange.trim() == primary_exchange);
    rep.outside_session =
        step(&mut keep, &|t| (SESSION_OPEN_NS..=SESSION_CLOSE_NS).contains(&t.timestamp));
    rep.corrected = step(&mut keep, &|t| t.corr == 0);
    rep.abnormal_condition = step(&mut keep, &|t| !abnormal(&t.cond));
    rep.preferred_or_warrant = step(&mut keep, &|t| t.suffix.trim().is_empty());

    let mut sorted: Vec<(i64, f64)> = keep.iter().map(|t| (t.timestamp, t.price)).collect();
    sorted.sort_by_key(|p| p.0);
    let mut merged: Vec<(i64, f64)> = Vec::with_capacity(sorted.len());
    let mut group: Vec<f64> = Vec::new();
    for (i, &(ts, p)) in sorted.iter().enumerate() {
        group.push(p);
        if sorted.get(i + 1).is_none_or(|next| next.0 != ts) {
            merged.push((ts, median_of(&mut group)));
            group.clear();
        }
    }
    rep.merged = sorted.len() - merged.len();

    let before = merged.len();
    // nonpositive or non-finite prices have no logarithm either
    merged.retain(|&(_, p)| p > 0.0 && p.is_finite());
    rep.zero_price = before - merged.len();

    let prices: Vec<f64> = merged.iter().map(|p| p.1).collect();
    let flags = rolling_outliers(&prices);
    let out: Vec<(i64, f64)> = merged.into_iter().zip(flags).filter(|(_, f)| !f).map(|(p, _)| p).collect();
    rep.rolling_outlier = prices.len() - out.len();
    rep.retained = out.len();
    (out, rep)
}

/// Clean one symbol-day into a log-price series on the session clock.
pub fn clean(ticks: &[RawTick], primary_exchange: &str) -> Result<(TickSeries, CleanReport)> {
    let (kept, rep) = clean_ticks(ticks, primary_exchange);
    if kept.len() < MIN_CLEAN_TICKS {
        return Err(Error::InsufficientData(format!(
            "{} ticks survive cleaning, need {MIN_CLEAN_TICKS}",
            kept.len()
        )));
    }
    let (times, values) = kept.iter().map(|&(ts, p)| (session_fraction(ts), p.ln())).unzip();
    Ok((TickSeries::new(times, values)?, rep))
}

/// Log spread `A - B` on the union of both event sets, each leg carried
/// forward from its last observation. Events before both legs have traded are dropped.
pub fn build_spread(a: &TickSeries, b: &TickSeries) -> Result<TickSeries> {
    let (ta, xa, tb, xb) = (a.times(), a.values(), b.times(), b.values());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut last_a, mut last_b): (Option<f64>, Option<f64>) = (None, None);
    let mut times = Vec::with_capacity(ta.len() + tb.len());
    let mut values = Vec::with_capacity(ta.len() + tb.len());
    while i < ta.len() || j < tb.len() {
        let next_a = ta.get(i).copied().unwrap_or(f64::INFINITY);
        let next_b = tb.get(j).copied().unwrap_or(f64::INFINITY);
        let t = next_a.min(next_b);
        if next_a == t {
            last_a = Some(xa[i]);
            i += 1;
        }
        if next_b == t {
            last_b = Some(xb[j]);
            j += 1;
        }
        if let (Some(va), Some(vb)) = (last_a, last_b) {
            times.push(t);
            values.push(va - vb);
        }
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("legs do not overlap long enough to form a spread".into()));
    }
    TickSeries::new(times, values)
}

/// Series with jump outliers dropped, plus the dropped indices (ascending)
/// so callers can restore the full path.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierRemoval {
    pub kept: TickSeries,
    pub removed: Vec<usize>,
}

/// Drop the `floor(frac n)` observations (of `1..=n`) with the lowest
/// conditional log-density under `init`.
pub fn remove_jump_outliers(ts: &TickSeries, init: &NoisyOuParams, frac: f64) -> Result<OutlierRemoval> {
    if !(0.0..0.5).contains(&frac) {
        return Err(Error::InvalidArgument(format!("fraction must be in [0, 0.5), got {frac}")));
    }
    let ll = per_observation_loglik(ts, init, true)?;
    let count = (frac * ll.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(OutlierRemoval { kept: ts.clone(), removed: vec![] });
    }
    let mut order: Vec<usize> = (0..ll.len()).collect();
    order.sort_by(|&x, &y| ll[x].total_cmp(&ll[y]));
    let mut removed: Vec<usize> = order[..count].iter().map(|k| k + 1).collect();
    removed.sort_unstable();
    Ok(OutlierRemoval { kept: ts.without(&removed)?, removed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tick(ts: &str, price: f64) -> RawTick {
        RawTick {
            timestamp: parse_timestamp(ts).unwrap(),
            price,
            exchange: "N".into(),
            corr: 0,
            cond: String::new(),
            suffix: String::new(),
        }
    }

    #[test]
    fn timestamps_round_trip() {
        assert_eq!(parse_timestamp("09:30:00").unwrap(), SESSION_OPEN_NS);
        assert_eq!(parse_timestamp("09:30:00.5").unwrap(), SESSION_OPEN_NS + NS_PER_SEC / 2);
        let ns = parse_timestamp("13:05:07.000000123").unwrap();
        assert_eq!(format_timestamp(ns), "13:05:07.000000123");
        for bad in ["9:30", "25:00:00", "10:61:00", "10:00:00.1234567890", "10:00:00.x"] {
            assert!(parse_timestamp(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn session_and_merge_rules() {
        let mut ticks: Vec<RawTick> = (0..20).map(|k| tick(&format!("10:00:{k:02}"), 50.0)).collect();
        ticks.push(tick("09:15:00", 50.0));
        ticks.push(tick("10:00:30", 10.00));
        ticks.push(tick("10:00:30", 10.02));
        let (kept, rep) = clean_ticks(&ticks, "N");
        assert_eq!(rep.outside_session, 1);
        assert_eq!(rep.merged, 1);
        assert!((kept.iter().find(|k| k.0 == parse_timestamp("10:00:30").unwrap()).unwrap().1 - 10.01).abs() < 1e-12);
    }

    #[test]
    fn condition_codes() {
        assert!(!abnormal(""));
        assert!(!abnormal("@F"));
        assert!(!abnormal("E I"));
        assert!(abnormal("T"));
        assert!(abnormal("@Z"));
    }

    #[test]
    fn spread_by_hand() {
        let a = TickSeries::new(vec![0.1, 0.3], vec![1.0, 1.1]).unwrap();
        let b = TickSeries::new(vec![0.2, 0.25], vec![0.5, 0.5]).unwrap();
        let s = build_spread(&a, &b).unwrap();
        assert_eq!(s.times(), &[0.2, 0.25, 0.3]);
        for (v, e) in s.values().iter().zip([0.5, 0.5, 0.6]) {
            assert!((v - e).abs() < 1e-15);
        }
        let same = build_spread(&a, &a).unwrap();
        assert!(same.values().iter().all(|v| *v == 0.0));
        let late = TickSeries::new(vec![0.5, 0.6], vec![0.0, 0.0]).unwrap();
        let early = TickSeries::new(vec![0.1, 0.2], vec![0.0, 0.0]).unwrap();
        assert!(build_spread(&early, &late).is_ok());
        let single = TickSeries::new(vec![0.7, 0.8], vec![0.0, 0.0]).unwrap();
        assert_eq!(build_spread(&early, &single).unwrap().len(), 2);
    }

    #[test]
    fn planted_jump_is_the_one_removed() {
        let n = 400;
        let mut v: Vec<f64> = (0..=n).map(|i| 1.0 + 1e-4 * ((i as f64) * 0.7).sin()).collect();
        for x in &mut v[200..] {
            *x += 0.05;
        }
        let ts = TickSeries::equidistant(v).unwrap();
        let p = NoisyOuParams::new(1.0, 10.0, 1e-4, 1e-8).unwrap();
        assert_eq!(remove_jump_outliers(&ts, &p, 0.0).unwrap().kept, ts);
        let r = remove_jump_outliers(&ts, &p, 1.0 / n as f64).unwrap();
        assert_eq!(r.removed, vec![200]);
        assert_eq!(r.kept.len(), n);
        assert!(remove_jump_outliers(&ts, &p, 0.5).is_err());
    }
}
