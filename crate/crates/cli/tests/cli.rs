//! End-to-end runs of the `ounoise` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ounoise(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ounoise")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ounoise(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// `(kind, exit code)` of a failing run; asserts the one-line format.
fn fails(dir: &Path, args: &[&str]) -> (String, i32) {
    let out = ounoise(dir, args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {err}");
    let rest = lines[0].strip_prefix("error kind=").expect("machine-parsable prefix");
    let (kind, msg) = rest.split_once(" message=").unwrap();
    let _: String = serde_json::from_str(msg).expect("message is a JSON string");
    (kind.to_string(), out.status.code().unwrap())
}

/// Data rows of a headed CSV as cells, with the column line first.
fn table(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(t: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = t[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"));
    t[1..].iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let d = tempfile::tempdir().unwrap();
    let a = ok(d.path(), &["simulate", "--n", "500", "--seed", "4"]);
    let b = ok(d.path(), &["simulate", "--n", "500", "--seed", "4"]);
    let c = ok(d.path(), &["simulate", "--n", "500", "--seed", "5"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("# ounoise "));
    assert!(a.contains("# seed: 4\n"));
    let t = table(&a);
    assert_eq!(t[0], ["time", "value"]);
    // 17 significant digits survive the round trip
    let v = &t[1][1];
    assert_eq!(v.parse::<f64>().unwrap().to_string().parse::<f64>().unwrap(), v.parse::<f64>().unwrap());
    assert!(v.split('e').next().unwrap().len() >= 18);
}

#[test]
fn flags_override_config_and_change_the_hash() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.conf"), "tau = 4\nsigma2 = 2e-4\n").unwrap();
    let from_file = ok(d.path(), &["optimize", "--config", "run.conf"]);
    let flagged = ok(d.path(), &["optimize", "--config", "run.conf", "--tau", "6"]);
    let jf: serde_json::Value = serde_json::from_str(&from_file).unwrap();
    let jg: serde_json::Value = serde_json::from_str(&flagged).unwrap();
    assert_eq!(jf["params"]["tau"], 4.0);
    assert_eq!(jf["params"]["sigma2"], 2e-4);
    assert_eq!(jg["params"]["tau"], 6.0);
    assert_ne!(jf["meta"]["config_sha256"], jg["meta"]["config_sha256"]);
    // the optimum is symmetric about the mean
    let (a, b) = (jf["dimensionless"]["a"].as_f64().unwrap(), jf["dimensionless"]["b"].as_f64().unwrap());
    assert!((a + b).abs() < 1e-5);
}

#[test]
fn errors_are_one_line() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(fails(d.path(), &["simulate", "--frobnicate"]), ("usage".into(), 2));
    assert_eq!(fails(d.path(), &["nonsense"]), ("usage".into(), 2));
    assert_eq!(fails(d.path(), &["estimate", "--input", "missing.csv"]).0, "io");
    fs::write(d.path().join("bad.csv"), "t,x\n0,1\n").unwrap();
    assert_eq!(fails(d.path(), &["estimate", "--input", "bad.csv"]).0, "schema");
    assert_eq!(fails(d.path(), &["estimate", "--method", "ols", "--input", "bad.csv"]).0, "parse");
    assert_eq!(fails(d.path(), &["optimize", "--tau", "-1"]).0, "invalid_params");
    fs::write(d.path().join("broken.conf"), "tau 5\n").unwrap();
    assert_eq!(fails(d.path(), &["optimize", "--config", "broken.conf"]).0, "parse");
    assert!(ounoise(d.path(), &["--help"]).status.success());
}

#[test]
fn estimate_reads_simulated_paths() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["simulate", "--n", "3000", "--omega2", "0", "--output", "p.csv"]);
    let out = ok(d.path(), &["estimate", "--method", "mle", "--input", "p.csv", "--input", "p.csv", "--first-day", "7"]);
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0]["meta"]["config_sha256"].is_string());
    assert_eq!(lines[1]["day"], 7);
    assert_eq!(lines[2]["day"], 8);
    assert_eq!(lines[1]["mu"], lines[2]["mu"]);
    let tau = lines[1]["tau"].as_f64().unwrap();
    assert!(tau > 2.0 && tau < 40.0, "tau {tau}");
    let rv = ok(d.path(), &["estimate", "--method", "rv", "--input", "p.csv"]);
    let rec: serde_json::Value = serde_json::from_str(rv.lines().nth(1).unwrap()).unwrap();
    assert!(rec["sigma2"].as_f64().unwrap() > 0.0);
    assert!(rec.get("tau").is_none());
}

#[test]
fn pair_pipeline_runs_stage_by_stage() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["simulate", "--kind", "pair", "--days", "50", "--ticks-per-leg", "600", "--out-dir", "w"]);
    let mut inputs = Vec::new();
    for day in 0..50 {
        let out = format!("spread/{day:04}.csv");
        ok(p, &[
            "clean",
            "--input",
            &format!("w/ticks/day_{day:04}_A.csv"),
            "--minus",
            &format!("w/ticks/day_{day:04}_B.csv"),
            "--output",
            &out,
        ]);
        inputs.push(out);
    }
    let mut args = vec!["estimate", "--method", "mom-nr", "--grid", "1min", "--output", "fits.jsonl"];
    for i in &inputs {
        args.extend(["--input", i.as_str()]);
    }
    ok(p, &args);
    let fc = ok(p, &["forecast", "--input", "fits.jsonl", "--window", "23", "--next-open", "0.1"]);
    let t = table(&fc);
    assert_eq!(t[0], ["day", "mu", "tau", "sigma2"]);
    assert!(t.len() > 1);
    assert_eq!(t.last().unwrap()[0], "50");
    assert!(column(&t, "tau").iter().all(|x| *x > 0.0));
    assert!(column(&t, "sigma2").iter().all(|x| *x > 0.0));

    fs::write(p.join("w/bt.conf"), "pairs = XY\ndata.XY = ticks\nhistory = 23\netas = 5e-5\nzetas = 0, 0.7\nmethod = mom-nr\n").unwrap();
    ok(p, &["backtest", "--config", "w/bt.conf", "--out-dir", "bt"]);
    let first = fs::read(p.join("bt/report.csv")).unwrap();
    let report = table(&String::from_utf8(first.clone()).unwrap());
    assert_eq!(report.len(), 3);
    let profit = column(&report, "avg_daily_profit");
    assert_eq!(profit[1], 0.0, "nothing clears a 0.7 threshold");
    assert_eq!(column(&report, "eval_days"), vec![4.0, 4.0]);
    assert!(table(&fs::read_to_string(p.join("bt/trades.csv")).unwrap())[0].contains(&"pnl".to_string()));
    ok(p, &["backtest", "--config", "w/bt.conf", "--out-dir", "bt"]);
    assert_eq!(first, fs::read(p.join("bt/report.csv")).unwrap());
}

#[test]
fn biasplot_without_noise_is_flat() {
    let d = tempfile::tempdir().unwrap();
    let t = table(&ok(d.path(), &["biasplot", "--omega2s", "0,1e-8", "--ns", "390,2340,23400"]));
    assert_eq!(t.len(), 7);
    let (tau, s2, w2) = (column(&t, "tau_x"), column(&t, "sigma2_x"), column(&t, "omega2"));
    for i in 0..6 {
        if w2[i] == 0.0 {
            assert_eq!((tau[i], s2[i]), (10.0, 1e-4));
        } else {
            assert!(tau[i] > 10.0 && s2[i] > 1e-4);
        }
    }
    assert!(tau[3] < tau[4] && tau[4] < tau[5]);
}

#[test]
fn signature_separates_noise_sensitive_and_robust() {
    let d = tempfile::tempdir().unwrap();
    let t = table(&ok(d.path(), &["signature", "--n", "23400", "--omega2", "1e-8", "--ks", "1,5,30"]));
    let naive = column(&t, "sigma2_mle");
    let robust = column(&t, "sigma2_mle_nr");
    assert!(naive[0] > naive[1] && naive[1] > naive[2], "{naive:?}");
    assert!(naive[0] > 10.0 * 1e-4);
    assert!((robust[0] / 1e-4 - 1.0).abs() < 0.3, "{robust:?}");
}

#[test]
fn simstudy_has_table_layout() {
    let d = tempfile::tempdir().unwrap();
    let t = table(&ok(d.path(), &["simstudy", "--reps", "2", "--n", "2000"]));
    assert_eq!(t[0], ["method", "param", "mae", "used"]);
    assert_eq!(t.len() - 1, 30);
    assert_eq!(t[1][..2], ["1MIN-MOM".to_string(), "mu".into()]);
}

#[test]
fn frontier_rises_with_the_cap() {
    let d = tempfile::tempdir().unwrap();
    let t = table(&ok(d.path(), &["frontier", "--c-t", "0.5", "--eta-min", "0.001", "--eta-max", "10", "--points", "6"]));
    let z = column(&t, "z_m_star");
    assert!(z.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{z:?}");
    let t = table(&ok(d.path(), &["frontier", "--tau", "10", "--biased-tau", "100", "--points", "5"]));
    let (claimed, actual) = (column(&t, "claimed_z_m"), column(&t, "actual_z_m"));
    let best = column(&t, "z_m_star");
    for i in 0..5 {
        assert!(claimed[i] > actual[i] && actual[i] <= best[i] + 1e-15);
    }
}
