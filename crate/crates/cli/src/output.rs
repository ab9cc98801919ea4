//! CSV and JSON plumbing shared by the subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use ounoise::TickSeries;

use crate::settings::Header;
use crate::CliError;

/// Full double precision: 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn create(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(Box::new(BufWriter::new(f)))
}

/// File if given, otherwise stdout.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => create(p),
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub struct CsvOut {
    w: Box<dyn Write>,
}

impl CsvOut {
    pub fn new(mut w: Box<dyn Write>, header: &Header, columns: &[&str]) -> Result<Self, CliError> {
        w.write_all(header.lines().as_bytes()).map_err(CliError::write)?;
        writeln!(w, "{}", columns.join(",")).map_err(CliError::write)?;
        Ok(Self { w })
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        let line: Vec<&str> = cells.iter().map(AsRef::as_ref).collect();
        writeln!(self.w, "{}", line.join(",")).map_err(CliError::write)
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush().map_err(CliError::write)
    }
}

pub fn write_json(mut w: Box<dyn Write>, header: &Header, value: serde_json::Value) -> Result<(), CliError> {
    let mut obj = serde_json::json!({ "meta": meta(header) });
    if let (Some(o), serde_json::Value::Object(v)) = (obj.as_object_mut(), value) {
        o.extend(v);
    }
    serde_json::to_writer_pretty(&mut w, &obj).map_err(|e| CliError::write(e.into()))?;
    writeln!(w).map_err(CliError::write)?;
    w.flush().map_err(CliError::write)
}

pub fn meta(header: &Header) -> serde_json::Value {
    serde_json::json!({
        "version": crate::settings::VERSION,
        "command": header.command,
        "seed": header.seed,
        "config_sha256": header.config_hash,
        "rng": ounoise::sim::RNG_SCHEME,
    })
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    let mut s = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut s)).map_err(|e| CliError::io(path, e))?;
    Ok(s)
}

/// A `time,value` CSV; `#` lines are skipped.
pub fn read_series(path: &Path) -> Result<TickSeries, CliError> {
    let text = read_to_string(path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::schema(path, e.to_string()))?.clone();
    if headers.get(0) != Some("time") || headers.get(1) != Some("value") {
        return Err(CliError::schema(path, format!("expected columns time,value, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::schema(path, e.to_string()))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::schema(path, format!("bad number on line {}", rec.position().map_or(0, |p| p.line()))))
        };
        times.push(parse(0)?);
        values.push(parse(1)?);
    }
    TickSeries::new(times, values).map_err(CliError::from)
}

pub fn read_ticks(path: &Path) -> Result<Vec<ounoise::ingest::RawTick>, CliError> {
    let text = read_to_string(path)?;
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    ounoise::ingest::read_ticks(body.as_bytes()).map_err(|e| CliError::schema(path, e.to_string()))
}

/// JSON-lines records, skipping the metadata line.
pub fn read_json_lines(path: &Path) -> Result<Vec<serde_json::Value>, CliError> {
    let text = read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CliError::schema(path, format!("line {}: {e}", i + 1)))?;
        if v.get("meta").is_none() {
            out.push(v);
        }
    }
    Ok(out)
}
