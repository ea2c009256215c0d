//! Result files.
//!
//! Delimited files start with `#` comment lines carrying the schema version and
//! the resolved config snapshot, followed by a header row. Numbers use Rust's
//! shortest round-trip exponent formatting so identical runs give identical bytes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::SCHEMA_VERSION;
use crate::propagator::TimeSeries;
use crate::qcore::Level;
use crate::scenarios::ScanResult;

pub const TIMESERIES_COLUMNS: [&str; 10] = [
    "t_us", "rho_SS", "rho_PP", "rho_DD", "rho_QQ", "re_rho_SQ", "im_rho_SQ", "re_rho_DQ", "im_rho_DQ", "fidelity",
];

pub const SCAN_COLUMNS: [&str; 4] = ["axis_value", "one_minus_F", "P_Q", "status"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn header(snapshot: &Value) -> String {
    format!("# schema_version: {SCHEMA_VERSION}\n# config: {snapshot}\n")
}

/// Sample `k` laid out as [`TIMESERIES_COLUMNS`].
pub fn timeseries_row(ts: &TimeSeries, k: usize) -> [f64; 10] {
    let t = ts.times[k];
    let rho = &ts.states[k];
    let sq = rho.element(Level::S, Level::Q);
    let dq = rho.element(Level::D, Level::Q);
    [
        t,
        rho.population(Level::S),
        rho.population(Level::P),
        rho.population(Level::D),
        rho.population(Level::Q),
        sq.re,
        sq.im,
        dq.re,
        dq.im,
        ts.fidelity[k],
    ]
}

pub fn timeseries_csv(ts: &TimeSeries, snapshot: &Value) -> String {
    let mut out = header(snapshot);
    out.push_str(&TIMESERIES_COLUMNS.join(","));
    out.push('\n');
    for k in 0..ts.times.len() {
        let fields: Vec<String> = timeseries_row(ts, k).iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn timeseries_json(ts: &TimeSeries, snapshot: &Value) -> String {
    let rows: Vec<[f64; 10]> = (0..ts.times.len()).map(|k| timeseries_row(ts, k)).collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": snapshot,
        "columns": TIMESERIES_COLUMNS,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serialisable");
    s.push('\n');
    s
}

/// CSV status field; commas and newlines in error messages would break the row.
fn status_field(status: &str) -> String {
    status.replace([',', '\n', '\r'], " ")
}

pub fn scan_csv(result: &ScanResult, snapshot: &Value) -> String {
    let mut out = header(snapshot);
    out.push_str(&SCAN_COLUMNS.join(","));
    out.push('\n');
    for p in &result.points {
        let _ = writeln!(out, "{:e},{:e},{:e},{}", p.axis_value, p.one_minus_f, p.p_q, status_field(&p.status.label()));
    }
    out
}

pub fn scan_json(result: &ScanResult, snapshot: &Value) -> String {
    let rows: Vec<Value> = result
        .points
        .iter()
        .map(|p| json!([finite_or_null(p.axis_value), finite_or_null(p.one_minus_f), finite_or_null(p.p_q), p.status.label()]))
        .collect();
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "config": snapshot,
        "parameter": result.parameter,
        "observable": result.observable,
        "columns": SCAN_COLUMNS,
        "rows": rows,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serialisable");
    s.push('\n');
    s
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn timeseries(ts: &TimeSeries, snapshot: &Value, format: Format) -> String {
    match format {
        Format::Csv => timeseries_csv(ts, snapshot),
        Format::Json => timeseries_json(ts, snapshot),
    }
}

pub fn scan(result: &ScanResult, snapshot: &Value, format: Format) -> String {
    match format {
        Format::Csv => scan_csv(result, snapshot),
        Format::Json => scan_json(result, snapshot),
    }
}
