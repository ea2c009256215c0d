//! Run configuration files.
//!
//! Configs are TOML. Couplings and detunings are written as `Omega / 2pi` in MHz,
//! linewidths as HWHM in Hz and times in us; [`load_str`] converts everything to
//! internal units once and reports every invalid field at the same time.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::dressed::Mode;
use crate::model::AtomParams;
use crate::propagator::{IntegratorConfig, Method};
use crate::pulse::{Direction, DEFAULT_TAIL_FRACTION};
use crate::scenarios::{
    DetuningR, ObservableKind, Preset, PumpParams, RunKind, ScanAxis, ScanParameter, ScenarioParams, ScenarioSpec, HZ,
};
use crate::MHZ;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error{}: {message}", location(*line, *column))]
    Parse { line: Option<usize>, column: Option<usize>, message: String },
    #[error("invalid config: {}", join(.0))]
    Validation(Vec<FieldError>),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    pub fn kind(&self) -> &'static str {
        match self {
            ConfigError::Io { .. } => "io",
            ConfigError::Parse { .. } => "parse",
            ConfigError::Validation(_) => "validation",
        }
    }

    pub fn fields(&self) -> &[FieldError] {
        match self {
            ConfigError::Validation(errors) => errors,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<RawAtom>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasers: Option<RawLasers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulses: Option<RawPulses>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<RawIntegrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump: Option<RawPump>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<RawScenario>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAtom {
    #[serde(rename = "gamma_P_inverse_ns", default, skip_serializing_if = "Option::is_none")]
    pub gamma_p_inverse_ns: Option<f64>,
    #[serde(rename = "branching_ratio_PS_over_PD", default, skip_serializing_if = "Option::is_none")]
    pub branching_ratio: Option<f64>,
    /// Optional Q -> S decay rate (1/s).
    #[serde(rename = "gamma_Q_per_s", default, skip_serializing_if = "Option::is_none")]
    pub gamma_q_per_s: Option<f64>,
    /// Optional D -> S decay rate (1/s).
    #[serde(rename = "gamma_D_per_s", default, skip_serializing_if = "Option::is_none")]
    pub gamma_d_per_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLasers {
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<RawLaser>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<RawLaser>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<RawLaser>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLaser {
    #[serde(rename = "rabi_over_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    #[serde(rename = "detuning_over_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<RawDetuning>,
    #[serde(rename = "linewidth_HWHM_Hz", default, skip_serializing_if = "Option::is_none")]
    pub linewidth: Option<f64>,
    /// Offset from the resonant value; only meaningful with an auto-resonant detuning.
    #[serde(rename = "delta_eff_over_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub delta_eff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawDetuning {
    Value(f64),
    Keyword(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPulses {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_t_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_switch_off_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_off_delay_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prep_ramp_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_freeze_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_fraction: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIntegrator {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expm_step_us: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPump {
    #[serde(rename = "rabi_over_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    #[serde(rename = "detuning_over_2pi_MHz", default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_us: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<RunKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<RawScan>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<RawSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<RawOutput>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScan {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(default)]
    pub values: Vec<f64>,
}

/// A variant of the base config: dotted paths mapped to replacement values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSeries {
    pub label: String,
    #[serde(default)]
    pub set: toml::Table,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeseries: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputNames {
    pub timeseries: String,
    pub scan: String,
    pub summary: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        OutputNames { timeseries: "timeseries".into(), scan: "scan".into(), summary: "summary".into() }
    }
}

/// One fully resolved experiment (the base config or one of its series).
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub label: Option<String>,
    /// The effective config after series overrides, as written by the user.
    pub raw: RawConfig,
    pub spec: ScenarioSpec,
    pub outputs: OutputNames,
}

impl ResolvedRun {
    /// Provenance record embedded in every output file.
    pub fn snapshot(&self) -> serde_json::Value {
        let p = &self.spec.params;
        let delta_r = p.resolved_delta_r().unwrap_or(f64::NAN);
        let alpha_c = p.alpha_c().unwrap_or(f64::NAN);
        json!({
            "schema_version": SCHEMA_VERSION,
            "label": self.label,
            "config": self.raw,
            "resolved": {
                "preset": self.spec.preset,
                "runner": self.spec.runner,
                "observable": self.spec.observable,
                "alpha_C": alpha_c,
                "mode": p.mode(),
                "lasers": {
                    "B": { "rabi_over_2pi_MHz": p.omega_b0 / MHZ, "detuning_over_2pi_MHz": p.delta_b / MHZ },
                    "R": { "rabi_over_2pi_MHz": p.omega_r0 / MHZ, "detuning_over_2pi_MHz": delta_r / MHZ },
                    "C": { "rabi_over_2pi_MHz": p.omega_c / MHZ, "detuning_over_2pi_MHz": p.delta_c / MHZ },
                },
                "scan": self.spec.scan,
                "internal_units": p,
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub name: Option<String>,
    /// The whole file as parsed, series included.
    pub source: RawConfig,
    pub runs: Vec<ResolvedRun>,
}

impl LoadedConfig {
    pub fn base(&self) -> &ResolvedRun {
        &self.runs[0]
    }

    /// Applies one override to every run, as if it had been written in the file.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<LoadedConfig, ConfigError> {
        let mut table = to_table(&self.source)?;
        set_path(&mut table, path, value)?;
        let source: RawConfig = table.try_into().map_err(de_error)?;
        load_raw(source)
    }

    /// The effective config as TOML; loading it reproduces every run.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.source).expect("raw config is serialisable")
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<LoadedConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    load_raw(raw)
}

fn load_raw(raw: RawConfig) -> Result<LoadedConfig, ConfigError> {
    let series = raw.scenario.as_ref().map(|s| s.series.clone()).unwrap_or_default();
    let mut base = raw.clone();
    if let Some(s) = base.scenario.as_mut() {
        s.series.clear();
    }
    if series.is_empty() {
        let runs = vec![resolve(&base, None)?];
        return Ok(LoadedConfig { name: raw.name.clone(), source: raw, runs });
    }

    let mut errors = Vec::new();
    let mut runs = Vec::new();
    let mut labels = std::collections::BTreeSet::new();
    for (i, s) in series.iter().enumerate() {
        let prefix = format!("scenario.series[{i}]");
        if s.label.is_empty() || !s.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            errors.push(field(&format!("{prefix}.label"), "must be non-empty and use only [A-Za-z0-9_-]"));
            continue;
        }
        if !labels.insert(s.label.clone()) {
            errors.push(field(&format!("{prefix}.label"), "duplicate series label"));
            continue;
        }
        let mut table = to_table(&base)?;
        let mut ok = true;
        for (key, value) in &s.set {
            if key.starts_with("scenario") {
                errors.push(field(&format!("{prefix}.set.{key}"), "series may not override the scenario section"));
                ok = false;
            } else if let Err(e) = set_path(&mut table, key, value.clone()) {
                errors.extend(prefixed(e, &prefix));
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let raw: RawConfig = match table.try_into() {
            Ok(r) => r,
            Err(e) => {
                errors.push(field(&format!("{prefix}.set"), e.message()));
                continue;
            }
        };
        match resolve(&raw, Some(s.label.clone())) {
            Ok(run) => runs.push(run),
            Err(e) => errors.extend(prefixed(e, &prefix)),
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError::Validation(errors));
    }
    Ok(LoadedConfig { name: raw.name.clone(), source: raw, runs })
}

fn prefixed(e: ConfigError, prefix: &str) -> Vec<FieldError> {
    match e {
        ConfigError::Validation(errs) => errs
            .into_iter()
            .map(|f| FieldError { path: format!("{prefix}: {}", f.path), message: f.message })
            .collect(),
        other => vec![field(prefix, &other.to_string())],
    }
}

fn to_table(raw: &RawConfig) -> Result<toml::Table, ConfigError> {
    toml::Table::try_from(raw).map_err(|e| ConfigError::Parse { line: None, column: None, message: e.to_string() })
}

fn de_error(e: toml::de::Error) -> ConfigError {
    ConfigError::Parse { line: None, column: None, message: e.message().to_string() }
}

fn parse_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
            (Some(line), Some(column))
        }
        None => (None, None),
    };
    ConfigError::Parse { line, column, message: e.message().trim().to_string() }
}

/// Sets the dotted `path` in `table`, creating intermediate tables.
pub fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Validation(vec![field(path, "malformed override path")]));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(ConfigError::Validation(vec![field(path, &format!("{p} is not a section"))])),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn field(path: &str, message: &str) -> FieldError {
    FieldError { path: path.to_string(), message: message.to_string() }
}

struct Checker {
    errors: Vec<FieldError>,
}

impl Checker {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError { path: path.into(), message: message.into() });
    }

    fn nonneg(&mut self, path: &str, v: f64) -> f64 {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(path, format!("must be a finite non-negative number, got {v}"));
        }
        v
    }

    fn positive(&mut self, path: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be a finite positive number, got {v}"));
        }
        v
    }

    fn finite(&mut self, path: &str, v: f64) -> f64 {
        if !v.is_finite() {
            self.push(path, format!("must be finite, got {v}"));
        }
        v
    }

    fn required(&mut self, path: &str, v: Option<f64>) -> f64 {
        match v {
            Some(v) => v,
            None => {
                self.push(path, "missing required value");
                f64::NAN
            }
        }
    }
}

fn parse_auto(s: &str) -> Option<Mode> {
    match s {
        "auto_resonance:weak" | "auto_resonance" => Some(Mode::Weak),
        "auto_resonance:exact" => Some(Mode::Exact),
        _ => None,
    }
}

/// Validates `raw` and converts it to internal units.
pub fn resolve(raw: &RawConfig, label: Option<String>) -> Result<ResolvedRun, ConfigError> {
    let mut ck = Checker { errors: Vec::new() };
    if let Some(v) = raw.schema_version {
        if v != SCHEMA_VERSION {
            ck.push("schema_version", format!("unsupported schema version {v}, expected {SCHEMA_VERSION}"));
        }
    }

    let atom_raw = raw.atom.clone().unwrap_or_default();
    let lifetime = ck.positive("atom.gamma_P_inverse_ns", atom_raw.gamma_p_inverse_ns.unwrap_or(7.0));
    let ratio = ck.positive("atom.branching_ratio_PS_over_PD", atom_raw.branching_ratio.unwrap_or(14.4));
    let gamma_q = ck.nonneg("atom.gamma_Q_per_s", atom_raw.gamma_q_per_s.unwrap_or(0.0)) * 1e-6;
    let gamma_d = ck.nonneg("atom.gamma_D_per_s", atom_raw.gamma_d_per_s.unwrap_or(0.0)) * 1e-6;
    let atom = AtomParams::from_lifetime_ns(lifetime, ratio)
        .map(|a| AtomParams { gamma_q, gamma_d, ..a })
        .unwrap_or_else(|_| AtomParams::calcium());

    let lasers = raw.lasers.clone().unwrap_or_default();
    if raw.lasers.is_none() {
        ck.push("lasers", "missing section");
    }
    let slots = [("B", lasers.b.as_ref()), ("R", lasers.r.as_ref()), ("C", lasers.c.as_ref())];
    let mut rabi = [f64::NAN; 3];
    let mut detuning = [f64::NAN; 3];
    let mut linewidth = [0.0; 3];
    let mut delta_r = DetuningR::Fixed(f64::NAN);
    let mut mismatch = 0.0;
    for (i, (name, laser)) in slots.iter().enumerate() {
        let base = format!("lasers.{name}");
        let Some(laser) = laser else {
            if raw.lasers.is_some() {
                ck.push(&base, "missing laser section");
            }
            continue;
        };
        let path = format!("{base}.rabi_over_2pi_MHz");
        let v = ck.required(&path, laser.rabi);
        rabi[i] = ck.nonneg(&path, v) * MHZ;
        let path = format!("{base}.linewidth_HWHM_Hz");
        linewidth[i] = ck.nonneg(&path, laser.linewidth.unwrap_or(0.0)) * HZ;
        let path = format!("{base}.detuning_over_2pi_MHz");
        match &laser.detuning {
            None => ck.push(&path, "missing required value"),
            Some(RawDetuning::Value(v)) => {
                detuning[i] = ck.finite(&path, *v) * MHZ;
                if i == 1 {
                    delta_r = DetuningR::Fixed(detuning[i]);
                }
            }
            Some(RawDetuning::Keyword(s)) => match parse_auto(s) {
                Some(mode) if i == 1 => delta_r = DetuningR::Auto(mode),
                Some(_) => ck.push(&path, "only the R laser detuning may be auto_resonance"),
                None => ck.push(&path, format!("expected a number or \"auto_resonance:weak|exact\", got {s:?}")),
            },
        }
        if let Some(d) = laser.delta_eff {
            let path = format!("{base}.delta_eff_over_2pi_MHz");
            if i != 1 {
                ck.push(&path, "only the R laser carries a resonance offset");
            } else if !matches!(laser.detuning, Some(RawDetuning::Keyword(_))) {
                ck.push(&path, "needs detuning_over_2pi_MHz = \"auto_resonance:weak|exact\"");
            } else {
                mismatch = ck.finite(&path, d) * MHZ;
            }
        }
    }
    if lasers.c.is_some() && detuning[2] == 0.0 {
        ck.push("lasers.C.detuning_over_2pi_MHz", "must be non-zero (the mixing alpha_C = Omega_C / 2 Delta_C diverges)");
    }

    let pulses = raw.pulses.clone().unwrap_or_default();
    let tau = ck.required("pulses.tau_us", pulses.tau_us);
    let tau = ck.positive("pulses.tau_us", tau);
    let delta_t = match pulses.delta_t_us {
        Some(v) => ck.positive("pulses.delta_t_us", v),
        None => tau,
    };
    let c_switch_off = ck.positive("pulses.c_switch_off_us", pulses.c_switch_off_us.unwrap_or(1.0));
    let switch_off_delay = ck.nonneg("pulses.switch_off_delay_us", pulses.switch_off_delay_us.unwrap_or(0.0));
    let prep_ramp = ck.positive("pulses.prep_ramp_us", pulses.prep_ramp_us.unwrap_or(1.0));
    let t_freeze = pulses.t_freeze_us.map(|t| ck.finite("pulses.t_freeze_us", t));
    let tail_fraction = pulses.tail_fraction.unwrap_or(DEFAULT_TAIL_FRACTION);
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        ck.push("pulses.tail_fraction", format!("must lie in (0, 1), got {tail_fraction}"));
    }

    let int_raw = raw.integrator.clone().unwrap_or_default();
    let d = IntegratorConfig::default();
    let integrator = IntegratorConfig {
        method: int_raw.method.unwrap_or(d.method),
        rtol: ck.positive("integrator.rtol", int_raw.rtol.unwrap_or(d.rtol)),
        atol: ck.positive("integrator.atol", int_raw.atol.unwrap_or(d.atol)),
        max_step: ck.positive("integrator.max_step_us", int_raw.max_step_us.unwrap_or(d.max_step)),
        sample_dt: ck.positive("integrator.sample_dt_us", int_raw.sample_dt_us.unwrap_or(d.sample_dt)),
        expm_step: ck.positive("integrator.expm_step_us", int_raw.expm_step_us.unwrap_or(d.expm_step)),
    };

    let pump_raw = raw.pump.clone().unwrap_or_default();
    let pd = PumpParams::default();
    let pump = PumpParams {
        rabi_b: ck.nonneg("pump.rabi_over_2pi_MHz", pump_raw.rabi.unwrap_or(pd.rabi_b / MHZ)) * MHZ,
        delta_b: ck.finite("pump.detuning_over_2pi_MHz", pump_raw.detuning.unwrap_or(pd.delta_b / MHZ)) * MHZ,
        horizon: ck.positive("pump.horizon_us", pump_raw.horizon_us.unwrap_or(pd.horizon)),
        chunk: ck.positive("pump.chunk_us", pump_raw.chunk_us.unwrap_or(pd.chunk)),
    };

    let scenario = raw.scenario.clone().unwrap_or_default();
    let preset = scenario.preset.unwrap_or(Preset::FullTransfer);
    let params = ScenarioParams {
        atom,
        omega_b0: rabi[0],
        omega_r0: rabi[1],
        omega_c: rabi[2],
        delta_b: detuning[0],
        delta_c: detuning[2],
        delta_r,
        mismatch,
        linewidths: linewidth,
        tau,
        delta_t,
        c_switch_off,
        switch_off_delay,
        prep_ramp,
        t_freeze,
        tail_fraction,
        integrator,
        pump,
    };
    let mut spec = ScenarioSpec::new(preset, params);
    if let Some(runner) = scenario.runner {
        if preset != Preset::Custom && runner != preset.runner() {
            ck.push("scenario.runner", "may only be chosen with preset = \"custom\"");
        }
        spec.runner = runner;
    }
    if let Some(obs) = scenario.observable {
        spec.observable = obs;
    }
    check_observable(&mut ck, &spec);

    if let Some(dir) = pulses.direction {
        let expected = match spec.runner {
            RunKind::ReverseTransfer => Some(Direction::QToD),
            RunKind::FullTransfer | RunKind::PartialStirap => Some(Direction::DToQ),
            RunKind::OpticalPumping => None,
        };
        if expected.is_some_and(|e| e != dir) {
            ck.push("pulses.direction", format!("{dir:?} does not match the {:?} runner", spec.runner));
        }
    }

    match (&scenario.scan, preset.default_axis()) {
        (Some(scan), implied) => {
            let parameter = match (&scan.parameter, implied) {
                (Some(p), implied) => match p.parse::<ScanParameter>() {
                    Ok(p) => {
                        if implied.is_some_and(|i| i != p) {
                            ck.push(
                                "scenario.scan.parameter",
                                format!("preset {preset:?} scans {}", implied.expect("checked").path()),
                            );
                        }
                        Some(p)
                    }
                    Err(e) => {
                        ck.push("scenario.scan.parameter", e.to_string());
                        None
                    }
                },
                (None, Some(i)) => Some(i),
                (None, None) => {
                    ck.push("scenario.scan.parameter", "missing required value");
                    None
                }
            };
            if let Some(parameter) = parameter {
                let axis = ScanAxis { parameter, values: scan.values.clone() };
                if let Err(e) = axis.validate() {
                    ck.push("scenario.scan.values", e.to_string());
                }
                if parameter == ScanParameter::Mismatch && !matches!(spec.params.delta_r, DetuningR::Auto(_)) {
                    ck.push("lasers.R.detuning_over_2pi_MHz", "a mismatch scan needs an auto_resonance R detuning");
                }
                spec.scan = Some(axis);
            }
        }
        (None, Some(_)) => ck.push("scenario.scan", format!("preset {preset:?} needs a scan section")),
        (None, None) => {}
    }
    if preset == Preset::ScanMismatch && spec.params.mismatch != 0.0 {
        ck.push("lasers.R.delta_eff_over_2pi_MHz", "is the scan axis of this preset and may not be set");
    }

    let out = scenario.output.clone().unwrap_or_default();
    let mut outputs = OutputNames::default();
    for (name, value, slot) in [
        ("timeseries", out.timeseries, &mut outputs.timeseries),
        ("scan", out.scan, &mut outputs.scan),
        ("summary", out.summary, &mut outputs.summary),
    ] {
        if let Some(v) = value {
            if v.is_empty() || v.contains(['/', '\\']) || v.starts_with('.') {
                ck.push(&format!("scenario.output.{name}"), "must be a plain file stem without directories");
            } else {
                *slot = v;
            }
        }
    }

    if ck.errors.is_empty() {
        if let Err(e) = spec.params.validate() {
            ck.push("config", e.to_string());
        }
    }
    if !ck.errors.is_empty() {
        return Err(ConfigError::Validation(ck.errors));
    }
    Ok(ResolvedRun { label, raw: raw.clone(), spec, outputs })
}

fn check_observable(ck: &mut Checker, spec: &ScenarioSpec) {
    let ok = match spec.runner {
        RunKind::FullTransfer => spec.observable != ObservableKind::CombinationF,
        RunKind::PartialStirap | RunKind::ReverseTransfer | RunKind::OpticalPumping => true,
    };
    if !ok {
        ck.push("scenario.observable", format!("{} needs the partial_stirap runner", spec.observable.label()));
    }
    if spec.scan.is_some() && spec.observable == ObservableKind::Populations {
        ck.push("scenario.observable", "populations is not a scalar and cannot be scanned");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"
        [lasers.B]
        rabi_over_2pi_MHz = 400
        detuning_over_2pi_MHz = 100
        [lasers.R]
        rabi_over_2pi_MHz = 40
        detuning_over_2pi_MHz = "auto_resonance:weak"
        [lasers.C]
        rabi_over_2pi_MHz = 10
        detuning_over_2pi_MHz = 100.0
        [pulses]
        tau_us = 20
    "#;

    #[test]
    fn resolves_units_and_resonance() {
        let cfg = load_str(FIG3).unwrap();
        let p = &cfg.base().spec.params;
        assert!((p.omega_b0 - 400.0 * MHZ).abs() < 1e-9);
        assert_eq!(p.delta_t, 20.0);
        assert!((p.resolved_delta_r().unwrap() / MHZ + 0.25).abs() < 1e-12);
        assert_eq!(p.delta_r, DetuningR::Auto(Mode::Weak));
        let echo = cfg.base().snapshot();
        let dr = echo["resolved"]["lasers"]["R"]["detuning_over_2pi_MHz"].as_f64().unwrap();
        assert!((dr + 0.25).abs() < 1e-12);
    }

    #[test]
    fn linewidth_is_converted_from_hertz() {
        let text = FIG3.replace("rabi_over_2pi_MHz = 10\n", "rabi_over_2pi_MHz = 10\nlinewidth_HWHM_Hz = 1e3\n");
        let cfg = load_str(&text).unwrap();
        let gl = cfg.base().spec.params.linewidths[2];
        assert!((gl - std::f64::consts::TAU * 1e-3).abs() < 1e-15);
    }

    #[test]
    fn missing_c_laser_is_named() {
        let start = FIG3.find("[lasers.C]").unwrap();
        let end = FIG3.find("[pulses]").unwrap();
        let text = format!("{}{}", &FIG3[..start], &FIG3[end..]);
        let err = load_str(&text).unwrap_err();
        assert!(err.fields().iter().any(|f| f.path == "lasers.C"), "{err}");
    }

    #[test]
    fn every_violation_is_reported() {
        let text = FIG3.replace("tau_us = 20", "tau_us = -1\nc_switch_off_us = 0").replace("= 400", "= -5");
        let err = load_str(&text).unwrap_err();
        let paths: Vec<_> = err.fields().iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"pulses.tau_us"), "{paths:?}");
        assert!(paths.contains(&"pulses.c_switch_off_us"), "{paths:?}");
        assert!(paths.contains(&"lasers.B.rabi_over_2pi_MHz"), "{paths:?}");
    }

    #[test]
    fn auto_resonance_only_on_r() {
        let text = FIG3.replace("detuning_over_2pi_MHz = 100\n", "detuning_over_2pi_MHz = \"auto_resonance:weak\"\n");
        let err = load_str(&text).unwrap_err();
        assert!(err.fields().iter().any(|f| f.path == "lasers.B.detuning_over_2pi_MHz"), "{err}");
    }

    #[test]
    fn unknown_keys_fail_with_line() {
        let text = FIG3.replace("tau_us = 20", "tau_us = 20\ntau_typo = 3");
        match load_str(&text).unwrap_err() {
            ConfigError::Parse { line: Some(line), message, .. } => {
                assert_eq!(line, 13);
                assert!(message.contains("tau_typo"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn series_override_paths() {
        let text = format!(
            "{FIG3}\n[scenario]\n[[scenario.series]]\nlabel = \"low\"\nset = {{ \"lasers.B.rabi_over_2pi_MHz\" = 200, \"pulses.tau_us\" = 10 }}\n\
             [[scenario.series]]\nlabel = \"base\"\n"
        );
        let cfg = load_str(&text).unwrap();
        assert_eq!(cfg.runs.len(), 2);
        assert!((cfg.runs[0].spec.params.omega_b0 - 200.0 * MHZ).abs() < 1e-9);
        assert_eq!(cfg.runs[0].spec.params.tau, 10.0);
        assert_eq!(cfg.runs[0].spec.params.delta_t, 10.0);
        assert!((cfg.runs[1].spec.params.omega_b0 - 400.0 * MHZ).abs() < 1e-9);
    }

    #[test]
    fn snapshot_round_trips_through_toml() {
        let cfg = load_str(FIG3).unwrap();
        let again = load_str(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn scan_presets_pin_their_axis() {
        let text = format!(
            "{FIG3}\n[scenario]\npreset = \"scan_tau\"\n[scenario.scan]\nparameter = \"pulses.tau_us\"\nvalues = [5, 10]\n"
        );
        let err = load_str(&text).unwrap_err();
        assert!(err.fields().iter().any(|f| f.path == "scenario.scan.parameter"), "{err}");
        let text = format!("{FIG3}\n[scenario]\npreset = \"scan_tau\"\n[scenario.scan]\nvalues = [5, 10]\n");
        let cfg = load_str(&text).unwrap();
        assert_eq!(cfg.base().spec.scan.as_ref().unwrap().parameter, ScanParameter::TauEqualsDelay);
    }

    #[test]
    fn cli_override_applies_to_all_runs() {
        let cfg = load_str(FIG3).unwrap();
        let cfg = cfg.with_override("integrator.rtol", toml::Value::Float(1e-7)).unwrap();
        assert_eq!(cfg.base().spec.params.integrator.rtol, 1e-7);
        assert_eq!(cfg.base().raw.integrator.as_ref().unwrap().rtol, Some(1e-7));
        let text = format!("{FIG3}\n[scenario]\n[[scenario.series]]\nlabel = \"a\"\n[[scenario.series]]\nlabel = \"b\"\n");
        let cfg = load_str(&text).unwrap().with_override("integrator.rtol", toml::Value::Float(1e-7)).unwrap();
        assert_eq!(cfg.runs.len(), 2);
        assert!(cfg.runs.iter().all(|r| r.spec.params.integrator.rtol == 1e-7));
    }
}
