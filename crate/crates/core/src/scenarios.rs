//! Preset experiments and the parameter-scan engine.
//!
//! All quantities in [`ScenarioParams`] are in internal units (rad/us, us).
//! Scan axis values are given in config units and converted by
//! [`ScanParameter::apply`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dressed::{dark_state, dressed_frame, mixing_weak, resonance_detuning, transfer_fidelity, Mode};
use crate::error::{Error, Result};
use crate::model::{AtomParams, LaserField, NSchemeModel, Transition};
use crate::propagator::{propagate_with, IntegratorConfig, RunStats, TimeSeries};
use crate::pulse::{make_stirap, Direction, PulseEnvelope, StirapOptions, StirapSchedule, DEFAULT_TAIL_FRACTION};
use crate::qcore::{expectation, DensityMatrix, Level};
use crate::MHZ;

/// Hz (HWHM) to rad/us.
pub const HZ: f64 = std::f64::consts::TAU * 1e-6;

/// Population threshold that ends optical pumping.
pub const PUMP_THRESHOLD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningR {
    /// Fixed value (rad/us).
    Fixed(f64),
    /// Derived from the three-photon resonance in the given dressed mode.
    Auto(Mode),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PumpParams {
    /// B Rabi frequency during pumping (rad/us).
    pub rabi_b: f64,
    pub delta_b: f64,
    /// Give up after this much pumping time (us).
    pub horizon: f64,
    /// Propagation chunk between threshold checks (us).
    pub chunk: f64,
}

impl Default for PumpParams {
    fn default() -> Self {
        PumpParams { rabi_b: 20.0 * MHZ, delta_b: 0.0, horizon: 200.0, chunk: 5.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub atom: AtomParams,
    pub omega_b0: f64,
    pub omega_r0: f64,
    pub omega_c: f64,
    pub delta_b: f64,
    pub delta_c: f64,
    pub delta_r: DetuningR,
    /// Offset added to an auto-resonant `Delta_R` (rad/us).
    pub mismatch: f64,
    /// HWHM linewidths of (B, R, C) in rad/us.
    pub linewidths: [f64; 3],
    pub tau: f64,
    pub delta_t: f64,
    /// Exponential C switch-off time constant (us).
    pub c_switch_off: f64,
    pub switch_off_delay: f64,
    /// tanh C switch-on duration before a reverse transfer (us).
    pub prep_ramp: f64,
    /// Freeze time for partial STIRAP; `None` picks 12 us after the later pulse center.
    pub t_freeze: Option<f64>,
    pub tail_fraction: f64,
    pub integrator: IntegratorConfig,
    pub pump: PumpParams,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self::fig3()
    }
}

/// Freeze offset after the second pulse center used when `t_freeze` is unset (us).
pub const DEFAULT_FREEZE_OFFSET: f64 = 12.0;

impl ScenarioParams {
    /// Strong-coupling reference set: tau = dt = 20 us, Omega_C/2pi = 10 MHz,
    /// Delta_C/2pi = 100 MHz, Omega_B/2pi = 400 MHz, Delta_B/2pi = 100 MHz,
    /// Omega_R/2pi = 40 MHz, weak-mode resonance.
    pub fn fig3() -> Self {
        ScenarioParams {
            atom: AtomParams::calcium(),
            omega_b0: 400.0 * MHZ,
            omega_r0: 40.0 * MHZ,
            omega_c: 10.0 * MHZ,
            delta_b: 100.0 * MHZ,
            delta_c: 100.0 * MHZ,
            delta_r: DetuningR::Auto(Mode::Weak),
            mismatch: 0.0,
            linewidths: [0.0; 3],
            tau: 20.0,
            delta_t: 20.0,
            c_switch_off: 1.0,
            switch_off_delay: 0.0,
            prep_ramp: 1.0,
            t_freeze: None,
            tail_fraction: DEFAULT_TAIL_FRACTION,
            integrator: IntegratorConfig::default(),
            pump: PumpParams::default(),
        }
    }

    pub fn alpha_c(&self) -> Result<f64> {
        mixing_weak(self.omega_c, self.delta_c)
    }

    /// Dressed mode implied by the R detuning; fixed detunings use the weak frame.
    pub fn mode(&self) -> Mode {
        match self.delta_r {
            DetuningR::Auto(mode) => mode,
            DetuningR::Fixed(_) => Mode::Weak,
        }
    }

    pub fn resolved_delta_r(&self) -> Result<f64> {
        match self.delta_r {
            DetuningR::Fixed(v) => Ok(v),
            DetuningR::Auto(mode) => {
                Ok(resonance_detuning(self.delta_b, self.delta_c, self.omega_c, mode)? + self.mismatch)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.atom.validate()?;
        let nonneg = [
            ("omega_b0", self.omega_b0),
            ("omega_r0", self.omega_r0),
            ("omega_c", self.omega_c),
            ("linewidth B", self.linewidths[0]),
            ("linewidth R", self.linewidths[1]),
            ("linewidth C", self.linewidths[2]),
            ("switch_off_delay", self.switch_off_delay),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        let positive = [
            ("tau", self.tau),
            ("delta_t", self.delta_t),
            ("c_switch_off", self.c_switch_off),
            ("prep_ramp", self.prep_ramp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.delta_c == 0.0 {
            return Err(Error::DivisionByZeroDetuning);
        }
        self.integrator.validate()?;
        self.resolved_delta_r()?;
        Ok(())
    }

    pub fn schedule(&self, direction: Direction, switch_off: bool, prep: bool) -> Result<StirapSchedule> {
        let options = StirapOptions {
            c_switch_off: switch_off.then_some(self.c_switch_off),
            switch_off_delay: self.switch_off_delay,
            prep_ramp: prep.then_some(self.prep_ramp),
            tail_fraction: self.tail_fraction,
        };
        make_stirap(direction, self.omega_b0, self.omega_r0, self.tau, self.delta_t, self.omega_c, options)
    }

    pub fn model(&self, envelopes: &[PulseEnvelope; 3]) -> Result<NSchemeModel> {
        let delta_r = self.resolved_delta_r()?;
        let detunings = [self.delta_b, delta_r, self.delta_c];
        let peaks = [self.omega_b0, self.omega_r0, self.omega_c];
        let lasers = [0, 1, 2].map(|i| {
            LaserField::new(Transition::ALL[i], detunings[i], self.linewidths[i], envelopes[i].clone())
                .with_peak(peaks[i])
        });
        NSchemeModel::new(self.atom, lasers)
    }

    /// Default partial-STIRAP freeze time.
    pub fn default_freeze(&self) -> f64 {
        0.5 * self.delta_t + DEFAULT_FREEZE_OFFSET
    }
}

/// Second-order transfer fidelity with the instantaneous mixing `Omega_C(t) / 2 Delta_C`.
fn transfer_observable<'a>(model: &'a NSchemeModel, delta_c: f64) -> impl Fn(f64, &DensityMatrix) -> f64 + Sync + 'a {
    move |t, rho| {
        let alpha_c = model.rabi_at(t)[2] / (2.0 * delta_c);
        transfer_fidelity(rho, alpha_c)
    }
}

#[derive(Clone, Debug)]
pub struct FullTransfer {
    pub series: TimeSeries,
    pub f_after_stirap: f64,
    pub p_q_final: f64,
    /// Time at which the switch-off of C begins.
    pub stirap_end: f64,
}

/// `|D>` to `|Q>` transfer followed by the exponential switch-off of C.
pub fn run_full_transfer(params: &ScenarioParams) -> Result<FullTransfer> {
    run_full_transfer_from(params, &DensityMatrix::basis(Level::D))
}

pub fn run_full_transfer_from(params: &ScenarioParams, rho0: &DensityMatrix) -> Result<FullTransfer> {
    params.validate()?;
    let sched = params.schedule(Direction::DToQ, true, false)?;
    let model = params.model(&sched.envelopes)?;
    let (start, end) = sched.window();
    let off = sched.c_off.expect("switch-off requested").start;
    let obs = transfer_observable(&model, params.delta_c);

    let mut series = propagate_with(rho0, &model, start, off, &params.integrator, &obs)?;
    let f_after_stirap = obs(off, &series.final_state);
    let rest = propagate_with(&series.final_state, &model, off, end, &params.integrator, &obs)?;
    series.extend(rest);
    let p_q_final = series.final_state.population(Level::Q);
    Ok(FullTransfer { series, f_after_stirap, p_q_final, stirap_end: off })
}

#[derive(Clone, Debug)]
pub struct ReverseTransfer {
    /// C switch-on stage, observable is the overlap with the exact `|Q_S>`.
    pub prep: TimeSeries,
    /// Q-to-D STIRAP stage, observable is `rho_DD`.
    pub transfer: TimeSeries,
    pub prep_fidelity_to_qs: f64,
    pub final_rho_dd: f64,
}

/// `|Q>` dressed by a tanh switch-on of C, then the Q-to-D pulse order.
pub fn run_reverse_transfer(params: &ScenarioParams) -> Result<ReverseTransfer> {
    run_reverse_transfer_from(params, &DensityMatrix::basis(Level::Q))
}

pub fn run_reverse_transfer_from(params: &ScenarioParams, rho0: &DensityMatrix) -> Result<ReverseTransfer> {
    params.validate()?;
    let sched = params.schedule(Direction::QToD, false, true)?;
    let (prep_start, w_start) = sched.prep_window().expect("preparation requested");
    let (_, w_end) = sched.window();

    let frame = dressed_frame(params.alpha_c()?, params.delta_c, Mode::Exact);
    let qs = frame.q_s_state;
    let prep_model = params.model(&sched.prep_envelopes())?;
    let overlap = |_: f64, rho: &DensityMatrix| expectation(&qs, rho).unwrap_or(f64::NAN);
    let prep = propagate_with(rho0, &prep_model, prep_start, w_start, &params.integrator, &overlap)?;
    let prep_fidelity_to_qs = expectation(&qs, &prep.final_state)?;

    let model = params.model(&sched.envelopes)?;
    let rho_dd = |_: f64, rho: &DensityMatrix| rho.population(Level::D);
    let transfer = propagate_with(&prep.final_state, &model, w_start, w_end, &params.integrator, &rho_dd)?;
    let final_rho_dd = transfer.final_state.population(Level::D);
    Ok(ReverseTransfer { prep, transfer, prep_fidelity_to_qs, final_rho_dd })
}

#[derive(Clone, Debug)]
pub struct PartialStirap {
    /// Observable is the combination fidelity against the instantaneous dark state.
    pub series: TimeSeries,
    pub t_freeze: f64,
    pub min_fidelity: f64,
    pub final_fidelity: f64,
}

/// STIRAP whose B and R envelopes hold their values from `t_freeze` on.
pub fn run_partial_stirap(params: &ScenarioParams, t_freeze: Option<f64>) -> Result<PartialStirap> {
    params.validate()?;
    let sched = params.schedule(Direction::DToQ, false, false)?;
    let (start, end) = sched.window();
    let t_freeze = t_freeze.or(params.t_freeze).unwrap_or_else(|| params.default_freeze());
    if !(t_freeze >= start && t_freeze <= end) {
        return Err(Error::InvalidSchedule(format!(
            "freeze time {t_freeze} us lies outside the window [{start}, {end}]"
        )));
    }
    let frozen = sched.frozen_at(t_freeze);
    let model = params.model(&frozen.envelopes)?;
    let frame = dressed_frame(params.alpha_c()?, params.delta_c, Mode::Exact);
    let obs = |t: f64, rho: &DensityMatrix| {
        let [b, r, _] = model.rabi_at(t);
        dark_state(&frame, b, r)
            .and_then(|dark| expectation(&dark.vector, rho))
            .unwrap_or(f64::NAN)
    };

    // the envelopes have a kink at the freeze, so the integrator stops there
    let rho0 = DensityMatrix::basis(Level::D);
    let series = if t_freeze > start && t_freeze < end {
        let mut series = propagate_with(&rho0, &model, start, t_freeze, &params.integrator, &obs)?;
        let rest = propagate_with(&series.final_state, &model, t_freeze, end, &params.integrator, &obs)?;
        series.extend(rest);
        series
    } else {
        propagate_with(&rho0, &model, start, end, &params.integrator, &obs)?
    };
    Ok(partial_summary(series, t_freeze, &obs))
}

fn partial_summary(series: TimeSeries, t_freeze: f64, obs: &dyn Fn(f64, &DensityMatrix) -> f64) -> PartialStirap {
    let final_fidelity = obs(series.final_time, &series.final_state);
    let min_fidelity = series.min_fidelity().min(final_fidelity);
    PartialStirap { series, t_freeze, min_fidelity, final_fidelity }
}

#[derive(Clone, Debug)]
pub struct OpticalPumping {
    pub final_rho_dd: f64,
    /// Time from the start of pumping to the first sample past threshold (us).
    pub pump_time: f64,
    pub final_state: DensityMatrix,
    pub series: Option<TimeSeries>,
}

/// B-only pumping into `|D>` until `rho_DD > 1 - 1e-6`.
pub fn run_optical_pumping_prep(params: &ScenarioParams, rho0: &DensityMatrix) -> Result<OpticalPumping> {
    rho0.validate()?;
    if rho0.population(Level::Q) > 1e-12 || rho0.element(Level::S, Level::Q).norm() > 1e-12 {
        return Err(Error::InvalidParameter("optical pumping needs an initial state without Q population".into()));
    }
    let pump = params.pump;
    if !(pump.horizon > 0.0 && pump.chunk > 0.0) || pump.rabi_b < 0.0 {
        return Err(Error::InvalidParameter("pumping horizon and chunk must be positive".into()));
    }
    let threshold = 1.0 - PUMP_THRESHOLD;
    if rho0.population(Level::D) > threshold {
        return Ok(OpticalPumping { final_rho_dd: rho0.population(Level::D), pump_time: 0.0, final_state: *rho0, series: None });
    }
    let b = LaserField::new(Transition::B, pump.delta_b, params.linewidths[0], PulseEnvelope::Constant { rabi: pump.rabi_b });
    let model = NSchemeModel::new(params.atom, [b, LaserField::off(Transition::R), LaserField::off(Transition::C)])?;
    let obs = |_: f64, rho: &DensityMatrix| rho.population(Level::D);

    let mut t = 0.0;
    let mut rho = *rho0;
    let mut series: Option<TimeSeries> = None;
    while t < pump.horizon {
        let t_next = (t + pump.chunk).min(pump.horizon);
        let chunk = propagate_with(&rho, &model, t, t_next, &params.integrator, &obs)?;
        rho = chunk.final_state;
        let hit = chunk.times.iter().zip(&chunk.fidelity).find(|(_, &p)| p > threshold).map(|(&t, _)| t);
        match series.as_mut() {
            Some(s) => s.extend(chunk),
            None => series = Some(chunk),
        }
        if let Some(pump_time) = hit {
            let s = series.expect("at least one chunk");
            let idx = s.times.iter().position(|&x| x == pump_time).expect("hit sample recorded");
            return Ok(OpticalPumping {
                final_rho_dd: s.states[idx].population(Level::D),
                pump_time,
                final_state: s.states[idx],
                series: Some(s),
            });
        }
        t = t_next;
    }
    Err(Error::Timeout { horizon: pump.horizon })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    FullTransfer,
    ReverseTransfer,
    ScanTau,
    ScanMismatch,
    ScanLinewidth,
    PartialStirap,
    OpticalPumpingPrep,
    Custom,
}

impl Preset {
    pub fn is_scan(self) -> bool {
        matches!(self, Preset::ScanTau | Preset::ScanMismatch | Preset::ScanLinewidth)
    }

    /// Scan axis implied by a scan preset.
    pub fn default_axis(self) -> Option<ScanParameter> {
        match self {
            Preset::ScanTau => Some(ScanParameter::TauEqualsDelay),
            Preset::ScanMismatch => Some(ScanParameter::Mismatch),
            Preset::ScanLinewidth => Some(ScanParameter::LinewidthAll),
            _ => None,
        }
    }

    pub fn runner(self) -> RunKind {
        match self {
            Preset::ReverseTransfer => RunKind::ReverseTransfer,
            Preset::PartialStirap => RunKind::PartialStirap,
            Preset::OpticalPumpingPrep => RunKind::OpticalPumping,
            _ => RunKind::FullTransfer,
        }
    }
}

/// Which experiment a single run (or scan point) executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    FullTransfer,
    ReverseTransfer,
    PartialStirap,
    OpticalPumping,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableKind {
    #[serde(rename = "F_eq10")]
    FEq10,
    #[serde(rename = "P_Q")]
    PQ,
    #[serde(rename = "combination_F")]
    CombinationF,
    #[serde(rename = "populations")]
    Populations,
}

impl ObservableKind {
    pub fn label(self) -> &'static str {
        match self {
            ObservableKind::FEq10 => "F_eq10",
            ObservableKind::PQ => "P_Q",
            ObservableKind::CombinationF => "combination_F",
            ObservableKind::Populations => "populations",
        }
    }
}

/// Scan axis. Values are in config units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScanParameter {
    /// `pulses.tau_us` with the delay tied to the width.
    TauEqualsDelay,
    Tau,
    DeltaT,
    Rabi(Transition),
    Detuning(Transition),
    /// `Delta_eff` relative to the resonant `Delta_R` (MHz).
    Mismatch,
    Linewidth(Transition),
    LinewidthAll,
    CSwitchOff,
    PrepRamp,
    TFreeze,
}

impl ScanParameter {
    pub fn path(self) -> String {
        match self {
            ScanParameter::TauEqualsDelay => "pulses.tau_us=delta_t_us".into(),
            ScanParameter::Tau => "pulses.tau_us".into(),
            ScanParameter::DeltaT => "pulses.delta_t_us".into(),
            ScanParameter::Rabi(t) => format!("lasers.{}.rabi_over_2pi_MHz", t.label()),
            ScanParameter::Detuning(t) => format!("lasers.{}.detuning_over_2pi_MHz", t.label()),
            ScanParameter::Mismatch => "lasers.R.delta_eff_over_2pi_MHz".into(),
            ScanParameter::Linewidth(t) => format!("lasers.{}.linewidth_HWHM_Hz", t.label()),
            ScanParameter::LinewidthAll => "lasers.linewidth_HWHM_Hz".into(),
            ScanParameter::CSwitchOff => "pulses.c_switch_off_us".into(),
            ScanParameter::PrepRamp => "pulses.prep_ramp_us".into(),
            ScanParameter::TFreeze => "pulses.t_freeze_us".into(),
        }
    }

    /// Substitutes `value` (config units) into `params`.
    pub fn apply(self, params: &mut ScenarioParams, value: f64) {
        match self {
            ScanParameter::TauEqualsDelay => {
                params.tau = value;
                params.delta_t = value;
            }
            ScanParameter::Tau => params.tau = value,
            ScanParameter::DeltaT => params.delta_t = value,
            ScanParameter::Rabi(Transition::B) => params.omega_b0 = value * MHZ,
            ScanParameter::Rabi(Transition::R) => params.omega_r0 = value * MHZ,
            ScanParameter::Rabi(Transition::C) => params.omega_c = value * MHZ,
            ScanParameter::Detuning(Transition::B) => params.delta_b = value * MHZ,
            ScanParameter::Detuning(Transition::R) => params.delta_r = DetuningR::Fixed(value * MHZ),
            ScanParameter::Detuning(Transition::C) => params.delta_c = value * MHZ,
            ScanParameter::Mismatch => params.mismatch = value * MHZ,
            ScanParameter::Linewidth(t) => params.linewidths[t.index()] = value * HZ,
            ScanParameter::LinewidthAll => params.linewidths = [value * HZ; 3],
            ScanParameter::CSwitchOff => params.c_switch_off = value,
            ScanParameter::PrepRamp => params.prep_ramp = value,
            ScanParameter::TFreeze => params.t_freeze = Some(value),
        }
    }
}

impl fmt::Display for ScanParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path())
    }
}

impl From<ScanParameter> for String {
    fn from(p: ScanParameter) -> String {
        p.path()
    }
}

impl TryFrom<String> for ScanParameter {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ScanParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fixed = match s {
            "pulses.tau_us=delta_t_us" | "tau=delta_t" => Some(ScanParameter::TauEqualsDelay),
            "pulses.tau_us" => Some(ScanParameter::Tau),
            "pulses.delta_t_us" => Some(ScanParameter::DeltaT),
            "lasers.R.delta_eff_over_2pi_MHz" | "delta_eff_over_2pi_MHz" => Some(ScanParameter::Mismatch),
            "lasers.linewidth_HWHM_Hz" => Some(ScanParameter::LinewidthAll),
            "pulses.c_switch_off_us" => Some(ScanParameter::CSwitchOff),
            "pulses.prep_ramp_us" => Some(ScanParameter::PrepRamp),
            "pulses.t_freeze_us" => Some(ScanParameter::TFreeze),
            _ => None,
        };
        if let Some(p) = fixed {
            return Ok(p);
        }
        let parts: Vec<&str> = s.split('.').collect();
        if let ["lasers", laser, field] = parts.as_slice() {
            let t = match *laser {
                "B" => Transition::B,
                "R" => Transition::R,
                "C" => Transition::C,
                _ => return Err(Error::InvalidParameter(format!("unknown laser in scan path {s:?}"))),
            };
            match *field {
                "rabi_over_2pi_MHz" => return Ok(ScanParameter::Rabi(t)),
                "detuning_over_2pi_MHz" => return Ok(ScanParameter::Detuning(t)),
                "linewidth_HWHM_Hz" => return Ok(ScanParameter::Linewidth(t)),
                _ => {}
            }
        }
        Err(Error::InvalidParameter(format!("unknown scan parameter {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanAxis {
    pub parameter: ScanParameter,
    pub values: Vec<f64>,
}

impl ScanAxis {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParameter("scan value list is empty".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("scan values must be finite".into()));
        }
        let up = self.values.windows(2).all(|w| w[1] > w[0]);
        let down = self.values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::InvalidParameter("scan values must be strictly monotone".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub preset: Preset,
    pub params: ScenarioParams,
    pub scan: Option<ScanAxis>,
    pub observable: ObservableKind,
    /// Experiment run per point; defaults to the preset's runner.
    pub runner: RunKind,
}

impl ScenarioSpec {
    pub fn new(preset: Preset, params: ScenarioParams) -> Self {
        let observable = match preset {
            Preset::PartialStirap => ObservableKind::CombinationF,
            Preset::ScanTau | Preset::ScanLinewidth | Preset::ScanMismatch => ObservableKind::PQ,
            Preset::OpticalPumpingPrep => ObservableKind::Populations,
            _ => ObservableKind::FEq10,
        };
        ScenarioSpec { preset, params, scan: None, observable, runner: preset.runner() }
    }

    pub fn with_scan(mut self, parameter: ScanParameter, values: Vec<f64>) -> Self {
        self.scan = Some(ScanAxis { parameter, values });
        self
    }

    pub fn with_observable(mut self, observable: ObservableKind) -> Self {
        self.observable = observable;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Failed(String),
}

impl PointStatus {
    pub fn label(&self) -> String {
        match self {
            PointStatus::Ok => "ok".into(),
            PointStatus::Failed(msg) => format!("error: {msg}"),
        }
    }
}

/// Scalar outcome of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResult {
    pub axis_value: f64,
    pub one_minus_f: f64,
    pub p_q: f64,
    pub status: PointStatus,
    pub runtime_s: f64,
    pub stats: RunStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanResult {
    pub parameter: ScanParameter,
    pub observable: ObservableKind,
    pub points: Vec<PointResult>,
}

impl ScanResult {
    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.axis_value).collect()
    }

    pub fn one_minus_f(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.one_minus_f).collect()
    }

    pub fn all_ok(&self) -> bool {
        self.points.iter().all(|p| p.status == PointStatus::Ok)
    }
}

/// Single run reduced to `(1 - F, P_Q, stats)` for the chosen observable.
pub fn run_point(params: &ScenarioParams, runner: RunKind, observable: ObservableKind) -> Result<(f64, f64, RunStats)> {
    match runner {
        RunKind::FullTransfer => {
            let run = run_full_transfer(params)?;
            let f = match observable {
                ObservableKind::FEq10 => run.f_after_stirap,
                ObservableKind::PQ | ObservableKind::Populations => run.p_q_final,
                ObservableKind::CombinationF => {
                    return Err(Error::InvalidParameter("combination_F needs the partial_stirap runner".into()))
                }
            };
            Ok((1.0 - f, run.p_q_final, run.series.stats))
        }
        RunKind::ReverseTransfer => {
            let run = run_reverse_transfer(params)?;
            let mut stats = run.prep.stats;
            let p_q = run.transfer.final_state.population(Level::Q);
            stats_merge(&mut stats, &run.transfer.stats);
            Ok((1.0 - run.final_rho_dd, p_q, stats))
        }
        RunKind::PartialStirap => {
            let run = run_partial_stirap(params, None)?;
            let p_q = run.series.final_state.population(Level::Q);
            let f = match observable {
                ObservableKind::CombinationF | ObservableKind::FEq10 => run.final_fidelity,
                ObservableKind::PQ | ObservableKind::Populations => p_q,
            };
            Ok((1.0 - f, p_q, run.series.stats))
        }
        RunKind::OpticalPumping => {
            let run = run_optical_pumping_prep(params, &DensityMatrix::basis(Level::S))?;
            let stats = run.series.map(|s| s.stats).unwrap_or_default();
            Ok((1.0 - run.final_rho_dd, run.final_state.population(Level::Q), stats))
        }
    }
}

fn stats_merge(a: &mut RunStats, b: &RunStats) {
    a.accepted_steps += b.accepted_steps;
    a.rejected_steps += b.rejected_steps;
    a.rhs_evals += b.rhs_evals;
    a.invariants.merge(&b.invariants);
}

/// Runs every axis point on a pool of `workers` threads. Failed points are
/// recorded and do not abort the scan; results keep the axis order.
pub fn run_scan(spec: &ScenarioSpec, workers: usize) -> Result<ScanResult> {
    let axis = spec
        .scan
        .clone()
        .or_else(|| spec.preset.default_axis().map(|p| ScanAxis { parameter: p, values: Vec::new() }))
        .ok_or_else(|| Error::InvalidParameter("scan requested without a scan axis".into()))?;
    axis.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    let points = pool.install(|| {
        axis.values
            .par_iter()
            .map(|&value| {
                let mut params = spec.params.clone();
                axis.parameter.apply(&mut params, value);
                let started = Instant::now();
                let outcome = run_point(&params, spec.runner, spec.observable);
                let runtime_s = started.elapsed().as_secs_f64();
                match outcome {
                    Ok((one_minus_f, p_q, stats)) => {
                        PointResult { axis_value: value, one_minus_f, p_q, status: PointStatus::Ok, runtime_s, stats }
                    }
                    Err(e) => PointResult {
                        axis_value: value,
                        one_minus_f: f64::NAN,
                        p_q: f64::NAN,
                        status: PointStatus::Failed(e.to_string()),
                        runtime_s,
                        stats: RunStats::default(),
                    },
                }
            })
            .collect()
    });
    Ok(ScanResult { parameter: axis.parameter, observable: spec.observable, points })
}

/// Full width (MHz) of the mismatch profile where the full-transfer `P_Q`
/// crosses `level`, located by bisection on each side of zero mismatch.
/// `reach` (MHz) must bracket both crossings.
pub fn mismatch_width(params: &ScenarioParams, level: f64, reach: f64, tol: f64) -> Result<f64> {
    let fidelity = |mhz: f64| -> Result<f64> {
        let mut p = params.clone();
        ScanParameter::Mismatch.apply(&mut p, mhz);
        Ok(run_full_transfer(&p)?.p_q_final)
    };
    if fidelity(0.0)? <= level {
        return Err(Error::NoSolution(format!("resonant fidelity does not exceed {level}")));
    }
    let mut edges = [0.0; 2];
    for (slot, sign) in [(0, -1.0), (1, 1.0)] {
        let (mut inside, mut outside) = (0.0, sign * reach);
        if fidelity(outside)? > level {
            return Err(Error::NoSolution(format!("profile stays above {level} out to {} MHz", sign * reach)));
        }
        while (outside - inside).abs() > tol {
            let mid = 0.5 * (inside + outside);
            if fidelity(mid)? > level {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        edges[slot] = 0.5 * (inside + outside);
    }
    Ok(edges[1] - edges[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig3_resonance_is_minus_quarter_megahertz() {
        let p = ScenarioParams::fig3();
        assert!((p.resolved_delta_r().unwrap() / MHZ + 0.25).abs() < 1e-12);
        assert!((p.alpha_c().unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn scan_paths_round_trip() {
        let all = [
            ScanParameter::TauEqualsDelay,
            ScanParameter::Tau,
            ScanParameter::DeltaT,
            ScanParameter::Rabi(Transition::B),
            ScanParameter::Rabi(Transition::C),
            ScanParameter::Detuning(Transition::R),
            ScanParameter::Mismatch,
            ScanParameter::Linewidth(Transition::C),
            ScanParameter::LinewidthAll,
            ScanParameter::CSwitchOff,
            ScanParameter::PrepRamp,
            ScanParameter::TFreeze,
        ];
        for p in all {
            assert_eq!(p.path().parse::<ScanParameter>().unwrap(), p);
        }
        assert!("lasers.X.rabi_over_2pi_MHz".parse::<ScanParameter>().is_err());
        assert!("pulses.width".parse::<ScanParameter>().is_err());
    }

    #[test]
    fn apply_converts_units() {
        let mut p = ScenarioParams::fig3();
        ScanParameter::Mismatch.apply(&mut p, 0.1);
        let resonant = resonance_detuning(p.delta_b, p.delta_c, p.omega_c, Mode::Weak).unwrap();
        assert!((p.resolved_delta_r().unwrap() - resonant - 0.1 * MHZ).abs() < 1e-12);
        ScanParameter::LinewidthAll.apply(&mut p, 1000.0);
        assert_eq!(p.linewidths, [1000.0 * HZ; 3]);
        ScanParameter::TauEqualsDelay.apply(&mut p, 7.5);
        assert_eq!((p.tau, p.delta_t), (7.5, 7.5));
    }

    #[test]
    fn axis_must_be_strictly_monotone() {
        let axis = |values: Vec<f64>| ScanAxis { parameter: ScanParameter::Tau, values };
        assert!(axis(vec![1.0, 2.0, 3.0]).validate().is_ok());
        assert!(axis(vec![3.0, 2.0]).validate().is_ok());
        assert!(axis(vec![5.0]).validate().is_ok());
        assert!(axis(vec![]).validate().is_err());
        assert!(axis(vec![1.0, 1.0]).validate().is_err());
        assert!(axis(vec![1.0, 3.0, 2.0]).validate().is_err());
    }

    #[test]
    fn resonance_consistency_outside_mismatch_scans() {
        let mut p = ScenarioParams::fig3();
        for v in [5.0, 10.0, 20.0] {
            ScanParameter::TauEqualsDelay.apply(&mut p, v);
            let expected = p.delta_b - p.delta_c - p.alpha_c().unwrap() * p.omega_c / 2.0;
            let got = p.resolved_delta_r().unwrap();
            assert!(((got - expected) / expected).abs() < 1e-12);
        }
        p.delta_r = DetuningR::Auto(Mode::Exact);
        p.omega_c = 50.0 * MHZ;
        p.delta_c = 10.0 * MHZ;
        let got = p.resolved_delta_r().unwrap() / MHZ;
        assert!((got - (100.0 - 5.0 * (1.0 + 26f64.sqrt()))).abs() < 1e-9);
    }

    #[test]
    fn partial_rejects_freeze_outside_window() {
        let p = ScenarioParams::fig3();
        assert!(matches!(run_partial_stirap(&p, Some(-500.0)), Err(Error::InvalidSchedule(_))));
        assert!(matches!(run_partial_stirap(&p, Some(500.0)), Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn pumping_from_d_is_immediate() {
        let p = ScenarioParams::fig3();
        let run = run_optical_pumping_prep(&p, &DensityMatrix::basis(Level::D)).unwrap();
        assert_eq!(run.pump_time, 0.0);
    }

    #[test]
    fn pumping_rejects_q_population() {
        let p = ScenarioParams::fig3();
        assert!(run_optical_pumping_prep(&p, &DensityMatrix::basis(Level::Q)).is_err());
    }

    #[test]
    fn pumping_without_light_times_out() {
        let mut p = ScenarioParams::fig3();
        p.pump.rabi_b = 0.0;
        p.pump.horizon = 2.0;
        p.pump.chunk = 1.0;
        let rho = DensityMatrix::basis(Level::S);
        assert_eq!(run_optical_pumping_prep(&p, &rho).unwrap_err(), Error::Timeout { horizon: 2.0 });
    }

    #[test]
    fn failed_points_do_not_abort_the_scan() {
        let mut p = ScenarioParams::fig3();
        p.tau = 1.0;
        p.delta_t = 1.0;
        p.omega_b0 = 0.0;
        p.integrator.max_step = 1e-2;
        let spec = ScenarioSpec::new(Preset::Custom, p).with_scan(ScanParameter::PrepRamp, vec![-1.0, 1.0]);
        let spec = ScenarioSpec { runner: RunKind::ReverseTransfer, ..spec };
        let result = run_scan(&spec, 2).unwrap();
        assert_eq!(result.axis(), vec![-1.0, 1.0]);
        assert!(matches!(result.points[0].status, PointStatus::Failed(_)));
        assert_eq!(result.points[1].status, PointStatus::Ok);
    }
}
