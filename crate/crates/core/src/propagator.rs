//! Time integration of the master equation.
//!
//! The production path is an adaptive Dormand-Prince 5(4) integrator with the
//! Hairer/Wanner continuous extension for sampling. The oracle path freezes the
//! 16x16 Liouvillian over short steps and applies its exponential; it shares
//! nothing with the RK path except the model's Hamiltonian and jump operators.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NSchemeModel;
use crate::qcore::{eigenvalues, DensityMatrix, Level, Mat4, Operator, C64, DIM};

/// Trace drift beyond this aborts the run.
pub const TRACE_BREACH: f64 = 1e-6;
pub const MIN_STEP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AdaptiveRk,
    ExpmOracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    /// us
    pub max_step: f64,
    /// Output grid spacing (us).
    pub sample_dt: f64,
    /// Frozen-Liouvillian step of the oracle (us).
    pub expm_step: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::AdaptiveRk,
            rtol: 1e-9,
            atol: 1e-12,
            max_step: 1e-3,
            sample_dt: 0.05,
            expm_step: 1e-4,
        }
    }
}

impl IntegratorConfig {
    pub fn oracle() -> Self {
        IntegratorConfig { method: Method::ExpmOracle, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("max_step", self.max_step),
            ("sample_dt", self.sample_dt),
            ("expm_step", self.expm_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("integrator.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Worst invariant deviations seen over the samples of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantMonitor {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Largest excursion of a population outside [0, 1].
    pub max_population_excess: f64,
}

impl Default for InvariantMonitor {
    fn default() -> Self {
        InvariantMonitor {
            max_trace_error: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            max_population_excess: 0.0,
        }
    }
}

impl InvariantMonitor {
    pub fn observe(&mut self, rho: &DensityMatrix) {
        self.max_trace_error = self.max_trace_error.max((rho.trace() - 1.0).abs());
        self.max_hermiticity_error = self.max_hermiticity_error.max(rho.hermiticity_error());
        self.min_eigenvalue = self.min_eigenvalue.min(eigenvalues(rho)[0]);
        for p in rho.populations() {
            let excess = (-p).max(p - 1.0).max(0.0);
            self.max_population_excess = self.max_population_excess.max(excess);
        }
    }

    pub fn merge(&mut self, other: &InvariantMonitor) {
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.max_hermiticity_error = self.max_hermiticity_error.max(other.max_hermiticity_error);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.max_population_excess = self.max_population_excess.max(other.max_population_excess);
    }

    /// Trace within 1e-8, Hermitian within 1e-10, eigenvalues above -1e-8.
    pub fn holds(&self) -> bool {
        self.max_trace_error < 1e-8
            && self.max_hermiticity_error < 1e-10
            && self.min_eigenvalue > -1e-8
            && self.max_population_excess <= 1e-8
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evals: u64,
    pub invariants: InvariantMonitor,
}

impl RunStats {
    fn merge(&mut self, other: &RunStats) {
        self.accepted_steps += other.accepted_steps;
        self.rejected_steps += other.rejected_steps;
        self.rhs_evals += other.rhs_evals;
        self.invariants.merge(&other.invariants);
    }
}

/// Sampled trajectory of a run.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Scenario observable evaluated at each sample.
    pub fidelity: Vec<f64>,
    pub final_time: f64,
    /// State at `final_time`, integrated exactly to the window end.
    pub final_state: DensityMatrix,
    pub stats: RunStats,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn population(&self, level: Level) -> Vec<f64> {
        self.states.iter().map(|r| r.population(level)).collect()
    }

    pub fn coherence(&self, row: Level, col: Level) -> Vec<C64> {
        self.states.iter().map(|r| r.element(row, col)).collect()
    }

    /// Appends a later stage; a sample duplicated at the junction is dropped.
    pub fn extend(&mut self, mut next: TimeSeries) {
        if let (Some(&last), Some(&first)) = (self.times.last(), next.times.first()) {
            if first <= last {
                next.times.remove(0);
                next.states.remove(0);
                next.fidelity.remove(0);
            }
        }
        self.times.extend(next.times);
        self.states.extend(next.states);
        self.fidelity.extend(next.fidelity);
        self.final_time = next.final_time;
        self.final_state = next.final_state;
        self.stats.merge(&next.stats);
    }

    pub fn min_fidelity(&self) -> f64 {
        self.fidelity.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Maps `(t, rho)` to the observable stored in [`TimeSeries::fidelity`].
pub type Observable<'a> = dyn Fn(f64, &DensityMatrix) -> f64 + Sync + 'a;

/// Integrates with `rho_QQ` as the recorded observable.
pub fn propagate(
    rho0: &DensityMatrix,
    model: &NSchemeModel,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<TimeSeries> {
    propagate_with(rho0, model, t_start, t_end, cfg, &|_, r: &DensityMatrix| r.population(Level::Q))
}

pub fn propagate_with(
    rho0: &DensityMatrix,
    model: &NSchemeModel,
    t_start: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    observable: &Observable<'_>,
) -> Result<TimeSeries> {
    cfg.validate()?;
    if !(t_end > t_start) {
        return Err(Error::InvalidParameter(format!("empty window [{t_start}, {t_end}]")));
    }
    rho0.validate()?;
    let grid = SampleGrid::new(t_start, t_end, cfg.sample_dt);
    let mut rec = Recorder::new(observable, grid.len());
    let (final_state, stats) = match cfg.method {
        Method::AdaptiveRk => dopri5(rho0, model, &grid, cfg, &mut rec)?,
        Method::ExpmOracle => expm_oracle(rho0, model, &grid, cfg, &mut rec)?,
    };
    let mut stats = stats;
    stats.invariants = rec.monitor;
    stats.invariants.observe(&final_state);
    Ok(TimeSeries {
        times: rec.times,
        states: rec.states,
        fidelity: rec.fidelity,
        final_time: t_end,
        final_state,
        stats,
    })
}

/// Runs both methods on the same grid and returns the largest element-wise
/// deviation between them.
pub fn cross_check(
    rho0: &DensityMatrix,
    model: &NSchemeModel,
    window: (f64, f64),
    cfg_a: &IntegratorConfig,
    cfg_b: &IntegratorConfig,
) -> Result<f64> {
    if cfg_a.method == cfg_b.method {
        return Err(Error::InvalidParameter("cross-check needs two different methods".into()));
    }
    let cfg_b = IntegratorConfig { sample_dt: cfg_a.sample_dt, ..*cfg_b };
    let a = propagate(rho0, model, window.0, window.1, cfg_a)?;
    let b = propagate(rho0, model, window.0, window.1, &cfg_b)?;
    let mut worst = a.final_state.max_abs_diff(&b.final_state);
    for (ra, rb) in a.states.iter().zip(&b.states) {
        worst = worst.max(ra.max_abs_diff(rb));
    }
    Ok(worst)
}

/// `t_start + k * dt` for every k with the time not past `t_end`.
struct SampleGrid {
    t_start: f64,
    t_end: f64,
    dt: f64,
    count: usize,
}

impl SampleGrid {
    fn new(t_start: f64, t_end: f64, dt: f64) -> Self {
        let span = t_end - t_start;
        let mut count = (span / dt).floor() as usize + 1;
        // guard against the last point landing a rounding error past t_end
        while count > 1 && t_start + (count - 1) as f64 * dt > t_end {
            count -= 1;
        }
        SampleGrid { t_start, t_end, dt, count }
    }

    fn len(&self) -> usize {
        self.count
    }

    fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }
}

struct Recorder<'o, 'a> {
    observable: &'o Observable<'a>,
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    fidelity: Vec<f64>,
    monitor: InvariantMonitor,
}

impl<'o, 'a> Recorder<'o, 'a> {
    fn new(observable: &'o Observable<'a>, capacity: usize) -> Self {
        Recorder {
            observable,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity),
            fidelity: Vec::with_capacity(capacity),
            monitor: InvariantMonitor::default(),
        }
    }

    fn record(&mut self, t: f64, m: &Mat4) -> Result<()> {
        let rho = DensityMatrix::from_matrix_unchecked(*m);
        let trace = rho.trace();
        if !trace.is_finite() || (trace - 1.0).abs() > TRACE_BREACH {
            return Err(Error::InvariantBreach { t, trace });
        }
        self.monitor.observe(&rho);
        self.fidelity.push((self.observable)(t, &rho));
        self.times.push(t);
        self.states.push(rho);
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// continuous extension
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

fn error_norm(err: &Mat4, y0: &Mat4, y1: &Mat4, rtol: f64, atol: f64) -> f64 {
    let mut sum = 0.0;
    for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
        let sc_re = atol + rtol * a.re.abs().max(b.re.abs());
        let sc_im = atol + rtol * a.im.abs().max(b.im.abs());
        sum += (e.re / sc_re).powi(2) + (e.im / sc_im).powi(2);
    }
    (sum / (2 * DIM * DIM) as f64).sqrt()
}

fn dopri5(
    rho0: &DensityMatrix,
    model: &NSchemeModel,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
    rec: &mut Recorder<'_, '_>,
) -> Result<(DensityMatrix, RunStats)> {
    let f = |t: f64, y: &Mat4| model.rhs_matrix(t, y);
    let mut stats = RunStats::default();
    let t_end = grid.t_end;
    let mut t = grid.t_start;
    let mut y = *rho0.matrix();
    let mut k1 = f(t, &y);
    stats.rhs_evals += 1;

    rec.record(t, &y)?;
    let mut next_sample = 1;

    let mut h = cfg.max_step.min(t_end - t).min(1e-4);
    let mut last_rejected = false;

    while t < t_end {
        let remaining = t_end - t;
        let final_step = h >= remaining;
        let h_try = if final_step { remaining } else { h };

        let k2 = f(t + C2 * h_try, &(y + k1 * C64::from(h_try * A21)));
        let k3 = f(t + C3 * h_try, &(y + (k1.scale(A31) + k2.scale(A32)).scale(h_try)));
        let k4 = f(
            t + C4 * h_try,
            &(y + (k1.scale(A41) + k2.scale(A42) + k3.scale(A43)).scale(h_try)),
        );
        let k5 = f(
            t + C5 * h_try,
            &(y + (k1.scale(A51) + k2.scale(A52) + k3.scale(A53) + k4.scale(A54)).scale(h_try)),
        );
        let k6 = f(
            t + h_try,
            &(y + (k1.scale(A61) + k2.scale(A62) + k3.scale(A63) + k4.scale(A64) + k5.scale(A65))
                .scale(h_try)),
        );
        let y1 = y
            + (k1.scale(B1) + k3.scale(B3) + k4.scale(B4) + k5.scale(B5) + k6.scale(B6)).scale(h_try);
        let t1 = if final_step { t_end } else { t + h_try };
        let k7 = f(t1, &y1);
        stats.rhs_evals += 6;

        let err_est =
            (k1.scale(E1) + k3.scale(E3) + k4.scale(E4) + k5.scale(E5) + k6.scale(E6) + k7.scale(E7))
                .scale(h_try);
        let err = error_norm(&err_est, &y, &y1, cfg.rtol, cfg.atol);

        if err <= 1.0 {
            stats.accepted_steps += 1;
            // dense output on (t, t1]
            if next_sample < grid.len() && grid.time(next_sample) <= t1 {
                let rc2 = y1 - y;
                let rc3 = k1.scale(h_try) - rc2;
                let rc4 = rc2 - k7.scale(h_try) - rc3;
                let rc5 = (k1.scale(D1) + k3.scale(D3) + k4.scale(D4) + k5.scale(D5) + k6.scale(D6)
                    + k7.scale(D7))
                .scale(h_try);
                while next_sample < grid.len() && grid.time(next_sample) <= t1 {
                    let ts = grid.time(next_sample);
                    let ys = if ts == t1 {
                        y1
                    } else {
                        let theta = (ts - t) / h_try;
                        let theta1 = 1.0 - theta;
                        y + (rc2 + (rc3 + (rc4 + rc5.scale(theta1)).scale(theta)).scale(theta1)).scale(theta)
                    };
                    rec.record(ts, &ys)?;
                    next_sample += 1;
                }
            }
            t = t1;
            y = y1;
            k1 = k7;
            let mut fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            if !final_step {
                h = (h_try * fac).min(cfg.max_step);
            }
            last_rejected = false;
        } else {
            stats.rejected_steps += 1;
            let fac = if err.is_finite() { (SAFETY * err.powf(-0.2)).max(FAC_MIN) } else { FAC_MIN };
            h = h_try * fac.min(1.0);
            last_rejected = true;
            if h < MIN_STEP {
                return Err(Error::StepSizeUnderflow { t, h });
            }
        }
    }
    let trace = y.trace().re;
    if !trace.is_finite() || (trace - 1.0).abs() > TRACE_BREACH {
        return Err(Error::InvariantBreach { t: t_end, trace });
    }
    Ok((DensityMatrix::from_matrix_unchecked(y), stats))
}

type Super = SMatrix<C64, 16, 16>;
type SVec = SMatrix<C64, 16, 1>;

fn vectorize(m: &Mat4) -> SVec {
    // column stacking: index i + 4 j holds rho_ij
    SVec::from_column_slice(m.as_slice())
}

fn unvectorize(v: &SVec) -> Mat4 {
    Mat4::from_column_slice(v.as_slice())
}

/// Column-stacked Liouvillian: `vec(A X B) = (B^T (x) A) vec(X)`.
pub fn liouvillian(h: &Operator, jumps: &[Operator]) -> Super {
    let id = Mat4::identity();
    let hm = h.matrix();
    let minus_i = C64::new(0.0, -1.0);
    let mut l: Super = (id.kronecker(hm) - hm.transpose().kronecker(&id)) * minus_i;
    for jump in jumps {
        let cm = jump.matrix();
        let cdc = cm.adjoint() * cm;
        l += cm.conjugate().kronecker(cm)
            - (id.kronecker(&cdc) + cdc.transpose().kronecker(&id)).scale(0.5);
    }
    l
}

fn expm_oracle(
    rho0: &DensityMatrix,
    model: &NSchemeModel,
    grid: &SampleGrid,
    cfg: &IntegratorConfig,
    rec: &mut Recorder<'_, '_>,
) -> Result<(DensityMatrix, RunStats)> {
    let jumps = model.jump_operators();
    let mut stats = RunStats::default();
    let mut v = vectorize(rho0.matrix());
    rec.record(grid.t_start, rho0.matrix())?;

    let advance = |v: &mut SVec, a: f64, b: f64, stats: &mut RunStats| {
        let n = ((b - a) / cfg.expm_step).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for k in 0..n {
            let mid = a + (k as f64 + 0.5) * h;
            let l = liouvillian(&model.hamiltonian(mid), &jumps);
            *v = (l * C64::from(h)).exp() * *v;
            stats.accepted_steps += 1;
        }
    };

    let mut t = grid.t_start;
    for k in 1..grid.len() {
        let ts = grid.time(k);
        advance(&mut v, t, ts, &mut stats);
        rec.record(ts, &unvectorize(&v))?;
        t = ts;
    }
    if t < grid.t_end {
        advance(&mut v, t, grid.t_end, &mut stats);
    }
    Ok((DensityMatrix::from_matrix_unchecked(unvectorize(&v)), stats))
}
