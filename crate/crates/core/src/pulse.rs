//! Time-dependent Rabi-frequency envelopes and STIRAP schedules.
//!
//! Times are in us measured from the midpoint between the two Gaussian pulse
//! centers; envelope values are Rabi frequencies in rad/us.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative continuity tolerance at piecewise switch times.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Switch-off is simulated for this many time constants (`exp(-10) < 1e-4`).
pub const SWITCH_OFF_TIME_CONSTANTS: f64 = 10.0;

/// `exp(-4)`: edge level of the default window, giving 100 us for tau = dt = 20 us.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.018_315_638_888_734_18;

/// A tanh ramp of duration `D` uses rise time `D / 4`, so the envelope goes
/// from 1.8% to 98.2% of its final value across `D`.
pub const PREP_RISE_PER_RAMP: f64 = 0.25;
/// The preparation stage spans this many ramp durations on each side of the
/// tanh center, where the envelope is within `exp(-24)` of its asymptotes.
pub const PREP_HALF_SPAN_RAMPS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub enum PulseEnvelope {
    Zero,
    Constant { rabi: f64 },
    /// `peak * exp(-((t - center) / width)^2)`
    Gaussian { peak: f64, center: f64, width: f64 },
    /// Holds `initial` before `start`, then decays with `time_constant`.
    ExponentialOff { initial: f64, start: f64, time_constant: f64 },
    /// `final_rabi * (1 + tanh((t - center) / rise)) / 2`
    TanhOn { final_rabi: f64, center: f64, rise: f64 },
    Piecewise(Piecewise),
}

/// Ordered segments: `first` applies before the first switch time, and each
/// `(t_k, env_k)` applies on `[t_k, t_{k+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piecewise {
    first: Box<PulseEnvelope>,
    switches: Vec<(f64, PulseEnvelope)>,
}

impl Piecewise {
    pub fn new(first: PulseEnvelope, switches: Vec<(f64, PulseEnvelope)>) -> Result<Self> {
        if switches.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidSchedule(
                "piecewise switch times must be strictly increasing".into(),
            ));
        }
        let mut prev = &first;
        for (t, next) in &switches {
            let a = prev.evaluate(*t);
            let b = next.evaluate(*t);
            let scale = a.abs().max(b.abs());
            if (a - b).abs() > CONTINUITY_TOL * scale {
                return Err(Error::InvalidSchedule(format!(
                    "envelope discontinuous at t = {t} us ({a} vs {b})"
                )));
            }
            prev = next;
        }
        Ok(Piecewise { first: Box::new(first), switches })
    }

    pub fn segment_at(&self, t: f64) -> &PulseEnvelope {
        let idx = self.switches.partition_point(|(ts, _)| *ts <= t);
        if idx == 0 {
            &self.first
        } else {
            &self.switches[idx - 1].1
        }
    }

    pub fn switch_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.switches.iter().map(|(t, _)| *t)
    }
}

impl PulseEnvelope {
    pub fn gaussian(peak: f64, center: f64, width: f64) -> Self {
        PulseEnvelope::Gaussian { peak, center, width }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            PulseEnvelope::Zero => 0.0,
            PulseEnvelope::Constant { rabi } => *rabi,
            PulseEnvelope::Gaussian { peak, center, width } => {
                let x = (t - center) / width;
                peak * (-x * x).exp()
            }
            PulseEnvelope::ExponentialOff { initial, start, time_constant } => {
                if t < *start {
                    *initial
                } else {
                    initial * (-(t - start) / time_constant).exp()
                }
            }
            PulseEnvelope::TanhOn { final_rabi, center, rise } => {
                0.5 * final_rabi * (1.0 + ((t - center) / rise).tanh())
            }
            PulseEnvelope::Piecewise(p) => p.segment_at(t).evaluate(t),
        }
    }

    /// Same envelope delayed by `shift` us.
    pub fn shifted(&self, shift: f64) -> Self {
        match self {
            PulseEnvelope::Zero | PulseEnvelope::Constant { .. } => self.clone(),
            PulseEnvelope::Gaussian { peak, center, width } => {
                PulseEnvelope::Gaussian { peak: *peak, center: center + shift, width: *width }
            }
            PulseEnvelope::ExponentialOff { initial, start, time_constant } => {
                PulseEnvelope::ExponentialOff {
                    initial: *initial,
                    start: start + shift,
                    time_constant: *time_constant,
                }
            }
            PulseEnvelope::TanhOn { final_rabi, center, rise } => {
                PulseEnvelope::TanhOn { final_rabi: *final_rabi, center: center + shift, rise: *rise }
            }
            PulseEnvelope::Piecewise(p) => PulseEnvelope::Piecewise(Piecewise {
                first: Box::new(p.first.shifted(shift)),
                switches: p.switches.iter().map(|(t, e)| (t + shift, e.shifted(shift))).collect(),
            }),
        }
    }

    /// Holds the envelope constant from `t_freeze` on.
    pub fn frozen_at(&self, t_freeze: f64) -> Self {
        let held = PulseEnvelope::Constant { rabi: self.evaluate(t_freeze) };
        PulseEnvelope::Piecewise(Piecewise {
            first: Box::new(self.clone()),
            switches: vec![(t_freeze, held)],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidSchedule(what.to_string()));
        match self {
            PulseEnvelope::Zero => Ok(()),
            PulseEnvelope::Constant { rabi } if *rabi < 0.0 => bad("negative constant Rabi frequency"),
            PulseEnvelope::Gaussian { peak, width, .. } if *peak < 0.0 || *width <= 0.0 => {
                bad("Gaussian needs non-negative peak and positive width")
            }
            PulseEnvelope::ExponentialOff { initial, time_constant, .. }
                if *initial < 0.0 || *time_constant <= 0.0 =>
            {
                bad("exponential switch-off needs non-negative amplitude and positive time constant")
            }
            PulseEnvelope::TanhOn { final_rabi, rise, .. } if *final_rabi < 0.0 || *rise <= 0.0 => {
                bad("tanh ramp needs non-negative amplitude and positive rise time")
            }
            PulseEnvelope::Piecewise(p) => {
                p.first.validate()?;
                p.switches.iter().try_for_each(|(_, e)| e.validate())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// `|D>` to `|Q>`: the B pulse precedes the R pulse.
    #[serde(rename = "D_to_Q")]
    DToQ,
    #[serde(rename = "Q_to_D")]
    QToD,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StirapOptions {
    /// Exponential C switch-off time constant (us).
    pub c_switch_off: Option<f64>,
    /// Delay between the STIRAP window end and the start of the switch-off (us).
    pub switch_off_delay: f64,
    /// Duration of the tanh C switch-on preceding the window (us).
    pub prep_ramp: Option<f64>,
    pub tail_fraction: f64,
}

impl Default for StirapOptions {
    fn default() -> Self {
        StirapOptions {
            c_switch_off: None,
            switch_off_delay: 0.0,
            prep_ramp: None,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialOffSpec {
    pub start: f64,
    pub time_constant: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanhOnSpec {
    pub center: f64,
    pub rise: f64,
    /// Start of the preparation stage; the STIRAP window start ends it.
    pub stage_start: f64,
}

/// Envelopes of the (B, R, C) lasers for one STIRAP sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct StirapSchedule {
    pub direction: Direction,
    pub omega_b0: f64,
    pub omega_r0: f64,
    pub tau: f64,
    pub delta_t: f64,
    pub omega_c: f64,
    pub tail_fraction: f64,
    pub c_off: Option<ExponentialOffSpec>,
    pub prep: Option<TanhOnSpec>,
    pub envelopes: [PulseEnvelope; 3],
}

/// Builds the Gaussian pair plus C envelope for a transfer in `direction`.
pub fn make_stirap(
    direction: Direction,
    omega_b0: f64,
    omega_r0: f64,
    tau: f64,
    delta_t: f64,
    omega_c: f64,
    options: StirapOptions,
) -> Result<StirapSchedule> {
    if !(tau > 0.0) {
        return Err(Error::InvalidSchedule(format!("pulse width tau must be positive, got {tau}")));
    }
    if !(delta_t > 0.0) {
        return Err(Error::InvalidSchedule(format!("pulse delay must be positive, got {delta_t}")));
    }
    if omega_b0 < 0.0 || omega_r0 < 0.0 || omega_c < 0.0 {
        return Err(Error::InvalidSchedule("Rabi frequencies must be non-negative".into()));
    }
    if !(options.tail_fraction > 0.0 && options.tail_fraction < 1.0) {
        return Err(Error::InvalidSchedule("tail fraction must lie in (0, 1)".into()));
    }
    if options.switch_off_delay < 0.0 {
        return Err(Error::InvalidSchedule("switch-off delay must be non-negative".into()));
    }

    let (b_center, r_center) = match direction {
        Direction::DToQ => (-0.5 * delta_t, 0.5 * delta_t),
        Direction::QToD => (0.5 * delta_t, -0.5 * delta_t),
    };
    let b = PulseEnvelope::gaussian(omega_b0, b_center, tau);
    let r = PulseEnvelope::gaussian(omega_r0, r_center, tau);

    let (w_start, w_end) = stirap_window_bounds(tau, delta_t, options.tail_fraction);

    let prep = match options.prep_ramp {
        Some(ramp) if ramp > 0.0 => {
            let center = w_start - PREP_HALF_SPAN_RAMPS * ramp;
            Some(TanhOnSpec {
                center,
                rise: PREP_RISE_PER_RAMP * ramp,
                stage_start: center - PREP_HALF_SPAN_RAMPS * ramp,
            })
        }
        Some(ramp) => {
            return Err(Error::InvalidSchedule(format!("preparation ramp must be positive, got {ramp}")))
        }
        None => None,
    };
    let c_off = match options.c_switch_off {
        Some(tc) if tc > 0.0 => {
            Some(ExponentialOffSpec { start: w_end + options.switch_off_delay, time_constant: tc })
        }
        Some(tc) => {
            return Err(Error::InvalidSchedule(format!("switch-off time constant must be positive, got {tc}")))
        }
        None => None,
    };

    let first_c = match prep {
        Some(p) => PulseEnvelope::TanhOn { final_rabi: omega_c, center: p.center, rise: p.rise },
        None => PulseEnvelope::Constant { rabi: omega_c },
    };
    let mut c_switches = Vec::new();
    if prep.is_some() {
        c_switches.push((w_start, PulseEnvelope::Constant { rabi: omega_c }));
    }
    if let Some(off) = c_off {
        c_switches.push((
            off.start,
            PulseEnvelope::ExponentialOff {
                initial: omega_c,
                start: off.start,
                time_constant: off.time_constant,
            },
        ));
    }
    let c = if c_switches.is_empty() {
        first_c
    } else {
        PulseEnvelope::Piecewise(Piecewise::new(first_c, c_switches)?)
    };

    Ok(StirapSchedule {
        direction,
        omega_b0,
        omega_r0,
        tau,
        delta_t,
        omega_c,
        tail_fraction: options.tail_fraction,
        c_off,
        prep,
        envelopes: [b, r, c],
    })
}

fn stirap_window_bounds(tau: f64, delta_t: f64, tail_fraction: f64) -> (f64, f64) {
    let half = 0.5 * delta_t + tau * (-tail_fraction.ln()).sqrt();
    (-half, half)
}

/// Smallest symmetric window with both Gaussians below `tail_fraction` of their
/// peaks at the edges, extended past the switch-off when one is scheduled.
pub fn default_window(sched: &StirapSchedule, tail_fraction: f64) -> Result<(f64, f64)> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction must lie in (0, 1), got {tail_fraction}"
        )));
    }
    let (start, mut end) = stirap_window_bounds(sched.tau, sched.delta_t, tail_fraction);
    if let Some(off) = sched.c_off {
        let delay = off.start - sched.stirap_window().1;
        end += delay + SWITCH_OFF_TIME_CONSTANTS * off.time_constant;
    }
    Ok((start, end))
}

impl StirapSchedule {
    /// Window of the Gaussian pair alone, at the schedule's own tail fraction.
    pub fn stirap_window(&self) -> (f64, f64) {
        stirap_window_bounds(self.tau, self.delta_t, self.tail_fraction)
    }

    pub fn window(&self) -> (f64, f64) {
        default_window(self, self.tail_fraction).expect("tail fraction validated at construction")
    }

    /// (stage start, STIRAP window start) when a preparation ramp is scheduled.
    pub fn prep_window(&self) -> Option<(f64, f64)> {
        self.prep.map(|p| (p.stage_start, self.stirap_window().0))
    }

    pub fn b(&self) -> &PulseEnvelope {
        &self.envelopes[0]
    }

    pub fn r(&self) -> &PulseEnvelope {
        &self.envelopes[1]
    }

    pub fn c(&self) -> &PulseEnvelope {
        &self.envelopes[2]
    }

    pub fn evaluate(&self, t: f64) -> [f64; 3] {
        [self.envelopes[0].evaluate(t), self.envelopes[1].evaluate(t), self.envelopes[2].evaluate(t)]
    }

    /// Envelopes for the preparation stage: C ramps on, B and R stay dark.
    pub fn prep_envelopes(&self) -> [PulseEnvelope; 3] {
        [PulseEnvelope::Zero, PulseEnvelope::Zero, self.envelopes[2].clone()]
    }

    /// B and R follow their Gaussians until `t_freeze`, then hold.
    pub fn frozen_at(&self, t_freeze: f64) -> StirapSchedule {
        let mut out = self.clone();
        out.envelopes[0] = self.envelopes[0].frozen_at(t_freeze);
        out.envelopes[1] = self.envelopes[1].frozen_at(t_freeze);
        out
    }

    pub fn b_center(&self) -> f64 {
        match self.direction {
            Direction::DToQ => -0.5 * self.delta_t,
            Direction::QToD => 0.5 * self.delta_t,
        }
    }

    pub fn r_center(&self) -> f64 {
        -self.b_center()
    }
}
