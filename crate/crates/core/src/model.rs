//! Physics of the N-scheme: Hamiltonians, relaxation and the master-equation RHS.
//!
//! The model works in the rotating frame in which the laser couplings are real
//! and time-independent apart from their envelopes; only detunings appear.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::PulseEnvelope;
use crate::qcore::{commutator, dissipator, re, DensityMatrix, Level, Mat4, Operator, C64, DIM};

const S: usize = Level::S as usize;
const P: usize = Level::P as usize;
const D: usize = Level::D as usize;
const Q: usize = Level::Q as usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    /// S <-> P
    B,
    /// D <-> P
    R,
    /// S <-> Q (weak quadrupole coupling)
    C,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Transition::B, Transition::R, Transition::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Transition::B => "B",
            Transition::R => "R",
            Transition::C => "C",
        }
    }
}

/// Radiative properties of the ion. Rates in 1/us.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomParams {
    pub gamma_p: f64,
    pub beta_ps: f64,
    pub beta_pd: f64,
    /// Optional decay of `|Q>` into `|S>`; zero by default.
    #[serde(default)]
    pub gamma_q: f64,
    /// Optional decay of `|D>` into `|S>`; zero by default.
    #[serde(default)]
    pub gamma_d: f64,
}

impl AtomParams {
    pub fn new(gamma_p: f64, beta_ps: f64, beta_pd: f64) -> Result<Self> {
        let atom = AtomParams { gamma_p, beta_ps, beta_pd, gamma_q: 0.0, gamma_d: 0.0 };
        atom.validate()?;
        Ok(atom)
    }

    /// From the P lifetime (ns) and the branching ratio `beta_PS / beta_PD`.
    pub fn from_lifetime_ns(lifetime_ns: f64, ratio_ps_over_pd: f64) -> Result<Self> {
        if !(lifetime_ns > 0.0) || !(ratio_ps_over_pd > 0.0) {
            return Err(Error::InvalidParameter(
                "lifetime and branching ratio must be positive".into(),
            ));
        }
        let beta_pd = 1.0 / (1.0 + ratio_ps_over_pd);
        let beta_ps = ratio_ps_over_pd * beta_pd;
        Self::new(1e3 / lifetime_ns, beta_ps, beta_pd)
    }

    /// Ca+ values: 7.00 ns P_{1/2} lifetime, branching ratio 14.4.
    pub fn calcium() -> Self {
        Self::from_lifetime_ns(7.0, 14.4).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_p > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma_P must be positive, got {}", self.gamma_p)));
        }
        if self.beta_ps < 0.0 || self.beta_pd < 0.0 || (self.beta_ps + self.beta_pd - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "branching fractions must be non-negative and sum to 1, got {} + {}",
                self.beta_ps, self.beta_pd
            )));
        }
        if self.gamma_q < 0.0 || self.gamma_d < 0.0 {
            return Err(Error::InvalidParameter("metastable decay rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// One laser: static detuning and linewidth plus its Rabi envelope (rad/us).
#[derive(Clone, Debug, PartialEq)]
pub struct LaserField {
    pub transition: Transition,
    pub peak_rabi: f64,
    pub detuning: f64,
    /// HWHM linewidth in rad/us.
    pub linewidth: f64,
    pub envelope: PulseEnvelope,
}

impl LaserField {
    pub fn new(transition: Transition, detuning: f64, linewidth: f64, envelope: PulseEnvelope) -> Self {
        let peak_rabi = match &envelope {
            PulseEnvelope::Zero => 0.0,
            PulseEnvelope::Constant { rabi } => *rabi,
            PulseEnvelope::Gaussian { peak, .. } => *peak,
            PulseEnvelope::ExponentialOff { initial, .. } => *initial,
            PulseEnvelope::TanhOn { final_rabi, .. } => *final_rabi,
            PulseEnvelope::Piecewise(_) => f64::NAN,
        };
        LaserField { transition, peak_rabi, detuning, linewidth, envelope }
    }

    pub fn with_peak(mut self, peak_rabi: f64) -> Self {
        self.peak_rabi = peak_rabi;
        self
    }

    pub fn off(transition: Transition) -> Self {
        Self::new(transition, 0.0, 0.0, PulseEnvelope::Zero)
    }
}

/// Bare Hamiltonian (rad/us): `Delta_R |D><D| + Delta_B |S><S| + (Delta_B - Delta_C) |Q><Q|`.
pub fn build_h0(delta_b: f64, delta_r: f64, delta_c: f64) -> Operator {
    let mut diag = [0.0; DIM];
    diag[S] = delta_b;
    diag[D] = delta_r;
    diag[Q] = delta_b - delta_c;
    Operator::from_real_diagonal(diag)
}

/// Laser couplings `Omega_B/2 |P><S| + Omega_R/2 |P><D| + Omega_C/2 |Q><S| + h.c.`
pub fn build_interaction(omega_b: f64, omega_r: f64, omega_c: f64) -> Operator {
    let mut m = Mat4::zeros();
    m[(P, S)] = re(0.5 * omega_b);
    m[(S, P)] = re(0.5 * omega_b);
    m[(P, D)] = re(0.5 * omega_r);
    m[(D, P)] = re(0.5 * omega_r);
    m[(Q, S)] = re(0.5 * omega_c);
    m[(S, Q)] = re(0.5 * omega_c);
    Operator(m)
}

/// Radiative relaxation of `|P>` into `|S>` and `|D>`, written out with projectors.
pub fn radiative_rhs(rho: &DensityMatrix, atom: &AtomParams) -> Operator {
    let pp = Operator::projector(Level::P).0;
    let sp = Operator::transition(Level::S, Level::P).0;
    let dp = Operator::transition(Level::D, Level::P).0;
    let r = rho.matrix();
    let g = atom.gamma_p;
    Operator(
        -(r * pp + pp * r).scale(0.5 * g)
            + (sp * r * sp.adjoint()).scale(atom.beta_ps * g)
            + (dp * r * dp.adjoint()).scale(atom.beta_pd * g),
    )
}

/// Diagonal jump operators modelling laser phase noise, one per laser.
pub fn dephasing_operators(gl_b: f64, gl_r: f64, gl_c: f64) -> [Operator; 3] {
    // signs over (S, P, D, Q)
    const B_SIGNS: [f64; DIM] = [-1.0, 1.0, 1.0, -1.0];
    const R_SIGNS: [f64; DIM] = [-1.0, -1.0, 1.0, -1.0];
    const C_SIGNS: [f64; DIM] = [-1.0, -1.0, -1.0, 1.0];
    let make = |gamma: f64, signs: [f64; DIM]| {
        let amp = 0.5 * gamma.sqrt();
        Operator::from_real_diagonal(signs.map(|s| s * amp))
    };
    [make(gl_b, B_SIGNS), make(gl_r, R_SIGNS), make(gl_c, C_SIGNS)]
}

/// Atom, three lasers and the cached operators needed to evaluate the RHS.
#[derive(Clone, Debug)]
pub struct NSchemeModel {
    pub atom: AtomParams,
    pub lasers: [LaserField; 3],
    h0: Operator,
    /// Elementwise factor applied to `rho` by the summed dephasing dissipators.
    dephasing_factors: Mat4,
}

impl NSchemeModel {
    /// `lasers` must be ordered (B, R, C).
    pub fn new(atom: AtomParams, lasers: [LaserField; 3]) -> Result<Self> {
        atom.validate()?;
        for (laser, expected) in lasers.iter().zip(Transition::ALL) {
            if laser.transition != expected {
                return Err(Error::InvalidParameter(format!(
                    "lasers must be ordered (B, R, C); found {} in slot {}",
                    laser.transition.label(),
                    expected.label()
                )));
            }
            if laser.linewidth < 0.0 || laser.peak_rabi < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "laser {} needs non-negative Rabi frequency and linewidth",
                    expected.label()
                )));
            }
            laser.envelope.validate()?;
        }
        let h0 = build_h0(lasers[0].detuning, lasers[1].detuning, lasers[2].detuning);
        let jumps = dephasing_operators(lasers[0].linewidth, lasers[1].linewidth, lasers[2].linewidth);
        let mut factors = Mat4::zeros();
        for jump in &jumps {
            let cdiag = jump.0.diagonal();
            for i in 0..DIM {
                for j in 0..DIM {
                    let ci = cdiag[i];
                    let cj = cdiag[j];
                    factors[(i, j)] += ci * cj.conj() - re(0.5 * (ci.norm_sqr() + cj.norm_sqr()));
                }
            }
        }
        Ok(NSchemeModel { atom, lasers, h0, dephasing_factors: factors })
    }

    pub fn h0(&self) -> &Operator {
        &self.h0
    }

    pub fn rabi_at(&self, t: f64) -> [f64; 3] {
        [
            self.lasers[0].envelope.evaluate(t),
            self.lasers[1].envelope.evaluate(t),
            self.lasers[2].envelope.evaluate(t),
        ]
    }

    pub fn hamiltonian(&self, t: f64) -> Operator {
        let [b, r, c] = self.rabi_at(t);
        self.h0 + build_interaction(b, r, c)
    }

    pub fn dephasing_operators(&self) -> [Operator; 3] {
        dephasing_operators(self.lasers[0].linewidth, self.lasers[1].linewidth, self.lasers[2].linewidth)
    }

    /// Every Lindblad jump operator of the model, radiative ones included.
    pub fn jump_operators(&self) -> Vec<Operator> {
        let a = &self.atom;
        let mut out = vec![
            Operator::transition(Level::S, Level::P).scale((a.beta_ps * a.gamma_p).sqrt()),
            Operator::transition(Level::D, Level::P).scale((a.beta_pd * a.gamma_p).sqrt()),
        ];
        if a.gamma_q > 0.0 {
            out.push(Operator::transition(Level::S, Level::Q).scale(a.gamma_q.sqrt()));
        }
        if a.gamma_d > 0.0 {
            out.push(Operator::transition(Level::S, Level::D).scale(a.gamma_d.sqrt()));
        }
        out.extend(self.dephasing_operators());
        out
    }

    /// Time derivative of the raw density matrix; the integrators' hot path.
    pub fn rhs_matrix(&self, t: f64, rho: &Mat4) -> Mat4 {
        let h = self.hamiltonian(t).0;
        let minus_i = C64::new(0.0, -1.0);
        let mut out = (h * rho - rho * h) * minus_i;
        out += self.dephasing_factors.component_mul(rho);

        let a = &self.atom;
        decay(&mut out, rho, P, S, a.beta_ps * a.gamma_p);
        decay(&mut out, rho, P, D, a.beta_pd * a.gamma_p);
        if a.gamma_q > 0.0 {
            decay(&mut out, rho, Q, S, a.gamma_q);
        }
        if a.gamma_d > 0.0 {
            decay(&mut out, rho, D, S, a.gamma_d);
        }
        out
    }
}

/// Adds the dissipator of `sqrt(rate) |to><from|`.
#[inline]
fn decay(out: &mut Mat4, rho: &Mat4, from: usize, to: usize, rate: f64) {
    let half = 0.5 * rate;
    for k in 0..DIM {
        out[(from, k)] -= rho[(from, k)] * half;
        out[(k, from)] -= rho[(k, from)] * half;
    }
    out[(to, to)] += rho[(from, from)] * rate;
}

/// Full master-equation RHS assembled from the generic building blocks.
pub fn master_rhs(t: f64, rho: &DensityMatrix, model: &NSchemeModel) -> Operator {
    let h = model.hamiltonian(t);
    let mut out = commutator(&h, rho) * C64::new(0.0, -1.0);
    out = out + radiative_rhs(rho, &model.atom);
    for jump in model.dephasing_operators() {
        out = out + dissipator(&jump, rho);
    }
    let a = &model.atom;
    if a.gamma_q > 0.0 {
        out = out + dissipator(&Operator::transition(Level::S, Level::Q).scale(a.gamma_q.sqrt()), rho);
    }
    if a.gamma_d > 0.0 {
        out = out + dissipator(&Operator::transition(Level::S, Level::D).scale(a.gamma_d.sqrt()), rho);
    }
    out
}

/// Planar beam layout satisfying `k_R + k_C = k_B`. The R beam defines the x axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BeamGeometry {
    pub lambda_b_nm: f64,
    pub lambda_r_nm: f64,
    pub lambda_c_nm: f64,
    /// Angle between the R and C beams (rad).
    pub theta_rc: f64,
    /// Angle between the R and B beams (rad), on the same side as C.
    pub theta_rb: f64,
}

impl BeamGeometry {
    /// Wavevector magnitudes (rad/nm) for B, R, C.
    pub fn wavenumbers(&self) -> [f64; 3] {
        [2.0 * PI / self.lambda_b_nm, 2.0 * PI / self.lambda_r_nm, 2.0 * PI / self.lambda_c_nm]
    }

    /// `|k_R + k_C - k_B| / k_B`
    pub fn residual(&self) -> f64 {
        let [kb, kr, kc] = self.wavenumbers();
        let dx = kr + kc * self.theta_rc.cos() - kb * self.theta_rb.cos();
        let dy = kc * self.theta_rc.sin() - kb * self.theta_rb.sin();
        dx.hypot(dy) / kb
    }
}

pub fn phase_matching_geometry(lambda_b_nm: f64, lambda_r_nm: f64, lambda_c_nm: f64) -> Result<BeamGeometry> {
    if !(lambda_b_nm > 0.0 && lambda_r_nm > 0.0 && lambda_c_nm > 0.0) {
        return Err(Error::InvalidParameter("wavelengths must be positive".into()));
    }
    let kb = 2.0 * PI / lambda_b_nm;
    let kr = 2.0 * PI / lambda_r_nm;
    let kc = 2.0 * PI / lambda_c_nm;
    let slack = 1e-14 * kb;
    if kb > kr + kc + slack || kb < (kr - kc).abs() - slack {
        return Err(Error::NoSolution(format!(
            "k_B = {kb:.6} rad/nm outside [{:.6}, {:.6}]",
            (kr - kc).abs(),
            kr + kc
        )));
    }
    let cos_rc = ((kb * kb - kr * kr - kc * kc) / (2.0 * kr * kc)).clamp(-1.0, 1.0);
    let cos_rb = ((kb * kb + kr * kr - kc * kc) / (2.0 * kb * kr)).clamp(-1.0, 1.0);
    Ok(BeamGeometry {
        lambda_b_nm,
        lambda_r_nm,
        lambda_c_nm,
        theta_rc: cos_rc.acos(),
        theta_rb: cos_rb.acos(),
    })
}
