//! Closed-form dressed-state theory of the weak S-Q coupling.
//!
//! The (S, Q) block is diagonalized either to first order in
//! `alpha_C = Omega_C / (2 Delta_C)` (weak mode) or exactly. Eigen-energies are
//! measured from the S level of the bare Hamiltonian, i.e. they are the
//! eigenvalues of `[[0, Omega_C/2], [Omega_C/2, -Delta_C]]`.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::build_interaction;
use crate::qcore::{expectation, DensityMatrix, Level, StateVector};

/// Above this `|alpha_C|` the weak expansion is off by more than about 1%.
pub const WEAK_VALIDITY_LIMIT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Weak,
    Exact,
}

/// Which dressed state the dark state is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DarkBasis {
    /// `|Q_S>`, adiabatically connected to `|Q>`.
    #[default]
    QS,
    /// `|S_Q>`, adiabatically connected to `|S>`.
    SQ,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DressedFrame {
    pub mode: Mode,
    pub alpha_c: f64,
    pub delta_c: f64,
    /// Mixing amplitude of `|S>` in `|Q_S>` (equals `alpha_c` in weak mode).
    pub alpha: f64,
    /// Coupling of `|Q_S>` to `|P>` in units of `Omega_B` (equals `alpha_c` in weak mode).
    pub beta: f64,
    pub lambda_q: f64,
    pub lambda_s: f64,
    pub q_s_state: StateVector,
    pub s_q_state: StateVector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkState {
    pub vector: StateVector,
    /// `E` (weak) or `E'` (exact): weight of `|D>` relative to the dressed state.
    pub mixing_ratio: f64,
}

pub fn mixing_weak(omega_c: f64, delta_c: f64) -> Result<f64> {
    if delta_c == 0.0 {
        return Err(Error::DivisionByZeroDetuning);
    }
    Ok(omega_c / (2.0 * delta_c))
}

/// Exact mixing amplitude `alpha = 2 alpha_C / (1 + sqrt(1 + 4 alpha_C^2))`.
pub fn exact_alpha(alpha_c: f64) -> f64 {
    2.0 * alpha_c / (1.0 + (1.0 + 4.0 * alpha_c * alpha_c).sqrt())
}

pub fn dressed_frame(alpha_c: f64, delta_c: f64, mode: Mode) -> DressedFrame {
    let root = (1.0 + 4.0 * alpha_c * alpha_c).sqrt();
    match mode {
        Mode::Weak => {
            if alpha_c.abs() > WEAK_VALIDITY_LIMIT {
                warn!("weak dressed-state expansion used with alpha_C = {alpha_c}");
            }
            let n = 1.0 / (1.0 + alpha_c * alpha_c).sqrt();
            let shift = alpha_c * alpha_c * delta_c;
            DressedFrame {
                mode,
                alpha_c,
                delta_c,
                alpha: alpha_c,
                beta: alpha_c,
                lambda_q: -delta_c - shift,
                lambda_s: shift,
                q_s_state: StateVector::from_real([-alpha_c * n, 0.0, 0.0, n]),
                s_q_state: StateVector::from_real([n, 0.0, 0.0, alpha_c * n]),
            }
        }
        Mode::Exact => {
            // The closed forms stay attached to the |Q>-connected branch for
            // either sign of Delta_C: alpha carries the sign of alpha_C.
            let alpha = 2.0 * alpha_c / (1.0 + root);
            let n = 1.0 / (1.0 + alpha * alpha).sqrt();
            DressedFrame {
                mode,
                alpha_c,
                delta_c,
                alpha,
                beta: alpha * n,
                lambda_q: -delta_c * (1.0 + root) / 2.0,
                lambda_s: -delta_c * (1.0 - root) / 2.0,
                q_s_state: StateVector::from_real([-alpha * n, 0.0, 0.0, n]),
                s_q_state: StateVector::from_real([n, 0.0, 0.0, alpha * n]),
            }
        }
    }
}

/// `Delta_R` satisfying the (light-shifted) three-photon resonance.
pub fn resonance_detuning(delta_b: f64, delta_c: f64, omega_c: f64, mode: Mode) -> Result<f64> {
    let alpha_c = mixing_weak(omega_c, delta_c)?;
    Ok(match mode {
        Mode::Weak => delta_b - delta_c - alpha_c * omega_c / 2.0,
        Mode::Exact => delta_b - delta_c * (1.0 + (1.0 + 4.0 * alpha_c * alpha_c).sqrt()) / 2.0,
    })
}

/// Resonance built on the `|S_Q>` branch instead: `Delta_R = Delta_B + lambda_S`.
pub fn resonance_detuning_sq(delta_b: f64, delta_c: f64, omega_c: f64) -> Result<f64> {
    let alpha_c = mixing_weak(omega_c, delta_c)?;
    Ok(delta_b - delta_c * (1.0 - (1.0 + 4.0 * alpha_c * alpha_c).sqrt()) / 2.0)
}

pub fn dark_state(frame: &DressedFrame, omega_b: f64, omega_r: f64) -> Result<DarkState> {
    dark_state_on(frame, omega_b, omega_r, DarkBasis::QS)
}

/// Dark state `M (E |D> + |X>)` with `|X>` the chosen dressed state.
///
/// `E` is fixed by cancelling the coupling to `|P>`:
/// `Omega_B <S|X> + Omega_R E = 0`.
pub fn dark_state_on(frame: &DressedFrame, omega_b: f64, omega_r: f64, basis: DarkBasis) -> Result<DarkState> {
    if omega_r == 0.0 {
        return Err(Error::ZeroRabiR);
    }
    let dressed = match basis {
        DarkBasis::QS => frame.q_s_state,
        DarkBasis::SQ => frame.s_q_state,
    };
    let s_amp = match (basis, frame.mode) {
        // weak mode keeps the first-order ratio E = alpha_C Omega_B / Omega_R
        (DarkBasis::QS, Mode::Weak) => -frame.alpha_c,
        (DarkBasis::QS, Mode::Exact) => -frame.beta,
        (DarkBasis::SQ, _) => dressed.amplitude(Level::S).re,
    };
    let ratio = -s_amp * omega_b / omega_r;
    let mut amps = [0.0; 4];
    for level in Level::ALL {
        amps[level.index()] = dressed.amplitude(level).re;
    }
    amps[Level::D.index()] += ratio;
    let vector = StateVector::from_real(amps).normalized()?;
    Ok(DarkState { vector, mixing_ratio: ratio })
}

/// Second-order transfer fidelity
/// `alpha_C^2 rho_SS + (1 - alpha_C^2) rho_QQ - 2 alpha_C Re(rho_SQ)`.
pub fn transfer_fidelity(rho: &DensityMatrix, alpha_c: f64) -> f64 {
    let a2 = alpha_c * alpha_c;
    a2 * rho.population(Level::S) + (1.0 - a2) * rho.population(Level::Q)
        - 2.0 * alpha_c * rho.element(Level::S, Level::Q).re
}

pub fn combination_fidelity(rho: &DensityMatrix, target: &DarkState) -> Result<f64> {
    expectation(&target.vector, rho)
}

/// `|<P|H_I|Psi_dark>|` with the full four-level coupling (rad/us).
pub fn dark_coupling_residual(frame: &DressedFrame, omega_b: f64, omega_r: f64) -> Result<f64> {
    if omega_b == 0.0 {
        return Ok(0.0);
    }
    let dark = dark_state(frame, omega_b, omega_r)?;
    let omega_c = 2.0 * frame.alpha_c * frame.delta_c;
    let h = build_interaction(omega_b, omega_r, omega_c);
    let coupled = h.matrix() * dark.vector.as_vector();
    Ok(coupled[Level::P.index()].norm())
}
