//! Fixed four-dimensional complex linear algebra.
//!
//! Every matrix in the crate lives in the ordered basis `(S, P, D, Q)`. Operators
//! that carry physical units use angular frequency in rad/us.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

pub const DIM: usize = 4;

const NORM_TOL: f64 = 1e-8;

/// Basis levels of the N-scheme in their fixed storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    S = 0,
    P = 1,
    D = 2,
    Q = 3,
}

impl Level {
    pub const ALL: [Level; DIM] = [Level::S, Level::P, Level::D, Level::Q];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Level::S => "S",
            Level::P => "P",
            Level::D => "D",
            Level::Q => "Q",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Pure state amplitudes over `(S, P, D, Q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVector(Vec4);

impl StateVector {
    /// Wraps amplitudes without normalizing.
    pub fn from_amplitudes(amps: [C64; DIM]) -> Self {
        StateVector(Vec4::from_column_slice(&amps))
    }

    pub fn from_real(amps: [f64; DIM]) -> Self {
        StateVector(Vec4::from_fn(|i, _| re(amps[i])))
    }

    pub fn basis(level: Level) -> Self {
        let mut v = Vec4::zeros();
        v[level.index()] = re(1.0);
        StateVector(v)
    }

    /// Rescales to unit norm. Fails on the zero vector.
    pub fn normalized(self) -> Result<Self> {
        let n = self.0.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize a zero state vector".into()));
        }
        Ok(StateVector(self.0.unscale(n)))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.norm_squared()
    }

    pub fn amplitude(&self, level: Level) -> C64 {
        self.0[level.index()]
    }

    pub fn as_vector(&self) -> &Vec4 {
        &self.0
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn projector(&self) -> DensityMatrix {
        DensityMatrix(self.0 * self.0.adjoint())
    }
}

/// A 4x4 operator: Hamiltonians, jump operators, projectors and RHS values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Operator(pub Mat4);

impl Operator {
    pub fn zeros() -> Self {
        Operator(Mat4::zeros())
    }

    pub fn from_real_diagonal(diag: [f64; DIM]) -> Self {
        Operator(Mat4::from_diagonal(&Vec4::from_fn(|i, _| re(diag[i]))))
    }

    /// `|to><from|`
    pub fn transition(to: Level, from: Level) -> Self {
        let mut m = Mat4::zeros();
        m[(to.index(), from.index())] = re(1.0);
        Operator(m)
    }

    pub fn projector(level: Level) -> Self {
        Self::transition(level, level)
    }

    pub fn entry(&self, row: Level, col: Level) -> C64 {
        self.0[(row.index(), col.index())]
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `max |M - M^dagger|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.0)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() < tol
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, k: f64) -> Self {
        Operator(self.0.scale(k))
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

impl Mul<C64> for Operator {
    type Output = Operator;
    fn mul(self, k: C64) -> Operator {
        Operator(self.0 * k)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

/// Density matrix with element convention `rho_IJ = <I|rho|J>`.
///
/// Construction through [`DensityMatrix::new`] checks Hermiticity, unit trace and
/// positivity. Integrators hold raw matrices and wrap them with
/// [`DensityMatrix::from_matrix_unchecked`] so that violations stay observable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Mat4);

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-8;

impl DensityMatrix {
    pub fn new(m: Mat4) -> Result<Self> {
        let rho = DensityMatrix(m);
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_matrix_unchecked(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn basis(level: Level) -> Self {
        StateVector::basis(level).projector()
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity().scale(0.25))
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm >= HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix is not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidParameter(format!("density matrix trace is {tr}")));
        }
        let (lo, _) = spectral_bounds(self);
        if lo < -POSITIVITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix has negative eigenvalue {lo:e}"
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn element(&self, row: Level, col: Level) -> C64 {
        self.0[(row.index(), col.index())]
    }

    pub fn population(&self, level: Level) -> f64 {
        self.element(level, level).re
    }

    pub fn populations(&self) -> [f64; DIM] {
        Level::ALL.map(|l| self.population(l))
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.0)
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn hermiticity_error(m: &Mat4) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `H rho - rho H`
pub fn commutator(h: &Operator, rho: &DensityMatrix) -> Operator {
    Operator(h.0 * rho.0 - rho.0 * h.0)
}

/// Lindblad dissipator `C rho C^dagger - (C^dagger C rho + rho C^dagger C) / 2`.
pub fn dissipator(jump: &Operator, rho: &DensityMatrix) -> Operator {
    let cd = jump.0.adjoint();
    let cdc = cd * jump.0;
    Operator(jump.0 * rho.0 * cd - (cdc * rho.0 + rho.0 * cdc).scale(0.5))
}

/// `<psi|rho|psi>`, rejecting unnormalized `psi`.
pub fn expectation(psi: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    let deviation = (psi.norm_sqr() - 1.0).abs();
    if deviation > NORM_TOL {
        return Err(Error::Unnormalized { deviation });
    }
    let v = psi.as_vector();
    let value = v.dotc(&(rho.0 * v));
    debug_assert!(
        value.im.abs() < 1e-10 || rho.hermiticity_error() >= HERMITIAN_TOL,
        "expectation of a Hermitian matrix has imaginary part {}",
        value.im
    );
    Ok(value.re)
}

/// Sorted eigenvalues of the Hermitian part of `rho`.
pub fn eigenvalues(rho: &DensityMatrix) -> [f64; DIM] {
    let herm = (rho.0 + rho.0.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(herm);
    let mut vals = [0.0; DIM];
    for (slot, v) in vals.iter_mut().zip(eig.eigenvalues.iter()) {
        *slot = *v;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// (smallest, largest) eigenvalue of the Hermitian part of `rho`.
pub fn spectral_bounds(rho: &DensityMatrix) -> (f64, f64) {
    let vals = eigenvalues(rho);
    (vals[0], vals[DIM - 1])
}
