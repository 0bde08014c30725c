//! Dense Hermitian linear algebra on the fixed 4-dimensional half-filling space.
//!
//! Every operator in the dimer problem is a 4x4 complex matrix. The types here
//! are thin newtypes over [`nalgebra::Matrix4`] that carry the physical
//! invariant each matrix is expected to satisfy (Hermitian, unitary, or a
//! valid density matrix) and check it at construction.

use std::ops::{Add, Mul, Range, Sub};

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

/// Absolute Hermiticity tolerance, scaled by `max(1, max |entry|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default tolerance for grouping (near-)degenerate eigenvalues, in units of J.
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;
/// Allowed imaginary residue of an expectation value.
pub const EXPECTATION_IM_TOL: f64 = 1e-10;

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

fn max_abs(m: &Mat4) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Largest entry of `A - B` in absolute value.
pub fn max_abs_diff(a: &Mat4, b: &Mat4) -> f64 {
    max_abs(&(a - b))
}

pub fn real_matrix(rows: [[f64; 4]; 4]) -> Mat4 {
    Mat4::from_fn(|i, j| C64::new(rows[i][j], 0.0))
}

pub fn real_diagonal(d: [f64; 4]) -> Mat4 {
    Mat4::from_diagonal(&Vector4::from_fn(|i, _| C64::new(d[i], 0.0)))
}

/// A Hermitian 4x4 matrix (energy units of J).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HermitianMatrix4(Mat4);

impl HermitianMatrix4 {
    pub fn new(m: Mat4) -> Result<Self> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let defect = max_abs_diff(&m, &m.adjoint());
        let tol = HERMITIAN_TOL * max_abs(&m).max(1.0);
        if defect > tol {
            return Err(Error::InvalidInput(format!(
                "matrix is not Hermitian (max |H - H^dag| = {defect:.3e})"
            )));
        }
        // symmetrize away round-off so downstream eigensolvers see an exact Hermitian input
        Ok(Self((m + m.adjoint()) * C64::new(0.5, 0.0)))
    }

    pub fn from_real(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::new(real_matrix(rows))
    }

    pub fn diagonal(d: [f64; 4]) -> Self {
        Self(real_diagonal(d))
    }

    pub fn zeros() -> Self {
        Self(Mat4::zeros())
    }

    pub fn identity() -> Self {
        Self(Mat4::identity())
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `V H V^dag` for a unitary `V`.
    pub fn conjugate_by(&self, v: &Mat4) -> Self {
        let m = v * self.0 * v.adjoint();
        Self((m + m.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for HermitianMatrix4 {
    type Output = HermitianMatrix4;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl Sub for HermitianMatrix4 {
    type Output = HermitianMatrix4;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl Mul<f64> for HermitianMatrix4 {
    type Output = HermitianMatrix4;
    fn mul(self, rhs: f64) -> Self {
        Self(self.0 * C64::new(rhs, 0.0))
    }
}

/// A 4x4 unitary (dimensionless), typically a time-evolution operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitaryMatrix4(Mat4);

impl UnitaryMatrix4 {
    pub const UNITARITY_TOL: f64 = 1e-10;

    pub fn identity() -> Self {
        Self(Mat4::identity())
    }

    pub fn new(m: Mat4) -> Result<Self> {
        let u = Self(m);
        let defect = u.unitarity_defect();
        if defect.is_nan() || defect > Self::UNITARITY_TOL {
            return Err(Error::NumericalConsistency(format!(
                "matrix is not unitary (max |U^dag U - I| = {defect:.3e})"
            )));
        }
        Ok(u)
    }

    pub(crate) fn new_unchecked(m: Mat4) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `later * self`: apply `self` first, then `later`.
    pub fn then(&self, later: &UnitaryMatrix4) -> Self {
        Self(later.0 * self.0)
    }

    /// `max |U^dag U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        max_abs_diff(&(self.0.adjoint() * self.0), &Mat4::identity())
    }
}

/// A 4x4 density matrix: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix4(Mat4);

impl DensityMatrix4 {
    pub const TRACE_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = 1e-12;

    pub fn new(m: Mat4) -> Result<Self> {
        let h = HermitianMatrix4::new(m)?;
        let tr = h.0.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidInput(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let spec = eig_hermitian(&h, DEFAULT_GROUP_TOL)?;
        if spec.eigenvalues[0] < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidInput(format!(
                "density matrix has negative eigenvalue {:.3e}",
                spec.eigenvalues[0]
            )));
        }
        Ok(Self(h.0))
    }

    /// `|psi><psi|` for a (normalized on the fly) state vector.
    pub fn pure(psi: &Vec4) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput("cannot normalize state vector".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(Self(v * v.adjoint()))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat4::identity() * C64::new(0.25, 0.0))
    }

    /// `sum_n p_n |n><n|` over the eigenvectors of `spectrum`.
    pub fn from_spectrum(spectrum: &Spectrum, probabilities: &[f64; 4]) -> Result<Self> {
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > Self::TRACE_TOL
            || probabilities.iter().any(|&p| p < -Self::POSITIVITY_TOL)
        {
            return Err(Error::InvalidInput(format!(
                "probabilities {probabilities:?} are not a distribution"
            )));
        }
        let mut m = Mat4::zeros();
        for (n, &p) in probabilities.iter().enumerate() {
            let v = spectrum.eigenvectors[n];
            m += v * v.adjoint() * C64::new(p, 0.0);
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// `U rho U^dag`. The result is not re-validated; callers check trace drift.
    pub fn evolve(&self, u: &UnitaryMatrix4) -> Self {
        Self(u.0 * self.0 * u.0.adjoint())
    }

    /// Diagonal entries (populations of the basis states).
    pub fn populations(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }
}

/// Eigen-decomposition of a Hermitian 4x4 matrix with ascending eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: [f64; 4],
    pub eigenvectors: [Vec4; 4],
    /// Contiguous index ranges of (near-)degenerate eigenvalues.
    pub degeneracy_groups: Vec<Range<usize>>,
}

impl Spectrum {
    /// Builds a spectrum from already-orthonormal eigenpairs, sorting and grouping them.
    pub fn from_eigenpairs(mut pairs: Vec<(f64, Vec4)>, group_tol: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let eigenvalues = std::array::from_fn(|i| pairs[i].0);
        let eigenvectors = std::array::from_fn(|i| pairs[i].1);
        let degeneracy_groups = group_degenerate(&eigenvalues, group_tol);
        Self {
            eigenvalues,
            eigenvectors,
            degeneracy_groups,
        }
    }

    /// Column matrix of eigenvectors.
    pub fn basis(&self) -> Mat4 {
        Mat4::from_columns(&self.eigenvectors)
    }

    /// `sum_n e_n |n><n|`.
    pub fn reconstruct(&self) -> Mat4 {
        let mut m = Mat4::zeros();
        for (e, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            m += v * v.adjoint() * C64::new(*e, 0.0);
        }
        m
    }

    /// `max |<m|n> - delta_mn|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let b = self.basis();
        max_abs_diff(&(b.adjoint() * b), &Mat4::identity())
    }

    pub fn group_of(&self, index: usize) -> Range<usize> {
        self.degeneracy_groups
            .iter()
            .find(|g| g.contains(&index))
            .cloned()
            .unwrap_or(index..index + 1)
    }
}

/// Transitive-closure grouping of sorted eigenvalues: neighbours within `tol` share a group.
fn group_degenerate(sorted: &[f64; 4], tol: f64) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i] - sorted[i - 1] > tol {
            groups.push(start..i);
            start = i;
        }
    }
    groups
}

/// Fixes the global phase of an eigenvector so its largest component is real and positive.
fn canonical_phase(v: Vec4) -> Vec4 {
    let mut k = 0;
    for i in 1..4 {
        if v[i].norm() > v[k].norm() + 1e-12 {
            k = i;
        }
    }
    let z = v[k];
    if z.norm() == 0.0 {
        return v;
    }
    v * (z.conj() / z.norm())
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues,
/// orthonormal eigenvectors and degeneracy groups.
pub fn eig_hermitian(h: &HermitianMatrix4, group_tol: f64) -> Result<Spectrum> {
    // the newtype already guarantees Hermiticity; re-check in case it was built unchecked
    let defect = max_abs_diff(&h.0, &h.0.adjoint());
    if defect > HERMITIAN_TOL * max_abs(&h.0).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "eigensolver input is not Hermitian (defect {defect:.3e})"
        )));
    }
    let eig = SymmetricEigen::try_new(h.0, EIG_EPS, EIG_MAX_ITER).ok_or_else(|| {
        Error::NumericalConsistency("Hermitian eigensolver did not converge".into())
    })?;
    let pairs = (0..4)
        .map(|i| {
            let v: Vec4 = eig.eigenvectors.column(i).into_owned();
            let v = v / C64::new(v.norm(), 0.0);
            (eig.eigenvalues[i], canonical_phase(v))
        })
        .collect();
    Ok(Spectrum::from_eigenpairs(pairs, group_tol))
}

/// `exp(-i H dt)` built from the eigen-decomposition of `H` (hbar = 1).
pub fn propagator_step(h: &HermitianMatrix4, dt: f64) -> Result<UnitaryMatrix4> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidInput(format!(
            "time step must be finite and >= 0, got {dt}"
        )));
    }
    if dt == 0.0 {
        return Ok(UnitaryMatrix4::identity());
    }
    let spec = eig_hermitian(h, DEFAULT_GROUP_TOL)?;
    Ok(exp_from_spectrum(&spec, dt))
}

/// `V exp(-i e dt) V^dag` for a precomputed spectrum.
pub fn exp_from_spectrum(spec: &Spectrum, dt: f64) -> UnitaryMatrix4 {
    let mut m = Mat4::zeros();
    for (e, v) in spec.eigenvalues.iter().zip(&spec.eigenvectors) {
        let phase = C64::from_polar(1.0, -e * dt);
        m += v * v.adjoint() * phase;
    }
    UnitaryMatrix4::new_unchecked(m)
}

/// `Tr[rho A]`, rejecting a non-negligible imaginary part.
pub fn expectation(rho: &DensityMatrix4, a: &HermitianMatrix4) -> Result<f64> {
    let z = (rho.0 * a.0).trace();
    if z.im.abs() > EXPECTATION_IM_TOL {
        return Err(Error::NumericalConsistency(format!(
            "expectation value has imaginary part {:.3e}",
            z.im
        )));
    }
    Ok(z.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let h = HermitianMatrix4::diagonal([-1.5, 0.25, 2.0, 7.0]);
        let s = eig_hermitian(&h, DEFAULT_GROUP_TOL).unwrap();
        assert_eq!(s.eigenvalues, [-1.5, 0.25, 2.0, 7.0]);
        for (i, v) in s.eigenvectors.iter().enumerate() {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(v[j].re, expected, epsilon = 1e-14);
                assert_abs_diff_eq!(v[j].im, 0.0, epsilon = 1e-14);
            }
        }
        assert_eq!(s.degeneracy_groups.len(), 4);
    }

    #[test]
    fn degenerate_levels_are_grouped() {
        let h = HermitianMatrix4::diagonal([1.0, 0.0, 1.0 + 1e-11, 3.0]);
        let s = eig_hermitian(&h, DEFAULT_GROUP_TOL).unwrap();
        assert_eq!(s.degeneracy_groups, vec![0..1, 1..3, 3..4]);
        assert_eq!(s.group_of(2), 1..3);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = Mat4::zeros();
        m[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(
            HermitianMatrix4::new(m),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_step_is_identity() {
        let h = HermitianMatrix4::diagonal([1.0, 2.0, 3.0, 4.0]);
        let u = propagator_step(&h, 0.0).unwrap();
        assert_eq!(*u.matrix(), Mat4::identity());
        assert!(propagator_step(&h, -1.0).is_err());
    }

    #[test]
    fn diagonal_exponential_at_pi() {
        let h = HermitianMatrix4::diagonal([1.0, 2.0, 3.0, 4.0]);
        let u = propagator_step(&h, std::f64::consts::PI).unwrap();
        let expected = real_diagonal([-1.0, 1.0, -1.0, 1.0]);
        assert!(max_abs_diff(u.matrix(), &expected) < 1e-12);
    }

    #[test]
    fn expectation_of_uniform_mixture() {
        let rho = DensityMatrix4::maximally_mixed();
        let n1 = HermitianMatrix4::diagonal([2.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(expectation(&rho, &n1).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn expectation_on_doubly_occupied_site() {
        let mut psi = Vec4::zeros();
        psi[0] = C64::new(1.0, 0.0);
        let rho = DensityMatrix4::pure(&psi).unwrap();
        let n1 = HermitianMatrix4::diagonal([2.0, 1.0, 1.0, 0.0]);
        assert_abs_diff_eq!(expectation(&rho, &n1).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix4::new(Mat4::identity()).is_err());
        assert!(DensityMatrix4::new(real_diagonal([1.5, -0.5, 0.0, 0.0])).is_err());
        assert!(DensityMatrix4::new(real_diagonal([0.5, 0.5, 0.0, 0.0])).is_ok());
    }

    #[test]
    fn unitary_validation() {
        assert!(UnitaryMatrix4::new(Mat4::identity() * C64::new(2.0, 0.0)).is_err());
        assert!(UnitaryMatrix4::new(Mat4::identity() * C64::new(0.0, 1.0)).is_ok());
    }
}
