//! Thermal states and two-point-measurement work statistics.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    DensityMatrix4, HermitianMatrix4, Mat4, Spectrum, UnitaryMatrix4, Vec4, C64,
};

/// Tolerance on row and column sums of a transition matrix.
pub const STOCHASTIC_TOL: f64 = 1e-10;
/// Default merge tolerance for work atoms.
pub const DEFAULT_WORK_MERGE_TOL: f64 = 1e-9;

/// Gibbs weights over four energy levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub energies: [f64; 4],
    pub probabilities: [f64; 4],
    pub beta: f64,
    /// `ln Z`, kept in log form so large `beta * E` does not overflow.
    pub ln_z: f64,
}

impl ThermalEnsemble {
    pub fn partition_function(&self) -> f64 {
        self.ln_z.exp()
    }

    /// Free energy `-ln Z / beta`.
    pub fn free_energy(&self) -> f64 {
        -self.ln_z / self.beta
    }

    pub fn mean_energy(&self) -> f64 {
        self.energies
            .iter()
            .zip(&self.probabilities)
            .map(|(e, p)| e * p)
            .sum()
    }
}

/// Gibbs distribution `p_n = exp(-beta e_n) / Z`, evaluated relative to the lowest level.
pub fn thermal_ensemble(energies: &[f64; 4], beta: f64) -> Result<ThermalEnsemble> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "beta must be finite and > 0, got {beta}"
        )));
    }
    if energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidInput("non-finite energy level".into()));
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: [f64; 4] = std::array::from_fn(|i| (-beta * (energies[i] - e_min)).exp());
    let sum: f64 = weights.iter().sum();
    Ok(ThermalEnsemble {
        energies: *energies,
        probabilities: weights.map(|w| w / sum),
        beta,
        ln_z: -beta * e_min + sum.ln(),
    })
}

/// Thermal density matrix `sum_n p_n |n><n|` of a spectrum.
pub fn thermal_state(spec: &Spectrum, beta: f64) -> Result<(ThermalEnsemble, DensityMatrix4)> {
    let ens = thermal_ensemble(&spec.eigenvalues, beta)?;
    let rho = DensityMatrix4::from_spectrum(spec, &ens.probabilities)?;
    Ok((ens, rho))
}

/// `T[m][n] = |<m_tau| U |n_0>|^2`, the probability of ending in `m` after starting in `n`.
///
/// `basis0` and `basis_tau` hold eigenvectors as columns.
pub fn transition_matrix(
    propagator: &UnitaryMatrix4,
    basis0: &Mat4,
    basis_tau: &Mat4,
) -> Result<[[f64; 4]; 4]> {
    let amp = basis_tau.adjoint() * propagator.matrix() * basis0;
    let t: [[f64; 4]; 4] = std::array::from_fn(|m| std::array::from_fn(|n| amp[(m, n)].norm_sqr()));
    for k in 0..4 {
        let col: f64 = (0..4).map(|m| t[m][k]).sum();
        let row: f64 = t[k].iter().sum();
        if (col - 1.0).abs() > STOCHASTIC_TOL || (row - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NumericalConsistency(format!(
                "transition matrix is not doubly stochastic (row {k}: {row:.12}, column {k}: {col:.12})"
            )));
        }
    }
    Ok(t)
}

/// Transition matrix between the eigenbases of two spectra.
pub fn spectral_transitions(
    propagator: &UnitaryMatrix4,
    spec0: &Spectrum,
    spec_tau: &Spectrum,
) -> Result<[[f64; 4]; 4]> {
    transition_matrix(propagator, &spec0.basis(), &spec_tau.basis())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkAtom {
    pub work: f64,
    pub probability: f64,
}

/// Discrete work distribution `P(W)` from a two-point measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution {
    /// Atoms sorted by work value.
    pub atoms: Vec<WorkAtom>,
    pub label: String,
}

impl WorkDistribution {
    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.probability).sum()
    }

    pub fn mean(&self) -> f64 {
        mean_work(self)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms
            .iter()
            .map(|a| a.probability * (a.work - m).powi(2))
            .sum()
    }

    /// `ln <exp(-beta W)>`, accumulated with a shift for stability.
    pub fn ln_exp_average(&self, beta: f64) -> f64 {
        let shift = self
            .atoms
            .iter()
            .filter(|a| a.probability > 0.0)
            .map(|a| -beta * a.work)
            .fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = self
            .atoms
            .iter()
            .map(|a| a.probability * (-beta * a.work - shift).exp())
            .sum();
        shift + s.ln()
    }
}

/// Builds `P(W) = sum_{n,m} p_n p_{m|n} delta(W - (e_m(tau) - e_n(0)))`,
/// merging atoms whose work values lie within `merge_tol` of their neighbour.
pub fn work_distribution(
    ens0: &ThermalEnsemble,
    transitions: &[[f64; 4]; 4],
    energies_tau: &[f64; 4],
    merge_tol: f64,
) -> Result<WorkDistribution> {
    let mut raw = Vec::with_capacity(16);
    for n in 0..4 {
        for m in 0..4 {
            raw.push(WorkAtom {
                work: energies_tau[m] - ens0.energies[n],
                probability: ens0.probabilities[n] * transitions[m][n],
            });
        }
    }
    raw.sort_by(|a, b| a.work.total_cmp(&b.work));
    let mut atoms: Vec<WorkAtom> = Vec::new();
    let mut last_work = f64::NEG_INFINITY;
    for a in raw {
        match atoms.last_mut() {
            Some(prev) if a.work - last_work <= merge_tol => {
                // probability-weighted location keeps the mean exact
                let p = prev.probability + a.probability;
                if p > 0.0 {
                    prev.work = (prev.work * prev.probability + a.work * a.probability) / p;
                }
                prev.probability = p;
            }
            _ => atoms.push(a),
        }
        last_work = a.work;
    }
    let wd = WorkDistribution {
        atoms,
        label: String::new(),
    };
    let total = wd.total_probability();
    if (total - 1.0).abs() > 1e-10 || wd.atoms.iter().any(|a| a.probability < -1e-12) {
        return Err(Error::NumericalConsistency(format!(
            "work distribution is not normalized (total probability {total:.12})"
        )));
    }
    Ok(wd)
}

pub fn mean_work(wd: &WorkDistribution) -> f64 {
    wd.atoms.iter().map(|a| a.work * a.probability).sum()
}

/// Extracted work, `-<W>`.
pub fn extracted_work(wd: &WorkDistribution) -> f64 {
    -mean_work(wd)
}

/// `Delta F = -ln(Z_tau / Z_0) / beta`.
pub fn free_energy_difference(z0: f64, z_tau: f64, beta: f64) -> Result<f64> {
    if !(z0 > 0.0 && z_tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "partition functions must be positive ({z0}, {z_tau})"
        )));
    }
    Ok(free_energy_difference_ln(z0.ln(), z_tau.ln(), beta))
}

pub fn free_energy_difference_ln(ln_z0: f64, ln_z_tau: f64, beta: f64) -> f64 {
    -(ln_z_tau - ln_z0) / beta
}

/// `<Sigma> = beta (<W> - Delta F)`.
pub fn entropy_production(mean_w: f64, delta_f: f64, beta: f64) -> f64 {
    beta * (mean_w - delta_f)
}

/// `<exp(-beta W)> Z_0 / Z_tau - 1`.
pub fn jarzynski_check(wd: &WorkDistribution, z0: f64, z_tau: f64, beta: f64) -> f64 {
    jarzynski_check_ln(wd, z0.ln(), z_tau.ln(), beta)
}

pub fn jarzynski_check_ln(wd: &WorkDistribution, ln_z0: f64, ln_z_tau: f64, beta: f64) -> f64 {
    (wd.ln_exp_average(beta) + ln_z0 - ln_z_tau).exp_m1()
}

/// Energies with first-order corrections and the basis they refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectedSpectrum {
    /// Corrected energies, index-aligned with `basis`.
    pub energies: [f64; 4],
    /// Zeroth-order eigenvectors, rotated within each degenerate group.
    pub basis: [Vec4; 4],
    pub zero_order: [f64; 4],
}

impl CorrectedSpectrum {
    pub fn basis_matrix(&self) -> Mat4 {
        Mat4::from_columns(&self.basis)
    }

    pub fn shifts(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.energies[i] - self.zero_order[i])
    }
}

/// First-order (degenerate) perturbative correction of `spec0` by `delta_h`.
pub fn fop_correct(spec0: &Spectrum, delta_h: &HermitianMatrix4) -> Result<CorrectedSpectrum> {
    let mut energies = spec0.eigenvalues;
    let mut basis = spec0.eigenvectors;
    let dh = delta_h.matrix();
    for group in &spec0.degeneracy_groups {
        let k = group.len();
        let vs: Vec<Vec4> = group.clone().map(|i| spec0.eigenvectors[i]).collect();
        let projected =
            DMatrix::<C64>::from_fn(k, k, |a, b| (vs[a].adjoint() * dh * vs[b])[(0, 0)]);
        let projected = (&projected + projected.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::try_new(projected, 1e-15, 10_000).ok_or_else(|| {
            Error::NumericalConsistency("degenerate subspace diagonalization failed".into())
        })?;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for (slot, &col) in order.iter().enumerate() {
            let idx = group.start + slot;
            energies[idx] = spec0.eigenvalues[idx] + eig.eigenvalues[col];
            let mut v = Vec4::zeros();
            for (a, va) in vs.iter().enumerate() {
                v += va * eig.eigenvectors[(a, col)];
            }
            basis[idx] = v / C64::new(v.norm(), 0.0);
        }
    }
    Ok(CorrectedSpectrum {
        energies,
        basis,
        zero_order: spec0.eigenvalues,
    })
}
