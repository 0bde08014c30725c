//! Single-run orchestration: one `(U, tau)` point under one protocol.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_density_matrix, exact_thermal_seed, tpf_solve, DensityTrajectory, ExactTrajectory,
    HamiltonianTrajectory, TimeGrid, ZeroOrderTrajectory,
};
use crate::error::{Error, Result};
use crate::functionals::{exact_ground_state_density, hartree_potential, ks_scf, XcChoice};
use crate::model::{build_delta_h, ramp_delta, DensitySource, DimerConfig, SiteOccupations};
use crate::numerics::{eig_hermitian, expectation, HermitianMatrix4, Spectrum, UnitaryMatrix4};
use crate::thermo::{
    entropy_production, fop_correct, free_energy_difference_ln, jarzynski_check_ln,
    thermal_ensemble, thermal_state, transition_matrix, work_distribution, WorkDistribution,
};

/// Which Hamiltonian generates the dynamics and the measured spectra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "ni")]
    Ni,
    #[serde(rename = "ks-plda")]
    KsPlda,
    #[serde(rename = "ks-par")]
    KsPar,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Exact,
        Protocol::Ni,
        Protocol::KsPlda,
        Protocol::KsPar,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Self::Exact),
            "ni" => Ok(Self::Ni),
            "ks-plda" | "plda" => Ok(Self::KsPlda),
            "ks-par" | "par" => Ok(Self::KsPar),
            other => Err(Error::Config(format!(
                "unknown protocol `{other}` (exact|ni|ks-plda|ks-par)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Exact => "exact",
            Protocol::Ni => "ni",
            Protocol::KsPlda => "ks-plda",
            Protocol::KsPar => "ks-par",
        }
    }

    /// Functional used by the Kohn-Sham protocols.
    pub fn xc(self) -> Option<XcChoice> {
        match self {
            Protocol::KsPlda => Some(XcChoice::Plda),
            Protocol::KsPar => Some(XcChoice::Par),
            _ => None,
        }
    }
}

/// Optional refinements of the approximate protocols.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// First-order correction of the initial and final energies.
    pub fop: bool,
    /// Time-dependent functionals solved self-consistently.
    pub tpf: bool,
}

impl Flags {
    pub const NONE: Flags = Flags {
        fop: false,
        tpf: false,
    };

    pub fn validate(&self, protocol: Protocol) -> Result<()> {
        if protocol == Protocol::Exact && (self.fop || self.tpf) {
            return Err(Error::InvalidInput(
                "the exact protocol takes no fop/tpf flags".into(),
            ));
        }
        if self.tpf && protocol.xc().is_none() {
            return Err(Error::InvalidInput(format!(
                "tpf requires a Kohn-Sham protocol (ks-plda|ks-par), got {}",
                protocol.as_str()
            )));
        }
        Ok(())
    }
}

/// Auxiliary quantities recorded by [`run_single`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Density the static functionals were evaluated at.
    pub static_density: Option<SiteOccupations>,
    /// Frozen physical Hartree-exchange-correlation potential of the zero-order protocols.
    pub vhxc: Option<[f64; 2]>,
    pub scf_iterations: Option<usize>,
    pub tpf_iterations: Option<usize>,
    pub tpf_residuals: Vec<f64>,
    pub tpf_mixing_engaged: bool,
    /// `Tr[rho(tau) H(tau)] - Tr[rho_0 H(0)]` in the Hamiltonian that generated the dynamics.
    pub energy_change: f64,
    pub unitarity_defect: f64,
}

/// Full result of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub flags: Flags,
    pub u: f64,
    pub tau: f64,
    pub work_distribution: WorkDistribution,
    pub mean_work: f64,
    pub extracted_work: f64,
    /// Free-energy difference entering the entropy production (corrected energies under FOP).
    pub delta_f: f64,
    /// Free-energy difference from the uncorrected spectra.
    pub delta_f_zero: f64,
    pub delta_f_fop: Option<f64>,
    pub entropy_production: f64,
    pub jarzynski_residual: f64,
    /// `transitions[m][n] = p_{m|n}`.
    pub transitions: [[f64; 4]; 4],
    pub initial_energies: [f64; 4],
    pub final_energies: [f64; 4],
    pub occupations: DensityTrajectory,
    pub diagnostics: Diagnostics,
}

/// Measured outcome of a propagation in a given Hamiltonian world.
struct Evolution {
    spec0: Spectrum,
    spec_tau: Spectrum,
    h0: HermitianMatrix4,
    h_tau: HermitianMatrix4,
    propagator: UnitaryMatrix4,
    occupations: DensityTrajectory,
    energy_change: f64,
}

fn propagate<T: HamiltonianTrajectory>(
    traj: &T,
    cfg: &DimerConfig,
    grid: &TimeGrid,
) -> Result<Evolution> {
    let h0 = traj.initial()?;
    let h_tau = traj.final_hamiltonian()?;
    let spec0 = eig_hermitian(&h0, cfg.tolerances.group)?;
    let spec_tau = eig_hermitian(&h_tau, cfg.tolerances.group)?;
    let (_, rho0) = thermal_state(&spec0, cfg.beta)?;
    let (rho_tau, occupations, propagator) = evolve_density_matrix(traj, &rho0, grid)?;
    let energy_change = expectation(&rho_tau, &h_tau)? - expectation(&rho0, &h0)?;
    Ok(Evolution {
        spec0,
        spec_tau,
        h0,
        h_tau,
        propagator,
        occupations,
        energy_change,
    })
}

/// Static density feeding the zero-order functionals.
fn static_density(cfg: &DimerConfig, xc: XcChoice) -> Result<(SiteOccupations, Option<usize>)> {
    let (d1, d2) = ramp_delta(0.0, cfg)?;
    match cfg.density_source {
        DensitySource::Exact => Ok((
            exact_ground_state_density([d1, d2], cfg.u, cfg.j, cfg.delta_convention)?,
            None,
        )),
        DensitySource::Scf => {
            let t = &cfg.tolerances;
            let gs = ks_scf(
                [d1, d2],
                cfg.u,
                cfg.j,
                xc,
                cfg.delta_convention,
                SiteOccupations::HALF_FILLED,
                t.scf,
                t.scf_max_iter,
                t.scf_mixing,
            )?;
            Ok((gs.density, Some(gs.iterations)))
        }
    }
}

/// Runs one protocol at the configuration's `(U, tau)`.
///
/// Errors carry the cell coordinates.
pub fn run_single(cfg: &DimerConfig, protocol: Protocol, flags: Flags) -> Result<RunReport> {
    run_single_inner(cfg, protocol, flags).map_err(|e| match e {
        Error::Cell { .. } => e,
        e => e.at_cell(cfg.u / cfg.j, cfg.tau * cfg.j),
    })
}

fn run_single_inner(cfg: &DimerConfig, protocol: Protocol, flags: Flags) -> Result<RunReport> {
    cfg.validate()?;
    flags.validate(protocol)?;
    let grid = TimeGrid::for_config(cfg)?;
    let mut diag = Diagnostics::default();

    // perturbations H - H_0 at t = 0 and t = tau, for the first-order correction
    let (evo, delta_h) = match (protocol, flags.tpf) {
        (Protocol::Exact, _) => (propagate(&ExactTrajectory { cfg: *cfg }, cfg, &grid)?, None),
        (_, false) => {
            let (vh, vxc) = match protocol.xc() {
                None => ([0.0; 2], [0.0; 2]),
                Some(xc) => {
                    let (n, iters) = static_density(cfg, xc)?;
                    diag.static_density = Some(n);
                    diag.scf_iterations = iters;
                    (
                        hartree_potential(&n, cfg.u),
                        xc.potential(&n, cfg.u, cfg.j)?,
                    )
                }
            };
            let vhxc = [vh[0] + vxc[0], vh[1] + vxc[1]];
            diag.vhxc = Some(vhxc);
            let evo = propagate(&ZeroOrderTrajectory { cfg: *cfg, vhxc }, cfg, &grid)?;
            let dh = build_delta_h(cfg.u, vh, vxc);
            (evo, Some((dh, dh)))
        }
        (_, true) => {
            let xc = protocol.xc().expect("validated: tpf needs a functional");
            let seed = exact_thermal_seed(cfg, grid)?;
            let sol = tpf_solve(cfg, xc, seed)?;
            diag.static_density = Some(sol.initial_occupation);
            diag.tpf_iterations = Some(sol.iterations);
            diag.tpf_residuals = sol.residuals.clone();
            diag.tpf_mixing_engaged = sol.mixing_engaged;
            let perturbation = |n: &SiteOccupations| -> Result<HermitianMatrix4> {
                Ok(build_delta_h(
                    cfg.u,
                    hartree_potential(n, cfg.u),
                    xc.potential(n, cfg.u, cfg.j)?,
                ))
            };
            let dh0 = perturbation(&sol.initial_occupation)?;
            let dh_tau = perturbation(&sol.trajectory.density.last())?;
            let h0 = sol.initial_hamiltonian;
            let h_tau = sol.trajectory.final_hamiltonian()?;
            let spec0 = eig_hermitian(&h0, cfg.tolerances.group)?;
            let spec_tau = eig_hermitian(&h_tau, cfg.tolerances.group)?;
            let rho_tau = sol.initial_state.evolve(&sol.propagator);
            let energy_change =
                expectation(&rho_tau, &h_tau)? - expectation(&sol.initial_state, &h0)?;
            let evo = Evolution {
                spec0,
                spec_tau,
                h0,
                h_tau,
                propagator: sol.propagator,
                occupations: sol.density,
                energy_change,
            };
            (evo, Some((dh0, dh_tau)))
        }
    };
    diag.energy_change = evo.energy_change;
    diag.unitarity_defect = evo.propagator.unitarity_defect();
    debug_assert!(evo.h0.is_finite() && evo.h_tau.is_finite());

    let beta = cfg.beta;
    let ens0_zero = thermal_ensemble(&evo.spec0.eigenvalues, beta)?;
    let ens_tau_zero = thermal_ensemble(&evo.spec_tau.eigenvalues, beta)?;
    let delta_f_zero = free_energy_difference_ln(ens0_zero.ln_z, ens_tau_zero.ln_z, beta);

    let (ens0, transitions, final_energies, ln_z_tau, delta_f_fop) = match (flags.fop, &delta_h) {
        (true, Some((dh0, dh_tau))) => {
            let c0 = fop_correct(&evo.spec0, dh0)?;
            let c_tau = fop_correct(&evo.spec_tau, dh_tau)?;
            let ens0 = thermal_ensemble(&c0.energies, beta)?;
            let ens_tau = thermal_ensemble(&c_tau.energies, beta)?;
            let t = transition_matrix(&evo.propagator, &c0.basis_matrix(), &c_tau.basis_matrix())?;
            let df = free_energy_difference_ln(ens0.ln_z, ens_tau.ln_z, beta);
            (ens0, t, c_tau.energies, ens_tau.ln_z, Some(df))
        }
        _ => {
            let t = transition_matrix(&evo.propagator, &evo.spec0.basis(), &evo.spec_tau.basis())?;
            (
                ens0_zero,
                t,
                evo.spec_tau.eigenvalues,
                ens_tau_zero.ln_z,
                None,
            )
        }
    };

    let mut wd = work_distribution(
        &ens0,
        &transitions,
        &final_energies,
        cfg.tolerances.work_merge,
    )?;
    wd.label = run_label(protocol, flags);
    let mean_work = wd.mean();
    let delta_f = delta_f_fop.unwrap_or(delta_f_zero);
    Ok(RunReport {
        protocol,
        flags,
        u: cfg.u,
        tau: cfg.tau,
        mean_work,
        extracted_work: -mean_work,
        delta_f,
        delta_f_zero,
        delta_f_fop,
        entropy_production: entropy_production(mean_work, delta_f, beta),
        jarzynski_residual: jarzynski_check_ln(&wd, ens0.ln_z, ln_z_tau, beta),
        work_distribution: wd,
        transitions,
        initial_energies: ens0.energies,
        final_energies,
        occupations: evo.occupations,
        diagnostics: diag,
    })
}

/// Human-readable protocol tag such as `ks-plda+tpf+fop`.
pub fn run_label(protocol: Protocol, flags: Flags) -> String {
    let mut s = protocol.as_str().to_string();
    if flags.tpf {
        s.push_str("+tpf");
    }
    if flags.fop {
        s.push_str("+fop");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_protocols() {
        for p in Protocol::ALL {
            assert_eq!(Protocol::parse(p.as_str()).unwrap(), p);
        }
        assert!(Protocol::parse("dft").is_err());
    }

    #[test]
    fn flag_validation() {
        let tpf = Flags {
            fop: false,
            tpf: true,
        };
        assert!(tpf.validate(Protocol::Ni).is_err());
        assert!(tpf.validate(Protocol::KsPar).is_ok());
        assert!(Flags {
            fop: true,
            tpf: false
        }
        .validate(Protocol::Exact)
        .is_err());
        assert!(Flags {
            fop: true,
            tpf: true
        }
        .validate(Protocol::KsPlda)
        .is_ok());
    }

    #[test]
    fn labels() {
        assert_eq!(
            run_label(
                Protocol::KsPlda,
                Flags {
                    fop: true,
                    tpf: true
                }
            ),
            "ks-plda+tpf+fop"
        );
        assert_eq!(run_label(Protocol::Exact, Flags::NONE), "exact");
    }

    #[test]
    fn errors_carry_cell_coordinates() {
        let mut cfg = DimerConfig::with_u_tau(2.0, 1.0);
        cfg.beta = -1.0;
        match run_single(&cfg, Protocol::Exact, Flags::NONE) {
            Err(Error::Cell {
                u_over_j, tau_j, ..
            }) => assert_eq!((u_over_j, tau_j), (2.0, 1.0)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
