//! Time-ordered propagation and the time-dependent functional self-consistency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{ks_potential, XcChoice};
use crate::model::{
    build_exact_h, build_ks_h, final_delta, ramp_delta, site_occupations, DimerConfig,
    SiteOccupations,
};
use crate::numerics::{
    eig_hermitian, propagator_step, DensityMatrix4, HermitianMatrix4, UnitaryMatrix4,
    DEFAULT_GROUP_TOL,
};
use crate::thermo::thermal_state;

/// Largest tolerated `|Tr rho - 1|` after propagation.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;
/// Largest tolerated unitarity defect of a full propagator.
pub const PROPAGATOR_UNITARITY_TOL: f64 = 1e-9;

/// Uniform grid of `n_steps + 1` points on `[0, tau]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub tau: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(tau: f64, n_steps: usize) -> Result<Self> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(Error::InvalidInput(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidInput("n_steps must be >= 1".into()));
        }
        Ok(Self { tau, n_steps })
    }

    /// The grid used for a configuration; a sudden quench needs a single step.
    pub fn for_config(cfg: &DimerConfig) -> Result<Self> {
        Self::new(cfg.tau, if cfg.tau == 0.0 { 1 } else { cfg.steps() })
    }

    pub fn dt(&self) -> f64 {
        self.tau / self.n_steps as f64
    }

    pub fn points(&self) -> usize {
        self.n_steps + 1
    }

    /// Time of grid point `k`; the last point is exactly `tau`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.tau
        } else {
            self.tau * k as f64 / self.n_steps as f64
        }
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        self.tau * (k as f64 + 0.5) / self.n_steps as f64
    }
}

/// Source of the Hamiltonian along a protocol.
pub trait HamiltonianTrajectory: Sync {
    /// Hamiltonian at time `t` in `[0, tau]`.
    fn at(&self, t: f64) -> Result<HermitianMatrix4>;

    /// Hamiltonian used for step `k` (from `t_k` to `t_{k+1}`); midpoint sampling by default.
    fn step(&self, grid: &TimeGrid, k: usize) -> Result<HermitianMatrix4> {
        self.at(grid.midpoint(k))
    }

    fn initial(&self) -> Result<HermitianMatrix4> {
        self.at(0.0)
    }

    /// Hamiltonian at the end of the protocol. Differs from `initial` even for `tau = 0`.
    fn final_hamiltonian(&self) -> Result<HermitianMatrix4>;
}

/// Time-independent Hamiltonian.
#[derive(Clone, Debug)]
pub struct ConstantHamiltonian(pub HermitianMatrix4);

impl HamiltonianTrajectory for ConstantHamiltonian {
    fn at(&self, _t: f64) -> Result<HermitianMatrix4> {
        Ok(self.0)
    }

    fn final_hamiltonian(&self) -> Result<HermitianMatrix4> {
        Ok(self.0)
    }
}

/// The interacting dimer under the linear ramp.
#[derive(Clone, Debug)]
pub struct ExactTrajectory {
    pub cfg: DimerConfig,
}

impl HamiltonianTrajectory for ExactTrajectory {
    fn at(&self, t: f64) -> Result<HermitianMatrix4> {
        self.cfg.exact_h_at(t)
    }

    fn final_hamiltonian(&self) -> Result<HermitianMatrix4> {
        Ok(self.cfg.exact_h_final())
    }
}

/// Non-interacting dimer with a frozen Hartree-exchange-correlation shift.
///
/// With `vhxc = [0, 0]` this is the bare non-interacting Hamiltonian.
#[derive(Clone, Debug)]
pub struct ZeroOrderTrajectory {
    pub cfg: DimerConfig,
    /// Physical potential added to each site.
    pub vhxc: [f64; 2],
}

impl ZeroOrderTrajectory {
    fn build(&self, d: (f64, f64)) -> HermitianMatrix4 {
        let w = self.cfg.delta_convention.weight();
        build_ks_h(
            d.0 + self.vhxc[0] / w,
            d.1 + self.vhxc[1] / w,
            self.cfg.j,
            self.cfg.delta_convention,
        )
    }
}

impl HamiltonianTrajectory for ZeroOrderTrajectory {
    fn at(&self, t: f64) -> Result<HermitianMatrix4> {
        Ok(self.build(ramp_delta(t, &self.cfg)?))
    }

    fn final_hamiltonian(&self) -> Result<HermitianMatrix4> {
        Ok(self.build(final_delta(&self.cfg)))
    }
}

/// Site occupations on every point of a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityTrajectory {
    pub grid: TimeGrid,
    pub occupations: Vec<SiteOccupations>,
}

impl DensityTrajectory {
    pub fn new(grid: TimeGrid, occupations: Vec<SiteOccupations>) -> Result<Self> {
        if occupations.len() != grid.points() {
            return Err(Error::InvalidInput(format!(
                "density trajectory has {} points, grid has {}",
                occupations.len(),
                grid.points()
            )));
        }
        Ok(Self { grid, occupations })
    }

    pub fn constant(grid: TimeGrid, n: SiteOccupations) -> Self {
        Self {
            grid,
            occupations: vec![n; grid.points()],
        }
    }

    pub fn len(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn first(&self) -> SiteOccupations {
        self.occupations[0]
    }

    pub fn last(&self) -> SiteOccupations {
        self.occupations[self.occupations.len() - 1]
    }

    /// Per-site mean absolute difference, `sum_k |n_i(t_k) - m_i(t_k)| / N`, as `[site1, site2]`.
    pub fn mean_abs_difference(&self, other: &DensityTrajectory) -> [f64; 2] {
        let n = self.len() as f64;
        let mut s = [0.0, 0.0];
        for (a, b) in self.occupations.iter().zip(&other.occupations) {
            s[0] += (a.n1 - b.n1).abs();
            s[1] += (a.n2 - b.n2).abs();
        }
        [s[0] / n, s[1] / n]
    }

    /// Linear mix `(1 - alpha) self + alpha other`.
    pub fn mixed(&self, other: &DensityTrajectory, alpha: f64) -> Self {
        let occupations = self
            .occupations
            .iter()
            .zip(&other.occupations)
            .map(|(a, b)| SiteOccupations::from_n1((1.0 - alpha) * a.n1 + alpha * b.n1))
            .collect();
        Self {
            grid: self.grid,
            occupations,
        }
    }
}

fn checked_step(h: &HermitianMatrix4, dt: f64) -> Result<UnitaryMatrix4> {
    if !h.is_finite() {
        return Err(Error::Propagation("non-finite Hamiltonian entry".into()));
    }
    propagator_step(h, dt)
}

fn check_unitary(u: &UnitaryMatrix4) -> Result<()> {
    let d = u.unitarity_defect();
    if d > PROPAGATOR_UNITARITY_TOL {
        return Err(Error::Propagation(format!(
            "propagator lost unitarity (defect {d:.3e})"
        )));
    }
    Ok(())
}

/// Time-ordered propagator `U(tau, 0)` with midpoint-sampled exponential steps.
pub fn evolve<T: HamiltonianTrajectory + ?Sized>(
    traj: &T,
    grid: &TimeGrid,
) -> Result<UnitaryMatrix4> {
    if grid.tau == 0.0 {
        return Ok(UnitaryMatrix4::identity());
    }
    let dt = grid.dt();
    let mut u = UnitaryMatrix4::identity();
    for k in 0..grid.n_steps {
        u = u.then(&checked_step(&traj.step(grid, k)?, dt)?);
    }
    check_unitary(&u)?;
    Ok(u)
}

/// Propagates `rho0`, recording site occupations at every grid point.
///
/// Returns the final state, the occupation trajectory and the full propagator.
pub fn evolve_density_matrix<T: HamiltonianTrajectory + ?Sized>(
    traj: &T,
    rho0: &DensityMatrix4,
    grid: &TimeGrid,
) -> Result<(DensityMatrix4, DensityTrajectory, UnitaryMatrix4)> {
    let mut occupations = Vec::with_capacity(grid.points());
    let n0 = site_occupations(rho0)?;
    occupations.push(n0);
    let dt = grid.dt();
    let mut u = UnitaryMatrix4::identity();
    for k in 0..grid.n_steps {
        if dt > 0.0 {
            u = u.then(&checked_step(&traj.step(grid, k)?, dt)?);
            occupations.push(site_occupations(&rho0.evolve(&u))?);
        } else {
            occupations.push(n0);
        }
    }
    check_unitary(&u)?;
    let rho = rho0.evolve(&u);
    let drift = (rho.trace().re - 1.0).abs();
    if drift > TRACE_DRIFT_TOL {
        return Err(Error::Propagation(format!("trace drifted by {drift:.3e}")));
    }
    Ok((rho, DensityTrajectory::new(*grid, occupations)?, u))
}

/// Kohn-Sham Hamiltonian driven by a prescribed occupation trajectory.
///
/// Step `k` uses the ramp at the midpoint and the mean of the occupations at
/// both ends of the step; the endpoints use the occupations at `t = 0` and `t = tau`.
#[derive(Clone, Debug)]
pub struct TpfTrajectory {
    pub cfg: DimerConfig,
    pub xc: XcChoice,
    pub density: DensityTrajectory,
}

impl TpfTrajectory {
    fn build(&self, d: (f64, f64), n: &SiteOccupations) -> Result<HermitianMatrix4> {
        let c = &self.cfg;
        let pot = ks_potential([d.0, d.1], n, c.u, c.j, self.xc, c.delta_convention)?;
        Ok(pot.hamiltonian(c.j, c.delta_convention))
    }

    /// Occupations at `t` by linear interpolation on the grid.
    fn density_at(&self, t: f64) -> SiteOccupations {
        let g = &self.density.grid;
        if g.tau == 0.0 || t <= 0.0 {
            return self.density.first();
        }
        let x = (t / g.tau * g.n_steps as f64).min(g.n_steps as f64);
        let k = (x.floor() as usize).min(g.n_steps - 1);
        let f = x - k as f64;
        let (a, b) = (self.density.occupations[k], self.density.occupations[k + 1]);
        SiteOccupations::from_n1((1.0 - f) * a.n1 + f * b.n1)
    }
}

impl HamiltonianTrajectory for TpfTrajectory {
    fn at(&self, t: f64) -> Result<HermitianMatrix4> {
        self.build(ramp_delta(t, &self.cfg)?, &self.density_at(t))
    }

    fn step(&self, grid: &TimeGrid, k: usize) -> Result<HermitianMatrix4> {
        if *grid != self.density.grid {
            return self.at(grid.midpoint(k));
        }
        let (a, b) = (self.density.occupations[k], self.density.occupations[k + 1]);
        let n = SiteOccupations::from_n1(0.5 * (a.n1 + b.n1));
        self.build(ramp_delta(grid.midpoint(k), &self.cfg)?, &n)
    }

    fn initial(&self) -> Result<HermitianMatrix4> {
        self.build(ramp_delta(0.0, &self.cfg)?, &self.density.first())
    }

    fn final_hamiltonian(&self) -> Result<HermitianMatrix4> {
        self.build(final_delta(&self.cfg), &self.density.last())
    }
}

/// Converged time-dependent functional solution.
#[derive(Clone, Debug)]
pub struct TpfSolution {
    /// Hamiltonian built from the last input trajectory.
    pub trajectory: TpfTrajectory,
    pub propagator: UnitaryMatrix4,
    /// Occupations produced by propagating under `trajectory`.
    pub density: DensityTrajectory,
    pub initial_state: DensityMatrix4,
    /// Kohn-Sham Hamiltonian whose thermal state is `initial_state`.
    pub initial_hamiltonian: HermitianMatrix4,
    /// Occupation that `initial_hamiltonian` was built from.
    pub initial_occupation: SiteOccupations,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Whether density mixing had to be switched on.
    pub mixing_engaged: bool,
    /// Index into `residuals` of the first residual computed from a mixed trajectory.
    pub mixing_start: Option<usize>,
}

/// Number of iterations without a new smallest residual that counts as stalled.
const TPF_STALL_WINDOW: usize = 10;

/// Self-consistent time-dependent Kohn-Sham cycle.
///
/// Starting from `seed`, each iteration builds the Kohn-Sham Hamiltonian from
/// the previous occupation trajectory, propagates the thermal state of its
/// zero-time Hamiltonian and records the new occupations. The cycle stops once
/// the mean absolute change per site is below `cfg.tolerances.tpf`. If the
/// smallest residual so far is not improved for ten iterations, linear mixing with
/// `cfg.tolerances.tpf_rescue_mixing` is switched on; every further stall of
/// ten iterations multiplies the mixing weight by the same factor.
///
/// The zero-time Hamiltonian is evaluated at the occupation that reproduces
/// itself in the thermal state ([`thermal_ks_density`]), so the initial state
/// is consistent with the potential it is built from. Iterating that static
/// map by plain substitution diverges for steep correlation potentials. With
/// `cfg.tpf_fixed_initial_state` the thermal state of the Hamiltonian built at
/// the seed's first occupation is used unchanged in every iteration.
pub fn tpf_solve(cfg: &DimerConfig, xc: XcChoice, seed: DensityTrajectory) -> Result<TpfSolution> {
    cfg.validate()?;
    let tol = cfg.tolerances.tpf;
    let max_iter = cfg.tolerances.tpf_max_iter;
    let grid = seed.grid;
    let mut current = seed;
    let mut residuals: Vec<f64> = Vec::new();
    let mut alpha = 1.0;
    let mut stalled = 0usize;
    let mut best = f64::INFINITY;
    let mut mixing_start = None;
    let n0 = if cfg.tpf_fixed_initial_state || cfg.u == 0.0 {
        current.first()
    } else {
        thermal_ks_density(cfg, xc)?
    };
    let h0 = TpfTrajectory {
        cfg: *cfg,
        xc,
        density: DensityTrajectory::constant(grid, n0),
    }
    .initial()?;
    let (_, rho_initial) = thermal_state(&eig_hermitian(&h0, cfg.tolerances.group)?, cfg.beta)?;

    for it in 1..=max_iter {
        let traj = TpfTrajectory {
            cfg: *cfg,
            xc,
            density: current.clone(),
        };
        let rho0 = rho_initial;
        let (_, next, propagator) = evolve_density_matrix(&traj, &rho0, &grid)?;
        let diff = current.mean_abs_difference(&next);
        let residual = diff[0].max(diff[1]);
        // without interaction the Hamiltonian does not depend on the density
        if residual <= tol || cfg.u == 0.0 {
            residuals.push(residual);
            return Ok(TpfSolution {
                trajectory: traj,
                propagator,
                density: next,
                initial_state: rho0,
                initial_hamiltonian: h0,
                initial_occupation: n0,
                iterations: it,
                residuals,
                mixing_engaged: alpha < 1.0,
                mixing_start,
            });
        }
        if residual >= best {
            stalled += 1;
        } else {
            best = residual;
            stalled = 0;
        }
        residuals.push(residual);
        if stalled >= TPF_STALL_WINDOW {
            // first stall switches mixing on, later stalls damp it further
            alpha *= cfg.tolerances.tpf_rescue_mixing;
            stalled = 0;
            mixing_start.get_or_insert(residuals.len());
        }
        current = if alpha < 1.0 {
            current.mixed(&next, alpha)
        } else {
            next
        };
    }
    Err(Error::Convergence {
        what: "time-dependent functional cycle",
        iterations: max_iter,
        last_residual: residuals.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}

/// Site-1 occupation `n` that the thermal state of the zero-time Kohn-Sham
/// Hamiltonian built at `n` reproduces.
///
/// The thermal occupation decreases monotonically with the input occupation,
/// so the residual has a single sign change on `[0, 2]` and bisection finds it.
pub fn thermal_ks_density(cfg: &DimerConfig, xc: XcChoice) -> Result<SiteOccupations> {
    let (d1, d2) = ramp_delta(0.0, cfg)?;
    let residual = |n1: f64| -> Result<f64> {
        let n = SiteOccupations::from_n1(n1);
        let pot = ks_potential([d1, d2], &n, cfg.u, cfg.j, xc, cfg.delta_convention)?;
        let spec = eig_hermitian(
            &pot.hamiltonian(cfg.j, cfg.delta_convention),
            cfg.tolerances.group,
        )?;
        let (_, rho) = thermal_state(&spec, cfg.beta)?;
        Ok(site_occupations(&rho)?.n1 - n1)
    };
    let (mut lo, mut hi) = (0.0, 2.0);
    let (r_lo, r_hi) = (residual(lo)?, residual(hi)?);
    if r_lo == 0.0 {
        return Ok(SiteOccupations::from_n1(lo));
    }
    if r_hi == 0.0 {
        return Ok(SiteOccupations::from_n1(hi));
    }
    if r_lo.signum() == r_hi.signum() {
        return Err(Error::NumericalConsistency(
            "thermal Kohn-Sham occupation is not bracketed on [0, 2]".into(),
        ));
    }
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid)?;
        if r == 0.0 {
            return Ok(SiteOccupations::from_n1(mid));
        }
        if r.signum() == r_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SiteOccupations::from_n1(0.5 * (lo + hi)))
}

/// Seed for [`tpf_solve`]: the exact thermal occupations at `t = 0`, held constant.
pub fn exact_thermal_seed(cfg: &DimerConfig, grid: TimeGrid) -> Result<DensityTrajectory> {
    let (d1, d2) = ramp_delta(0.0, cfg)?;
    let h0 = build_exact_h(cfg.u, d1, d2, cfg.j, cfg.delta_convention);
    let spec = eig_hermitian(&h0, DEFAULT_GROUP_TOL)?;
    let (_, rho) = thermal_state(&spec, cfg.beta)?;
    Ok(DensityTrajectory::constant(grid, site_occupations(&rho)?))
}
