//! Hubbard dimer at half filling in the basis
//! `{|ud,0>, |u,d>, |d,u>, |0,ud>}` and the linear driving protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expectation, DensityMatrix4, HermitianMatrix4};

/// Tolerance on `n1 + n2 = 2`.
pub const PARTICLE_NUMBER_TOL: f64 = 1e-9;

/// How an on-site amplitude `Delta_i` couples to the site occupation operator.
///
/// `Eq5` reproduces the printed dimer matrix, whose doubly occupied states carry
/// `U + Delta_i`: the potential operator is `(1/2) sum_i Delta_i n_i`.
/// `Eq1` couples `Delta_i n_i` directly, giving `U + 2 Delta_i` on those states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaConvention {
    #[default]
    Eq5,
    Eq1,
}

impl DeltaConvention {
    /// Coefficient multiplying `sum_i Delta_i n_i` in the Hamiltonian.
    pub fn weight(self) -> f64 {
        match self {
            DeltaConvention::Eq5 => 0.5,
            DeltaConvention::Eq1 => 1.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eq5" => Ok(Self::Eq5),
            "eq1" => Ok(Self::Eq1),
            other => Err(Error::Config(format!(
                "unknown delta convention `{other}` (eq5|eq1)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeltaConvention::Eq5 => "eq5",
            DeltaConvention::Eq1 => "eq1",
        }
    }
}

/// Which ground-state density feeds the static (zero-order) functionals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySource {
    /// Self-consistent Kohn-Sham ground-state density.
    #[default]
    Scf,
    /// Exact interacting ground-state density.
    Exact,
}

impl DensitySource {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scf" => Ok(Self::Scf),
            "exact" => Ok(Self::Exact),
            other => Err(Error::Config(format!(
                "unknown density source `{other}` (scf|exact)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DensitySource::Scf => "scf",
            DensitySource::Exact => "exact",
        }
    }
}

/// Numerical tolerances and iteration limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub group: f64,
    pub work_merge: f64,
    pub scf: f64,
    pub scf_max_iter: usize,
    pub scf_mixing: f64,
    pub tpf: f64,
    pub tpf_max_iter: usize,
    pub tpf_rescue_mixing: f64,
    pub relative_error_guard: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            group: 1e-9,
            work_merge: 1e-9,
            scf: 1e-10,
            scf_max_iter: 10_000,
            scf_mixing: 0.5,
            tpf: 1e-6,
            tpf_max_iter: 200,
            tpf_rescue_mixing: 0.7,
            relative_error_guard: 1e-6,
        }
    }
}

/// Physical and numerical parameters of a single driven run.
///
/// Energies are in units of the hopping `j`, times in units of `1/j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimerConfig {
    pub j: f64,
    pub u: f64,
    pub delta0: f64,
    pub delta_tau: f64,
    pub tau: f64,
    pub beta: f64,
    /// Explicit time-grid size; `None` selects `max(2000, ceil(200 tau J))`.
    pub n_steps: Option<usize>,
    pub delta_convention: DeltaConvention,
    pub density_source: DensitySource,
    /// Keep the TPF initial thermal state from the first iteration instead of
    /// rebuilding it from each iteration's zero-time Hamiltonian.
    pub tpf_fixed_initial_state: bool,
    pub tolerances: Tolerances,
}

impl Default for DimerConfig {
    fn default() -> Self {
        Self {
            j: 1.0,
            u: 0.0,
            delta0: 0.5,
            delta_tau: 5.0,
            tau: 1.0,
            beta: 0.4,
            n_steps: None,
            delta_convention: DeltaConvention::Eq5,
            density_source: DensitySource::Scf,
            tpf_fixed_initial_state: false,
            tolerances: Tolerances::default(),
        }
    }
}

impl DimerConfig {
    pub fn with_u_tau(u: f64, tau: f64) -> Self {
        Self {
            u,
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.j,
            self.u,
            self.delta0,
            self.delta_tau,
            self.tau,
            self.beta,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput(
                "configuration contains non-finite values".into(),
            ));
        }
        if self.j <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "J must be > 0, got {}",
                self.j
            )));
        }
        if self.u < 0.0 {
            return Err(Error::InvalidInput(format!(
                "U must be >= 0, got {}",
                self.u
            )));
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidInput(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if self.n_steps == Some(0) {
            return Err(Error::InvalidInput("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of propagation steps on `[0, tau]`.
    pub fn steps(&self) -> usize {
        self.n_steps
            .unwrap_or_else(|| 2000usize.max((200.0 * self.tau * self.j).ceil() as usize))
    }

    /// Exact Hamiltonian at time `t` of the ramp.
    pub fn exact_h_at(&self, t: f64) -> Result<HermitianMatrix4> {
        let (d1, d2) = ramp_delta(t, self)?;
        Ok(build_exact_h(self.u, d1, d2, self.j, self.delta_convention))
    }

    /// Exact Hamiltonian at the end of the protocol (also for `tau = 0`).
    pub fn exact_h_final(&self) -> HermitianMatrix4 {
        let (d1, d2) = final_delta(self);
        build_exact_h(self.u, d1, d2, self.j, self.delta_convention)
    }
}

/// Site occupations `(n1, n2)` of the two-electron dimer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteOccupations {
    pub n1: f64,
    pub n2: f64,
}

impl SiteOccupations {
    pub const HALF_FILLED: SiteOccupations = SiteOccupations { n1: 1.0, n2: 1.0 };

    pub fn new(n1: f64, n2: f64) -> Result<Self> {
        let n = Self { n1, n2 };
        if !(n1.is_finite() && n2.is_finite()) {
            return Err(Error::NumericalConsistency(
                "non-finite site occupation".into(),
            ));
        }
        if (n1 + n2 - 2.0).abs() > PARTICLE_NUMBER_TOL {
            return Err(Error::NumericalConsistency(format!(
                "particle number n1 + n2 = {} differs from 2",
                n1 + n2
            )));
        }
        Ok(n)
    }

    /// Occupations with `n2 = 2 - n1`.
    pub fn from_n1(n1: f64) -> Self {
        Self { n1, n2: 2.0 - n1 }
    }

    /// `|n1 - n2| / 2`.
    pub fn delta(&self) -> f64 {
        (self.n1 - self.n2).abs() / 2.0
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.n1, self.n2]
    }

    pub fn swapped(&self) -> Self {
        Self {
            n1: self.n2,
            n2: self.n1,
        }
    }
}

/// `n_1 = diag(2, 1, 1, 0)`.
pub fn number_op_site1() -> HermitianMatrix4 {
    HermitianMatrix4::diagonal([2.0, 1.0, 1.0, 0.0])
}

/// `n_2 = diag(0, 1, 1, 2)`.
pub fn number_op_site2() -> HermitianMatrix4 {
    HermitianMatrix4::diagonal([0.0, 1.0, 1.0, 2.0])
}

/// `sum_i n_{i,up} n_{i,down} = diag(1, 0, 0, 1)`.
pub fn doublon_op() -> HermitianMatrix4 {
    HermitianMatrix4::diagonal([1.0, 0.0, 0.0, 1.0])
}

/// Kinetic (hopping) part of the dimer matrix.
pub fn hopping_op(j: f64) -> HermitianMatrix4 {
    HermitianMatrix4::from_real([
        [0.0, -j, j, 0.0],
        [-j, 0.0, 0.0, -j],
        [j, 0.0, 0.0, j],
        [0.0, -j, j, 0.0],
    ])
    .expect("hopping matrix is symmetric")
}

/// `sum_i v_i n_i` for physical on-site potentials `v`.
pub fn site_potential_op(v1: f64, v2: f64) -> HermitianMatrix4 {
    HermitianMatrix4::diagonal([2.0 * v1, v1 + v2, v1 + v2, 2.0 * v2])
}

/// On-site amplitudes `(Delta_1, Delta_2)` at time `t` of the linear ramp.
pub fn ramp_delta(t: f64, cfg: &DimerConfig) -> Result<(f64, f64)> {
    let slack = 1e-12 * cfg.tau.max(1.0);
    if !t.is_finite() || t < -slack || t > cfg.tau + slack {
        return Err(Error::InvalidInput(format!(
            "time {t} lies outside the protocol window [0, {}]",
            cfg.tau
        )));
    }
    let d = if cfg.tau == 0.0 {
        cfg.delta0
    } else {
        let s = (t / cfg.tau).clamp(0.0, 1.0);
        cfg.delta0 - (cfg.delta0 - cfg.delta_tau) * s
    };
    Ok((d, -d))
}

/// End-point amplitudes `(Delta_tau, -Delta_tau)`; for `tau = 0` this is the post-quench value.
pub fn final_delta(cfg: &DimerConfig) -> (f64, f64) {
    (cfg.delta_tau, -cfg.delta_tau)
}

/// Interacting dimer Hamiltonian.
///
/// For antisymmetric driving (`delta2 = -delta1`) under [`DeltaConvention::Eq5`]
/// this is exactly
///
/// ```text
/// | U+D1  -J    J    0   |
/// | -J     0    0   -J   |
/// |  J     0    0    J   |
/// |  0    -J    J   U+D2 |
/// ```
pub fn build_exact_h(
    u: f64,
    delta1: f64,
    delta2: f64,
    j: f64,
    conv: DeltaConvention,
) -> HermitianMatrix4 {
    let w = conv.weight();
    hopping_op(j) + doublon_op() * u + site_potential_op(w * delta1, w * delta2)
}

/// Kohn-Sham (or bare non-interacting) Hamiltonian: the exact builder at `U = 0`.
pub fn build_ks_h(
    delta_ks1: f64,
    delta_ks2: f64,
    j: f64,
    conv: DeltaConvention,
) -> HermitianMatrix4 {
    build_exact_h(0.0, delta_ks1, delta_ks2, j, conv)
}

/// Perturbation `H - H_KS = -sum_i (V_H,i + V_xc,i) n_i + U sum_i n_iu n_id`.
///
/// `vh` and `vxc` are physical potentials (they multiply `n_i` directly).
pub fn build_delta_h(u: f64, vh: [f64; 2], vxc: [f64; 2]) -> HermitianMatrix4 {
    doublon_op() * u - site_potential_op(vh[0] + vxc[0], vh[1] + vxc[1])
}

/// `n_i = Tr[rho n_i]`, checked for particle-number conservation.
pub fn site_occupations(rho: &DensityMatrix4) -> Result<SiteOccupations> {
    let n1 = expectation(rho, &number_op_site1())?;
    let n2 = expectation(rho, &number_op_site2())?;
    SiteOccupations::new(n1, n2)
}
