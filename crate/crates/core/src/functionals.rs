//! Site-occupation functionals for the dimer and the static Kohn-Sham solve.
//!
//! All potentials returned here are physical: they multiply `n_i` directly in
//! the Hamiltonian. The driving amplitudes `Delta_i` are converted through the
//! configured [`DeltaConvention`] weight when a Kohn-Sham amplitude is formed.

use nalgebra::ComplexField;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_exact_h, build_ks_h, number_op_site1, DeltaConvention, SiteOccupations};
use crate::numerics::{
    eig_hermitian, expectation, DensityMatrix4, HermitianMatrix4, DEFAULT_GROUP_TOL,
};

/// Imaginary step (in `delta`) for the PAR correlation potential.
pub const PAR_COMPLEX_STEP: f64 = 1e-30;
/// Below this `delta` the PAR correlation potential is continued linearly to zero.
const PAR_LINEAR_BELOW: f64 = 1e-6;
const SQRT_DOMAIN_TOL: f64 = 1e-12;
/// Distance from `delta = 1` below which the PAR correlation energy is taken at its limit, zero.
const PAR_EDGE: f64 = 1e-12;

/// Exchange-correlation approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XcChoice {
    /// Hartree only.
    None,
    /// Pseudo-LDA, `E_xc = -2^(-4/3) U sum_i n_i^(4/3)`.
    Plda,
    /// Carrascal et al. parametrization of the exact dimer correlation energy.
    #[default]
    Par,
}

impl XcChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "plda" => Ok(Self::Plda),
            "par" => Ok(Self::Par),
            other => Err(Error::Config(format!(
                "unknown xc functional `{other}` (none|plda|par)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            XcChoice::None => "none",
            XcChoice::Plda => "plda",
            XcChoice::Par => "par",
        }
    }

    /// Exchange-correlation energy (units of J).
    pub fn energy(self, n: &SiteOccupations, u: f64, j: f64) -> Result<f64> {
        match self {
            XcChoice::None => Ok(0.0),
            XcChoice::Plda => Ok(plda_exc(n, u)),
            XcChoice::Par => par_ec(n, u, j),
        }
    }

    /// Exchange-correlation potential per site.
    pub fn potential(self, n: &SiteOccupations, u: f64, j: f64) -> Result<[f64; 2]> {
        match self {
            XcChoice::None => Ok([0.0, 0.0]),
            XcChoice::Plda => Ok(plda_vxc(n, u)),
            XcChoice::Par => par_vc(n, u, j),
        }
    }
}

/// Kohn-Sham amplitudes together with their Hartree and xc parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsPotential {
    /// Amplitudes in driving units, ready for [`build_ks_h`].
    pub delta_ks: [f64; 2],
    /// Physical Hartree potential.
    pub vh: [f64; 2],
    /// Physical exchange-correlation potential.
    pub vxc: [f64; 2],
    /// Driving-convention weight used to express `delta_ks`.
    pub weight: f64,
}

impl KsPotential {
    /// `Delta_KS,i = Delta_i + (V_H,i + V_xc,i) / w`.
    pub fn assemble(delta: [f64; 2], vh: [f64; 2], vxc: [f64; 2], conv: DeltaConvention) -> Self {
        let w = conv.weight();
        let delta_ks = std::array::from_fn(|i| delta[i] + (vh[i] + vxc[i]) / w);
        Self {
            delta_ks,
            vh,
            vxc,
            weight: w,
        }
    }

    /// Physical Hartree-exchange-correlation potential `V_H + V_xc`.
    pub fn vhxc(&self) -> [f64; 2] {
        [self.vh[0] + self.vxc[0], self.vh[1] + self.vxc[1]]
    }

    /// Recovers the bare driving amplitudes.
    pub fn bare_delta(&self) -> [f64; 2] {
        let v = self.vhxc();
        [
            self.delta_ks[0] - v[0] / self.weight,
            self.delta_ks[1] - v[1] / self.weight,
        ]
    }

    pub fn hamiltonian(&self, j: f64, conv: DeltaConvention) -> HermitianMatrix4 {
        build_ks_h(self.delta_ks[0], self.delta_ks[1], j, conv)
    }
}

/// `V_H,i = U n_i / 2`.
pub fn hartree_potential(n: &SiteOccupations, u: f64) -> [f64; 2] {
    [u * n.n1 / 2.0, u * n.n2 / 2.0]
}

const PLDA_PREFACTOR: f64 = 0.396_850_262_992_049_9; // 2^(-4/3)

pub fn plda_exc(n: &SiteOccupations, u: f64) -> f64 {
    -PLDA_PREFACTOR * u * (n.n1.max(0.0).powf(4.0 / 3.0) + n.n2.max(0.0).powf(4.0 / 3.0))
}

pub fn plda_vxc(n: &SiteOccupations, u: f64) -> [f64; 2] {
    let v = |x: f64| -(4.0 / 3.0) * PLDA_PREFACTOR * u * x.max(0.0).cbrt();
    [v(n.n1), v(n.n2)]
}

/// Intermediate quantities of the PAR correlation energy, all dimensionless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParInternals {
    pub u: f64,
    pub delta: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub a1: f64,
    pub a2: f64,
    pub g0: f64,
    pub dg0: f64,
    pub dh0: f64,
    pub g1: f64,
    pub h1: f64,
    pub f1: f64,
    pub t_s: f64,
    pub e_hx: f64,
    /// `1 - g1^2 - delta^2`.
    pub radicand: f64,
    /// Correlation energy per `2J`: `f1 - t_s - e_hx`.
    pub e_c: f64,
}

/// The refinement chain away from the `u = 0` and `delta = 1` limits,
/// generic so that it can also run at complex `delta` for the potential.
#[derive(Clone, Copy)]
struct ParChain<T> {
    a11: T,
    a12: T,
    a21: T,
    a22: T,
    a1: T,
    a2: T,
    g0: T,
    dg0: T,
    dh0: T,
    g1: T,
    h1: T,
    f1: T,
    t_s: T,
    e_hx: T,
    radicand: T,
    e_c: T,
}

fn par_chain<T: ComplexField<RealField = f64> + Copy>(delta: T, u: f64) -> ParChain<T> {
    let k = |x: f64| T::from_real(x);
    let one = k(1.0);
    let uu = k(u);
    let d2 = delta * delta;
    let t_s = -(one - d2).sqrt();
    let e_hx = uu * (one + d2) * k(0.5);

    let a21 = k(0.5) * ((one - delta) * delta * k(0.5)).sqrt();
    let a12 = (one - delta) * k(0.5);
    let a22 = a12 * k(0.5);
    // a11 = a21 (1 + 1/delta) diverges at delta = 0 but only ever appears as delta * a11
    let delta_a11 = a21 * (one + delta);
    let a11 = delta_a11 / delta;
    let delta_a1 = delta_a11 + uu * delta * a12;
    let a1 = a11 + uu * a12;
    let a2 = a21 + uu * a22;

    let c = (one + delta).powi(3);
    let den = one + c * uu * a2;
    let g0 = ((one - delta) * (one + delta + c * uu * delta_a1) / den).sqrt();
    // 1 - g0^2 - delta^2, simplified to a manifestly non-negative form
    let r0 = c * uu * uu * (one - delta).powi(3) / (k(4.0) * den);

    let dg0 = (one - delta)
        * c
        * uu
        * uu
        * (a12 * (k(1.5) * delta - one + delta * uu * c * a2) - a22 * (delta + c * uu * delta_a1))
        / (k(2.0) * g0 * den * den);

    let s0 = r0.sqrt();
    let g02 = g0 * g0;
    let dh0 = g0 * (g02 * g02 + k(3.0) * g02 * d2 + k(2.0) * d2 * (d2 - one - s0))
        / (k(2.0) * (g02 + d2).powi(2) * s0);

    let step = (uu * dh0 - one) * dg0;
    let g1 = g0 + step;
    let radicand = r0 - step * (k(2.0) * g0 + step);
    // rounding below zero is clamped in value only; any derivative part is kept
    let clamped = if radicand.real() < 0.0 {
        radicand - k(radicand.real())
    } else {
        radicand
    };
    let g12 = g1 * g1;
    let h1 = (g12 * (one - clamped.sqrt()) + k(2.0) * d2) / (k(2.0) * (g12 + d2));
    let f1 = -g1 + uu * h1;
    ParChain {
        a11,
        a12,
        a21,
        a22,
        a1,
        a2,
        g0,
        dg0,
        dh0,
        g1,
        h1,
        f1,
        t_s,
        e_hx,
        radicand,
        e_c: f1 - t_s - e_hx,
    }
}

/// Evaluates the PAR chain at `delta = |n1 - n2|/2`, `u = U/2J`, one refinement step (`g_1`).
pub fn par_internals(delta: f64, u: f64) -> Result<ParInternals> {
    if !(0.0..=1.0).contains(&delta) || !delta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "delta = {delta} outside [0, 1]"
        )));
    }
    if !u.is_finite() || u < 0.0 {
        return Err(Error::InvalidInput(format!(
            "u = {u} must be finite and >= 0"
        )));
    }
    if u == 0.0 || 1.0 - delta <= PAR_EDGE {
        // both limits are exact: no correlation
        let t_s = -(1.0 - delta * delta).sqrt();
        let e_hx = u * (1.0 + delta * delta) / 2.0;
        let a21 = 0.5 * ((1.0 - delta) * delta / 2.0).sqrt();
        let a12 = (1.0 - delta) / 2.0;
        let a22 = a12 / 2.0;
        let a11 = if delta > 0.0 {
            a21 * (1.0 + delta) / delta
        } else {
            f64::INFINITY
        };
        let g = -t_s;
        let h1 = if u == 0.0 {
            (g * g + 2.0 * delta * delta) / (2.0 * (g * g + delta * delta))
        } else {
            1.0
        };
        return Ok(ParInternals {
            u,
            delta,
            a11,
            a12,
            a21,
            a22,
            a1: a11 + u * a12,
            a2: a21 + u * a22,
            g0: g,
            dg0: 0.0,
            dh0: 0.0,
            g1: g,
            h1,
            f1: t_s + e_hx,
            t_s,
            e_hx,
            radicand: 0.0,
            e_c: 0.0,
        });
    }

    let c = par_chain(delta, u);
    if c.radicand < -SQRT_DOMAIN_TOL {
        return Err(Error::NumericalDomain(format!(
            "1 - g1^2 - delta^2 = {:.3e} < 0 at delta = {delta}, u = {u}",
            c.radicand
        )));
    }
    if !c.e_c.is_finite() {
        return Err(Error::NumericalDomain(format!(
            "non-finite correlation energy at delta = {delta}, u = {u}"
        )));
    }
    Ok(ParInternals {
        u,
        delta,
        a11: if delta > 0.0 { c.a11 } else { f64::INFINITY },
        a12: c.a12,
        a21: c.a21,
        a22: c.a22,
        a1: if delta > 0.0 { c.a1 } else { f64::INFINITY },
        a2: c.a2,
        g0: c.g0,
        dg0: c.dg0,
        dh0: c.dh0,
        g1: c.g1,
        h1: c.h1,
        f1: c.f1,
        t_s: c.t_s,
        e_hx: c.e_hx,
        radicand: c.radicand.max(0.0),
        e_c: c.e_c,
    })
}

fn par_ec_delta(delta: f64, u: f64, j: f64) -> Result<f64> {
    Ok(2.0 * j * par_internals(delta, u)?.e_c)
}

/// PAR correlation energy `E_c = 2J [f_1 - t_s - e_HX]`.
pub fn par_ec(n: &SiteOccupations, u: f64, j: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    par_ec_delta(n.delta(), u / (2.0 * j), j)
}

/// PAR correlation potential `V_c,i = dE_c/dn_i`.
///
/// The derivative in `delta` is taken by a complex step of size
/// [`PAR_COMPLEX_STEP`]: `Im E_c(delta + i h) / h`. Unlike a real difference
/// quotient this involves no subtraction, so the potential carries no
/// rounding noise that the Kohn-Sham loops would amplify.
pub fn par_vc(n: &SiteOccupations, u: f64, j: f64) -> Result<[f64; 2]> {
    if u == 0.0 {
        return Ok([0.0, 0.0]);
    }
    let uu = u / (2.0 * j);
    let delta = n.delta();
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!(
            "delta = {delta} outside [0, 1]"
        )));
    }
    let complex_step = |d: f64| -> Result<f64> {
        par_internals(d, uu)?;
        let h = PAR_COMPLEX_STEP;
        Ok(2.0 * j * par_chain(Complex::new(d, h), uu).e_c.im / h)
    };
    let slope = if 1.0 - delta <= PAR_EDGE {
        0.0
    } else if delta < PAR_LINEAR_BELOW {
        // intermediate sqrt(delta) terms spoil the step near zero; E_c is even
        // and smooth there, so the slope is linear in delta
        complex_step(PAR_LINEAR_BELOW)? * delta / PAR_LINEAR_BELOW
    } else {
        complex_step(delta)?
    };
    if !slope.is_finite() {
        return Err(Error::NumericalDomain(format!(
            "non-finite correlation potential at delta = {delta}, u = {uu}"
        )));
    }
    // d delta / d n1 = s/2, d delta / d n2 = -s/2; s = 0 on the symmetric point
    let s = if n.n1 > n.n2 {
        1.0
    } else if n.n1 < n.n2 {
        -1.0
    } else {
        0.0
    };
    Ok([s * slope / 2.0, -s * slope / 2.0])
}

/// Iterations without a new smallest update before the damped map is abandoned.
const SCF_STALL_WINDOW: usize = 20;

/// Converged static Kohn-Sham ground state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsGroundState {
    pub density: SiteOccupations,
    pub potential: KsPotential,
    pub iterations: usize,
}

/// Kohn-Sham potential for density `n` under bare amplitudes `delta`.
pub fn ks_potential(
    delta: [f64; 2],
    n: &SiteOccupations,
    u: f64,
    j: f64,
    xc: XcChoice,
    conv: DeltaConvention,
) -> Result<KsPotential> {
    let vh = hartree_potential(n, u);
    let vxc = xc.potential(n, u, j)?;
    Ok(KsPotential::assemble(delta, vh, vxc, conv))
}

/// Ground-state site occupations of an arbitrary dimer Hamiltonian.
pub fn ground_state_density(h: &HermitianMatrix4) -> Result<SiteOccupations> {
    let spec = eig_hermitian(h, DEFAULT_GROUP_TOL)?;
    let rho = DensityMatrix4::pure(&spec.eigenvectors[0])?;
    let n1 = expectation(&rho, &number_op_site1())?;
    SiteOccupations::new(n1, 2.0 - n1)
}

/// Exact interacting ground-state density at bare amplitudes `delta`.
pub fn exact_ground_state_density(
    delta: [f64; 2],
    u: f64,
    j: f64,
    conv: DeltaConvention,
) -> Result<SiteOccupations> {
    ground_state_density(&build_exact_h(u, delta[0], delta[1], j, conv))
}

/// Static Kohn-Sham self-consistency.
///
/// Runs the damped fixed-point map `n -> n_gs[Delta_KS[n]]` with mixing
/// `mixing` until the update is below `tol`. Strong Hartree-xc feedback can
/// make that map oscillate; in that case the one-dimensional residual
/// `n_gs(n1) - n1`, which is monotone, is solved by bracketing instead.
#[allow(clippy::too_many_arguments)]
pub fn ks_scf(
    delta: [f64; 2],
    u: f64,
    j: f64,
    xc: XcChoice,
    conv: DeltaConvention,
    seed: SiteOccupations,
    tol: f64,
    max_iter: usize,
    mixing: f64,
) -> Result<KsGroundState> {
    let gs_of = |n: &SiteOccupations| -> Result<(SiteOccupations, KsPotential)> {
        let pot = ks_potential(delta, n, u, j, xc, conv)?;
        Ok((ground_state_density(&pot.hamiltonian(j, conv))?, pot))
    };

    let mut n = seed;
    let mut residuals = Vec::new();
    let mut stalled = 0usize;
    let mut best = f64::INFINITY;
    for it in 1..=max_iter {
        let (n_gs, pot) = match gs_of(&n) {
            Ok(x) => x,
            Err(_) => break,
        };
        let next = SiteOccupations::from_n1((1.0 - mixing) * n.n1 + mixing * n_gs.n1);
        let change = (next.n1 - n.n1).abs();
        if change <= tol {
            let (density, potential) = polish(&gs_of, n.n1, (n_gs, pot))?;
            return Ok(KsGroundState {
                density,
                potential,
                iterations: it,
            });
        }
        if change >= best {
            stalled += 1;
        } else {
            best = change;
            stalled = 0;
        }
        residuals.push(change);
        if stalled >= SCF_STALL_WINDOW || !(0.0..=2.0).contains(&next.n1) {
            break;
        }
        n = next;
    }

    let iterations = residuals.len();
    bracketed_scf(&gs_of, tol)
        .and_then(|(x, found, extra)| {
            let (density, potential) = polish(&gs_of, x, found)?;
            Ok(KsGroundState {
                density,
                potential,
                iterations: iterations + extra,
            })
        })
        .map_err(|_| Error::Convergence {
            what: "Kohn-Sham self-consistency",
            iterations,
            last_residual: residuals.last().copied().unwrap_or(f64::NAN),
            residuals,
        })
}

/// Illinois-style regula falsi on `r(n1) = n_gs(n1) - n1` over `[0, 2]`.
/// Secant refinement of a converged input occupation `x` (with its output
/// `found`) down to rounding level, so that restarting from the result is
/// already self-consistent. Falls back to `found` if no step improves it.
fn polish<F>(
    gs_of: &F,
    x: f64,
    found: (SiteOccupations, KsPotential),
) -> Result<(SiteOccupations, KsPotential)>
where
    F: Fn(&SiteOccupations) -> Result<(SiteOccupations, KsPotential)>,
{
    let mut best = (found.0.n1 - x, found);
    let (mut x0, mut r0) = (x, best.0);
    let mut x1 = best.1 .0.n1;
    for _ in 0..8 {
        if best.0.abs() <= 4.0 * f64::EPSILON {
            break;
        }
        let (n_gs, pot) = match gs_of(&SiteOccupations::from_n1(x1)) {
            Ok(v) => v,
            Err(_) => break,
        };
        let r1 = n_gs.n1 - x1;
        if r1.abs() < best.0.abs() {
            best = (r1, (n_gs, pot));
        }
        if r1 == r0 {
            break;
        }
        let x2 = x1 - r1 * (x1 - x0) / (r1 - r0);
        if !(0.0..=2.0).contains(&x2) {
            break;
        }
        (x0, r0, x1) = (x1, r1, x2);
    }
    Ok(best.1)
}

fn bracketed_scf<F>(gs_of: &F, tol: f64) -> Result<(f64, (SiteOccupations, KsPotential), usize)>
where
    F: Fn(&SiteOccupations) -> Result<(SiteOccupations, KsPotential)>,
{
    let residual = |x: f64| -> Result<(f64, SiteOccupations, KsPotential)> {
        let (n_gs, pot) = gs_of(&SiteOccupations::from_n1(x))?;
        Ok((n_gs.n1 - x, n_gs, pot))
    };
    let (mut lo, mut hi) = (0.0_f64, 2.0_f64);
    let (mut r_lo, _, _) = residual(lo)?;
    let (mut r_hi, _, _) = residual(hi)?;
    if r_lo < 0.0 || r_hi > 0.0 {
        return Err(Error::NumericalConsistency(
            "self-consistency residual is not bracketed".into(),
        ));
    }
    let mut side = 0i8;
    for it in 1..=200 {
        let x = if r_lo == r_hi {
            0.5 * (lo + hi)
        } else {
            (lo * r_hi - hi * r_lo) / (r_hi - r_lo)
        };
        let x = if x <= lo || x >= hi {
            0.5 * (lo + hi)
        } else {
            x
        };
        let (r, n_gs, pot) = residual(x)?;
        if r.abs() <= tol * 0.5 || hi - lo <= tol * 1e-2 {
            return Ok((x, (n_gs, pot), it));
        }
        if r > 0.0 {
            lo = x;
            r_lo = r;
            if side == 1 {
                r_hi *= 0.5;
            }
            side = 1;
        } else {
            hi = x;
            r_hi = r;
            if side == -1 {
                r_lo *= 0.5;
            }
            side = -1;
        }
    }
    Err(Error::NumericalConsistency(
        "bracketed self-consistency did not converge".into(),
    ))
}
