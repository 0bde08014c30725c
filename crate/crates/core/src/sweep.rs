//! Parameter sweeps over `(U/J, tau J)` grids, relative-error maps and the adiabaticity diagnostic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, ExactTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::model::{build_exact_h, DimerConfig};
use crate::numerics::{eig_hermitian, Spectrum, Vec4};
use crate::protocol::{run_label, run_single, Flags, Protocol, RunReport};
use crate::thermo::spectral_transitions;

/// Evenly spaced axis including both end points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        let a = Self { min, max, count };
        a.validate()?;
        Ok(a)
    }

    pub fn single(x: f64) -> Self {
        Self {
            min: x,
            max: x,
            count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidInput("axis count must be >= 1".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::InvalidInput(format!(
                "axis range [{}, {}] is invalid",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / n
                }
            })
            .collect()
    }
}

/// Scalar reported per cell when a table is emitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    #[default]
    ExtractedWork,
    EntropyProduction,
    RelativeError,
    JarzynskiResidual,
    /// `max_n (1 - p_{n|n})` along the adiabatically connected levels (exact dynamics).
    Adiabaticity,
}

impl Quantity {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "extracted_work" | "work" => Ok(Self::ExtractedWork),
            "entropy_production" | "entropy" => Ok(Self::EntropyProduction),
            "relative_error" => Ok(Self::RelativeError),
            "jarzynski_residual" | "jarzynski" => Ok(Self::JarzynskiResidual),
            "adiabaticity" => Ok(Self::Adiabaticity),
            other => Err(Error::Config(format!(
                "unknown quantity `{other}` (extracted_work|entropy_production|relative_error|jarzynski_residual|adiabaticity)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::ExtractedWork => "extracted_work",
            Quantity::EntropyProduction => "entropy_production",
            Quantity::RelativeError => "relative_error",
            Quantity::JarzynskiResidual => "jarzynski_residual",
            Quantity::Adiabaticity => "adiabaticity",
        }
    }
}

/// Grid, protocol and base configuration of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub u_over_j: Axis,
    pub tau_j: Axis,
    pub protocol: Protocol,
    pub flags: Flags,
    pub quantity: Quantity,
    /// Every parameter except `u` and `tau`.
    pub base: DimerConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            u_over_j: Axis {
                min: 0.0,
                max: 10.0,
                count: 51,
            },
            tau_j: Axis {
                min: 0.0,
                max: 5.0,
                count: 51,
            },
            protocol: Protocol::Exact,
            flags: Flags::NONE,
            quantity: Quantity::ExtractedWork,
            base: DimerConfig::default(),
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.u_over_j.validate()?;
        self.tau_j.validate()?;
        self.flags.validate(self.protocol)?;
        if self.u_over_j.min < 0.0 || self.tau_j.min < 0.0 {
            return Err(Error::InvalidInput("U/J and tau J must be >= 0".into()));
        }
        self.base.validate()
    }

    /// Configuration of one cell.
    pub fn cell_config(&self, u_over_j: f64, tau_j: f64) -> DimerConfig {
        DimerConfig {
            u: u_over_j * self.base.j,
            tau: tau_j / self.base.j,
            ..self.base
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// The run failed; all values are NaN.
    Failed {
        code: String,
        message: String,
    },
    /// The relative error was undefined because `|W_exact|` fell below the guard.
    Guarded,
}

/// Values recorded for one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub extracted_work: f64,
    pub entropy_production: f64,
    pub jarzynski_residual: f64,
    pub adiabaticity: Option<f64>,
    pub relative_error: Option<f64>,
    pub status: CellStatus,
}

impl Cell {
    fn with_status(status: CellStatus) -> Self {
        Self {
            extracted_work: f64::NAN,
            entropy_production: f64::NAN,
            jarzynski_residual: f64::NAN,
            adiabaticity: None,
            relative_error: None,
            status,
        }
    }

    fn failed(e: &Error) -> Self {
        Self::with_status(CellStatus::Failed {
            code: e.code().to_string(),
            message: e.to_string(),
        })
    }

    fn from_report(r: &RunReport) -> Self {
        Self {
            extracted_work: r.extracted_work,
            entropy_production: r.entropy_production,
            jarzynski_residual: r.jarzynski_residual,
            adiabaticity: None,
            relative_error: None,
            status: CellStatus::Ok,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    /// Value of `q`; NaN where it was not computed or the cell is flagged.
    pub fn value(&self, q: Quantity) -> f64 {
        match q {
            Quantity::ExtractedWork => self.extracted_work,
            Quantity::EntropyProduction => self.entropy_production,
            Quantity::JarzynskiResidual => self.jarzynski_residual,
            Quantity::RelativeError => self.relative_error.unwrap_or(f64::NAN),
            Quantity::Adiabaticity => self.adiabaticity.unwrap_or(f64::NAN),
        }
    }
}

/// Results on a rectangular `(U/J, tau J)` grid, stored with `tau` as the outer index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub spec: SweepSpec,
    pub cells: Vec<Cell>,
}

impl SweepTable {
    pub fn u_values(&self) -> Vec<f64> {
        self.spec.u_over_j.values()
    }

    pub fn tau_values(&self) -> Vec<f64> {
        self.spec.tau_j.values()
    }

    pub fn index(&self, iu: usize, it: usize) -> usize {
        it * self.spec.u_over_j.count + iu
    }

    pub fn cell(&self, iu: usize, it: usize) -> &Cell {
        &self.cells[self.index(iu, it)]
    }

    /// `(u_over_j, tau_j, cell)` in emission order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, &Cell)> + '_ {
        let us = self.u_values();
        let ts = self.tau_values();
        let nu = us.len();
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (us[i % nu], ts[i / nu], c))
    }

    pub fn values(&self, q: Quantity) -> Vec<f64> {
        self.cells.iter().map(|c| c.value(q)).collect()
    }

    pub fn failed_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| matches!(c.status, CellStatus::Failed { .. }))
            .count()
    }

    pub fn guarded_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.status == CellStatus::Guarded)
            .count()
    }

    pub fn label(&self) -> String {
        run_label(self.spec.protocol, self.spec.flags)
    }

    /// Ordered metadata describing how the table was produced.
    pub fn metadata(&self, q: Quantity) -> Vec<(String, String)> {
        let s = &self.spec;
        let b = &s.base;
        let t = &b.tolerances;
        let axis = |a: &Axis| format!("{}:{}:{}", a.min, a.max, a.count);
        vec![
            ("generator".into(), format!("dimerwork {}", env!("CARGO_PKG_VERSION"))),
            ("quantity".into(), q.as_str().into()),
            ("protocol".into(), s.protocol.as_str().into()),
            ("fop".into(), s.flags.fop.to_string()),
            ("tpf".into(), s.flags.tpf.to_string()),
            ("u_over_j".into(), axis(&s.u_over_j)),
            ("tau_j".into(), axis(&s.tau_j)),
            ("j".into(), b.j.to_string()),
            ("delta0".into(), b.delta0.to_string()),
            ("delta_tau".into(), b.delta_tau.to_string()),
            ("beta".into(), b.beta.to_string()),
            (
                "n_steps".into(),
                b.n_steps.map_or_else(|| "max(2000,ceil(200*tau*J))".into(), |n| n.to_string()),
            ),
            ("delta_convention".into(), b.delta_convention.as_str().into()),
            ("density_source".into(), b.density_source.as_str().into()),
            ("tpf_fixed_initial_state".into(), b.tpf_fixed_initial_state.to_string()),
            (
                "tolerances".into(),
                format!(
                    "group={} work_merge={} scf={} scf_max_iter={} scf_mixing={} tpf={} tpf_max_iter={} tpf_rescue_mixing={} relative_error_guard={}",
                    t.group,
                    t.work_merge,
                    t.scf,
                    t.scf_max_iter,
                    t.scf_mixing,
                    t.tpf,
                    t.tpf_max_iter,
                    t.tpf_rescue_mixing,
                    t.relative_error_guard
                ),
            ),
            ("failed_cells".into(), self.failed_count().to_string()),
            ("guarded_cells".into(), self.guarded_count().to_string()),
        ]
    }
}

fn run_cell(spec: &SweepSpec, u: f64, tau: f64) -> Cell {
    let cfg = spec.cell_config(u, tau);
    let mut cell = match run_single(&cfg, spec.protocol, spec.flags) {
        Ok(r) => Cell::from_report(&r),
        Err(e) => return Cell::failed(&e),
    };
    if spec.quantity == Quantity::Adiabaticity {
        match adiabaticity_diagnostic(&cfg) {
            Ok(a) => cell.adiabaticity = Some(a),
            Err(e) => return Cell::failed(&e),
        }
    }
    cell
}

/// Runs every cell of `spec`; cells run in parallel on the current rayon pool.
///
/// Failing cells are recorded and the sweep continues; only a sweep in which
/// every cell fails is an error.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    let us = spec.u_over_j.values();
    let ts = spec.tau_j.values();
    let nu = us.len();
    let cells: Vec<Cell> = (0..us.len() * ts.len())
        .into_par_iter()
        .map(|i| run_cell(spec, us[i % nu], ts[i / nu]))
        .collect();
    let table = SweepTable { spec: *spec, cells };
    if table.failed_count() == table.cells.len() {
        return Err(Error::AllCellsFailed(table.cells.len()));
    }
    Ok(table)
}

/// `|W_approx - W_exact| / |W_exact|` per cell.
///
/// Cells where `|W_exact|` does not exceed the approximate table's
/// `relative_error_guard` are marked [`CellStatus::Guarded`] and hold NaN.
pub fn relative_error_grid(exact: &SweepTable, approx: &SweepTable) -> Result<SweepTable> {
    if exact.spec.u_over_j != approx.spec.u_over_j || exact.spec.tau_j != approx.spec.tau_j {
        return Err(Error::InvalidInput(
            "relative error needs tables on identical axes".into(),
        ));
    }
    let guard = approx.spec.base.tolerances.relative_error_guard * approx.spec.base.j;
    let cells = exact
        .cells
        .iter()
        .zip(&approx.cells)
        .map(|(e, a)| {
            let mut c = a.clone();
            if let CellStatus::Failed { .. } = e.status {
                c = Cell::with_status(e.status.clone());
            } else if a.is_ok() {
                if e.extracted_work.abs() > guard {
                    c.relative_error =
                        Some((a.extracted_work - e.extracted_work).abs() / e.extracted_work.abs());
                } else {
                    c.relative_error = Some(f64::NAN);
                    c.status = CellStatus::Guarded;
                }
            }
            c
        })
        .collect();
    let mut spec = approx.spec;
    spec.quantity = Quantity::RelativeError;
    Ok(SweepTable { spec, cells })
}

/// Number of points used to follow the instantaneous eigenstates along the ramp.
const TRACKING_POINTS: usize = 2000;

/// Follows each initial eigenstate of `H(s)`, `s` in `[0, 1]`, by maximum
/// overlap, so that level crossings of the decoupled state do not reorder the map.
/// Returns `partner[n]` = index in the final spectrum connected to initial level `n`.
fn adiabatic_partners(
    cfg: &DimerConfig,
    spec0: &Spectrum,
    spec_tau: &Spectrum,
) -> Result<[usize; 4]> {
    let mut tracked: [Vec4; 4] = spec0.eigenvectors;
    let at = |s: f64| {
        let d = cfg.delta0 + (cfg.delta_tau - cfg.delta0) * s;
        build_exact_h(cfg.u, d, -d, cfg.j, cfg.delta_convention)
    };
    for k in 1..=TRACKING_POINTS {
        let spec = if k == TRACKING_POINTS {
            spec_tau.clone()
        } else {
            eig_hermitian(&at(k as f64 / TRACKING_POINTS as f64), cfg.tolerances.group)?
        };
        let assignment = match_by_overlap(&tracked, &spec.eigenvectors);
        tracked = std::array::from_fn(|n| spec.eigenvectors[assignment[n]]);
        if k == TRACKING_POINTS {
            return Ok(assignment);
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// Greedy maximum-overlap assignment `old[n] -> new[assignment[n]]`.
fn match_by_overlap(old: &[Vec4; 4], new: &[Vec4; 4]) -> [usize; 4] {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(16);
    for (a, va) in old.iter().enumerate() {
        for (b, vb) in new.iter().enumerate() {
            pairs.push((va.dotc(vb).norm_sqr(), a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut assignment = [usize::MAX; 4];
    let mut taken = [false; 4];
    for (_, a, b) in pairs {
        if assignment[a] == usize::MAX && !taken[b] {
            assignment[a] = b;
            taken[b] = true;
        }
    }
    assignment
}

/// `max_n (1 - p_{pi(n)|n})` for the exact protocol, where `pi(n)` is the final
/// level adiabatically connected to initial level `n`. Zero for perfectly
/// adiabatic driving.
pub fn adiabaticity_diagnostic(cfg: &DimerConfig) -> Result<f64> {
    cfg.validate()?;
    let traj = ExactTrajectory { cfg: *cfg };
    let spec0 = eig_hermitian(&cfg.exact_h_at(0.0)?, cfg.tolerances.group)?;
    let spec_tau = eig_hermitian(&cfg.exact_h_final(), cfg.tolerances.group)?;
    let grid = TimeGrid::for_config(cfg)?;
    let u = evolve(&traj, &grid)?;
    let t = spectral_transitions(&u, &spec0, &spec_tau)?;
    let partner = adiabatic_partners(cfg, &spec0, &spec_tau)?;
    Ok((0..4)
        .map(|n| 1.0 - t[partner[n]][n])
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0))
}
