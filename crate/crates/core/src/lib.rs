//! Work statistics of the driven two-site Hubbard model at half filling.
//!
//! The dimer is driven by antisymmetric on-site potentials ramped linearly
//! from `delta0` to `delta_tau` over a time `tau`, starting from a thermal
//! state. Work is defined by a two-point energy measurement. Besides the exact
//! dynamics the crate implements density-functional approximations: the bare
//! non-interacting model, static Kohn-Sham models with the pseudo-LDA or the
//! Carrascal parametrized correlation functional, an optional first-order
//! correction of the measured energies and a self-consistent time-dependent
//! functional cycle.
//!
//! ```
//! use dimerwork::{run_single, DimerConfig, Flags, Protocol};
//!
//! let cfg = DimerConfig::with_u_tau(2.0, 1.0);
//! let report = run_single(&cfg, Protocol::Exact, Flags::NONE).unwrap();
//! assert!(report.jarzynski_residual.abs() < 1e-8);
//! ```

pub mod config;
pub mod dynamics;
pub mod emit;
pub mod error;
pub mod functionals;
pub mod model;
pub mod numerics;
pub mod protocol;
pub mod sweep;
pub mod thermo;

pub use dynamics::{
    evolve, evolve_density_matrix, tpf_solve, DensityTrajectory, ExactTrajectory,
    HamiltonianTrajectory, TimeGrid, TpfSolution, ZeroOrderTrajectory,
};
pub use emit::{format_sig12, OutputFormat};
pub use error::{Error, Result};
pub use functionals::{KsGroundState, KsPotential, ParInternals, XcChoice};
pub use model::{DeltaConvention, DensitySource, DimerConfig, SiteOccupations, Tolerances};
pub use numerics::{DensityMatrix4, HermitianMatrix4, Spectrum, UnitaryMatrix4};
pub use protocol::{run_single, Flags, Protocol, RunReport};
pub use sweep::{
    adiabaticity_diagnostic, relative_error_grid, run_sweep, Axis, Cell, CellStatus, Quantity,
    SweepSpec, SweepTable,
};
pub use thermo::{CorrectedSpectrum, ThermalEnsemble, WorkDistribution};
