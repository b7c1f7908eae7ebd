//! Spectral bounds, principal eigenvalues and basic reproduction numbers for
//! nonlocal (convolution-type) dispersal systems on bounded domains.
//!
//! The continuous operators are discretized by a midpoint Nyström rule on a
//! uniform grid. Everything downstream works on the resulting dense
//! quasi-positive matrices: power iteration with a diagonal shift for the
//! spectral bound, Collatz–Wielandt brackets, and three independent routes to
//! the weighted eigenvalue `μ₀` that defines `R₀`.

pub mod assembly;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod grid;
pub mod simulator;
pub mod sis;
pub mod spectral;
pub mod table;
pub mod variational;
pub mod verify;

pub use assembly::{assemble_l, assemble_lmu, assemble_sis, AssembledOperator, WeightedProblem};
pub use coefficients::{CoefficientField, FieldFlags, ScalarField};
pub use error::{Error, Result};
pub use grid::{build_grid, Bounds, Kernel, KernelFamily, SpatialGrid};
pub use simulator::{Simulator, Trajectory};
pub use sis::{r0_sis, LimitReport, SisParameters};
pub use spectral::{spectral_bound, Method, PowerOptions, SpectralReport};
pub use variational::{solve_mu0, Mu0Options, R0Report};
