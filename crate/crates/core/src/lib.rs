//! Robust hyperspectral unmixing with a correntropy-weighted, l1-sparse NMF.
//!
//! Data are `D x N` (bands x pixels). [`solver::solve`] factors them into
//! nonnegative endmembers (`D x K`) and abundances (`K x N`) while learning a
//! weight per band that suppresses noisy bands. [`baselines`] holds the
//! plain, l1 and l1/2 NMF comparators, [`synthgen`] builds synthetic scenes
//! and [`metrics`] scores estimates against ground truth.

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod init;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod solver;
pub mod synthgen;

pub use baselines::Method;
pub use error::{Result, UnmixError};
pub use model::{
    validate, Abundances, BandWeights, Endmembers, KernelScale, Lambda, PassCheck, SolveReport,
    SolverConfig, SpectraMatrix, Termination,
};
