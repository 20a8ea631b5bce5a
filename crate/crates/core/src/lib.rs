//! Matrix-free cone-beam CT reconstruction.
//!
//! The system matrix `A` of a circular cone-beam acquisition is never stored.
//! [`CbctOperator`] applies it (forward projection) and its exact transpose
//! (backprojection) with a Siddon ray caster, and the [`solvers`] module
//! reconstructs volumes with CGLS, LSQR, SIRT and PSIRT on top of the
//! [`LinearOperator`] abstraction.

pub mod analysis;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linop;
pub mod operator;
pub mod phantom;
pub mod solvers;
pub mod vecops;

pub use error::{Error, FormatError, Result};
pub use geometry::{DetectorGeometry, TrajectoryGeometry, Vec3, VolumeGeometry};
pub use linop::{CountingOperator, LinearOperator};
pub use operator::{CbctOperator, ProjectionStack};
pub use phantom::{Ellipsoid, Volume};
pub use solvers::{ConvergenceRecord, Method, SolverConfig, SolverReport, Termination};
