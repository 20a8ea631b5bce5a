//! Iterative reconstruction.
//!
//! The algorithms in [`cgls`], [`lsqr`] and [`sirt`] work on any
//! [`LinearOperator`]; [`reconstruct`] binds them to a [`CbctOperator`],
//! wiring in Jacobi preconditioning, Tikhonov regularization, initial
//! volumes and box constraints as configured.
//!
//! Iteration counting is uniform across methods: iteration `i` is the `i`-th
//! update of `x`. Every history starts with a record for the initial volume
//! (index 0), followed by one record per update.

pub mod cgls;
pub mod lsqr;
pub mod regularize;
pub mod sirt;

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linop::LinearOperator;
use crate::operator::{CbctOperator, ProjectionStack};
use crate::phantom::Volume;
use crate::vecops;

pub use regularize::{apply_jacobi_preconditioner, tikhonov_augment, JacobiPreconditioned, TikhonovAugmented};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Cgls,
    Lsqr,
    Sirt,
    Psirt,
}

impl Method {
    pub fn is_krylov(self) -> bool {
        matches!(self, Method::Cgls | Method::Lsqr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Cgls => "cgls",
            Method::Lsqr => "lsqr",
            Method::Sirt => "sirt",
            Method::Psirt => "psirt",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cgls" => Ok(Method::Cgls),
            "lsqr" => Ok(Method::Lsqr),
            "sirt" => Ok(Method::Sirt),
            "psirt" => Ok(Method::Psirt),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

pub const DEFAULT_JACOBI_FLOOR: f64 = 1e-6;
/// Relaxation used by SIRT and PSIRT unless overridden.
pub const DEFAULT_RELAXATION: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub method: Method,
    /// Maximum number of updates `K`.
    pub max_iterations: usize,
    /// Stop once `‖b − A x‖ / ‖b‖ ≤ ERR`; zero disables the test.
    pub rel_discrepancy_tol: f64,
    pub initial_x0: Option<Volume>,
    pub tikhonov_lambda: f64,
    pub jacobi_precondition: bool,
    /// Jacobi diagonal floor as a fraction of the largest diagonal entry.
    pub jacobi_floor: f64,
    /// Voxelwise clamp for SIRT/PSIRT iterates.
    pub box_bounds: Option<(f64, f64)>,
    /// SIRT/PSIRT step factor; PSIRT converges for values below 2.
    pub relaxation: f64,
    /// Recompute `‖b − A x‖ / ‖b‖` from scratch every k iterations (0 = never).
    pub true_discrepancy_every: usize,
}

impl SolverConfig {
    pub fn new(method: Method, max_iterations: usize) -> Self {
        Self {
            method,
            max_iterations,
            rel_discrepancy_tol: 0.0,
            initial_x0: None,
            tikhonov_lambda: 0.0,
            jacobi_precondition: false,
            jacobi_floor: DEFAULT_JACOBI_FLOOR,
            box_bounds: None,
            relaxation: DEFAULT_RELAXATION,
            true_discrepancy_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.max_iterations == 0 {
            return bad("maximum iteration count must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.rel_discrepancy_tol) {
            return bad(format!(
                "relative discrepancy tolerance must lie in [0, 1], got {}",
                self.rel_discrepancy_tol
            ));
        }
        if !(self.tikhonov_lambda.is_finite() && self.tikhonov_lambda >= 0.0) {
            return bad(format!("Tikhonov lambda must be >= 0, got {}", self.tikhonov_lambda));
        }
        if !(self.jacobi_floor.is_finite() && self.jacobi_floor > 0.0 && self.jacobi_floor <= 1.0) {
            return bad(format!("Jacobi floor must lie in (0, 1], got {}", self.jacobi_floor));
        }
        if !(self.relaxation.is_finite() && self.relaxation > 0.0) {
            return bad(format!("relaxation must be > 0, got {}", self.relaxation));
        }
        if let Some((lo, hi)) = self.box_bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return bad(format!("box bounds require lo <= hi, got ({lo}, {hi})"));
            }
            if self.method.is_krylov() {
                return bad(format!(
                    "box constraints are not supported by {}: clamping leaves the Krylov subspace",
                    self.method.name()
                ));
            }
        }
        if !self.method.is_krylov() {
            if self.jacobi_precondition {
                return bad("Jacobi preconditioning applies to CGLS and LSQR only".into());
            }
            if self.tikhonov_lambda > 0.0 {
                return bad("Tikhonov regularization applies to CGLS and LSQR only".into());
            }
        }
        Ok(())
    }

    fn control(&self) -> IterationControl {
        IterationControl {
            max_iterations: self.max_iterations,
            tolerance: self.rel_discrepancy_tol,
            true_discrepancy_every: self.true_discrepancy_every,
        }
    }
}

/// Stopping rule and monitoring shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationControl {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub true_discrepancy_every: usize,
}

impl IterationControl {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            tolerance: 0.0,
            true_discrepancy_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    pub iteration: usize,
    /// Seconds since the solver started.
    pub wall_seconds: f64,
    /// Relative discrepancy tracked by the iteration itself.
    pub rel_discrepancy: f64,
    /// `‖b − A x‖ / ‖b‖` recomputed from `x`, on scheduled iterations only.
    pub true_rel_discrepancy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Breakdown {
    /// `Aᵀ r = 0` with a nonzero residual: `x` already solves the least-squares problem.
    ZeroGradient,
    /// The search direction lies in the null space of `A`.
    NullDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ToleranceReached,
    IterationLimit,
    Breakdown(Breakdown),
}

/// Output of the operator-generic solvers.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `NB`, the norm of the data part of the tracked residual.
    pub final_discrepancy_norm: f64,
    pub history: Vec<ConvergenceRecord>,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub method: Method,
    pub final_x: Volume,
    pub iterations: usize,
    pub final_discrepancy_norm: f64,
    pub history: Vec<ConvergenceRecord>,
    pub termination: Termination,
    pub worker_count: usize,
}

impl SolverReport {
    pub fn final_rel_discrepancy(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.rel_discrepancy)
    }
}

/// Builds convergence records, optionally recomputing the true discrepancy.
pub(crate) struct Recorder<'a, A: ?Sized> {
    op: &'a A,
    b: &'a [f64],
    nb0: f64,
    every: usize,
    start: Instant,
    pub history: Vec<ConvergenceRecord>,
}

impl<'a, A: LinearOperator + ?Sized> Recorder<'a, A> {
    pub fn new(op: &'a A, b: &'a [f64], every: usize) -> Self {
        Self {
            op,
            b,
            nb0: vecops::norm(&b[..op.data_dim()]),
            every,
            start: Instant::now(),
            history: Vec::new(),
        }
    }

    /// Relative discrepancy; falls back to the absolute norm when `b = 0`.
    pub fn relative(&self, nb: f64) -> f64 {
        if self.nb0 > 0.0 {
            nb / self.nb0
        } else {
            nb
        }
    }

    fn scheduled(&self, iteration: usize) -> bool {
        self.every > 0 && iteration > 0 && iteration % self.every == 0
    }

    /// Record for a discrepancy that was computed directly from `x`.
    pub fn record_exact(&mut self, iteration: usize, nb: f64) -> f64 {
        let e = self.relative(nb);
        self.history.push(ConvergenceRecord {
            iteration,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            rel_discrepancy: e,
            true_rel_discrepancy: self.scheduled(iteration).then_some(e),
        });
        e
    }

    pub fn record(&mut self, iteration: usize, nb: f64, x: &[f64]) -> f64 {
        let e = self.relative(nb);
        let true_rel = self
            .scheduled(iteration)
            .then(|| self.relative(data_residual_norm(self.op, self.b, x)));
        self.history.push(ConvergenceRecord {
            iteration,
            wall_seconds: self.start.elapsed().as_secs_f64(),
            rel_discrepancy: e,
            true_rel_discrepancy: true_rel,
        });
        e
    }
}

/// `‖(b − A x)[..data_dim]‖`, by one application of `A`.
pub fn data_residual_norm<A: LinearOperator + ?Sized>(op: &A, b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; op.range_dim()];
    op.apply(x, &mut ax);
    let d = op.data_dim();
    let mut r = vec![0.0; d];
    vecops::sub_into(&b[..d], &ax[..d], &mut r);
    vecops::norm(&r)
}

/// Squared norm of a range vector, summed separately over data and regularization rows.
pub(crate) fn range_norm_sq(v: &[f64], data_dim: usize) -> f64 {
    vecops::norm_sq(&v[..data_dim]) + vecops::norm_sq(&v[data_dim..])
}

fn check_inputs(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    if b.trajectory != *op.trajectory() || b.data.len() != op.trajectory().len() {
        return Err(Error::GeometryMismatch(
            "projection data does not match the operator trajectory".into(),
        ));
    }
    if let Some(x0) = &cfg.initial_x0 {
        if x0.geometry != *op.vol_geom() || x0.data.len() != op.vol_geom().len() {
            return Err(Error::GeometryMismatch(
                "initial volume does not match the operator volume".into(),
            ));
        }
    }
    Ok(())
}

fn expect_method(cfg: &SolverConfig, method: Method) -> Result<()> {
    if cfg.method != method {
        return Err(Error::InvalidConfig(format!(
            "configuration selects {}, called {}",
            cfg.method.name(),
            method.name()
        )));
    }
    Ok(())
}

/// CGLS with delayed residual computation.
pub fn cgls(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<SolverReport> {
    expect_method(cfg, Method::Cgls)?;
    reconstruct(op, b, cfg)
}

pub fn lsqr(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<SolverReport> {
    expect_method(cfg, Method::Lsqr)?;
    reconstruct(op, b, cfg)
}

pub fn sirt(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<SolverReport> {
    expect_method(cfg, Method::Sirt)?;
    reconstruct(op, b, cfg)
}

pub fn psirt(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<SolverReport> {
    expect_method(cfg, Method::Psirt)?;
    reconstruct(op, b, cfg)
}

/// Runs the configured method on `b`.
pub fn reconstruct(op: &CbctOperator, b: &ProjectionStack, cfg: &SolverConfig) -> Result<SolverReport> {
    check_inputs(op, b, cfg)?;
    let x0 = cfg.initial_x0.as_ref().map(|v| v.data.as_slice());
    let ctrl = cfg.control();

    let solution = match cfg.method {
        Method::Sirt => sirt::sirt(op, &b.data, x0, cfg.relaxation, cfg.box_bounds, &ctrl)?,
        Method::Psirt => sirt::psirt(op, &b.data, x0, cfg.relaxation, cfg.box_bounds, &ctrl)?,
        Method::Cgls | Method::Lsqr => {
            let run = |a: &dyn LinearOperator, rhs: &[f64], start: Option<&[f64]>| match cfg.method {
                Method::Cgls => cgls::cgls(a, rhs, start, &ctrl),
                _ => lsqr::lsqr(a, rhs, start, &ctrl),
            };
            let lambda = cfg.tikhonov_lambda;
            match (lambda > 0.0, cfg.jacobi_precondition) {
                (false, false) => run(op, &b.data, x0),
                (true, false) => {
                    let aug = tikhonov_augment(op, lambda);
                    let rhs = aug.augment_data(&b.data);
                    run(&aug, &rhs, x0)
                }
                (false, true) => {
                    let pre = apply_jacobi_preconditioner(cfg, op)?;
                    run_preconditioned(&pre, &b.data, x0, run)
                }
                (true, true) => {
                    let mut diag = op.normal_diagonal().data;
                    diag.iter_mut().for_each(|d| *d += lambda * lambda);
                    let aug = tikhonov_augment(op, lambda);
                    let rhs = aug.augment_data(&b.data);
                    let pre = JacobiPreconditioned::from_diagonal(aug, &diag, cfg.jacobi_floor)?;
                    run_preconditioned(&pre, &rhs, x0, run)
                }
            }
        }
    };

    Ok(SolverReport {
        method: cfg.method,
        final_x: Volume::from_data(*op.vol_geom(), solution.x)?,
        iterations: solution.iterations,
        final_discrepancy_norm: solution.final_discrepancy_norm,
        history: solution.history,
        termination: solution.termination,
        worker_count: op.workers(),
    })
}

fn run_preconditioned<A, F>(
    pre: &JacobiPreconditioned<A>,
    rhs: &[f64],
    x0: Option<&[f64]>,
    run: F,
) -> Solution
where
    A: LinearOperator,
    F: Fn(&dyn LinearOperator, &[f64], Option<&[f64]>) -> Solution,
{
    let z0 = x0.map(|x| pre.to_preconditioned(x));
    let mut solution = run(pre, rhs, z0.as_deref());
    solution.x = pre.to_solution(&solution.x);
    solution
}

/// Writes `iter,seconds,rel_discrepancy,true_rel_discrepancy` rows.
pub fn write_history_csv<W: Write>(mut w: W, history: &[ConvergenceRecord]) -> std::io::Result<()> {
    w.write_all(b"iter,seconds,rel_discrepancy,true_rel_discrepancy\n")?;
    for r in history {
        let true_rel = r
            .true_rel_discrepancy
            .map(|t| format!("{t:e}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{:.6},{:e},{}",
            r.iteration, r.wall_seconds, r.rel_discrepancy, true_rel
        )?;
    }
    Ok(())
}
