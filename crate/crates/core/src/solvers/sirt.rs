//! SIRT and PSIRT.
//!
//! Both take simultaneous steps `x ← clamp(x + S Aᵀ R⁻¹ (b − A x))` with
//! `R = diag(row sums)`. SIRT uses `S = ω C⁻¹`, `C = diag(column sums)`,
//! and keeps `C⁻¹` for the whole run. PSIRT replaces it with the scalar
//! `ω / max(C)`, so the column sums are only needed once, up front; for
//! `0 < ω < 2` that step is within the convergence bound since the largest
//! eigenvalue of `AᵀR⁻¹A` is at most `max(C)`.
//!
//! Rows or columns with zero sum get a zero reciprocal.

use super::{IterationControl, Recorder, Solution, Termination};
use crate::error::{Error, Result};
use crate::linop::LinearOperator;
use crate::vecops;

fn reciprocal_or_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0 / v
    } else {
        0.0
    }
}

fn inverse_row_sums<A: LinearOperator + ?Sized>(op: &A) -> Result<Vec<f64>> {
    let mut rows = vec![0.0; op.range_dim()];
    op.apply(&vec![1.0; op.domain_dim()], &mut rows);
    if !rows.iter().any(|&r| r > 0.0) {
        return Err(Error::DegenerateOperator("no ray intersects the volume".into()));
    }
    rows.iter_mut().for_each(|r| *r = reciprocal_or_zero(*r));
    Ok(rows)
}

fn col_sums<A: LinearOperator + ?Sized>(op: &A) -> Result<Vec<f64>> {
    let mut cols = vec![0.0; op.domain_dim()];
    op.apply_adjoint(&vec![1.0; op.range_dim()], &mut cols);
    if !cols.iter().any(|&c| c > 0.0) {
        return Err(Error::DegenerateOperator("no voxel is intersected by any ray".into()));
    }
    Ok(cols)
}

enum Step {
    Voxelwise(Vec<f64>),
    Scalar(f64),
}

pub fn sirt<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    relaxation: f64,
    bounds: Option<(f64, f64)>,
    ctrl: &IterationControl,
) -> Result<Solution> {
    let inv_rows = inverse_row_sums(op)?;
    let mut step = col_sums(op)?;
    step.iter_mut().for_each(|c| *c = relaxation * reciprocal_or_zero(*c));
    Ok(iterate(op, b, x0, &inv_rows, Step::Voxelwise(step), bounds, ctrl))
}

pub fn psirt<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    relaxation: f64,
    bounds: Option<(f64, f64)>,
    ctrl: &IterationControl,
) -> Result<Solution> {
    let inv_rows = inverse_row_sums(op)?;
    let max_col = vecops::max(&col_sums(op)?);
    Ok(iterate(op, b, x0, &inv_rows, Step::Scalar(relaxation / max_col), bounds, ctrl))
}

fn iterate<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    inv_rows: &[f64],
    step: Step,
    bounds: Option<(f64, f64)>,
    ctrl: &IterationControl,
) -> Solution {
    let n = op.domain_dim();
    let m = op.range_dim();
    assert_eq!(b.len(), m, "right-hand side length");
    let mut rec = Recorder::new(op, b, ctrl.true_discrepancy_every);
    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "initial vector length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut resid = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut i = 0;
    let (termination, nb) = loop {
        op.apply(&x, &mut resid);
        for (r, bi) in resid.iter_mut().zip(b) {
            *r = bi - *r;
        }
        let nb = vecops::norm(&resid);
        let e = rec.record_exact(i, nb);
        if e <= ctrl.tolerance {
            break (Termination::ToleranceReached, nb);
        }
        if i == ctrl.max_iterations {
            break (Termination::IterationLimit, nb);
        }
        for (r, w) in resid.iter_mut().zip(inv_rows) {
            *r *= w;
        }
        op.apply_adjoint(&resid, &mut grad);
        match &step {
            Step::Voxelwise(s) => {
                for ((xi, gi), si) in x.iter_mut().zip(&grad).zip(s) {
                    *xi += si * gi;
                }
            }
            Step::Scalar(s) => vecops::axpy(*s, &grad, &mut x),
        }
        if let Some((lo, hi)) = bounds {
            x.iter_mut().for_each(|xi| *xi = xi.clamp(lo, hi));
        }
        i += 1;
    };
    Solution {
        x,
        iterations: i,
        final_discrepancy_norm: nb,
        history: rec.history,
        termination,
    }
}
