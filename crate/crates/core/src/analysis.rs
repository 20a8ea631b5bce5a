//! Convergence metrics.

use crate::error::{Error, Result};
use crate::operator::{CbctOperator, ProjectionStack};
use crate::phantom::Volume;
use crate::solvers::ConvergenceRecord;
use crate::vecops;

/// `‖A x − b‖ / ‖b‖` with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyMetric {
    pub numerator: f64,
    pub denominator: f64,
    pub value: f64,
}

/// Relative norm of the discrepancy of `x`, by one forward projection.
pub fn relative_discrepancy(op: &CbctOperator, x: &Volume, b: &ProjectionStack) -> Result<DiscrepancyMetric> {
    if b.trajectory != *op.trajectory() || b.data.len() != op.trajectory().len() {
        return Err(Error::GeometryMismatch(
            "projection data does not match the operator trajectory".into(),
        ));
    }
    let denominator = vecops::norm(&b.data);
    if denominator == 0.0 {
        return Err(Error::ZeroData);
    }
    let mut r = op.project(x)?.data;
    for (ri, bi) in r.iter_mut().zip(&b.data) {
        *ri -= bi;
    }
    let numerator = vecops::norm(&r);
    Ok(DiscrepancyMetric {
        numerator,
        denominator,
        value: numerator / denominator,
    })
}

/// Index of the first record whose tracked discrepancy is at most `tol`.
pub fn iterations_to_tolerance(history: &[ConvergenceRecord], tol: f64) -> Option<usize> {
    history
        .iter()
        .find(|r| r.rel_discrepancy <= tol)
        .map(|r| r.iteration)
}
