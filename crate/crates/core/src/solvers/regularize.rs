//! Operator wrappers for Tikhonov regularization and Jacobi preconditioning.

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::linop::LinearOperator;
use crate::operator::CbctOperator;
use crate::vecops;

/// The stacked operator `[A; λI]`, paired with right-hand side `[b; 0]`.
#[derive(Debug, Clone)]
pub struct TikhonovAugmented<A> {
    inner: A,
    lambda: f64,
}

pub fn tikhonov_augment<A: LinearOperator>(op: A, lambda: f64) -> TikhonovAugmented<A> {
    assert!(lambda >= 0.0, "Tikhonov lambda must be non-negative");
    TikhonovAugmented { inner: op, lambda }
}

impl<A: LinearOperator> TikhonovAugmented<A> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `[b; 0]`
    pub fn augment_data(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.inner.range_dim());
        let mut out = Vec::with_capacity(self.range_dim());
        out.extend_from_slice(b);
        out.resize(self.range_dim(), 0.0);
        out
    }
}

impl<A: LinearOperator> LinearOperator for TikhonovAugmented<A> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }

    fn range_dim(&self) -> usize {
        self.inner.range_dim() + self.inner.domain_dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (data, reg) = y.split_at_mut(self.inner.range_dim());
        self.inner.apply(x, data);
        for (r, xi) in reg.iter_mut().zip(x) {
            *r = self.lambda * xi;
        }
    }

    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        let (data, reg) = y.split_at(self.inner.range_dim());
        self.inner.apply_adjoint(data, x);
        for (xi, r) in x.iter_mut().zip(reg) {
            *xi += self.lambda * r;
        }
    }

    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn regularization_norm_sq(&self, x: &[f64]) -> f64 {
        self.lambda * self.lambda * vecops::norm_sq(x) + self.inner.regularization_norm_sq(x)
    }
}

/// Split (right) Jacobi preconditioning: the operator `A D^{-1/2}` acting on
/// `z = D^{1/2} x`, with `D_j = max(diag_j, floor · max diag)`.
#[derive(Debug, Clone)]
pub struct JacobiPreconditioned<A> {
    inner: A,
    /// `D^{-1/2}`
    scaling: Vec<f64>,
}

impl<A: LinearOperator> JacobiPreconditioned<A> {
    /// `diag` is `diag(AᵀA)` of `inner`; `floor` is relative to its largest entry.
    pub fn from_diagonal(inner: A, diag: &[f64], floor: f64) -> Result<Self> {
        assert_eq!(diag.len(), inner.domain_dim());
        let largest = vecops::max(diag);
        if !(largest > 0.0) {
            return Err(Error::DegenerateOperator(
                "normal-equation diagonal is identically zero".into(),
            ));
        }
        let min_d = floor * largest;
        let scaling = diag.iter().map(|&d| 1.0 / d.max(min_d).sqrt()).collect();
        Ok(Self { inner, scaling })
    }

    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    /// `x = D^{-1/2} z`
    pub fn to_solution(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scaling).map(|(z, s)| z * s).collect()
    }

    /// `z = D^{1/2} x`
    pub fn to_preconditioned(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scaling).map(|(x, s)| x / s).collect()
    }
}

impl<A: LinearOperator> LinearOperator for JacobiPreconditioned<A> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }

    fn range_dim(&self) -> usize {
        self.inner.range_dim()
    }

    fn apply(&self, z: &[f64], y: &mut [f64]) {
        self.inner.apply(&self.to_solution(z), y);
    }

    fn apply_adjoint(&self, y: &[f64], z: &mut [f64]) {
        self.inner.apply_adjoint(y, z);
        for (zi, s) in z.iter_mut().zip(&self.scaling) {
            *zi *= s;
        }
    }

    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }

    fn regularization_norm_sq(&self, z: &[f64]) -> f64 {
        self.inner.regularization_norm_sq(&self.to_solution(z))
    }
}

/// Jacobi-preconditioned view of `op` using `diag(AᵀA)` and the configured floor.
pub fn apply_jacobi_preconditioner<'a>(
    cfg: &SolverConfig,
    op: &'a CbctOperator,
) -> Result<JacobiPreconditioned<&'a CbctOperator>> {
    JacobiPreconditioned::from_diagonal(op, &op.normal_diagonal().data, cfg.jacobi_floor)
}
