//! Abstract linear operators on flat `f64` vectors.

use std::sync::atomic::{AtomicUsize, Ordering};

/// A real matrix `A` (range × domain) known only through products with `A` and `Aᵀ`.
pub trait LinearOperator: Sync {
    fn domain_dim(&self) -> usize;

    fn range_dim(&self) -> usize;

    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `x = Aᵀ y`
    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]);

    /// Leading range entries that hold measured data. Entries past this index
    /// are regularization rows with zero right-hand side.
    fn data_dim(&self) -> usize {
        self.range_dim()
    }

    /// `‖(A x)[data_dim..]‖²`, the squared norm of the regularization rows.
    fn regularization_norm_sq(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn domain_dim(&self) -> usize {
        (**self).domain_dim()
    }
    fn range_dim(&self) -> usize {
        (**self).range_dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply(x, y)
    }
    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        (**self).apply_adjoint(y, x)
    }
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }
    fn regularization_norm_sq(&self, x: &[f64]) -> f64 {
        (**self).regularization_norm_sq(x)
    }
}

/// Wrapper that counts forward and adjoint applications.
#[derive(Debug)]
pub struct CountingOperator<A> {
    inner: A,
    forward: AtomicUsize,
    adjoint: AtomicUsize,
}

impl<A: LinearOperator> CountingOperator<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            forward: AtomicUsize::new(0),
            adjoint: AtomicUsize::new(0),
        }
    }

    pub fn forward_count(&self) -> usize {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn adjoint_count(&self) -> usize {
        self.adjoint.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward.store(0, Ordering::Relaxed);
        self.adjoint.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> A {
        self.inner
    }
}

impl<A: LinearOperator> LinearOperator for CountingOperator<A> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }
    fn range_dim(&self) -> usize {
        self.inner.range_dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x, y)
    }
    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint(y, x)
    }
    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }
    fn regularization_norm_sq(&self, x: &[f64]) -> f64 {
        self.inner.regularization_norm_sq(x)
    }
}
