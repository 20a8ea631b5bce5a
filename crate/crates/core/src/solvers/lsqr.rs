//! LSQR (Paige & Saunders) via Golub–Kahan bidiagonalization.
//!
//! An initial guess is handled by solving for the correction `δ` in
//! `A δ = b − A x₀`. The tracked discrepancy is the recurrence estimate
//! `φ̄`; with regularization rows present, their contribution is subtracted
//! so the history reports the data misfit only.

use super::{range_norm_sq, Breakdown, IterationControl, Recorder, Solution, Termination};
use crate::linop::LinearOperator;
use crate::vecops;

pub fn lsqr<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: Option<&[f64]>,
    ctrl: &IterationControl,
) -> Solution {
    let n = op.domain_dim();
    let m = op.range_dim();
    let data = op.data_dim();
    assert_eq!(b.len(), m, "right-hand side length");
    let err = ctrl.tolerance;

    let mut rec = Recorder::new(op, b, ctrl.true_discrepancy_every);
    let regularized = data < m;

    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "initial vector length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };

    // u = b - A x0
    let mut av = vec![0.0; m];
    op.apply(&x, &mut av);
    let mut u = b.to_vec();
    for (ui, ai) in u.iter_mut().zip(&av) {
        *ui -= ai;
    }
    let data_norm = |phi_bar: f64, x: &[f64]| {
        if regularized {
            (phi_bar * phi_bar - op.regularization_norm_sq(x)).max(0.0).sqrt()
        } else {
            phi_bar
        }
    };

    let mut beta = range_norm_sq(&u, data).sqrt();
    let nb_start = vecops::norm(&u[..data]);
    rec.record(0, nb_start, &x);

    let finish = |x: Vec<f64>, i: usize, nb: f64, rec: Recorder<A>, t: Termination| Solution {
        x,
        iterations: i,
        final_discrepancy_norm: nb,
        history: rec.history,
        termination: t,
    };

    if beta == 0.0 || rec.relative(nb_start) <= err {
        return finish(x, 0, nb_start, rec, Termination::ToleranceReached);
    }
    vecops::scale(1.0 / beta, &mut u);

    let mut v = vec![0.0; n];
    op.apply_adjoint(&u, &mut v);
    let mut alpha = vecops::norm(&v);
    if alpha == 0.0 {
        let t = if rec.relative(nb_start) <= err {
            Termination::ToleranceReached
        } else {
            Termination::Breakdown(Breakdown::ZeroGradient)
        };
        return finish(x, 0, nb_start, rec, t);
    }
    vecops::scale(1.0 / alpha, &mut v);

    let mut w = v.clone();
    let mut atu = vec![0.0; n];
    let mut phi_bar = beta;
    let mut rho_bar = alpha;
    let mut nb = nb_start;
    let mut i = 0;
    let mut termination = Termination::IterationLimit;

    while i < ctrl.max_iterations {
        // u = A v - alpha u
        op.apply(&v, &mut av);
        for (ui, ai) in u.iter_mut().zip(&av) {
            *ui = ai - alpha * *ui;
        }
        beta = range_norm_sq(&u, data).sqrt();

        let rho = rho_bar.hypot(beta);
        let c = rho_bar / rho;
        let s = beta / rho;
        let phi = c * phi_bar;
        phi_bar *= s;

        vecops::axpy(phi / rho, &w, &mut x);
        i += 1;
        nb = data_norm(phi_bar, &x);
        let e = rec.record(i, nb, &x);
        if e <= err || beta == 0.0 {
            termination = if e <= err {
                Termination::ToleranceReached
            } else {
                Termination::Breakdown(Breakdown::NullDirection)
            };
            break;
        }
        if i == ctrl.max_iterations {
            break;
        }

        // v = Aᵀ u - beta v, with u normalized
        vecops::scale(1.0 / beta, &mut u);
        op.apply_adjoint(&u, &mut atu);
        for (vi, ai) in v.iter_mut().zip(&atu) {
            *vi = ai - beta * *vi;
        }
        alpha = vecops::norm(&v);
        if alpha == 0.0 {
            termination = Termination::Breakdown(Breakdown::ZeroGradient);
            break;
        }
        vecops::scale(1.0 / alpha, &mut v);

        let theta = s * alpha;
        rho_bar = -c * alpha;
        // w = v - (theta / rho) w
        vecops::xpby(&v, -theta / rho, &mut w);
    }

    finish(x, i, nb, rec, termination)
}
