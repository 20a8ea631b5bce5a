//! CGLS with delayed residual computation.
//!
//! Conjugate gradients on `AᵀA x = Aᵀb` without forming `AᵀA`. The loop is
//! arranged so that each iteration ends with the update of `x` and the data
//! discrepancy `e_b`, and the backprojected residual `r_x = Aᵀ e_b` is formed
//! at the start of the next iteration. A run of `i` updates therefore costs
//! `i + 1` projections and `i` backprojections.
//!
//! Working memory is three domain vectors (`x`, `d_x`, `r_x`) and two range
//! vectors (`e_b`, `p_b`) besides `b` itself.

use super::{range_norm_sq, Breakdown, IterationControl, Recorder, Solution, Termination};
use crate::linop::LinearOperator;
use crate::vecops;

pub fn cgls<A: LinearOperator + ?Sized>(
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
    let k_max = ctrl.max_iterations;

    let mut rec = Recorder::new(op, b, ctrl.true_discrepancy_every);

    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), n, "initial vector length");
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut p_b = vec![0.0; m];
    op.apply(&x, &mut p_b);
    let mut e_b = b.to_vec();
    for (e, p) in e_b.iter_mut().zip(&p_b) {
        *e -= p;
    }
    let mut nb = vecops::norm(&e_b[..data]);
    rec.record(0, nb, &x);

    let finish = |x: Vec<f64>, i: usize, nb: f64, rec: Recorder<A>, t: Termination| Solution {
        x,
        iterations: i,
        final_discrepancy_norm: nb,
        history: rec.history,
        termination: t,
    };
    let stalled = |rel: f64, why: Breakdown| {
        if rel <= err {
            Termination::ToleranceReached
        } else {
            Termination::Breakdown(why)
        }
    };

    if rec.relative(nb) <= err {
        return finish(x, 0, nb, rec, Termination::ToleranceReached);
    }

    let mut r_x = vec![0.0; n];
    op.apply_adjoint(&e_b, &mut r_x);
    let mut d_x = r_x.clone();
    let mut nr2_old = vecops::norm_sq(&r_x);
    if nr2_old == 0.0 {
        let t = stalled(rec.relative(nb), Breakdown::ZeroGradient);
        return finish(x, 0, nb, rec, t);
    }
    op.apply(&d_x, &mut p_b);
    let mut np2 = range_norm_sq(&p_b, data);
    if np2 == 0.0 {
        let t = stalled(rec.relative(nb), Breakdown::NullDirection);
        return finish(x, 0, nb, rec, t);
    }
    let mut alpha = nr2_old / np2;
    vecops::axpy(alpha, &d_x, &mut x);
    vecops::axpy(-alpha, &p_b, &mut e_b);
    nb = vecops::norm(&e_b[..data]);
    let mut i = 1;
    let mut e = rec.record(i, nb, &x);

    while e > err && i < k_max {
        op.apply_adjoint(&e_b, &mut r_x);
        let nr2_now = vecops::norm_sq(&r_x);
        if nr2_now == 0.0 {
            return finish(x, i, nb, rec, Termination::Breakdown(Breakdown::ZeroGradient));
        }
        let beta = nr2_now / nr2_old;
        // d_x = r_x + beta * d_x
        vecops::xpby(&r_x, beta, &mut d_x);
        nr2_old = nr2_now;
        op.apply(&d_x, &mut p_b);
        np2 = range_norm_sq(&p_b, data);
        if np2 == 0.0 {
            return finish(x, i, nb, rec, Termination::Breakdown(Breakdown::NullDirection));
        }
        alpha = nr2_old / np2;
        vecops::axpy(alpha, &d_x, &mut x);
        vecops::axpy(-alpha, &p_b, &mut e_b);
        nb = vecops::norm(&e_b[..data]);
        i += 1;
        e = rec.record(i, nb, &x);
    }

    let t = if e <= err {
        Termination::ToleranceReached
    } else {
        Termination::IterationLimit
    };
    finish(x, i, nb, rec, t)
}
