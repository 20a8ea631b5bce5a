//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use cbct::analysis::iterations_to_tolerance;
use cbct::config::GeometryConfig;
use cbct::geometry::{make_circular_trajectory, DetectorGeometry, VolumeGeometry};
use cbct::io::{self, DType};
use cbct::operator::default_workers;
use cbct::phantom::{generate_phantom, shepp_logan_3d};
use cbct::solvers::{self, cgls, sirt, IterationControl};
use cbct::{
    CbctOperator, ConvergenceRecord, CountingOperator, FormatError, LinearOperator, Method, ProjectionStack,
    SolverConfig, SolverReport, Volume,
};
use common::{assemble, max_rel_diff, pinv_solve, rel_diff, small_problem, tikhonov_solve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// The desk-scale problem and the solver runs several criteria share.
struct Desk {
    op: CbctOperator,
    b: ProjectionStack,
    cgls: SolverReport,
    psirt: SolverReport,
}

const ONE_PERCENT: f64 = 0.01;

fn desk() -> Desk {
    let op = GeometryConfig::desk_scale().operator(default_workers()).unwrap();
    let phantom = generate_phantom(&shepp_logan_3d(), op.vol_geom()).unwrap();
    let b = op.project(&phantom).unwrap();

    let mut cfg = SolverConfig::new(Method::Cgls, 100);
    cfg.true_discrepancy_every = 10;
    let cgls = solvers::reconstruct(&op, &b, &cfg).unwrap();

    let mut cfg = SolverConfig::new(Method::Psirt, 5000);
    cfg.rel_discrepancy_tol = ONE_PERCENT;
    let psirt = solvers::reconstruct(&op, &b, &cfg).unwrap();
    Desk { op, b, cgls, psirt }
}

fn e_at(history: &[ConvergenceRecord], i: usize) -> f64 {
    history[i].rel_discrepancy
}

fn criterion_1() -> Check {
    let vol = VolumeGeometry::new([32, 32, 16], [6.88, 6.88, 13.76]).unwrap();
    let det = DetectorGeometry::new(48, 32, [10.0, 8.0]).unwrap();
    let traj = make_circular_trajectory(749.0, 1198.0, 16, 0.0, 2.0 * std::f64::consts::PI, det).unwrap();
    let op = CbctOperator::with_workers(vol, traj, default_workers()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut ax = vec![0.0; op.range_dim()];
    let mut aty = vec![0.0; op.domain_dim()];
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..op.domain_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..op.range_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        op.apply(&x, &mut ax);
        op.apply_adjoint(&y, &mut aty);
        let lhs = cbct::vecops::dot(&ax, &y);
        let rhs = cbct::vecops::dot(&x, &aty);
        worst = worst.max((lhs - rhs).abs() / (cbct::vecops::norm(&ax) * cbct::vecops::norm(&y)));
    }
    ensure(worst <= 1e-10, format!("worst relative adjoint gap {worst:.2e} (limit 1e-10)"))
}

fn criterion_2() -> Check {
    let (vol, traj) = small_problem();
    let op = CbctOperator::with_workers(vol, traj, default_workers()).unwrap();
    let dense = assemble(&vol, &traj);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x: Vec<f64> = (0..vol.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..traj.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let dense_ref = &dense;
    let col = |c: usize| (0..dense_ref.rows).map(move |r| dense_ref.get(r, c));
    let rows: Vec<f64> = (0..dense.rows).map(|r| (0..dense.cols).map(|c| dense.get(r, c)).sum()).collect();
    let cols: Vec<f64> = (0..dense.cols).map(|c| col(c).sum()).collect();
    let diag: Vec<f64> = (0..dense.cols).map(|c| col(c).map(|a| a * a).sum()).collect();

    let op_err = [
        max_rel_diff(&op.project(&Volume::from_data(vol, x.clone()).unwrap()).unwrap().data, &dense.matvec(&x)),
        max_rel_diff(
            &op.backproject(&ProjectionStack::from_data(traj, y.clone()).unwrap()).unwrap().data,
            &dense.rmatvec(&y),
        ),
        max_rel_diff(&op.row_sums().data, &rows),
        max_rel_diff(&op.col_sums().data, &cols),
        max_rel_diff(&op.normal_diagonal().data, &diag),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);

    let b = op.project(&Volume::from_data(vol, x).unwrap()).unwrap();
    let min_norm = pinv_solve(&dense, &b.data);
    let mut solve_err = 0.0f64;
    for method in [Method::Cgls, Method::Lsqr] {
        let mut cfg = SolverConfig::new(method, 3000);
        cfg.rel_discrepancy_tol = 1e-13;
        let r = solvers::reconstruct(&op, &b, &cfg).unwrap();
        solve_err = solve_err.max(rel_diff(&r.final_x.data, &min_norm));
    }
    let closed = tikhonov_solve(&dense, &b.data, 1.0);
    let mut tik_err = 0.0f64;
    for method in [Method::Cgls, Method::Lsqr] {
        let mut cfg = SolverConfig::new(method, 400);
        cfg.tikhonov_lambda = 1.0;
        let r = solvers::reconstruct(&op, &b, &cfg).unwrap();
        tik_err = tik_err.max(rel_diff(&r.final_x.data, &closed));
    }
    ensure(
        op_err <= 1e-10 && solve_err <= 1e-6 && tik_err <= 1e-6,
        format!("operator {op_err:.2e} (1e-10), min-norm {solve_err:.2e} (1e-6), Tikhonov {tik_err:.2e} (1e-6)"),
    )
}

fn criterion_3(d: &Desk) -> Check {
    let n_cgls = iterations_to_tolerance(&d.cgls.history, ONE_PERCENT);
    let n_psirt = iterations_to_tolerance(&d.psirt.history, ONE_PERCENT);
    let e_cgls = e_at(&d.cgls.history, 40);
    let e_psirt = d.psirt.history.get(40).unwrap_or(d.psirt.history.last().unwrap()).rel_discrepancy;
    let detail = format!(
        "iterations to 1%: CGLS {n_cgls:?}, PSIRT {n_psirt:?}; e(40): CGLS {:.3}%, PSIRT {:.3}%",
        100.0 * e_cgls,
        100.0 * e_psirt
    );
    let ok = match (n_cgls, n_psirt) {
        (Some(c), Some(p)) => c < p && p as f64 >= 3.0 * c as f64 && e_cgls < e_psirt,
        _ => false,
    };
    ensure(ok, detail)
}

fn criterion_4(d: &Desk) -> Check {
    let h = &d.cgls.history;
    let upticks: Vec<usize> = h
        .windows(2)
        .filter(|w| w[1].rel_discrepancy > w[0].rel_discrepancy * (1.0 + 1e-12))
        .map(|w| w[1].iteration)
        .collect();
    ensure(
        h.len() == 101 && upticks.is_empty(),
        format!("{} iterations, e {:.3e} -> {:.3e}, upticks at {upticks:?}", h.len() - 1, e_at(h, 0), e_at(h, h.len() - 1)),
    )
}

fn criterion_5(d: &Desk) -> Check {
    let rec = &d.cgls.history[10];
    let truth = rec.true_rel_discrepancy.ok_or("no true discrepancy recorded at iteration 10")?;
    let drift = (rec.rel_discrepancy - truth).abs() / truth;
    ensure(drift < 1e-5, format!(
            "relative drift at iteration 10: {drift:.2e} (limit 1e-5); iterated {:.17e}, recomputed {truth:.17e}",
            rec.rel_discrepancy
        ))
}

fn criterion_6(d: &Desk) -> Check {
    let lsqr = solvers::reconstruct(&d.op, &d.b, &SolverConfig::new(Method::Lsqr, 40)).map_err(|e| e.to_string())?;
    let worst = lsqr
        .history
        .iter()
        .zip(&d.cgls.history)
        .map(|(l, c)| (l.rel_discrepancy - c.rel_discrepancy).abs())
        .fold(0.0f64, f64::max);
    ensure(
        lsqr.history.len() == 41 && worst < 1e-3,
        format!("max per-iteration |e_CGLS - e_LSQR| over 40 iterations: {worst:.2e} (limit 1e-3)"),
    )
}

fn criterion_7() -> Check {
    let (vol, traj) = small_problem();
    let op = CbctOperator::with_workers(vol, traj, 1).unwrap();
    let b = op.project(&Volume::filled(vol, 0.5)).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for k in [1usize, 5, 12] {
        // K passes through the main loop follow the pre-loop update, so i = K + 1.
        let counted = CountingOperator::new(&op);
        let sol = cgls::cgls(&counted, &b.data, None, &IterationControl::iterations(k + 1));
        let (p, bp) = (counted.forward_count(), counted.adjoint_count());
        ok &= sol.iterations == k + 1 && p == k + 2 && bp == k + 1;
        lines.push(format!("K={k}: {p} projections, {bp} backprojections"));
    }
    ensure(ok, lines.join("; "))
}

/// Records the range of every iterate handed to the forward projector.
struct IterateRange<'a> {
    inner: &'a CbctOperator,
    range: Mutex<(f64, f64)>,
}

impl LinearOperator for IterateRange<'_> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }
    fn range_dim(&self) -> usize {
        self.inner.range_dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut r = self.range.lock().unwrap();
        for &v in x {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
        drop(r);
        self.inner.apply(x, y)
    }
    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.inner.apply_adjoint(y, x)
    }
}

fn criterion_8(d: &Desk) -> Check {
    let cfg = SolverConfig::new(Method::Psirt, 40);
    let unboxed = match d.psirt.history.get(40) {
        Some(r) => r.rel_discrepancy,
        None => solvers::reconstruct(&d.op, &d.b, &cfg).map_err(|e| e.to_string())?.final_rel_discrepancy(),
    };
    let watched = IterateRange {
        inner: &d.op,
        range: Mutex::new((f64::INFINITY, f64::NEG_INFINITY)),
    };
    let ctrl = IterationControl::iterations(40);
    let boxed = sirt::psirt(&watched, &d.b.data, None, cfg.relaxation, Some((0.0, 1.0)), &ctrl).map_err(|e| e.to_string())?;
    let e_box = boxed.history.last().unwrap().rel_discrepancy;
    let (lo, hi) = *watched.range.lock().unwrap();
    let (lo, hi) = (
        lo.min(boxed.x.iter().cloned().fold(f64::INFINITY, f64::min)),
        hi.max(boxed.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
    );
    let gap = 100.0 * (e_box - unboxed).abs();
    ensure(
        boxed.iterations == 40 && gap < 0.5 && lo >= 0.0 && hi <= 1.0,
        format!(
            "e(40) boxed {:.3}%, unboxed {:.3}%, gap {gap:.3} pp (limit 0.5); iterates within [{lo}, {hi}]",
            100.0 * e_box,
            100.0 * unboxed
        ),
    )
}

fn criterion_9(d: &Desk) -> Check {
    let n_psirt = iterations_to_tolerance(&d.psirt.history, ONE_PERCENT).ok_or("PSIRT never reached 1%")?;
    // SIRT only has to be followed up to PSIRT's count: if it has not reached
    // 1% by then, its own count is at least as large.
    let mut cfg = SolverConfig::new(Method::Sirt, n_psirt);
    cfg.rel_discrepancy_tol = ONE_PERCENT;
    let r = solvers::reconstruct(&d.op, &d.b, &cfg).map_err(|e| e.to_string())?;
    match iterations_to_tolerance(&r.history, ONE_PERCENT) {
        Some(n) => ensure(n >= n_psirt, format!("iterations to 1%: SIRT {n}, PSIRT {n_psirt}")),
        None => Ok(format!(
            "iterations to 1%: SIRT > {n_psirt} (e = {:.3}% after {n_psirt}), PSIRT {n_psirt}",
            100.0 * r.final_rel_discrepancy()
        )),
    }
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (vol, traj) = small_problem();
    let mut values: Vec<f64> = (0..vol.len()).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect();
    values[..5].copy_from_slice(&[0.0, -0.0, f64::MIN_POSITIVE / 4.0, f64::MAX, -1e-300]);
    let v = Volume::from_data(vol, values).unwrap();
    let p = ProjectionStack::from_data(traj, (0..traj.len()).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let vol_path = dir.path().join("v.vol");
    let prj_path = dir.path().join("p.prj");
    io::write_volume(&vol_path, &v, DType::F64).map_err(|e| e.to_string())?;
    io::write_projections(&prj_path, &p, DType::F64).map_err(|e| e.to_string())?;
    let v2 = io::read_volume(&vol_path, &vol).map_err(|e| e.to_string())?;
    let p2 = io::read_projections(&prj_path, &traj).map_err(|e| e.to_string())?;
    let bits = |a: &[f64]| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let round_trip = bits(&v.data) == bits(&v2.data) && bits(&p.data) == bits(&p2.data);

    let good = std::fs::read(&vol_path).map_err(|e| e.to_string())?;
    let corrupt = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut bytes = good.clone();
        f(&mut bytes);
        io::decode(&bytes, *b"KVOL")
    };
    let cases: Vec<(&str, bool)> = vec![
        ("bad magic", matches!(corrupt(&|b| b[0] = b'X'), Err(FormatError::BadMagic { .. }))),
        ("projection magic", matches!(io::decode(&good, *b"KPRJ"), Err(FormatError::BadMagic { .. }))),
        ("version", matches!(corrupt(&|b| b[4] = 9), Err(FormatError::UnsupportedVersion(9)))),
        ("dtype", matches!(corrupt(&|b| b[5] = 7), Err(FormatError::UnknownDtype(7)))),
        ("padding", matches!(corrupt(&|b| b[7] = 1), Err(FormatError::BadPadding))),
        ("truncated payload", matches!(corrupt(&|b| b.truncate(b.len() - 3)), Err(FormatError::Truncated { .. }))),
        ("truncated header", matches!(corrupt(&|b| b.truncate(10)), Err(FormatError::Truncated { .. }))),
        ("trailing bytes", matches!(corrupt(&|b| b.push(0)), Err(FormatError::TrailingData { .. }))),
    ];
    let failed: Vec<&str> = cases.iter().filter(|c| !c.1).map(|c| c.0).collect();
    ensure(
        round_trip && failed.is_empty(),
        format!("bitwise round trip {round_trip}; malformed-header cases not detected: {failed:?}"),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {id:>2} {tag} {name} [{secs:.1} s]: {detail}");
    outcome.is_ok()
}

fn main() {
    let start = Instant::now();
    let mut all = true;
    all &= run(1, "adjointness", criterion_1);
    all &= run(2, "dense-oracle equivalence", criterion_2);
    all &= run(7, "operator budget", criterion_7);
    all &= run(10, "format round trips", criterion_10);

    let t = Instant::now();
    let shared = catch_unwind(desk);
    println!("desk-scale CGLS and PSIRT runs: {:.1} s", t.elapsed().as_secs_f64());
    match &shared {
        Ok(d) => {
            all &= run(3, "convergence speed", || criterion_3(d));
            all &= run(4, "CGLS monotonicity", || criterion_4(d));
            all &= run(5, "delayed-residual drift", || criterion_5(d));
            all &= run(6, "CGLS-LSQR agreement", || criterion_6(d));
            all &= run(8, "box constraints", || criterion_8(d));
            all &= run(9, "SIRT vs PSIRT", || criterion_9(d));
        }
        Err(_) => {
            for (id, name) in [
                (3, "convergence speed"),
                (4, "CGLS monotonicity"),
                (5, "delayed-residual drift"),
                (6, "CGLS-LSQR agreement"),
                (8, "box constraints"),
                (9, "SIRT vs PSIRT"),
            ] {
                println!("criterion {id:>2} FAIL {name}: desk-scale setup panicked");
            }
            all = false;
        }
    }
    println!(
        "acceptance: {} ({:.1} s total, {} worker(s))",
        if all { "all criteria passed" } else { "FAILED" },
        start.elapsed().as_secs_f64(),
        default_workers()
    );
    if !all {
        std::process::exit(1);
    }
}
