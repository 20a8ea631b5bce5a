//! Helpers shared by the integration tests: small geometries and a dense
//! system matrix assembled independently of the ray caster.

#![allow(dead_code)]

use cbct::geometry::{make_circular_trajectory, DetectorGeometry, TrajectoryGeometry, Vec3, VolumeGeometry};
use cbct::LinearOperator;
use nalgebra::{DMatrix, DVector};

/// Length of the segment `p0 → p1` inside the axis-aligned box `[lo, hi]`,
/// by slab clipping.
pub fn segment_in_box(p0: Vec3, p1: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let d = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        if d[a] == 0.0 {
            if p0[a] < lo[a] || p0[a] > hi[a] {
                return 0.0;
            }
            continue;
        }
        let ta = (lo[a] - p0[a]) / d[a];
        let tb = (hi[a] - p0[a]) / d[a];
        t0 = t0.max(ta.min(tb));
        t1 = t1.min(ta.max(tb));
    }
    if t1 <= t0 {
        return 0.0;
    }
    (t1 - t0) * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Row-major dense matrix with the [`LinearOperator`] interface.
#[derive(Debug, Clone)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut a = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                a[r * cols + c] = f(r, c);
            }
        }
        Self { rows, cols, a }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.cols + c]
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.a)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply(x, &mut y);
        y
    }

    pub fn rmatvec(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.cols];
        self.apply_adjoint(y, &mut x);
        x
    }
}

impl LinearOperator for Dense {
    fn domain_dim(&self) -> usize {
        self.cols
    }

    fn range_dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.a[r * self.cols..(r + 1) * self.cols]
                .iter()
                .zip(x)
                .map(|(a, x)| a * x)
                .sum();
        }
    }

    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        x.fill(0.0);
        for (r, yr) in y.iter().enumerate() {
            for (xc, a) in x.iter_mut().zip(&self.a[r * self.cols..(r + 1) * self.cols]) {
                *xc += a * yr;
            }
        }
    }
}

/// System matrix for `vol` and `traj`, one row per detector pixel
/// (u fastest, then v, then view), built voxel by voxel.
pub fn assemble(vol: &VolumeGeometry, traj: &TrajectoryGeometry) -> Dense {
    let det = &traj.detector;
    let per_view = det.nu * det.nv;
    let mut rays = Vec::with_capacity(traj.len());
    for view in 0..traj.n_views {
        let src = traj.source_position(view).unwrap();
        for v in 0..det.nv {
            for u in 0..det.nu {
                rays.push((src, traj.detector_pixel_center(view, u, v).unwrap()));
            }
        }
    }
    assert_eq!(rays.len(), per_view * traj.n_views);
    let lo = vol.box_min();
    let p = vol.voxel_size;
    Dense::from_fn(rays.len(), vol.len(), |r, c| {
        let i = c % vol.nx;
        let j = (c / vol.nx) % vol.ny;
        let k = c / (vol.nx * vol.ny);
        let vlo = [lo[0] + i as f64 * p[0], lo[1] + j as f64 * p[1], lo[2] + k as f64 * p[2]];
        let vhi = [vlo[0] + p[0], vlo[1] + p[1], vlo[2] + p[2]];
        segment_in_box(rays[r].0, rays[r].1, vlo, vhi)
    })
}

/// 6³ volume, 8 views, 8×8 detector. The volume is slightly off-center and
/// the detector slightly shifted so no ray runs along a voxel face.
pub fn small_problem() -> (VolumeGeometry, TrajectoryGeometry) {
    let vol = VolumeGeometry::new([6, 6, 6], [2.0, 2.1, 1.9])
        .unwrap()
        .with_offset([0.37, -0.21, 0.13]);
    let det = DetectorGeometry::new(8, 8, [3.3, 3.1]).unwrap().with_offset([0.17, -0.11]);
    let traj = make_circular_trajectory(100.0, 180.0, 8, 0.1, 2.0 * std::f64::consts::PI, det).unwrap();
    (vol, traj)
}

/// Minimum-norm least-squares solution `A⁺ b` via the SVD.
pub fn pinv_solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let m = a.to_nalgebra();
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(&DVector::from_column_slice(b), 1e-10 * smax)
        .expect("SVD solve");
    x.as_slice().to_vec()
}

/// `(AᵀA + λ²I)⁻¹ Aᵀ b`
pub fn tikhonov_solve(a: &Dense, b: &[f64], lambda: f64) -> Vec<f64> {
    let m = a.to_nalgebra();
    let mut n = m.transpose() * &m;
    for i in 0..a.cols {
        n[(i, i)] += lambda * lambda;
    }
    let rhs = m.transpose() * DVector::from_column_slice(b);
    n.cholesky().expect("SPD normal matrix").solve(&rhs).as_slice().to_vec()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
