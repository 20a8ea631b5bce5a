//! The cone-beam system matrix `A`, applied without being stored.
//!
//! Row `(view, v, u)` of `A` is the ray from the view's source to the center
//! of detector pixel `(u, v)`; its entries are the intersection lengths (mm)
//! of that ray with each voxel. Projection and backprojection walk the same
//! rays with the same [`RayCaster`], so they are exact transposes.

pub mod siddon;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{TrajectoryGeometry, VolumeGeometry};
use crate::linop::LinearOperator;
use crate::phantom::Volume;
pub use siddon::RayCaster;

/// Line integrals for every view, layout u fastest, then v, then view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    pub trajectory: TrajectoryGeometry,
    pub data: Vec<f64>,
}

impl ProjectionStack {
    pub fn zeros(trajectory: TrajectoryGeometry) -> Self {
        Self::filled(trajectory, 0.0)
    }

    pub fn filled(trajectory: TrajectoryGeometry, value: f64) -> Self {
        Self {
            data: vec![value; trajectory.len()],
            trajectory,
        }
    }

    pub fn from_data(trajectory: TrajectoryGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != trajectory.len() {
            return Err(Error::GeometryMismatch(format!(
                "projection data has {} values, trajectory expects {}",
                data.len(),
                trajectory.len()
            )));
        }
        Ok(Self { trajectory, data })
    }

    pub fn view(&self, view: usize) -> &[f64] {
        let n = self.trajectory.detector.pixels_per_view();
        &self.data[view * n..(view + 1) * n]
    }
}

/// Matched Siddon projector/backprojector for one volume and trajectory.
#[derive(Clone)]
pub struct CbctOperator {
    vol_geom: VolumeGeometry,
    trajectory: TrajectoryGeometry,
    caster: RayCaster,
    workers: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl fmt::Debug for CbctOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CbctOperator")
            .field("vol_geom", &self.vol_geom)
            .field("trajectory", &self.trajectory)
            .field("workers", &self.workers)
            .finish()
    }
}

/// Worker count used when none is configured.
pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl CbctOperator {
    pub fn new(vol_geom: VolumeGeometry, trajectory: TrajectoryGeometry) -> Result<Self> {
        Self::with_workers(vol_geom, trajectory, default_workers())
    }

    /// Operator whose projections and backprojections run on `workers` threads.
    /// Results are bit-identical across runs for a fixed worker count.
    pub fn with_workers(
        vol_geom: VolumeGeometry,
        trajectory: TrajectoryGeometry,
        workers: usize,
    ) -> Result<Self> {
        vol_geom.validate()?;
        trajectory.validate()?;
        let workers = workers.max(1);
        let pool = if workers > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        Ok(Self {
            caster: RayCaster::new(&vol_geom),
            vol_geom,
            trajectory,
            workers,
            pool,
        })
    }

    pub fn vol_geom(&self) -> &VolumeGeometry {
        &self.vol_geom
    }

    pub fn trajectory(&self) -> &TrajectoryGeometry {
        &self.trajectory
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    fn check_volume(&self, x: &Volume) -> Result<()> {
        if x.geometry != self.vol_geom || x.data.len() != self.vol_geom.len() {
            return Err(Error::GeometryMismatch(format!(
                "volume {:?} does not match operator volume {:?}",
                x.geometry.dims(),
                self.vol_geom.dims()
            )));
        }
        Ok(())
    }

    fn check_projections(&self, b: &ProjectionStack) -> Result<()> {
        if b.trajectory != self.trajectory || b.data.len() != self.trajectory.len() {
            return Err(Error::GeometryMismatch(
                "projection stack does not match operator trajectory".into(),
            ));
        }
        Ok(())
    }

    /// `A x`
    pub fn project(&self, x: &Volume) -> Result<ProjectionStack> {
        self.check_volume(x)?;
        let mut out = ProjectionStack::zeros(self.trajectory);
        self.project_into(&x.data, &mut out.data);
        Ok(out)
    }

    /// `Aᵀ b`
    pub fn backproject(&self, b: &ProjectionStack) -> Result<Volume> {
        self.check_projections(b)?;
        let mut out = Volume::zeros(self.vol_geom);
        self.backproject_into(&b.data, &mut out.data);
        Ok(out)
    }

    /// Row sums of `A`: the chord length of every ray through the volume box.
    pub fn row_sums(&self) -> ProjectionStack {
        self.project(&Volume::filled(self.vol_geom, 1.0))
            .expect("operator geometry")
    }

    /// Column sums of `A`: total ray length through each voxel.
    pub fn col_sums(&self) -> Volume {
        self.backproject(&ProjectionStack::filled(self.trajectory, 1.0))
            .expect("operator geometry")
    }

    /// `diag(AᵀA)`: sum of squared intersection lengths per voxel.
    pub fn normal_diagonal(&self) -> Volume {
        let mut out = Volume::zeros(self.vol_geom);
        self.scatter(None, &mut out.data, |len, _| len * len);
        out
    }

    pub fn project_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.vol_geom.len());
        assert_eq!(y.len(), self.trajectory.len());
        let per_view = self.trajectory.detector.pixels_per_view();
        let run = |(view, out): (usize, &mut [f64])| self.project_view(view, x, out);
        match &self.pool {
            Some(pool) => pool.install(|| y.par_chunks_mut(per_view).enumerate().for_each(run)),
            None => y.chunks_mut(per_view).enumerate().for_each(run),
        }
    }

    pub fn backproject_into(&self, y: &[f64], x: &mut [f64]) {
        assert_eq!(y.len(), self.trajectory.len());
        self.scatter(Some(y), x, |len, value| len * value);
    }

    fn project_view(&self, view: usize, x: &[f64], out: &mut [f64]) {
        let det = &self.trajectory.detector;
        let frame = self.trajectory.frame(view);
        for v in 0..det.nv {
            for u in 0..det.nu {
                let [du, dv] = det.pixel_coords(u, v);
                let dst = frame.point_on_detector(du, dv);
                let mut acc = 0.0;
                self.caster.trace(frame.source, dst, |j, len| acc += len * x[j]);
                out[u + det.nu * v] = acc;
            }
        }
    }

    /// Accumulates `weight(length, pixel value)` into every voxel each ray crosses.
    ///
    /// Views are split into one contiguous block per worker; each block is
    /// accumulated privately and the partial volumes are summed in block order.
    fn scatter<W>(&self, y: Option<&[f64]>, x: &mut [f64], weight: W)
    where
        W: Fn(f64, f64) -> f64 + Sync,
    {
        assert_eq!(x.len(), self.vol_geom.len());
        let n_views = self.trajectory.n_views;
        let blocks = self.workers.min(n_views);
        let bounds = |b: usize| (b * n_views / blocks, (b + 1) * n_views / blocks);
        let accumulate = |first: usize, last: usize, acc: &mut [f64]| {
            for view in first..last {
                self.scatter_view(view, y, acc, &weight);
            }
        };

        x.fill(0.0);
        match &self.pool {
            Some(pool) if blocks > 1 => {
                let partials: Vec<Vec<f64>> = pool.install(|| {
                    (1..blocks)
                        .into_par_iter()
                        .map(|b| {
                            let (first, last) = bounds(b);
                            let mut acc = vec![0.0; x.len()];
                            accumulate(first, last, &mut acc);
                            acc
                        })
                        .collect()
                });
                let (first, last) = bounds(0);
                accumulate(first, last, x);
                for partial in &partials {
                    for (xi, pi) in x.iter_mut().zip(partial) {
                        *xi += pi;
                    }
                }
            }
            _ => accumulate(0, n_views, x),
        }
    }

    fn scatter_view<W>(&self, view: usize, y: Option<&[f64]>, acc: &mut [f64], weight: &W)
    where
        W: Fn(f64, f64) -> f64,
    {
        let det = &self.trajectory.detector;
        let per_view = det.pixels_per_view();
        let frame = self.trajectory.frame(view);
        for v in 0..det.nv {
            for u in 0..det.nu {
                let value = match y {
                    Some(y) => {
                        let value = y[view * per_view + u + det.nu * v];
                        if value == 0.0 {
                            continue;
                        }
                        value
                    }
                    None => 1.0,
                };
                let [du, dv] = det.pixel_coords(u, v);
                let dst = frame.point_on_detector(du, dv);
                self.caster
                    .trace(frame.source, dst, |j, len| acc[j] += weight(len, value));
            }
        }
    }
}

impl LinearOperator for CbctOperator {
    fn domain_dim(&self) -> usize {
        self.vol_geom.len()
    }

    fn range_dim(&self) -> usize {
        self.trajectory.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.project_into(x, y)
    }

    fn apply_adjoint(&self, y: &[f64], x: &mut [f64]) {
        self.backproject_into(y, x)
    }
}
