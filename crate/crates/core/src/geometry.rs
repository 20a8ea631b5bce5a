//! Volume grids and the circular cone-beam trajectory.
//!
//! World frame: right-handed, rotation axis `z`, the view-0 source sits on the
//! negative `x` axis. The flat detector faces the source; its `u` axis lies in
//! the rotation plane and its `v` axis points along `+z`. All lengths are mm.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Voxel grid placed in world space.
///
/// Voxel `(i, j, k)` has linear index `i + nx * (j + ny * k)` (x fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeGeometry {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub voxel_size: Vec3,
    /// Displacement of the volume center from the isocenter.
    pub center_offset: Vec3,
}

impl VolumeGeometry {
    pub fn new(dims: [usize; 3], voxel_size: Vec3) -> Result<Self> {
        let geom = Self {
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            voxel_size,
            center_offset: [0.0; 3],
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn with_offset(mut self, center_offset: Vec3) -> Self {
        self.center_offset = center_offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidGeometry(format!(
                "volume dimensions must be positive, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        if !self.voxel_size.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "voxel sizes must be positive, got {:?}",
                self.voxel_size
            )));
        }
        if !self.center_offset.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidGeometry("volume offset must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Number of voxels `n`.
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical size of the grid along each axis.
    pub fn extent(&self) -> Vec3 {
        [
            self.nx as f64 * self.voxel_size[0],
            self.ny as f64 * self.voxel_size[1],
            self.nz as f64 * self.voxel_size[2],
        ]
    }

    /// World position of the grid corner with the smallest coordinates.
    pub fn box_min(&self) -> Vec3 {
        let e = self.extent();
        [
            self.center_offset[0] - 0.5 * e[0],
            self.center_offset[1] - 0.5 * e[1],
            self.center_offset[2] - 0.5 * e[2],
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let b = self.box_min();
        [
            b[0] + (i as f64 + 0.5) * self.voxel_size[0],
            b[1] + (j as f64 + 0.5) * self.voxel_size[1],
            b[2] + (k as f64 + 0.5) * self.voxel_size[2],
        ]
    }
}

/// Flat-panel detector layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGeometry {
    /// Pixel columns.
    pub nu: usize,
    /// Pixel rows.
    pub nv: usize,
    pub pixel_size: [f64; 2],
    /// In-plane displacement of the detector from the source's orthogonal projection.
    pub principal_point_offset: [f64; 2],
}

impl DetectorGeometry {
    pub fn new(nu: usize, nv: usize, pixel_size: [f64; 2]) -> Result<Self> {
        let det = Self {
            nu,
            nv,
            pixel_size,
            principal_point_offset: [0.0; 2],
        };
        det.validate()?;
        Ok(det)
    }

    pub fn with_offset(mut self, offset: [f64; 2]) -> Self {
        self.principal_point_offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nv == 0 {
            return Err(Error::InvalidGeometry(format!(
                "detector dimensions must be positive, got {}x{}",
                self.nu, self.nv
            )));
        }
        if !self.pixel_size.iter().all(|&s| s.is_finite() && s > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "pixel sizes must be positive, got {:?}",
                self.pixel_size
            )));
        }
        if !self.principal_point_offset.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidGeometry("detector offset must be finite".into()));
        }
        Ok(())
    }

    pub fn pixels_per_view(&self) -> usize {
        self.nu * self.nv
    }

    /// Detector-plane coordinates of the center of pixel `(u, v)`.
    #[inline]
    pub fn pixel_coords(&self, u: usize, v: usize) -> [f64; 2] {
        [
            (u as f64 + 0.5 - 0.5 * self.nu as f64) * self.pixel_size[0]
                + self.principal_point_offset[0],
            (v as f64 + 0.5 - 0.5 * self.nv as f64) * self.pixel_size[1]
                + self.principal_point_offset[1],
        ]
    }
}

/// Circular source/detector trajectory around the `z` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryGeometry {
    /// Source-to-isocenter distance.
    pub sid: f64,
    /// Source-to-detector distance.
    pub sdd: f64,
    pub n_views: usize,
    pub start_angle: f64,
    pub angular_span: f64,
    pub detector: DetectorGeometry,
}

/// Source position and detector frame of one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewFrame {
    pub source: Vec3,
    pub detector_center: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
}

impl ViewFrame {
    #[inline]
    pub fn point_on_detector(&self, du: f64, dv: f64) -> Vec3 {
        [
            self.detector_center[0] + du * self.u_axis[0] + dv * self.v_axis[0],
            self.detector_center[1] + du * self.u_axis[1] + dv * self.v_axis[1],
            self.detector_center[2] + du * self.u_axis[2] + dv * self.v_axis[2],
        ]
    }
}

/// Builds a validated circular trajectory with `n_views` views spread uniformly
/// over `angular_span` starting at `start_angle`.
pub fn make_circular_trajectory(
    sid: f64,
    sdd: f64,
    n_views: usize,
    start_angle: f64,
    angular_span: f64,
    detector: DetectorGeometry,
) -> Result<TrajectoryGeometry> {
    let traj = TrajectoryGeometry {
        sid,
        sdd,
        n_views,
        start_angle,
        angular_span,
        detector,
    };
    traj.validate()?;
    Ok(traj)
}

impl TrajectoryGeometry {
    /// Full 2π scan starting at angle 0.
    pub fn full_scan(sid: f64, sdd: f64, n_views: usize, detector: DetectorGeometry) -> Result<Self> {
        make_circular_trajectory(sid, sdd, n_views, 0.0, 2.0 * PI, detector)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sid.is_finite() && self.sid > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "source-to-isocenter distance must be positive, got {}",
                self.sid
            )));
        }
        if !(self.sdd.is_finite() && self.sdd > self.sid) {
            return Err(Error::InvalidGeometry(format!(
                "source-to-detector distance {} must exceed source-to-isocenter distance {}",
                self.sdd, self.sid
            )));
        }
        if self.n_views == 0 {
            return Err(Error::InvalidGeometry("at least one view is required".into()));
        }
        if !(self.start_angle.is_finite() && self.angular_span.is_finite()) {
            return Err(Error::InvalidGeometry("trajectory angles must be finite".into()));
        }
        self.detector.validate()
    }

    /// Number of detector samples `m` over all views.
    pub fn len(&self) -> usize {
        self.detector.pixels_per_view() * self.n_views
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Magnification at the isocenter.
    pub fn magnification(&self) -> f64 {
        self.sdd / self.sid
    }

    #[inline]
    pub fn view_angle(&self, view: usize) -> f64 {
        self.start_angle + view as f64 * self.angular_span / self.n_views as f64
    }

    fn check_view(&self, view: usize) -> Result<()> {
        if view >= self.n_views {
            return Err(Error::IndexOutOfRange {
                what: "view",
                index: view,
                bound: self.n_views,
            });
        }
        Ok(())
    }

    pub fn source_position(&self, view: usize) -> Result<Vec3> {
        self.check_view(view)?;
        Ok(self.frame(view).source)
    }

    pub fn detector_pixel_center(&self, view: usize, u: usize, v: usize) -> Result<Vec3> {
        self.check_view(view)?;
        if u >= self.detector.nu {
            return Err(Error::IndexOutOfRange {
                what: "detector column",
                index: u,
                bound: self.detector.nu,
            });
        }
        if v >= self.detector.nv {
            return Err(Error::IndexOutOfRange {
                what: "detector row",
                index: v,
                bound: self.detector.nv,
            });
        }
        let [du, dv] = self.detector.pixel_coords(u, v);
        Ok(self.frame(view).point_on_detector(du, dv))
    }

    /// Source and detector frame for `view`. The caller guarantees `view < n_views`.
    pub fn frame(&self, view: usize) -> ViewFrame {
        let (sin, cos) = self.view_angle(view).sin_cos();
        let d = self.sdd - self.sid;
        ViewFrame {
            source: [-self.sid * cos, -self.sid * sin, 0.0],
            detector_center: [d * cos, d * sin, 0.0],
            u_axis: [-sin, cos, 0.0],
            v_axis: [0.0, 0.0, 1.0],
        }
    }
}
