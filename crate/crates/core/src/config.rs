//! Geometry config files: one `key = value` per line, `#` comments.
//!
//! ```text
//! sid_mm = 749
//! sdd_mm = 1198
//! n_views = 120
//! ...
//! ```
//!
//! Unknown keys are rejected. `start_angle_rad`, `angular_span_rad` and the
//! offsets default to `0`, `2π` and `0`; every other key is required.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_circular_trajectory, DetectorGeometry, TrajectoryGeometry, VolumeGeometry};
use crate::operator::CbctOperator;

fn full_turn() -> f64 {
    2.0 * PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub sid_mm: f64,
    pub sdd_mm: f64,
    pub n_views: usize,
    #[serde(default)]
    pub start_angle_rad: f64,
    #[serde(default = "full_turn")]
    pub angular_span_rad: f64,
    pub det_nu: usize,
    pub det_nv: usize,
    pub det_pitch_u_mm: f64,
    pub det_pitch_v_mm: f64,
    #[serde(default)]
    pub det_offset_u_mm: f64,
    #[serde(default)]
    pub det_offset_v_mm: f64,
    pub vol_nx: usize,
    pub vol_ny: usize,
    pub vol_nz: usize,
    pub vox_x_mm: f64,
    pub vox_y_mm: f64,
    pub vox_z_mm: f64,
    #[serde(default)]
    pub vol_offset_x_mm: f64,
    #[serde(default)]
    pub vol_offset_y_mm: f64,
    #[serde(default)]
    pub vol_offset_z_mm: f64,
}

/// Built-in desk-scale setup: the clinical C-arm distances with a 4× coarser
/// volume and detector so a full comparison runs on a CPU.
pub const DESK_SCALE: &str = include_str!("../data/desk.cfg");

impl GeometryConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.message().to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn desk_scale() -> Self {
        Self::parse(DESK_SCALE).expect("built-in desk config is valid")
    }

    pub fn volume_geometry(&self) -> Result<VolumeGeometry> {
        Ok(VolumeGeometry::new(
            [self.vol_nx, self.vol_ny, self.vol_nz],
            [self.vox_x_mm, self.vox_y_mm, self.vox_z_mm],
        )?
        .with_offset([self.vol_offset_x_mm, self.vol_offset_y_mm, self.vol_offset_z_mm]))
    }

    pub fn trajectory(&self) -> Result<TrajectoryGeometry> {
        let det = DetectorGeometry::new(self.det_nu, self.det_nv, [self.det_pitch_u_mm, self.det_pitch_v_mm])?
            .with_offset([self.det_offset_u_mm, self.det_offset_v_mm]);
        make_circular_trajectory(
            self.sid_mm,
            self.sdd_mm,
            self.n_views,
            self.start_angle_rad,
            self.angular_span_rad,
            det,
        )
    }

    pub fn operator(&self, workers: usize) -> Result<CbctOperator> {
        let vol = self.volume_geometry()?;
        vol.validate()?;
        CbctOperator::with_workers(vol, self.trajectory()?, workers)
    }
}
