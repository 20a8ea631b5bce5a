//! Voxelized phantoms built from constant-intensity ellipsoids.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Vec3, VolumeGeometry};

const SHEPP_LOGAN_3D: &str = include_str!("../data/shepp_logan_3d.txt");

/// Attenuation values on a voxel grid, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub geometry: VolumeGeometry,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        Self::filled(geometry, 0.0)
    }

    pub fn filled(geometry: VolumeGeometry, value: f64) -> Self {
        Self {
            data: vec![value; geometry.len()],
            geometry,
        }
    }

    pub fn from_data(geometry: VolumeGeometry, data: Vec<f64>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::GeometryMismatch(format!(
                "volume data has {} values, geometry expects {}",
                data.len(),
                geometry.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.geometry.index(i, j, k)]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        crate::vecops::sum(&self.data) / self.data.len() as f64
    }
}

/// One additive ellipsoid in the normalized cube `[-1, 1]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: Vec3,
    pub semi_axes: Vec3,
    /// z-x-z Euler angles `(φ, θ, ψ)` in radians.
    pub euler_angles: Vec3,
    pub intensity: f64,
}

impl Ellipsoid {
    pub fn new(center: Vec3, semi_axes: Vec3, euler_angles: Vec3, intensity: f64) -> Result<Self> {
        if !semi_axes.iter().all(|&a| a.is_finite() && a > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "ellipsoid semi-axes must be positive, got {semi_axes:?}"
            )));
        }
        Ok(Self {
            center,
            semi_axes,
            euler_angles,
            intensity,
        })
    }

    /// Rotation taking world offsets into the ellipsoid frame.
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let [phi, theta, psi] = self.euler_angles;
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (ss, cs) = psi.sin_cos();
        [
            [cs * cp - ct * sp * ss, cs * sp + ct * cp * ss, ss * st],
            [-ss * cp - ct * sp * cs, -ss * sp + ct * cp * cs, cs * st],
            [st * sp, -st * cp, ct],
        ]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.contains_with(&self.rotation(), p)
    }

    #[inline]
    fn contains_with(&self, r: &[[f64; 3]; 3], p: Vec3) -> bool {
        let d = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let mut acc = 0.0;
        for (row, a) in r.iter().zip(self.semi_axes) {
            let q = (row[0] * d[0] + row[1] * d[1] + row[2] * d[2]) / a;
            acc += q * q;
        }
        acc <= 1.0
    }
}

/// Parses an ellipsoid table: one ellipsoid per line as ten reals
/// `cx cy cz a b c phi theta psi intensity`. Blank lines and `#` comments are skipped.
pub fn parse_ellipsoids(text: &str) -> Result<Vec<Ellipsoid>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::ConfigParse(format!("ellipsoid line {}: {e}", lineno + 1)))?;
        if values.len() != 10 {
            return Err(Error::ConfigParse(format!(
                "ellipsoid line {}: expected 10 values, found {}",
                lineno + 1,
                values.len()
            )));
        }
        out.push(Ellipsoid::new(
            [values[0], values[1], values[2]],
            [values[3], values[4], values[5]],
            [values[6], values[7], values[8]],
            values[9],
        )?);
    }
    Ok(out)
}

/// The built-in ten-ellipsoid 3D Shepp-Logan head phantom (high-contrast variant).
pub fn shepp_logan_3d() -> Vec<Ellipsoid> {
    parse_ellipsoids(SHEPP_LOGAN_3D).expect("built-in phantom table is well formed")
}

const CANCEL_EPS: f64 = 1e-12;

/// Samples the sum of `ellipsoids` at every voxel center. The normalized cube
/// is stretched over the volume's bounding box, so anisotropic voxels keep
/// the phantom's proportions.
pub fn generate_phantom(ellipsoids: &[Ellipsoid], geom: &VolumeGeometry) -> Result<Volume> {
    geom.validate()?;
    let [nx, ny, nz] = geom.dims();
    let rotations: Vec<_> = ellipsoids.iter().map(Ellipsoid::rotation).collect();
    // (2i + 1) / n - 1 is exactly antisymmetric under i -> n - 1 - i.
    let norm_coord = |i: usize, n: usize| (2 * i + 1) as f64 / n as f64 - 1.0;

    let mut data = vec![0.0; geom.len()];
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(k, slice)| {
        let z = norm_coord(k, nz);
        for j in 0..ny {
            let y = norm_coord(j, ny);
            for i in 0..nx {
                let p = [norm_coord(i, nx), y, z];
                let mut acc = 0.0;
                for (e, r) in ellipsoids.iter().zip(&rotations) {
                    if e.contains_with(r, p) {
                        acc += e.intensity;
                    }
                }
                // Cancelling intensities such as 1 - 0.8 - 0.2 leave rounding noise.
                slice[i + nx * j] = if acc.abs() < CANCEL_EPS { 0.0 } else { acc };
            }
        }
    });
    Ok(Volume {
        geometry: *geom,
        data,
    })
}
