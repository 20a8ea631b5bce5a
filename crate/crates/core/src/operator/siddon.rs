//! Siddon traversal of a ray through a regular voxel grid.

use crate::geometry::{Vec3, VolumeGeometry};

/// Segments shorter than this (mm) are dropped.
pub const MIN_SEGMENT: f64 = 1e-12;

/// Direction components below this fraction of the voxel pitch count as parallel to the axis.
const PARALLEL_EPS: f64 = 1e-12;

/// Grid description in volume-local coordinates (corner at the origin).
#[derive(Debug, Clone, Copy)]
pub struct RayCaster {
    origin: Vec3,
    dims: [usize; 3],
    pitch: Vec3,
}

impl RayCaster {
    pub fn new(geom: &VolumeGeometry) -> Self {
        Self {
            origin: geom.box_min(),
            dims: geom.dims(),
            pitch: geom.voxel_size,
        }
    }

    /// Walks the segment from `src` to `dst` (world coordinates) and calls
    /// `visit(voxel_index, length_mm)` for each voxel it crosses, in order.
    ///
    /// Voxels own the half-open parameter interval `[entry, exit)` along the
    /// direction of travel.
    #[inline]
    pub fn trace<F: FnMut(usize, f64)>(&self, src: Vec3, dst: Vec3, mut visit: F) {
        let s = [
            src[0] - self.origin[0],
            src[1] - self.origin[1],
            src[2] - self.origin[2],
        ];
        let d = [dst[0] - src[0], dst[1] - src[1], dst[2] - src[2]];
        let ray_len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();

        let mut a_min = 0.0f64;
        let mut a_max = 1.0f64;
        let mut inv = [0.0; 3];
        let mut parallel = [false; 3];
        for a in 0..3 {
            let size = self.dims[a] as f64 * self.pitch[a];
            if d[a].abs() <= PARALLEL_EPS * self.pitch[a] {
                if s[a] < 0.0 || s[a] >= size {
                    return;
                }
                parallel[a] = true;
            } else {
                inv[a] = 1.0 / d[a];
                let t0 = (0.0 - s[a]) * inv[a];
                let t1 = (size - s[a]) * inv[a];
                a_min = a_min.max(t0.min(t1));
                a_max = a_max.min(t0.max(t1));
            }
        }
        if a_max <= a_min {
            return;
        }

        let mut idx = [0isize; 3];
        let mut step = [0isize; 3];
        // Coordinate (in voxels) of the next plane crossed along each axis.
        let mut plane = [0.0f64; 3];
        let mut next = [f64::INFINITY; 3];
        // Plane crossings left before the ray exits the grid along each axis.
        let mut remaining = [usize::MAX; 3];
        for a in 0..3 {
            let n = self.dims[a] as isize;
            if parallel[a] {
                idx[a] = ((s[a] / self.pitch[a]).floor() as isize).clamp(0, n - 1);
                continue;
            }
            let t = (s[a] + a_min * d[a]) / self.pitch[a];
            let i = if d[a] > 0.0 {
                t.floor() as isize
            } else {
                t.ceil() as isize - 1
            };
            idx[a] = i.clamp(0, n - 1);
            if d[a] > 0.0 {
                step[a] = 1;
                plane[a] = (idx[a] + 1) as f64;
                remaining[a] = (n - 1 - idx[a]) as usize;
            } else {
                step[a] = -1;
                plane[a] = idx[a] as f64;
                remaining[a] = idx[a] as usize;
            }
            next[a] = (plane[a] * self.pitch[a] - s[a]) * inv[a];
        }

        let stride = [1, self.dims[0] as isize, (self.dims[0] * self.dims[1]) as isize];
        let mut linear = idx[0] * stride[0] + idx[1] * stride[1] + idx[2] * stride[2];
        let mut a_cur = a_min;

        // The per-axis state lives in locals so the hot loop stays in registers.
        let [mut next_x, mut next_y, mut next_z] = next;
        let [mut plane_x, mut plane_y, mut plane_z] = plane;
        let [mut left_x, mut left_y, mut left_z] = remaining;
        let [step_x, step_y, step_z] = [step[0] as f64, step[1] as f64, step[2] as f64];
        let [lin_x, lin_y, lin_z] = [step[0] * stride[0], step[1] * stride[1], step[2] * stride[2]];
        let [pitch_x, pitch_y, pitch_z] = self.pitch;

        macro_rules! cross {
            ($next:ident, $plane:ident, $left:ident, $step:ident, $lin:ident, $pitch:ident, $a:expr) => {{
                let a_next = $next;
                let end = if a_next < a_max { a_next } else { a_max };
                let len = (end - a_cur) * ray_len;
                if len > MIN_SEGMENT {
                    visit(linear as usize, len);
                }
                if a_next >= a_max || $left == 0 {
                    break;
                }
                $left -= 1;
                linear += $lin;
                $plane += $step;
                $next = ($plane * $pitch - s[$a]) * inv[$a];
                if end > a_cur {
                    a_cur = end;
                }
            }};
        }

        // Ties go to the lower axis.
        loop {
            if next_x <= next_y && next_x <= next_z {
                cross!(next_x, plane_x, left_x, step_x, lin_x, pitch_x, 0);
            } else if next_y <= next_z {
                cross!(next_y, plane_y, left_y, step_y, lin_y, pitch_y, 1);
            } else {
                cross!(next_z, plane_z, left_z, step_z, lin_z, pitch_z, 2);
            }
        }
    }

    /// Length of the ray segment inside the grid's bounding box.
    pub fn chord_length(&self, src: Vec3, dst: Vec3) -> f64 {
        let mut total = 0.0;
        self.trace(src, dst, |_, len| total += len);
        total
    }
}
