//! Binary volume/projection files and 8-bit slice export.
//!
//! Both binary formats share a 20-byte little-endian header:
//!
//! | bytes | field                                        |
//! |-------|----------------------------------------------|
//! | 0..4  | magic, `KVOL` or `KPRJ`                      |
//! | 4     | version, `1`                                 |
//! | 5     | dtype, `0` = f32, `1` = f64                  |
//! | 6..8  | zero padding                                 |
//! | 8..20 | three `u32` dimensions                       |
//!
//! followed by the samples, little-endian, in the in-memory layout
//! (x fastest for volumes, u fastest then v then view for projections).
//! Geometry lives in the config file, not here.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::geometry::{TrajectoryGeometry, VolumeGeometry};
use crate::operator::ProjectionStack;
use crate::phantom::Volume;

pub const VOLUME_MAGIC: [u8; 4] = *b"KVOL";
pub const PROJECTION_MAGIC: [u8; 4] = *b"KPRJ";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;

/// Sample precision on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, FormatError> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileHeader {
    pub magic: [u8; 4],
    pub dtype: DType,
    pub dims: [u32; 3],
}

impl FileHeader {
    pub fn sample_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN as u64 + self.sample_count() * self.dtype.size() as u64
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&self.magic);
        h[4] = FORMAT_VERSION;
        h[5] = self.dtype.code();
        for (k, d) in self.dims.iter().enumerate() {
            h[8 + 4 * k..12 + 4 * k].copy_from_slice(&d.to_le_bytes());
        }
        h
    }

    fn decode(bytes: &[u8], magic: [u8; 4]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::Truncated {
                expected: HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let found: [u8; 4] = bytes[0..4].try_into().unwrap();
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found,
            });
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion(bytes[4]));
        }
        let dtype = DType::from_code(bytes[5])?;
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(FormatError::BadPadding);
        }
        let dim = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap());
        Ok(Self {
            magic,
            dtype,
            dims: [dim(0), dim(1), dim(2)],
        })
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidGeometry(format!("{what} {v} does not fit in u32")))
}

fn write_file(path: &Path, header: FileHeader, data: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header.encode())?;
    match header.dtype {
        DType::F64 => {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        DType::F32 => {
            for v in data {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a whole file image into its header and samples.
pub fn decode(bytes: &[u8], magic: [u8; 4]) -> Result<(FileHeader, Vec<f64>), FormatError> {
    let header = FileHeader::decode(bytes, magic)?;
    let expected = header.file_len();
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(FormatError::Truncated { expected, actual });
    }
    if actual > expected {
        return Err(FormatError::TrailingData { expected, actual });
    }
    let payload = &bytes[HEADER_LEN..];
    let data = match header.dtype {
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok((header, data))
}

fn read_file(path: &Path, magic: [u8; 4]) -> Result<(FileHeader, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode(&bytes, magic)?)
}

pub fn write_volume(path: impl AsRef<Path>, vol: &Volume, dtype: DType) -> Result<()> {
    let g = &vol.geometry;
    let header = FileHeader {
        magic: VOLUME_MAGIC,
        dtype,
        dims: [to_u32(g.nx, "nx")?, to_u32(g.ny, "ny")?, to_u32(g.nz, "nz")?],
    };
    write_file(path.as_ref(), header, &vol.data)
}

/// Reads a volume file; returns its header and samples (x fastest).
pub fn read_volume_raw(path: impl AsRef<Path>) -> Result<(FileHeader, Vec<f64>)> {
    read_file(path.as_ref(), VOLUME_MAGIC)
}

/// Reads a volume whose dimensions must agree with `geometry`.
pub fn read_volume(path: impl AsRef<Path>, geometry: &VolumeGeometry) -> Result<Volume> {
    let (header, data) = read_volume_raw(path)?;
    let expected = geometry.dims().map(|d| d as u64);
    let found = header.dims.map(u64::from);
    if expected != found {
        return Err(Error::GeometryMismatch(format!(
            "volume file is {}x{}x{}, geometry expects {}x{}x{}",
            found[0], found[1], found[2], expected[0], expected[1], expected[2]
        )));
    }
    Volume::from_data(*geometry, data)
}

pub fn write_projections(path: impl AsRef<Path>, prj: &ProjectionStack, dtype: DType) -> Result<()> {
    let t = &prj.trajectory;
    let header = FileHeader {
        magic: PROJECTION_MAGIC,
        dtype,
        dims: [
            to_u32(t.detector.nu, "nu")?,
            to_u32(t.detector.nv, "nv")?,
            to_u32(t.n_views, "n_views")?,
        ],
    };
    write_file(path.as_ref(), header, &prj.data)
}

pub fn read_projections_raw(path: impl AsRef<Path>) -> Result<(FileHeader, Vec<f64>)> {
    read_file(path.as_ref(), PROJECTION_MAGIC)
}

/// Reads projections whose dimensions must agree with `trajectory`.
pub fn read_projections(path: impl AsRef<Path>, trajectory: &TrajectoryGeometry) -> Result<ProjectionStack> {
    let (header, data) = read_projections_raw(path)?;
    let expected = [trajectory.detector.nu, trajectory.detector.nv, trajectory.n_views].map(|d| d as u64);
    let found = header.dims.map(u64::from);
    if expected != found {
        return Err(Error::GeometryMismatch(format!(
            "projection file is {}x{}x{}, trajectory expects {}x{}x{}",
            found[0], found[1], found[2], expected[0], expected[1], expected[2]
        )));
    }
    ProjectionStack::from_data(*trajectory, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceAxis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(SliceAxis::X),
            "y" | "Y" => Ok(SliceAxis::Y),
            "z" | "Z" => Ok(SliceAxis::Z),
            other => Err(Error::InvalidConfig(format!("unknown slice axis '{other}'"))),
        }
    }
}

/// Maps `value` from `[lo, hi]` to `0..=255`, rounding half up and clamping.
pub fn window_to_u8(value: f64, lo: f64, hi: f64) -> u8 {
    let t = ((value - lo) / (hi - lo) * 255.0 + 0.5).floor();
    if t.is_nan() {
        0
    } else {
        t.clamp(0.0, 255.0) as u8
    }
}

/// Windowed slice as a row-major 8-bit image, `(width, height, pixels)`.
///
/// Image axes: z-slices are `x` across and `y` down; x-slices are `y` across
/// and `z` down; y-slices are `x` across and `z` down.
pub fn slice_image(vol: &Volume, axis: SliceAxis, index: usize, window: (f64, f64)) -> Result<(usize, usize, Vec<u8>)> {
    let g = &vol.geometry;
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidConfig(format!("window requires lo < hi, got [{lo}, {hi}]")));
    }
    let bound = match axis {
        SliceAxis::X => g.nx,
        SliceAxis::Y => g.ny,
        SliceAxis::Z => g.nz,
    };
    if index >= bound {
        return Err(Error::IndexOutOfRange {
            what: "slice",
            index,
            bound,
        });
    }
    let (width, height) = match axis {
        SliceAxis::X => (g.ny, g.nz),
        SliceAxis::Y => (g.nx, g.nz),
        SliceAxis::Z => (g.nx, g.ny),
    };
    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let v = match axis {
                SliceAxis::X => vol.get(index, col, row),
                SliceAxis::Y => vol.get(col, index, row),
                SliceAxis::Z => vol.get(col, row, index),
            };
            pixels.push(window_to_u8(v, lo, hi));
        }
    }
    Ok((width, height, pixels))
}

/// Writes one slice as a binary (P5) PGM with values windowed to `[lo, hi]`.
pub fn export_slice_pgm(
    vol: &Volume,
    axis: SliceAxis,
    index: usize,
    window: (f64, f64),
    path: impl AsRef<Path>,
) -> Result<()> {
    let (width, height, pixels) = slice_image(vol, axis, index, window)?;
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}
