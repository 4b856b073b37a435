//! In-memory scalar volumes on a voxel grid.
//!
//! Voxel data is stored x-fastest: linear index `x + nx * (y + ny * z)`.
//! Intensities are held as `f64`, which represents every value of the five
//! supported storage kinds exactly; [`DataKind`] records the kind the values
//! came from so writers can cast back losslessly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;

/// Relative tolerance between spacing and affine column norms.
pub const SPACING_RTOL: f64 = 1e-4;

/// Storage element kind of a volume's voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::U8 => "u8",
            DataKind::I16 => "i16",
            DataKind::I32 => "i32",
            DataKind::F32 => "f32",
            DataKind::F64 => "f64",
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, DataKind::U8 | DataKind::I16 | DataKind::I32)
    }

    /// Inclusive representable range for integer kinds.
    pub fn integer_range(self) -> Option<(f64, f64)> {
        match self {
            DataKind::U8 => Some((0.0, u8::MAX as f64)),
            DataKind::I16 => Some((i16::MIN as f64, i16::MAX as f64)),
            DataKind::I32 => Some((i32::MIN as f64, i32::MAX as f64)),
            _ => None,
        }
    }

    /// Casts a computed value to this kind: round-half-to-even and clamp for
    /// integers, f32 rounding for `F32`.
    pub fn cast(self, v: f64) -> f64 {
        match self {
            DataKind::F64 => v,
            DataKind::F32 => v as f32 as f64,
            _ => {
                let (lo, hi) = self.integer_range().unwrap();
                if v.is_nan() {
                    0.0
                } else {
                    v.round_ties_even().clamp(lo, hi)
                }
            }
        }
    }
}

/// Voxel grid geometry: dimensions, spacing and voxel-to-world affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub voxel_to_world: AffineTransform,
}

impl Grid {
    /// Builds a grid whose spacing is derived from the affine column norms.
    pub fn new(dims: [usize; 3], voxel_to_world: AffineTransform) -> Result<Self> {
        let spacing = column_norms(&voxel_to_world);
        let grid = Grid {
            dims,
            spacing,
            voxel_to_world,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Axis-aligned grid with the given spacing and world origin at voxel 0.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        let v2w = AffineTransform::translation(origin).compose(&AffineTransform::scaling(spacing));
        Grid {
            dims,
            spacing,
            voxel_to_world: v2w,
        }
    }

    /// Axis-aligned grid whose centre voxel position sits at the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let origin = [0, 1, 2].map(|i| -(dims[i] as f64 - 1.0) * 0.5 * spacing[i]);
        Self::axis_aligned(dims, spacing, origin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::UnsupportedDims(format!("zero-length axis in {:?}", self.dims)));
        }
        let norms = column_norms(&self.voxel_to_world);
        for i in 0..3 {
            let s = self.spacing[i];
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("spacing[{i}] = {s} must be positive")));
            }
            if (norms[i] - s).abs() > SPACING_RTOL * s {
                return Err(Error::InvalidConfig(format!(
                    "spacing[{i}] = {s} disagrees with affine column norm {}",
                    norms[i]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    pub fn world_of(&self, ijk: [f64; 3]) -> [f64; 3] {
        self.voxel_to_world.apply(ijk)
    }

    /// Grids are considered the same when dims match exactly and spacing and
    /// affine agree within `tol`.
    pub fn matches(&self, other: &Grid, tol: f64) -> bool {
        self.dims == other.dims
            && (0..3).all(|i| (self.spacing[i] - other.spacing[i]).abs() <= tol)
            && self.voxel_to_world.max_abs_diff(&other.voxel_to_world) <= tol
    }

    pub(crate) fn ensure_matches(&self, other: &Grid, what: &str) -> Result<()> {
        if self.matches(other, GRID_TOL) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: dims {:?} vs {:?}, spacing {:?} vs {:?}",
                self.dims, other.dims, self.spacing, other.spacing
            )))
        }
    }
}

pub(crate) const GRID_TOL: f64 = 1e-6;

pub(crate) fn column_norms(t: &AffineTransform) -> [f64; 3] {
    [0, 1, 2].map(|j| {
        let c = t.column(j);
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    })
}

/// A 3D scalar image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub grid: Grid,
    pub kind: DataKind,
    pub data: Vec<f64>,
    /// Value written into removed voxels and used for out-of-bounds samples.
    pub background: f64,
}

impl Volume {
    pub fn new(grid: Grid, kind: DataKind, data: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if data.len() != grid.len() {
            return Err(Error::CorruptFile(format!(
                "data length {} does not match grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        Ok(Volume {
            grid,
            kind,
            data,
            background: 0.0,
        })
    }

    pub fn filled(grid: Grid, kind: DataKind, value: f64) -> Self {
        let n = grid.len();
        Volume {
            grid,
            kind,
            data: vec![value; n],
            background: 0.0,
        }
    }

    /// Evaluates `f` at every voxel's world-space centre.
    pub fn from_world_fn(grid: Grid, kind: DataKind, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        let [nx, ny, nz] = grid.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let w = grid.world_of([x as f64, y as f64, z as f64]);
                    data.push(kind.cast(f(w)));
                }
            }
        }
        Volume {
            grid,
            kind,
            data,
            background: 0.0,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    pub fn voxel_to_world(&self) -> &AffineTransform {
        &self.grid.voxel_to_world
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    /// Smallest and largest finite value.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
