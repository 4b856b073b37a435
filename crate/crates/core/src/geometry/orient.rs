//! Axis reordering and flipping toward RAS without resampling.

use crate::error::{Error, Result};
use crate::volume::{Grid, Volume};

use super::AffineTransform;

/// Voxel-axis permutation with per-axis flips.
///
/// Output axis `i` reads input axis `perm[i]`, reversed when `flips[i]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AxisPermutation {
    pub perm: [usize; 3],
    pub flips: [bool; 3],
}

impl Default for AxisPermutation {
    fn default() -> Self {
        Self::identity()
    }
}

impl AxisPermutation {
    pub const fn identity() -> Self {
        AxisPermutation {
            perm: [0, 1, 2],
            flips: [false; 3],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn inverse(&self) -> AxisPermutation {
        let mut perm = [0; 3];
        let mut flips = [false; 3];
        for k in 0..3 {
            let j = self.perm[k];
            perm[j] = k;
            flips[j] = self.flips[k];
        }
        AxisPermutation { perm, flips }
    }

    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        self.perm.map(|p| dims[p])
    }

    /// Maps output voxel indices to input voxel indices for a grid of `dims`.
    pub fn index_map(&self, dims: [usize; 3]) -> AffineTransform {
        let mut rows = [[0.0; 4]; 3];
        for i in 0..3 {
            let p = self.perm[i];
            if self.flips[i] {
                rows[p][i] = -1.0;
                rows[p][3] = (dims[p] - 1) as f64;
            } else {
                rows[p][i] = 1.0;
            }
        }
        AffineTransform::from_rows(rows)
    }

    pub fn apply_grid(&self, grid: &Grid) -> Grid {
        Grid {
            dims: self.output_dims(grid.dims),
            spacing: self.perm.map(|p| grid.spacing[p]),
            voxel_to_world: grid.voxel_to_world.compose(&self.index_map(grid.dims)),
        }
    }

    /// Reorders a dense x-fastest array laid out on `dims`.
    pub fn apply_data<T: Copy>(&self, data: &[T], dims: [usize; 3]) -> Vec<T> {
        if self.is_identity() {
            return data.to_vec();
        }
        let od = self.output_dims(dims);
        let stride_in = [1, dims[0], dims[0] * dims[1]];
        // per output axis: (start offset, signed stride) into the input buffer
        let mut base = 0isize;
        let mut step = [0isize; 3];
        for i in 0..3 {
            let p = self.perm[i];
            let s = stride_in[p] as isize;
            if self.flips[i] {
                base += (dims[p] as isize - 1) * s;
                step[i] = -s;
            } else {
                step[i] = s;
            }
        }
        let mut out = Vec::with_capacity(data.len());
        for z in 0..od[2] {
            let oz = base + z as isize * step[2];
            for y in 0..od[1] {
                let mut off = oz + y as isize * step[1];
                for _ in 0..od[0] {
                    out.push(data[off as usize]);
                    off += step[0];
                }
            }
        }
        out
    }

    pub fn apply_volume(&self, v: &Volume) -> Volume {
        Volume {
            grid: self.apply_grid(&v.grid),
            kind: v.kind,
            data: self.apply_data(&v.data, v.grid.dims),
            background: v.background,
        }
    }
}

/// Finds the axis permutation/flips that bring `grid` closest to RAS.
pub fn canonical_permutation(grid: &Grid) -> Result<AxisPermutation> {
    let mut perm = [usize::MAX; 3];
    let mut flips = [false; 3];
    for j in 0..3 {
        let col = grid.voxel_to_world.column(j);
        let w = (0..3)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a)))
            .unwrap();
        if perm[w] != usize::MAX {
            return Err(Error::AmbiguousOrientation(perm[w], j, w));
        }
        perm[w] = j;
        flips[w] = col[w] < 0.0;
    }
    Ok(AxisPermutation { perm, flips })
}

/// Permutes and flips voxel axes so that each column of the voxel-to-world
/// linear block has its dominant entry positive and on the diagonal.
/// World coordinates of every voxel are unchanged; oblique acquisitions
/// keep their obliquity.
pub fn reorient_to_canonical(v: &Volume) -> Result<(Volume, AxisPermutation)> {
    let p = canonical_permutation(&v.grid)?;
    Ok((p.apply_volume(v), p))
}
