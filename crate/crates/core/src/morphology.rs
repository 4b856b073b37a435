//! Binary masks and the morphology used by the pipeline: thresholding,
//! metric-radius dilation, masking, union and connected components.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DataKind, Grid, Volume};

/// A `{0,1}` mask on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub grid: Grid,
    pub bits: Vec<u8>,
}

impl BinaryMask {
    pub fn empty(grid: Grid) -> Self {
        let n = grid.len();
        BinaryMask { grid, bits: vec![0; n] }
    }

    pub fn full(grid: Grid) -> Self {
        let n = grid.len();
        BinaryMask { grid, bits: vec![1; n] }
    }

    /// Builds a mask from voxel-centre world positions.
    pub fn from_world_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> bool) -> Self {
        let mut bits = Vec::with_capacity(grid.len());
        let [nx, ny, nz] = grid.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    bits.push(f(grid.world_of([x as f64, y as f64, z as f64])) as u8);
                }
            }
        }
        BinaryMask { grid, bits }
    }

    /// Every nonzero voxel becomes 1.
    pub fn from_volume(v: &Volume) -> Self {
        BinaryMask {
            grid: v.grid.clone(),
            bits: v.data.iter().map(|&x| (x != 0.0 && !x.is_nan()) as u8).collect(),
        }
    }

    pub fn to_volume(&self) -> Volume {
        Volume {
            grid: self.grid.clone(),
            kind: DataKind::U8,
            data: self.bits.iter().map(|&b| b as f64).collect(),
            background: 0.0,
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.grid.index(x, y, z)] != 0
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            grid: self.grid.clone(),
            bits: self.bits.iter().map(|&b| (b == 0) as u8).collect(),
        }
    }

    /// `self ⊆ other` (grids assumed equal).
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| a == 0 || b != 0)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(&a, &b)| a != 0 && b != 0).count()
    }
}

/// Integer voxel offsets inside a Euclidean ball of `radius_mm`, measured in
/// world millimetres on a grid with the given spacing. The boundary is
/// inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuringBall {
    pub radius_mm: f64,
    pub spacing: [f64; 3],
    pub offsets: Vec<[i32; 3]>,
}

#[inline]
fn within_ball(d: [i64; 3], spacing: [f64; 3], r2: f64) -> bool {
    let a = d[0] as f64 * spacing[0];
    let b = d[1] as f64 * spacing[1];
    let c = d[2] as f64 * spacing[2];
    a * a + b * b + c * c <= r2
}

impl StructuringBall {
    pub fn new(radius_mm: f64, spacing: [f64; 3]) -> Self {
        let r2 = radius_mm * radius_mm;
        let ext = Self::extent_for(radius_mm, spacing);
        let mut offsets = Vec::new();
        for dz in -ext[2]..=ext[2] {
            for dy in -ext[1]..=ext[1] {
                for dx in -ext[0]..=ext[0] {
                    if within_ball([dx, dy, dz], spacing, r2) {
                        offsets.push([dx as i32, dy as i32, dz as i32]);
                    }
                }
            }
        }
        StructuringBall {
            radius_mm,
            spacing,
            offsets,
        }
    }

    fn extent_for(radius_mm: f64, spacing: [f64; 3]) -> [i64; 3] {
        spacing.map(|s| (radius_mm / s).floor() as i64 + 1)
    }

    /// Largest |offset| along each axis.
    pub fn extent(&self) -> [i32; 3] {
        let mut e = [0; 3];
        for o in &self.offsets {
            for a in 0..3 {
                e[a] = e[a].max(o[a].abs());
            }
        }
        e
    }

    /// For each `(dy, dz)` column of the ball, the half-width of its x run.
    fn row_spans(&self) -> Vec<(i64, i64, i64)> {
        let r2 = self.radius_mm * self.radius_mm;
        let ext = Self::extent_for(self.radius_mm, self.spacing);
        let mut spans = Vec::new();
        for dz in -ext[2]..=ext[2] {
            for dy in -ext[1]..=ext[1] {
                if !within_ball([0, dy, dz], self.spacing, r2) {
                    continue;
                }
                let mut w = 0;
                while within_ball([w + 1, dy, dz], self.spacing, r2) {
                    w += 1;
                }
                spans.push((dy, dz, w));
            }
        }
        spans
    }
}

/// `1` where `data > threshold`.
pub fn binarise(v: &Volume, threshold: f64) -> BinaryMask {
    BinaryMask {
        grid: v.grid.clone(),
        bits: v.data.iter().map(|&x| (x > threshold) as u8).collect(),
    }
}

/// Sets every voxel within world distance `radius_mm` (inclusive) of a
/// foreground voxel.
///
/// The ball is decomposed into x-runs: a voxel is set when, for some
/// `(dy, dz)` column of the ball, the nearest foreground voxel along x in the
/// row at `(y + dy, z + dz)` is no farther than that column's half-width.
pub fn dilate(m: &BinaryMask, radius_mm: f64) -> BinaryMask {
    if radius_mm <= 0.0 || m.is_empty() {
        // radius 0 keeps only the centre offset
        return m.clone();
    }
    let ball = StructuringBall::new(radius_mm, m.grid.spacing);
    let spans = ball.row_spans();
    let [nx, ny, nz] = m.grid.dims;
    let rowdist = row_distances(&m.bits, m.grid.dims);

    let mut out = vec![0u8; m.bits.len()];
    for z in 0..nz {
        for y in 0..ny {
            let obase = nx * (y + ny * z);
            // rows this output row can see, with their half-widths
            let rows: Vec<(usize, u32)> = spans
                .iter()
                .filter_map(|&(dy, dz, w)| {
                    let yy = y as i64 + dy;
                    let zz = z as i64 + dz;
                    if yy < 0 || zz < 0 || yy >= ny as i64 || zz >= nz as i64 {
                        return None;
                    }
                    Some((nx * (yy as usize + ny * zz as usize), w as u32))
                })
                .collect();
            for x in 0..nx {
                if rows.iter().any(|&(base, w)| rowdist[base + x] <= w) {
                    out[obase + x] = 1;
                }
            }
        }
    }
    BinaryMask {
        grid: m.grid.clone(),
        bits: out,
    }
}

/// Distance along x (in voxels) to the nearest set voxel in the same row.
fn row_distances(bits: &[u8], dims: [usize; 3]) -> Vec<u32> {
    const FAR: u32 = u32::MAX / 2;
    let nx = dims[0];
    let mut d = vec![FAR; bits.len()];
    for (row_bits, row_d) in bits.chunks_exact(nx).zip(d.chunks_exact_mut(nx)) {
        let mut last = FAR;
        for x in 0..nx {
            last = if row_bits[x] != 0 { 0 } else { last.saturating_add(1).min(FAR) };
            row_d[x] = last;
        }
        let mut last = FAR;
        for x in (0..nx).rev() {
            last = if row_bits[x] != 0 { 0 } else { last.saturating_add(1).min(FAR) };
            row_d[x] = row_d[x].min(last);
        }
    }
    d
}

/// Erosion as the dual of dilation; voxels beyond the grid edge count as
/// foreground, so the border itself does not erode.
pub fn erode(m: &BinaryMask, radius_mm: f64) -> BinaryMask {
    dilate(&m.complement(), radius_mm).complement()
}

/// Dilate then erode.
pub fn close(m: &BinaryMask, radius_mm: f64) -> BinaryMask {
    erode(&dilate(m, radius_mm), radius_mm)
}

/// Keeps `v` where the mask is set and writes `v.background` elsewhere.
pub fn apply_mask(v: &Volume, m: &BinaryMask) -> Result<Volume> {
    v.grid.ensure_matches(&m.grid, "apply_mask")?;
    let data = v
        .data
        .iter()
        .zip(&m.bits)
        .map(|(&x, &b)| if b != 0 { x } else { v.background })
        .collect();
    Ok(Volume {
        grid: v.grid.clone(),
        kind: v.kind,
        data,
        background: v.background,
    })
}

pub fn union(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    a.grid.ensure_matches(&b.grid, "union")?;
    Ok(BinaryMask {
        grid: a.grid.clone(),
        bits: a.bits.iter().zip(&b.bits).map(|(&x, &y)| ((x | y) != 0) as u8).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours.
    #[default]
    Six,
    /// Face, edge and corner neighbours.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[i64; 3]> {
        let mut v = Vec::new();
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        v.push([dx, dy, dz]);
                    }
                }
            }
        }
        v
    }
}

/// Labels connected components of set voxels in linear-index order.
/// Returns per-voxel labels (0 = unset, components numbered from 1) and the
/// size of each component.
pub(crate) fn label_components(bits: &[u8], dims: [usize; 3], conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let offsets = conn.offsets();
    let [nx, ny, nz] = dims;
    let mut labels = vec![0u32; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..bits.len() {
        if bits[seed] == 0 || labels[seed] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[seed] = label;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let x = (i % nx) as i64;
            let y = ((i / nx) % ny) as i64;
            let z = (i / (nx * ny)) as i64;
            for o in &offsets {
                let (xx, yy, zz) = (x + o[0], y + o[1], z + o[2]);
                if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                    continue;
                }
                let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                if bits[j] != 0 && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest connected component. Equal sizes resolve to the
/// component whose first voxel has the smallest linear index.
pub fn largest_connected_component(m: &BinaryMask, conn: Connectivity) -> Result<BinaryMask> {
    let (labels, sizes) = label_components(&m.bits, m.grid.dims, conn);
    if sizes.is_empty() {
        return Err(Error::EmptyMask);
    }
    // components are numbered in order of their first voxel; keep the first maximum
    let mut best = 0;
    for (i, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = i;
        }
    }
    let keep = best as u32 + 1;
    Ok(BinaryMask {
        grid: m.grid.clone(),
        bits: labels.iter().map(|&l| (l == keep) as u8).collect(),
    })
}

/// Fills background regions that do not reach the grid border.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = m.grid.dims;
    let mut outside = vec![false; m.bits.len()];
    let mut queue = VecDeque::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let border = x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1;
                let i = m.grid.index(x, y, z);
                if border && m.bits[i] == 0 {
                    outside[i] = true;
                    queue.push_back(i);
                }
            }
        }
    }
    let offsets = Connectivity::Six.offsets();
    while let Some(i) = queue.pop_front() {
        let [x, y, z] = m.grid.coords(i);
        for o in &offsets {
            let (xx, yy, zz) = (x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]);
            if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                continue;
            }
            let j = m.grid.index(xx as usize, yy as usize, zz as usize);
            if m.bits[j] == 0 && !outside[j] {
                outside[j] = true;
                queue.push_back(j);
            }
        }
    }
    BinaryMask {
        grid: m.grid.clone(),
        bits: outside.iter().map(|&o| (!o) as u8).collect(),
    }
}
