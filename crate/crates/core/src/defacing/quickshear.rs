//! QuickShear: remove everything anterior-inferior of a plane fitted to the
//! brain's sagittal convex hull.
//!
//! The brain mask is projected along the left-right axis of the canonical
//! (RAS) grid and the 2D hull of the projection is taken. The hull edge whose
//! outward normal points most nearly anterior-inferior is pushed outward by
//! `buffer_mm` and extruded across left-right. Every brain voxel projects into
//! the hull, so with a nonnegative buffer none is ever removed.

use serde::{Deserialize, Serialize};

use super::hull::{convex_hull_2d, Point2};
use crate::error::{Error, Result};
use crate::geometry::{canonical_permutation, AxisPermutation};
use crate::morphology::{apply_mask, BinaryMask};
use crate::volume::{Grid, Volume};

pub const DEFAULT_BUFFER_MM: f64 = 5.0;

/// Cutting line in the canonical (anterior, superior) plane, in mm along the
/// canonical voxel axes. A voxel at `q` is on the face side when
/// `normal · q > offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl ShearPlane {
    fn removes(&self, q: [f64; 2]) -> bool {
        self.normal[0] * q[0] + self.normal[1] * q[1] > self.offset
    }
}

/// Fits the plane to a mask already in canonical orientation.
pub fn fit_plane(canonical_brain: &BinaryMask, buffer_mm: f64) -> Result<ShearPlane> {
    if canonical_brain.is_empty() {
        return Err(Error::EmptyMask);
    }
    let [nx, ny, nz] = canonical_brain.grid.dims;
    let mut seen = vec![false; ny * nz];
    for z in 0..nz {
        for y in 0..ny {
            seen[z * ny + y] = (0..nx).any(|x| canonical_brain.get(x, y, z));
        }
    }
    let points: Vec<Point2> = (0..ny * nz)
        .filter(|&i| seen[i])
        .map(|i| [(i % ny) as i64, (i / ny) as i64])
        .collect();
    let hull = convex_hull_2d(&points)?;

    let [_, sy, sz] = canonical_brain.grid.spacing;
    let mm = |p: Point2| [p[0] as f64 * sy, p[1] as f64 * sz];
    let face = [std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2];
    let mut best: Option<(f64, ShearPlane)> = None;
    for i in 0..hull.len() {
        let a = mm(hull[i]);
        let b = mm(hull[(i + 1) % hull.len()]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
        // counter-clockwise hull: the outward normal is the edge turned clockwise
        let normal = [e[1] / len, -e[0] / len];
        let score = normal[0] * face[0] + normal[1] * face[1];
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            // support over all vertices, padded against rounding on the edge itself
            let support = hull.iter().map(|&v| {
                let q = mm(v);
                normal[0] * q[0] + normal[1] * q[1]
            });
            let offset = support.fold(f64::NEG_INFINITY, f64::max) + buffer_mm.max(0.0) + 1e-9;
            best = Some((score, ShearPlane { normal, offset }));
        }
    }
    Ok(best.expect("hull has at least three edges").1)
}

/// Keep-mask (1 = keep) on a canonical grid for a fitted plane.
pub fn plane_keep_mask(grid: &Grid, plane: &ShearPlane) -> BinaryMask {
    let [nx, ny, nz] = grid.dims;
    let [_, sy, sz] = grid.spacing;
    let mut bits = Vec::with_capacity(grid.len());
    for z in 0..nz {
        for y in 0..ny {
            let keep = !plane.removes([y as f64 * sy, z as f64 * sz]) as u8;
            bits.extend(std::iter::repeat(keep).take(nx));
        }
    }
    BinaryMask { grid: grid.clone(), bits }
}

/// Keep-mask on the brain mask's own (possibly non-RAS) grid.
pub fn quickshear_mask(brain: &BinaryMask, buffer_mm: f64) -> Result<(BinaryMask, ShearPlane)> {
    let perm = canonical_permutation(&brain.grid)?;
    let canonical = permute_mask(brain, &perm);
    let plane = fit_plane(&canonical, buffer_mm)?;
    let keep = plane_keep_mask(&canonical.grid, &plane);
    let native = BinaryMask {
        grid: brain.grid.clone(),
        bits: perm.inverse().apply_data(&keep.bits, keep.grid.dims),
    };
    Ok((native, plane))
}

pub(crate) fn permute_mask(m: &BinaryMask, perm: &AxisPermutation) -> BinaryMask {
    BinaryMask {
        grid: perm.apply_grid(&m.grid),
        bits: perm.apply_data(&m.bits, m.grid.dims),
    }
}

/// Sets every voxel on the face side of the fitted plane to the background.
pub fn quickshear(input: &Volume, brain: &BinaryMask, buffer_mm: f64) -> Result<Volume> {
    input.grid.ensure_matches(&brain.grid, "quickshear brain mask")?;
    let (keep, _) = quickshear_mask(brain, buffer_mm)?;
    apply_mask(input, &keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AffineTransform;
    use crate::volume::DataKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sphere(grid: &Grid, c: [f64; 3], r: f64) -> BinaryMask {
        BinaryMask::from_world_fn(grid.clone(), |w| (0..3).map(|k| (w[k] - c[k]).powi(2)).sum::<f64>() <= r * r)
    }

    #[test]
    fn sphere_cut_is_anterior_inferior_and_disjoint() {
        let g = Grid::centered([32, 32, 32], [2.0; 3]);
        let brain = sphere(&g, [0.0; 3], 16.0);
        let v = Volume::filled(g.clone(), DataKind::F32, 1.0);
        let out = quickshear(&v, &brain, DEFAULT_BUFFER_MM).unwrap();
        let removed: Vec<usize> = (0..out.data.len()).filter(|&i| out.data[i] == 0.0).collect();
        assert!(!removed.is_empty());
        assert!(removed.iter().all(|&i| brain.bits[i] == 0));
        for &i in &removed {
            let [x, y, z] = g.coords(i);
            let w = g.world_of([x as f64, y as f64, z as f64]);
            // beyond the sphere plus buffer, towards +y / -z
            assert!((w[1] - w[2]) / 2f64.sqrt() > 16.0 + DEFAULT_BUFFER_MM - 2.0 * 2f64.sqrt());
        }
        // the opposite corner survives
        assert_eq!(out.get(31, 0, 31), 1.0);
        assert_eq!(out.get(16, 31, 0), 0.0);
    }

    #[test]
    fn full_mask_removes_nothing() {
        let g = Grid::centered([8, 9, 10], [1.0; 3]);
        let v = Volume::filled(g.clone(), DataKind::F32, 3.0);
        let out = quickshear(&v, &BinaryMask::full(g), 0.0).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn line_mask_is_degenerate() {
        let g = Grid::centered([8, 8, 8], [1.0; 3]);
        let mut m = BinaryMask::empty(g.clone());
        for y in 0..8 {
            m.bits[g.index(4, y, 2)] = 1;
        }
        let v = Volume::filled(g, DataKind::F32, 1.0);
        assert!(matches!(quickshear(&v, &m, 5.0), Err(Error::DegenerateHull)));
    }

    #[test]
    fn empty_mask_and_grid_mismatch() {
        let g = Grid::centered([8, 8, 8], [1.0; 3]);
        let v = Volume::filled(g.clone(), DataKind::F32, 1.0);
        assert!(matches!(quickshear(&v, &BinaryMask::empty(g), 5.0), Err(Error::EmptyMask)));
        let other = BinaryMask::full(Grid::centered([8, 8, 9], [1.0; 3]));
        assert!(matches!(quickshear(&v, &other, 5.0), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn orientation_does_not_change_the_cut() {
        let g = Grid::centered([20, 24, 22], [2.0, 2.0, 2.0]);
        let brain = sphere(&g, [1.0, -3.0, 2.0], 12.0);
        let (keep, _) = quickshear_mask(&brain, 4.0).unwrap();
        let lps = AxisPermutation { perm: [1, 0, 2], flips: [true, false, true] };
        let brain_n = permute_mask(&brain, &lps);
        let (keep_n, _) = quickshear_mask(&brain_n, 4.0).unwrap();
        assert_eq!(keep_n, permute_mask(&keep, &lps));
    }

    #[test]
    fn random_ellipsoids_keep_every_brain_voxel() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = Grid::centered([24, 24, 24], [2.0; 3]);
        for _ in 0..30 {
            let c = [0; 3].map(|_| rng.gen_range(-8.0..8.0));
            let r = [0; 3].map(|_| rng.gen_range(3.0..14.0));
            let rot = AffineTransform::rotation_z(rng.gen_range(-1.0..1.0)).compose(&AffineTransform::rotation_x(rng.gen_range(-1.0..1.0)));
            let m = BinaryMask::from_world_fn(g.clone(), |w| {
                let d = rot.apply_vector([w[0] - c[0], w[1] - c[1], w[2] - c[2]]);
                (0..3).map(|k| (d[k] / r[k]).powi(2)).sum::<f64>() <= 1.0
            });
            if let Ok((keep, _)) = quickshear_mask(&m, 0.0) {
                assert!(m.is_subset_of(&keep));
            }
        }
    }
}
