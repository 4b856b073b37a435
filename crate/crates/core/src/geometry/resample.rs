//! Pull-resampling of volumes from one grid onto another.
//!
//! A target voxel `o` reads the source at voxel coordinate
//! `source.world_to_voxel(world_map(target.voxel_to_world(o)))`: the map
//! carries target world positions into source world positions. Voxel
//! indices refer to voxel centres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Grid, Volume};

use super::{AffineTransform, SINGULAR_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Required for masks and label volumes.
    Nearest,
    Trilinear,
}

/// Fractions this close to an integer snap to it, so that identity maps
/// reproduce voxel-centre values exactly.
const SNAP: f64 = 1e-9;

/// Target voxel index -> source voxel coordinate.
fn index_map(source: &Grid, target: &Grid, world_map: &AffineTransform) -> Result<AffineTransform> {
    let det = world_map.determinant();
    if !det.is_finite() || det.abs() <= SINGULAR_EPS {
        return Err(Error::SingularTransform(det));
    }
    let w2v = source.voxel_to_world.invert()?;
    Ok(w2v.compose(world_map).compose(&target.voxel_to_world))
}

/// Calls `f(linear_target_index, source_coord)` for every target voxel.
fn for_each_position(target: &Grid, map: &AffineTransform, mut f: impl FnMut(usize, [f64; 3])) {
    let [nx, ny, nz] = target.dims;
    let dx = map.apply_vector([1.0, 0.0, 0.0]);
    let mut idx = 0;
    for z in 0..nz {
        for y in 0..ny {
            let row = map.apply([0.0, y as f64, z as f64]);
            for x in 0..nx {
                let xf = x as f64;
                let c = [row[0] + dx[0] * xf, row[1] + dx[1] * xf, row[2] + dx[2] * xf];
                f(idx, c);
                idx += 1;
            }
        }
    }
}

#[inline]
fn nearest_index(c: [f64; 3], dims: [usize; 3]) -> Option<usize> {
    let mut ijk = [0usize; 3];
    for a in 0..3 {
        let r = (c[a] + 0.5).floor();
        if !(r >= 0.0 && r < dims[a] as f64) {
            return None;
        }
        ijk[a] = r as usize;
    }
    Some(ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2]))
}

/// Trilinear sample at voxel coordinate `c`; `None` outside `[0, n-1]` on any axis.
#[inline]
pub fn sample_trilinear(data: &[f64], dims: [usize; 3], c: [f64; 3]) -> Option<f64> {
    let mut base = [0usize; 3];
    let mut frac = [0f64; 3];
    for a in 0..3 {
        let hi = (dims[a] - 1) as f64;
        let v = c[a];
        if !(v >= -SNAP && v <= hi + SNAP) {
            return None;
        }
        let v = v.clamp(0.0, hi);
        let mut f0 = v.floor();
        let mut t = v - f0;
        if t < SNAP {
            t = 0.0;
        } else if t > 1.0 - SNAP {
            t = 0.0;
            f0 += 1.0;
        }
        if f0 >= hi {
            f0 = hi;
            t = 0.0;
        }
        base[a] = f0 as usize;
        frac[a] = t;
    }
    let sx = 1;
    let sy = dims[0];
    let sz = dims[0] * dims[1];
    let i0 = base[0] + sy * base[1] + sz * base[2];
    let [tx, ty, tz] = frac;
    let at = |off: usize| data[i0 + off];
    // skip neighbours whose weight is exactly zero (they may be out of range)
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let ox = if tx == 0.0 { 0 } else { sx };
    let oy = if ty == 0.0 { 0 } else { sy };
    let oz = if tz == 0.0 { 0 } else { sz };
    let c00 = lerp(at(0), at(ox), tx);
    let c10 = lerp(at(oy), at(oy + ox), tx);
    let c01 = lerp(at(oz), at(oz + ox), tx);
    let c11 = lerp(at(oz + oy), at(oz + oy + ox), tx);
    let c0 = lerp(c00, c10, ty);
    let c1 = lerp(c01, c11, ty);
    Some(lerp(c0, c1, tz))
}

/// Resamples `source` onto `target`. Samples falling outside the source
/// take `source.background`. Trilinear weights are evaluated in `f64` and the
/// result is cast back to the source storage kind.
pub fn resample(source: &Volume, target: &Grid, world_map: &AffineTransform, interp: Interpolation) -> Result<Volume> {
    let map = index_map(&source.grid, target, world_map)?;
    let mut data = vec![source.background; target.len()];
    let dims = source.grid.dims;
    match interp {
        Interpolation::Nearest => for_each_position(target, &map, |i, c| {
            if let Some(s) = nearest_index(c, dims) {
                data[i] = source.data[s];
            }
        }),
        Interpolation::Trilinear => for_each_position(target, &map, |i, c| {
            if let Some(v) = sample_trilinear(&source.data, dims, c) {
                data[i] = source.kind.cast(v);
            }
        }),
    }
    Ok(Volume {
        grid: target.clone(),
        kind: source.kind,
        data,
        background: source.background,
    })
}

/// Nearest-neighbour resampling of any dense per-voxel array (masks, labels).
pub fn resample_nearest<T: Copy>(
    source: &[T],
    source_grid: &Grid,
    target: &Grid,
    world_map: &AffineTransform,
    fill: T,
) -> Result<Vec<T>> {
    debug_assert_eq!(source.len(), source_grid.len());
    let map = index_map(source_grid, target, world_map)?;
    let mut out = vec![fill; target.len()];
    let dims = source_grid.dims;
    for_each_position(target, &map, |i, c| {
        if let Some(s) = nearest_index(c, dims) {
            out[i] = source[s];
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::DataKind;

    fn grid() -> Grid {
        Grid::centered([6, 5, 4], [1.0, 1.5, 2.0])
    }

    #[test]
    fn identity_is_a_copy() {
        let g = grid();
        let n = g.len();
        let v = Volume::new(g.clone(), DataKind::F64, (0..n).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        for interp in [Interpolation::Nearest, Interpolation::Trilinear] {
            let out = resample(&v, &g, &AffineTransform::identity(), interp).unwrap();
            assert_eq!(out.data, v.data);
        }
    }

    #[test]
    fn integer_shift_under_nearest() {
        let g = grid();
        let n = g.len();
        let v = Volume::new(g.clone(), DataKind::I16, (0..n).map(|i| i as f64 + 1.0).collect()).unwrap();
        // target world x reads source world x + 1 voxel (1 mm)
        let out = resample(&v, &g, &AffineTransform::translation([1.0, 0.0, 0.0]), Interpolation::Nearest).unwrap();
        let [nx, ny, nz] = g.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let expect = if x + 1 < nx { v.get(x + 1, y, z) } else { 0.0 };
                    assert_eq!(out.get(x, y, z), expect);
                }
            }
        }
    }

    #[test]
    fn half_voxel_shift_on_ramp() {
        let g = Grid::centered([8, 7, 6], [1.0, 1.0, 2.0]);
        let ramp = |w: [f64; 3]| 3.0 * w[0] - 2.0 * w[1] + 0.5 * w[2] + 10.0;
        let v = Volume::from_world_fn(g.clone(), DataKind::F64, ramp);
        let shift = [0.5, -0.5, 1.0];
        let out = resample(&v, &g, &AffineTransform::translation(shift), Interpolation::Trilinear).unwrap();
        let [nx, ny, nz] = g.dims;
        let mut checked = 0;
        for z in 1..nz - 1 {
            for y in 1..ny - 1 {
                for x in 1..nx - 1 {
                    let w = g.world_of([x as f64, y as f64, z as f64]);
                    let expect = ramp([w[0] + shift[0], w[1] + shift[1], w[2] + shift[2]]);
                    assert!((out.get(x, y, z) - expect).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn singular_map_rejected() {
        let g = grid();
        let v = Volume::filled(g.clone(), DataKind::U8, 1.0);
        let s = AffineTransform::scaling([1.0, 1.0, 0.0]);
        assert!(matches!(resample(&v, &g, &s, Interpolation::Nearest), Err(Error::SingularTransform(_))));
    }

    #[test]
    fn nearest_keeps_binary_values() {
        let g = grid();
        let n = g.len();
        let bits: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let m = AffineTransform::rotation_z(0.3).compose(&AffineTransform::translation([0.3, 0.2, -0.7]));
        let out = resample_nearest(&bits, &g, &g, &m, 0).unwrap();
        assert!(out.iter().all(|&b| b <= 1));
    }

    #[test]
    fn round_trip_under_rotation_on_smooth_image() {
        let g = Grid::centered([24, 24, 24], [1.0; 3]);
        let f = |w: [f64; 3]| 2.0 * w[0] + w[1] - 0.5 * w[2];
        let v = Volume::from_world_fn(g.clone(), DataKind::F64, f);
        let t = AffineTransform::rotation_z(0.2).compose(&AffineTransform::translation([0.4, -0.3, 0.25]));
        let fwd = resample(&v, &g, &t, Interpolation::Trilinear).unwrap();
        let back = resample(&fwd, &g, &t.invert().unwrap(), Interpolation::Trilinear).unwrap();
        // only voxels where both passes stayed inside the grid
        let mut n = 0;
        for z in 6..18 {
            for y in 6..18 {
                for x in 6..18 {
                    assert!((back.get(x, y, z) - v.get(x, y, z)).abs() < 1e-5);
                    n += 1;
                }
            }
        }
        assert!(n > 0);
    }
}
