//! Gaussian smoothing for the resolution pyramid.

use crate::volume::{DataKind, Volume};

/// Separable Gaussian blur with `sigma_mm` in world units. Kernels are
/// truncated at 3 sigma and renormalised at the grid edges.
pub fn smooth(v: &Volume, sigma_mm: f64) -> Volume {
    if sigma_mm <= 0.0 {
        return v.clone();
    }
    let mut data = v.data.clone();
    let dims = v.grid.dims;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    for axis in 0..3 {
        let sigma = sigma_mm / v.grid.spacing[axis];
        if sigma < 1e-3 {
            continue;
        }
        let radius = (3.0 * sigma).ceil() as i64;
        let kernel: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
        let n = dims[axis];
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for a in 0..dims[o1] {
            for b in 0..dims[o2] {
                let base = a * strides[o1] + b * strides[o2];
                line.clear();
                line.extend((0..n).map(|i| data[base + i * stride]));
                for i in 0..n {
                    let (mut acc, mut wsum) = (0.0, 0.0);
                    for (k, w) in kernel.iter().enumerate() {
                        let j = i as i64 + k as i64 - radius;
                        if j >= 0 && (j as usize) < n {
                            acc += w * line[j as usize];
                            wsum += w;
                        }
                    }
                    data[base + i * stride] = acc / wsum;
                }
            }
        }
    }
    Volume {
        grid: v.grid.clone(),
        kind: DataKind::F64,
        data,
        background: v.background,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Grid;

    #[test]
    fn smoothing_preserves_constants_and_linear_ramps_inside() {
        let g = Grid::centered([20, 20, 20], [1.0, 2.0, 1.5]);
        let c = Volume::filled(g.clone(), DataKind::F32, 4.0);
        assert!(smooth(&c, 3.0).data.iter().all(|&x| (x - 4.0).abs() < 1e-12));
        let ramp = Volume::from_world_fn(g.clone(), DataKind::F64, |w| w[0]);
        let s = smooth(&ramp, 1.0);
        for x in 4..16 {
            assert!((s.get(x, 10, 10) - ramp.get(x, 10, 10)).abs() < 1e-9);
        }
    }
}
