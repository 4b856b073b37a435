//! Twelve-parameter affine model about a fixed centre.
//!
//! `x ↦ R·S·H·(x − c) + c + t` with `R = Rz·Ry·Rx`, `S = diag(exp(s))` and
//! `H` unit upper triangular holding the shears `(xy, xz, yz)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{det3, mat3_mul, AffineTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    /// mm
    pub translation: [f64; 3],
    /// radians about x, y, z; applied as `Rz·Ry·Rx`
    pub rotation: [f64; 3],
    pub log_scale: [f64; 3],
    pub shear: [f64; 3],
    /// world-space centre for rotation, scale and shear
    pub center: [f64; 3],
}

pub const N_PARAMS: usize = 12;

impl AffineParams {
    pub fn identity(center: [f64; 3]) -> Self {
        AffineParams {
            translation: [0.0; 3],
            rotation: [0.0; 3],
            log_scale: [0.0; 3],
            shear: [0.0; 3],
            center,
        }
    }

    pub fn to_vector(&self) -> [f64; N_PARAMS] {
        let mut v = [0.0; N_PARAMS];
        v[0..3].copy_from_slice(&self.translation);
        v[3..6].copy_from_slice(&self.rotation);
        v[6..9].copy_from_slice(&self.log_scale);
        v[9..12].copy_from_slice(&self.shear);
        v
    }

    pub fn from_vector(v: &[f64; N_PARAMS], center: [f64; 3]) -> Self {
        AffineParams {
            translation: [v[0], v[1], v[2]],
            rotation: [v[3], v[4], v[5]],
            log_scale: [v[6], v[7], v[8]],
            shear: [v[9], v[10], v[11]],
            center,
        }
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        let r = |t: AffineTransform| t.linear();
        let rx = r(AffineTransform::rotation_x(self.rotation[0]));
        let ry = r(AffineTransform::rotation_y(self.rotation[1]));
        let rz = r(AffineTransform::rotation_z(self.rotation[2]));
        mat3_mul(&rz, &mat3_mul(&ry, &rx))
    }

    pub fn linear(&self) -> [[f64; 3]; 3] {
        let s = self.log_scale.map(f64::exp);
        let [hxy, hxz, hyz] = self.shear;
        let sh = [[s[0], s[0] * hxy, s[0] * hxz], [0.0, s[1], s[1] * hyz], [0.0, 0.0, s[2]]];
        mat3_mul(&self.rotation_matrix(), &sh)
    }

    pub fn to_matrix(&self) -> AffineTransform {
        let l = self.linear();
        let c = self.center;
        let mut t = [0.0; 3];
        for i in 0..3 {
            let lc: f64 = (0..3).map(|k| l[i][k] * c[k]).sum();
            t[i] = c[i] + self.translation[i] - lc;
        }
        AffineTransform::from_linear(l, t)
    }

    /// Decomposes a transform with positive determinant via QR of its linear block.
    pub fn from_matrix(m: &AffineTransform, center: [f64; 3]) -> Result<Self> {
        let l = m.linear();
        let det = det3(&l);
        if !(det > 0.0) {
            return Err(Error::SingularTransform(det));
        }
        // Gram-Schmidt on columns: l = q · u, u upper triangular with positive diagonal
        let col = |j: usize| [l[0][j], l[1][j], l[2][j]];
        let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let mut q = [[0.0; 3]; 3]; // columns
        let mut u = [[0.0; 3]; 3];
        for j in 0..3 {
            let mut v = col(j);
            for k in 0..j {
                u[k][j] = dot(&q[k], &col(j));
                for i in 0..3 {
                    v[i] -= u[k][j] * q[k][i];
                }
            }
            u[j][j] = dot(&v, &v).sqrt();
            q[j] = v.map(|x| x / u[j][j]);
        }
        // q stored as columns; r[i][j] = q[j][i]
        let r = |i: usize, j: usize| q[j][i];
        let ry = (-r(2, 0)).clamp(-1.0, 1.0).asin();
        let rx = r(2, 1).atan2(r(2, 2));
        let rz = r(1, 0).atan2(r(0, 0));
        let log_scale = [u[0][0].ln(), u[1][1].ln(), u[2][2].ln()];
        let shear = [u[0][1] / u[0][0], u[0][2] / u[0][0], u[1][2] / u[1][1]];
        let mt = m.translation_part();
        let mut translation = [0.0; 3];
        for i in 0..3 {
            let lc: f64 = (0..3).map(|k| l[i][k] * center[k]).sum();
            translation[i] = mt[i] + lc - center[i];
        }
        Ok(AffineParams {
            translation,
            rotation: [rx, ry, rz],
            log_scale,
            shear,
            center,
        })
    }

    /// Rotation angle (radians) of the rotation factor.
    pub fn rotation_angle(&self) -> f64 {
        let r = self.rotation_matrix();
        let tr = r[0][0] + r[1][1] + r[2][2];
        ((tr - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_params_give_identity() {
        let p = AffineParams::identity([10.0, -4.0, 3.0]);
        assert!(p.to_matrix().max_abs_diff(&AffineTransform::identity()) < 1e-15);
    }

    #[test]
    fn rotation_order_is_zyx() {
        let mut p = AffineParams::identity([0.0; 3]);
        p.rotation = [0.1, 0.2, 0.3];
        let expect = AffineTransform::rotation_z(0.3)
            .compose(&AffineTransform::rotation_y(0.2))
            .compose(&AffineTransform::rotation_x(0.1));
        assert!(p.to_matrix().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn centre_is_fixed_point_without_translation() {
        let c = [5.0, 6.0, -7.0];
        let mut p = AffineParams::identity(c);
        p.rotation = [0.3, -0.2, 0.5];
        p.log_scale = [0.1, -0.05, 0.02];
        p.shear = [0.1, 0.2, -0.3];
        let out = p.to_matrix().apply(c);
        for i in 0..3 {
            assert!((out[i] - c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mirror_is_rejected() {
        let m = AffineTransform::scaling([-1.0, 1.0, 1.0]);
        assert!(AffineParams::from_matrix(&m, [0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn matrix_round_trip(
            t in prop::array::uniform3(-50.0..50.0f64),
            r in prop::array::uniform3(-1.2..1.2f64),
            s in prop::array::uniform3(-0.5..0.5f64),
            h in prop::array::uniform3(-0.5..0.5f64),
            c in prop::array::uniform3(-30.0..30.0f64),
        ) {
            let p = AffineParams { translation: t, rotation: r, log_scale: s, shear: h, center: c };
            let m = p.to_matrix();
            let back = AffineParams::from_matrix(&m, c).unwrap();
            prop_assert!(back.to_matrix().max_abs_diff(&m) < 1e-9);
            for i in 0..3 {
                prop_assert!((back.rotation[i] - r[i]).abs() < 1e-9);
                prop_assert!((back.log_scale[i] - s[i]).abs() < 1e-9);
                prop_assert!((back.shear[i] - h[i]).abs() < 1e-9);
                prop_assert!((back.translation[i] - t[i]).abs() < 1e-9);
            }
            prop_assert!(m.determinant() > 0.0);
        }
    }
}
