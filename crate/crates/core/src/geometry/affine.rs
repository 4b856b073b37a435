//! 4x4 homogeneous affine transforms in world millimetres.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Determinant magnitude below which a linear block is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// Homogeneous affine map, row-major, last row fixed at `(0, 0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    m: [[f64; 4]; 4],
}

impl Default for AffineTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl AffineTransform {
    pub const fn identity() -> Self {
        Self {
            m: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    /// Builds a transform from the top three rows; the last row is forced to `(0,0,0,1)`.
    pub fn from_rows(rows: [[f64; 4]; 3]) -> Self {
        let mut m = Self::identity().m;
        m[..3].copy_from_slice(&rows);
        Self { m }
    }

    pub fn from_linear(linear: [[f64; 3]; 3], translation: [f64; 3]) -> Self {
        let mut rows = [[0.0; 4]; 3];
        for i in 0..3 {
            rows[i][..3].copy_from_slice(&linear[i]);
            rows[i][3] = translation[i];
        }
        Self::from_rows(rows)
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self::from_linear(IDENTITY3, t)
    }

    pub fn scaling(s: [f64; 3]) -> Self {
        Self::from_linear([[s[0], 0.0, 0.0], [0.0, s[1], 0.0], [0.0, 0.0, s[2]]], [0.0; 3])
    }

    pub fn rotation_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_linear([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]], [0.0; 3])
    }

    pub fn rotation_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_linear([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]], [0.0; 3])
    }

    pub fn rotation_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::from_linear([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], [0.0; 3])
    }

    pub fn matrix(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn linear(&self) -> [[f64; 3]; 3] {
        let mut l = [[0.0; 3]; 3];
        for (i, row) in l.iter_mut().enumerate() {
            row.copy_from_slice(&self.m[i][..3]);
        }
        l
    }

    pub fn translation_part(&self) -> [f64; 3] {
        [self.m[0][3], self.m[1][3], self.m[2][3]]
    }

    /// Column `j` of the linear block.
    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.m[0][j], self.m[1][j], self.m[2][j]]
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.linear())
    }

    /// `compose(a, b)` maps `x` to `a(b(x))`.
    pub fn compose(&self, inner: &AffineTransform) -> AffineTransform {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.m[i][k] * inner.m[k][j]).sum();
            }
        }
        AffineTransform { m: out }
    }

    pub fn invert(&self) -> Result<AffineTransform> {
        let l = self.linear();
        let det = det3(&l);
        if !det.is_finite() || det.abs() <= SINGULAR_EPS {
            return Err(Error::SingularTransform(det));
        }
        let inv = inv3(&l, det);
        let t = self.translation_part();
        let mut nt = [0.0; 3];
        for i in 0..3 {
            nt[i] = -(inv[i][0] * t[0] + inv[i][1] * t[1] + inv[i][2] * t[2]);
        }
        Ok(AffineTransform::from_linear(inv, nt))
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + m[0][3],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + m[1][3],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + m[2][3],
        ]
    }

    /// Applies only the linear block (direction vectors).
    pub fn apply_vector(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &AffineTransform) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        d
    }

    /// Serializes as four whitespace-separated rows.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AffineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.m {
            // {:e} keeps full precision in a fixed-width-agnostic form
            writeln!(f, "{:.17e} {:.17e} {:.17e} {:.17e}", row[0], row[1], row[2], row[3])?;
        }
        Ok(())
    }
}

impl FromStr for AffineTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<&str> = s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if rows.len() != 4 {
            return Err(Error::Parse(format!("expected 4 matrix rows, found {}", rows.len())));
        }
        let mut m = [[0.0; 4]; 4];
        for (i, line) in rows.iter().enumerate() {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|e| Error::Parse(format!("row {i}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("row {i}: expected 4 values, found {}", vals.len())));
            }
            m[i].copy_from_slice(&vals);
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Parse("last row must be 0 0 0 1".into()));
        }
        Ok(AffineTransform { m })
    }
}

pub(crate) const IDENTITY3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

pub(crate) fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inv3(a: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let r = 1.0 / det;
    [
        [
            (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * r,
            (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * r,
            (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * r,
        ],
        [
            (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * r,
            (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * r,
            (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * r,
        ],
        [
            (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * r,
            (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * r,
            (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * r,
        ],
    ]
}

pub(crate) fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}
