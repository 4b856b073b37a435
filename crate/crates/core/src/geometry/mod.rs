//! Affine algebra, canonical reorientation and grid-to-grid resampling.

mod affine;
mod orient;
mod resample;

pub use affine::{AffineTransform, SINGULAR_EPS};
pub(crate) use affine::{det3, mat3_mul};
pub use orient::{canonical_permutation, reorient_to_canonical, AxisPermutation};
pub use resample::{resample, resample_nearest, sample_trilinear, Interpolation};
