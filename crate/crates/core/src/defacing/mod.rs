//! Brain-safe defacing and the QuickShear baseline.

mod hull;
mod pipeline;
mod quickshear;
mod template;

pub use hull::{convex_hull_2d, Point2};
pub use pipeline::{deface, deface_with, DefaceConfig, DefaceResult, Provenance, Timestamps, TransformSource, DEFAULT_MARGIN_MM};
pub use quickshear::{fit_plane, plane_keep_mask, quickshear, quickshear_mask, ShearPlane, DEFAULT_BUFFER_MM};
pub use template::{generate_template_pack, TemplatePack, DEFAULT_FACE_PAD_MM};
