//! Template packs: a skull-stripped template plus a keep-mask on its grid.
//!
//! Face-mask semantics are fixed: 1 = keep, 0 = remove. A pack is only
//! accepted when the keep-mask covers every foreground voxel of the
//! template, so template brain is never marked for removal.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::quickshear::quickshear_mask;
use crate::error::{Error, Result};
use crate::morphology::{apply_mask, dilate, BinaryMask};
use crate::nifti::{read_volume, write_volume};
use crate::volume::Volume;

/// Default reach of the generated face region beyond the template's
/// non-brain tissue, absorbing residual misregistration.
pub const DEFAULT_FACE_PAD_MM: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TemplatePack {
    pub template: Volume,
    pub face_mask: BinaryMask,
}

impl TemplatePack {
    pub fn new(template: Volume, face_mask: BinaryMask) -> Result<Self> {
        if !template.grid.matches(&face_mask.grid, 1e-6) {
            return Err(Error::InvalidTemplatePack(format!(
                "face mask grid {:?} differs from template grid {:?}",
                face_mask.grid.dims, template.grid.dims
            )));
        }
        let uncovered = template
            .data
            .iter()
            .zip(&face_mask.bits)
            .filter(|(&v, &k)| v != template.background && k == 0)
            .count();
        if uncovered > 0 {
            return Err(Error::InvalidTemplatePack(format!(
                "face mask removes {uncovered} template foreground voxels"
            )));
        }
        Ok(TemplatePack { template, face_mask })
    }

    pub fn load(template: impl AsRef<Path>, face_mask: impl AsRef<Path>) -> Result<Self> {
        let t = read_volume(template)?;
        let m = BinaryMask::from_volume(&read_volume(face_mask)?);
        Self::new(t, m)
    }

    pub fn save(&self, template: impl AsRef<Path>, face_mask: impl AsRef<Path>) -> Result<()> {
        write_volume(&self.template, template)?;
        write_volume(&self.face_mask.to_volume(), face_mask)
    }

    /// SHA-256 over the grid, voxel values and keep bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let g = &self.template.grid;
        for d in g.dims {
            h.update((d as u64).to_le_bytes());
        }
        for row in g.voxel_to_world.matrix() {
            for x in row {
                h.update(x.to_le_bytes());
            }
        }
        for x in &self.template.data {
            h.update(x.to_le_bytes());
        }
        h.update(&self.face_mask.bits);
        hex::encode(h.finalize())
    }
}

/// Builds a pack from a head template and its brain mask.
///
/// The stored template is the head masked to the brain. The removal region
/// is the template's non-brain tissue, dilated by `pad_mm`, restricted to the
/// face side of the QuickShear plane fitted to the template brain with
/// `buffer_mm`. A skull-stripped input has no non-brain tissue and yields an
/// all-ones keep-mask.
pub fn generate_template_pack(head: &Volume, brain: &BinaryMask, buffer_mm: f64, pad_mm: f64) -> Result<TemplatePack> {
    head.grid.ensure_matches(&brain.grid, "template brain mask")?;
    let stripped = apply_mask(head, brain)?;
    let (plane_keep, _) = quickshear_mask(brain, buffer_mm)?;
    let tissue = BinaryMask {
        grid: head.grid.clone(),
        bits: head
            .data
            .iter()
            .zip(&brain.bits)
            .map(|(&v, &b)| (v != head.background && b == 0) as u8)
            .collect(),
    };
    let reach = dilate(&tissue, pad_mm);
    let keep = BinaryMask {
        grid: head.grid.clone(),
        bits: reach
            .bits
            .iter()
            .zip(&plane_keep.bits)
            .zip(&brain.bits)
            .map(|((&r, &p), &b)| !(r != 0 && p == 0 && b == 0) as u8)
            .collect(),
    };
    TemplatePack::new(stripped, keep)
}
