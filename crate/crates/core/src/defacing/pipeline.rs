//! The nine-stage brain-safe defacing pipeline.
//!
//! 1. reorient to canonical voxel order
//! 2. brain mask from the configured source (binarised by the extractor)
//! 3. (folded into 2)
//! 4. dilate the mask by `margin_mm`
//! 5. mask the subject to the dilated brain
//! 6. register the masked subject to the template
//! 7. pull the template keep-mask onto the subject grid, nearest neighbour
//! 8. union with the dilated brain mask
//! 9. mask the original input in its native orientation

use serde::{Deserialize, Serialize};

use super::template::TemplatePack;
use crate::brain_extraction::{extract_brain, BrainMaskSource, ExtractionConfig};
use crate::error::{Error, Result};
use crate::geometry::{reorient_to_canonical, resample_nearest, AffineTransform, AxisPermutation};
use crate::morphology::{apply_mask, dilate, union, BinaryMask};
use crate::registration::{register_affine, RegistrationConfig, RegistrationDiagnostics};
use crate::volume::Volume;

pub const DEFAULT_MARGIN_MM: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaceConfig {
    pub margin_mm: f64,
    pub extraction: ExtractionConfig,
    pub registration: RegistrationConfig,
}

impl Default for DefaceConfig {
    fn default() -> Self {
        DefaceConfig {
            margin_mm: DEFAULT_MARGIN_MM,
            extraction: ExtractionConfig::default(),
            registration: RegistrationConfig::default(),
        }
    }
}

impl DefaceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin_mm >= 0.0 && self.margin_mm.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin_mm must be finite and nonnegative, got {}", self.margin_mm)));
        }
        self.registration.validate()
    }
}

/// Where stage 6 gets its subject-to-template transform.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformSource {
    Register,
    /// Skip registration and use this subject-world to template-world map.
    Fixed(AffineTransform),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config: DefaceConfig,
    pub brain_source: String,
    pub template_sha256: String,
    pub reorientation: AxisPermutation,
    /// subject world -> template world, row-major 4x4
    pub transform: [[f64; 4]; 4],
    pub transform_source: String,
    pub diagnostics: Option<RegistrationDiagnostics>,
    pub brain_voxels: usize,
    pub kept_voxels: usize,
    pub timestamps: Timestamps,
}

#[derive(Debug, Clone)]
pub struct DefaceResult {
    pub defaced: Volume,
    pub brain_safe_mask: BinaryMask,
    /// subject world -> template world
    pub transform: AffineTransform,
    pub provenance: Provenance,
}

fn stage<T>(index: u8, name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: index,
        name,
        source: Box::new(e),
    })
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn deface(input: &Volume, pack: &TemplatePack, brain_source: &BrainMaskSource, config: &DefaceConfig) -> Result<DefaceResult> {
    deface_with(input, pack, brain_source, config, &TransformSource::Register)
}

pub fn deface_with(
    input: &Volume,
    pack: &TemplatePack,
    brain_source: &BrainMaskSource,
    config: &DefaceConfig,
    transform: &TransformSource,
) -> Result<DefaceResult> {
    config.validate()?;
    let started = now();

    let (canonical, perm) = stage(1, "reorient", reorient_to_canonical(input))?;
    let brain = stage(2, "extract_brain", extract_brain(&canonical, brain_source, &config.extraction))?;
    let dilated = dilate(&brain, config.margin_mm);
    let loose = stage(5, "apply_mask", apply_mask(&canonical, &dilated))?;

    let (subject_to_template, diagnostics, transform_source) = match transform {
        TransformSource::Register => {
            let (t, d) = stage(6, "register", register_affine(&pack.template, &loose, &config.registration))?;
            (t, Some(d), "registered")
        }
        TransformSource::Fixed(t) => (*t, None, "fixed"),
    };

    let keep_bits = stage(
        7,
        "resample_face_mask",
        resample_nearest(&pack.face_mask.bits, &pack.face_mask.grid, &canonical.grid, &subject_to_template, 0u8),
    )?;
    let keep = BinaryMask {
        grid: canonical.grid.clone(),
        bits: keep_bits,
    };
    let safe_canonical = stage(8, "union", union(&keep, &dilated))?;

    let safe = BinaryMask {
        grid: input.grid.clone(),
        bits: perm.inverse().apply_data(&safe_canonical.bits, canonical.grid.dims),
    };
    let defaced = stage(9, "apply_mask", apply_mask(input, &safe))?;

    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        brain_source: brain_source.describe(),
        template_sha256: pack.checksum(),
        reorientation: perm,
        transform: *subject_to_template.matrix(),
        transform_source: transform_source.into(),
        diagnostics,
        brain_voxels: brain.count(),
        kept_voxels: safe.count(),
        timestamps: Timestamps { started, finished: now() },
    };
    Ok(DefaceResult {
        defaced,
        brain_safe_mask: safe,
        transform: subject_to_template,
        provenance,
    })
}
