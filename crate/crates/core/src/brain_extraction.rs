//! Tight brain masks from an external segmentation or a classical fallback.
//!
//! The pipeline expects a tight skull-strip. Deep-learning extractors such as
//! HD-BET are run outside this crate; their output is consumed either as a
//! binary mask or as a skull-stripped volume with zero background. The
//! built-in fallback is an Otsu threshold followed by closing, largest
//! component selection and hole filling, intended for phantoms and smoke
//! tests rather than clinical data.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::reorient_to_canonical;
use crate::morphology::{binarise, close, fill_holes, largest_connected_component, BinaryMask, Connectivity};
use crate::nifti::read_volume;
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq)]
pub enum BrainMaskSource {
    /// Binary mask file on the subject grid; every nonzero voxel is brain.
    ExternalMask(PathBuf),
    /// Skull-stripped volume on the subject grid, binarised at the threshold.
    ExternalStripped(PathBuf),
    /// Mask already in memory, on the subject's native grid.
    InMemory(BinaryMask),
    /// Built-in Otsu extractor.
    Fallback,
}

impl BrainMaskSource {
    pub fn describe(&self) -> String {
        match self {
            BrainMaskSource::ExternalMask(p) => format!("external_mask:{}", p.display()),
            BrainMaskSource::ExternalStripped(p) => format!("external_stripped:{}", p.display()),
            BrainMaskSource::InMemory(_) => "in_memory".into(),
            BrainMaskSource::Fallback => "fallback".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Binarisation threshold for stripped volumes (strictly greater than).
    pub threshold: f64,
    pub closing_radius_mm: f64,
    pub connectivity: Connectivity,
    pub otsu_bins: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            threshold: 0.0,
            closing_radius_mm: 2.0,
            connectivity: Connectivity::Six,
            otsu_bins: 256,
        }
    }
}

/// Produces a nonempty brain mask on `v`'s grid. `v` is expected to be in
/// canonical orientation; external files are reoriented the same way before
/// their grid is compared.
pub fn extract_brain(v: &Volume, source: &BrainMaskSource, config: &ExtractionConfig) -> Result<BinaryMask> {
    let mask = match source {
        BrainMaskSource::ExternalMask(path) => {
            let ext = canonical_external(path)?;
            ext.grid.ensure_matches(&v.grid, "external brain mask")?;
            BinaryMask::from_volume(&ext)
        }
        BrainMaskSource::ExternalStripped(path) => {
            let ext = canonical_external(path)?;
            ext.grid.ensure_matches(&v.grid, "external stripped volume")?;
            binarise(&ext, config.threshold)
        }
        BrainMaskSource::InMemory(m) => {
            let (as_vol, _) = reorient_to_canonical(&m.to_volume())?;
            as_vol.grid.ensure_matches(&v.grid, "in-memory brain mask")?;
            BinaryMask::from_volume(&as_vol)
        }
        BrainMaskSource::Fallback => fallback_extract(v, config)?,
    };
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

fn canonical_external(path: &PathBuf) -> Result<Volume> {
    let v = read_volume(path)?;
    Ok(reorient_to_canonical(&v)?.0)
}

/// Otsu foreground, closed, largest component, holes filled.
pub fn fallback_extract(v: &Volume, config: &ExtractionConfig) -> Result<BinaryMask> {
    let t = otsu_threshold(&v.data, config.otsu_bins).ok_or(Error::EmptyMask)?;
    let fg = binarise(v, t);
    if fg.is_empty() {
        return Err(Error::EmptyMask);
    }
    let closed = close(&fg, config.closing_radius_mm);
    let lcc = largest_connected_component(&closed, config.connectivity)?;
    Ok(fill_holes(&lcc))
}

/// Otsu's between-class-variance threshold. Returns the upper edge of the
/// best background bin, or `None` for constant input.
pub fn otsu_threshold(data: &[f64], bins: usize) -> Option<f64> {
    let bins = bins.max(2);
    let (lo, hi) = data
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return None;
    }
    let width = (hi - lo) / bins as f64;
    let mut hist = vec![0f64; bins];
    for &v in data.iter().filter(|v| v.is_finite()) {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &h) in hist.iter().enumerate().take(bins - 1) {
        w0 += h;
        sum0 += k as f64 * h;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, k);
        }
    }
    Some(lo + width * (best.1 + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nifti::write_volume;
    use crate::volume::{DataKind, Grid};

    #[test]
    fn otsu_separates_two_levels() {
        let mut data = vec![0.0; 100];
        data.extend(vec![100.0; 50]);
        let t = otsu_threshold(&data, 256).unwrap();
        assert!(t > 0.0 && t < 100.0);
        assert_eq!(otsu_threshold(&[3.0; 10], 16), None);
    }

    #[test]
    fn external_mask_is_loaded_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered([8, 8, 8], [1.0; 3]);
        let v = Volume::filled(g.clone(), DataKind::F32, 5.0);
        let m = BinaryMask::from_world_fn(g.clone(), |w| w[0] > 0.0 && w[1] < 1.0);
        let p = dir.path().join("mask.nii");
        write_volume(&m.to_volume(), &p).unwrap();
        let got = extract_brain(&v, &BrainMaskSource::ExternalMask(p), &ExtractionConfig::default()).unwrap();
        assert_eq!(got, m);
    }

    #[test]
    fn stripped_volume_support() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::centered([8, 8, 8], [1.0; 3]);
        let v = Volume::filled(g.clone(), DataKind::F32, 5.0);
        let stripped = Volume::from_world_fn(g.clone(), DataKind::F32, |w| if w[2] > 0.5 { 3.0 + w[0] * w[0] } else { 0.0 });
        let p = dir.path().join("stripped.nii.gz");
        write_volume(&stripped, &p).unwrap();
        let got = extract_brain(&v, &BrainMaskSource::ExternalStripped(p), &ExtractionConfig::default()).unwrap();
        assert_eq!(got, BinaryMask::from_volume(&stripped));
    }

    #[test]
    fn external_grid_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume::filled(Grid::centered([8, 8, 8], [1.0; 3]), DataKind::F32, 5.0);
        let other = BinaryMask::full(Grid::centered([8, 8, 9], [1.0; 3]));
        let p = dir.path().join("mask.nii");
        write_volume(&other.to_volume(), &p).unwrap();
        let err = extract_brain(&v, &BrainMaskSource::ExternalMask(p), &ExtractionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::GridMismatch(_)));
    }

    #[test]
    fn empty_and_missing() {
        let g = Grid::centered([6, 6, 6], [1.0; 3]);
        let v = Volume::filled(g.clone(), DataKind::F32, 0.0);
        let cfg = ExtractionConfig::default();
        assert!(matches!(extract_brain(&v, &BrainMaskSource::Fallback, &cfg), Err(Error::EmptyMask)));
        let src = BrainMaskSource::InMemory(BinaryMask::empty(g));
        assert!(matches!(extract_brain(&v, &src, &cfg), Err(Error::EmptyMask)));
        let missing = BrainMaskSource::ExternalMask("/nonexistent/mask.nii".into());
        assert!(matches!(extract_brain(&v, &missing, &cfg), Err(Error::Io { .. })));
    }

    /// Bright 40-voxel ball plus dim 2-voxel blobs; the fallback must recover
    /// the ball within a one-voxel shell.
    #[test]
    fn fallback_on_ball_phantom() {
        let g = Grid::centered([96, 96, 96], [1.0; 3]);
        let blobs = [[43.0, 0.0, 0.0], [-30.0, 35.0, 10.0], [30.0, -30.0, -30.0], [0.0, 0.0, 45.0]];
        let v = Volume::from_world_fn(g.clone(), DataKind::F32, |w| {
            let r2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
            if r2 <= 1600.0 {
                100.0
            } else if blobs.iter().any(|b| (0..3).map(|i| (w[i] - b[i]).powi(2)).sum::<f64>() <= 4.0) {
                15.0
            } else {
                0.0
            }
        });
        let cfg = ExtractionConfig::default();
        let m = extract_brain(&v, &BrainMaskSource::Fallback, &cfg).unwrap();
        let inner = BinaryMask::from_world_fn(g.clone(), |w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt() <= 39.0);
        let outer = BinaryMask::from_world_fn(g.clone(), |w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt() <= 41.0);
        assert!(inner.is_subset_of(&m));
        assert!(m.is_subset_of(&outer));
        let truth = BinaryMask::from_world_fn(g, |w| w[0] * w[0] + w[1] * w[1] + w[2] * w[2] <= 1600.0);
        let dsc = 2.0 * m.intersection_count(&truth) as f64 / (m.count() + truth.count()) as f64;
        assert!(dsc >= 0.98, "dice {dsc}");
        // deterministic
        assert_eq!(extract_brain(&v, &BrainMaskSource::Fallback, &cfg).unwrap(), m);
    }
}
