//! Overlap metrics, single-atlas label propagation and the batch QC report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::brain_extraction::{extract_brain, BrainMaskSource, ExtractionConfig};
use crate::error::{Error, Result};
use crate::geometry::{reorient_to_canonical, resample_nearest, AffineTransform};
use crate::morphology::BinaryMask;
use crate::volume::{Grid, Volume};

pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.99;

/// Dense integer labels on a grid; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub grid: Grid,
    pub labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} labels for a grid of {} voxels", labels.len(), grid.len())));
        }
        Ok(LabelVolume { grid, labels })
    }

    /// Rounds each voxel to the nearest nonnegative integer.
    pub fn from_volume(v: &Volume) -> Result<Self> {
        let labels = v
            .data
            .iter()
            .map(|&x| {
                let r = x.round();
                if r >= 0.0 && r <= u32::MAX as f64 {
                    Ok(r as u32)
                } else {
                    Err(Error::Parse(format!("label value {x} is not a nonnegative integer")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(LabelVolume { grid: v.grid.clone(), labels })
    }

    pub fn mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            grid: self.grid.clone(),
            bits: self.labels.iter().map(|&l| (l == label) as u8).collect(),
        }
    }
}

/// `2|A∩B| / (|A| + |B|)`.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.grid.ensure_matches(&b.grid, "dice")?;
    let (na, nb) = (a.count(), b.count());
    if na + nb == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(2.0 * a.intersection_count(b) as f64 / (na + nb) as f64)
}

/// Per-label Dice over every nonzero label present in either volume.
pub fn multilabel_dice(a: &LabelVolume, b: &LabelVolume) -> Result<BTreeMap<u32, f64>> {
    a.grid.ensure_matches(&b.grid, "multilabel_dice")?;
    // label -> (|A|, |B|, |A∩B|)
    let mut counts: BTreeMap<u32, (u64, u64, u64)> = BTreeMap::new();
    for (&la, &lb) in a.labels.iter().zip(&b.labels) {
        if la != 0 {
            let e = counts.entry(la).or_default();
            e.0 += 1;
            if la == lb {
                e.2 += 1;
            }
        }
        if lb != 0 {
            counts.entry(lb).or_default().1 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(l, (na, nb, both))| (l, 2.0 * both as f64 / (na + nb) as f64))
        .collect())
}

/// Nearest-neighbour pull of atlas labels onto `subject_grid`; voxels that
/// fall outside the atlas get 0.
pub fn propagate_labels(atlas: &LabelVolume, atlas_to_subject: &AffineTransform, subject_grid: &Grid) -> Result<LabelVolume> {
    let subject_to_atlas = atlas_to_subject.invert()?;
    let labels = resample_nearest(&atlas.labels, &atlas.grid, subject_grid, &subject_to_atlas, 0u32)?;
    Ok(LabelVolume {
        grid: subject_grid.clone(),
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QcStatus {
    Ok,
    Flagged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcEntry {
    pub id: String,
    pub dice: Option<f64>,
    pub status: QcStatus,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub items: Vec<QcEntry>,
    /// over items with a Dice value
    pub mean: f64,
    /// population standard deviation (divisor n)
    pub std: f64,
    pub n: usize,
    pub threshold: f64,
    pub flagged: usize,
    pub failed: usize,
}

impl QcReport {
    /// Aggregates per-item outcomes in the given order.
    pub fn from_outcomes(outcomes: Vec<(String, Result<f64>)>, threshold: f64) -> QcReport {
        let items: Vec<QcEntry> = outcomes
            .into_iter()
            .map(|(id, r)| match r {
                Ok(d) => QcEntry {
                    id,
                    dice: Some(d),
                    status: if d < threshold { QcStatus::Flagged } else { QcStatus::Ok },
                    error: None,
                },
                Err(e) => QcEntry {
                    id,
                    dice: None,
                    status: QcStatus::Failed,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let values: Vec<f64> = items.iter().filter_map(|e| e.dice).collect();
        let n = values.len();
        let (mean, std) = if n == 0 {
            (0.0, 0.0)
        } else {
            let m = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n as f64;
            (m, var.sqrt())
        };
        let count = |s: QcStatus| items.iter().filter(|e| e.status == s).count();
        QcReport {
            flagged: count(QcStatus::Flagged),
            failed: count(QcStatus::Failed),
            items,
            mean,
            std,
            n,
            threshold,
        }
    }

    /// No item flagged or failed.
    pub fn passed(&self) -> bool {
        self.flagged == 0 && self.failed == 0
    }

    pub fn to_text(&self) -> String {
        let width = self.items.iter().map(|e| e.id.len()).max().unwrap_or(2).max(2);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:<7}  note", "id", "dice", "status");
        for e in &self.items {
            let d = e.dice.map_or("-".to_string(), |d| format!("{d:.6}"));
            let status = match e.status {
                QcStatus::Ok => "ok",
                QcStatus::Flagged => "FLAGGED",
                QcStatus::Failed => "FAILED",
            };
            let _ = writeln!(out, "{:<width$}  {:>8}  {:<7}  {}", e.id, d, status, e.error.as_deref().unwrap_or(""));
        }
        let _ = writeln!(
            out,
            "n={} mean={:.6} std={:.6} (population) threshold={} flagged={} failed={}",
            self.n, self.mean, self.std, self.threshold, self.flagged, self.failed
        );
        out
    }
}

#[derive(Debug, Clone)]
pub struct QcItem {
    pub id: String,
    pub original: Volume,
    pub defaced: Volume,
}

/// Dice between the brain masks extracted from the original and the defaced
/// volume with the same extractor.
pub fn pair_dice(original: &Volume, defaced: &Volume, source: &BrainMaskSource, config: &ExtractionConfig) -> Result<f64> {
    original.grid.ensure_matches(&defaced.grid, "qc pair")?;
    let (a, _) = reorient_to_canonical(original)?;
    let (b, _) = reorient_to_canonical(defaced)?;
    let ma = extract_brain(&a, source, config)?;
    let mb = extract_brain(&b, source, config)?;
    dice(&ma, &mb)
}

pub fn qc_report(items: &[QcItem], source: &BrainMaskSource, config: &ExtractionConfig, threshold: f64) -> Result<QcReport> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("qc needs at least one item".into()));
    }
    let outcomes = items
        .par_iter()
        .map(|it| (it.id.clone(), pair_dice(&it.original, &it.defaced, source, config)))
        .collect();
    Ok(QcReport::from_outcomes(outcomes, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::DataKind;
    use proptest::prelude::*;

    fn grid() -> Grid {
        Grid::centered([6, 5, 4], [1.0; 3])
    }

    fn mask_from(bits: &[u8]) -> BinaryMask {
        BinaryMask { grid: grid(), bits: bits.to_vec() }
    }

    fn padded(ones: &[usize]) -> BinaryMask {
        let mut m = BinaryMask::empty(grid());
        for &i in ones {
            m.bits[i] = 1;
        }
        m
    }

    #[test]
    fn dice_examples() {
        let a = padded(&[0, 1, 2, 3, 4, 5]);
        let b = padded(&[3, 4, 5, 6]);
        assert_eq!(dice(&a, &b).unwrap(), 0.6);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&padded(&[0]), &padded(&[1])).unwrap(), 0.0);
        assert!(matches!(dice(&padded(&[]), &padded(&[])), Err(Error::BothEmpty)));
        let other = BinaryMask::full(Grid::centered([2, 2, 2], [1.0; 3]));
        assert!(matches!(dice(&a, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn multilabel_against_brute_force_tally() {
        let g = grid();
        let n = g.len();
        let a: Vec<u32> = (0..n).map(|i| (i % 4) as u32).collect();
        let b: Vec<u32> = (0..n).map(|i| ((i / 3) % 4) as u32).collect();
        let la = LabelVolume::new(g.clone(), a.clone()).unwrap();
        let lb = LabelVolume::new(g.clone(), b.clone()).unwrap();
        let got = multilabel_dice(&la, &lb).unwrap();
        assert_eq!(got.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        for l in 1..4u32 {
            let na = a.iter().filter(|&&x| x == l).count();
            let nb = b.iter().filter(|&&x| x == l).count();
            let both = (0..n).filter(|&i| a[i] == l && b[i] == l).count();
            assert_eq!(got[&l], 2.0 * both as f64 / (na + nb) as f64);
        }
    }

    #[test]
    fn shifted_label_has_zero_overlap_and_absent_labels_are_omitted() {
        let g = Grid::centered([8, 2, 2], [1.0; 3]);
        let a: Vec<u32> = (0..g.len()).map(|i| if i % 8 < 4 { 5 } else { 0 }).collect();
        let b: Vec<u32> = (0..g.len()).map(|i| if i % 8 >= 4 { 5 } else { 0 }).collect();
        let d = multilabel_dice(&LabelVolume::new(g.clone(), a).unwrap(), &LabelVolume::new(g, b).unwrap()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&5], 0.0);
    }

    #[test]
    fn propagation_by_identity_and_integer_shift() {
        let g = Grid::centered([7, 6, 5], [2.0; 3]);
        let labels: Vec<u32> = (0..g.len()).map(|i| (i % 5) as u32).collect();
        let atlas = LabelVolume::new(g.clone(), labels.clone()).unwrap();
        let same = propagate_labels(&atlas, &AffineTransform::identity(), &g).unwrap();
        assert_eq!(same, atlas);
        assert!(multilabel_dice(&same, &atlas).unwrap().values().all(|&d| d == 1.0));

        // atlas moved one voxel (+2 mm) along x: subject voxel x reads atlas voxel x-1
        let shifted = propagate_labels(&atlas, &AffineTransform::translation([2.0, 0.0, 0.0]), &g).unwrap();
        for z in 0..5 {
            for y in 0..6 {
                for x in 0..7 {
                    let expect = if x == 0 { 0 } else { labels[g.index(x - 1, y, z)] };
                    assert_eq!(shifted.labels[g.index(x, y, z)], expect);
                }
            }
        }
        assert!(matches!(
            propagate_labels(&atlas, &AffineTransform::scaling([0.0, 1.0, 1.0]), &g),
            Err(Error::SingularTransform(_))
        ));
    }

    #[test]
    fn report_aggregation() {
        let outcomes = vec![
            ("a".to_string(), Ok(1.0)),
            ("b".to_string(), Ok(0.995)),
            ("c".to_string(), Ok(0.9)),
            ("d".to_string(), Err(Error::EmptyMask)),
        ];
        let r = QcReport::from_outcomes(outcomes, DEFAULT_FLAG_THRESHOLD);
        let vals = [1.0, 0.995, 0.9];
        let mean = vals.iter().sum::<f64>() / 3.0;
        let std = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
        assert!((r.mean - mean).abs() < 1e-12 && (r.std - std).abs() < 1e-12);
        assert_eq!((r.n, r.flagged, r.failed), (3, 1, 1));
        assert_eq!(r.items[2].status, QcStatus::Flagged);
        assert_eq!(r.items[3].status, QcStatus::Failed);
        assert!(!r.passed());
        let text = r.to_text();
        assert!(text.contains("FLAGGED") && text.contains("population"));
    }

    fn ball_volume(g: &Grid) -> Volume {
        Volume::from_world_fn(g.clone(), DataKind::F32, |w| if w.iter().map(|x| x * x).sum::<f64>() < 64.0 { 100.0 } else { 0.0 })
    }

    #[test]
    fn qc_identical_pairs_and_zeroed_octant() {
        let g = Grid::centered([16, 16, 16], [1.0; 3]);
        let v = ball_volume(&g);
        let mut broken = v.clone();
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            if x >= 8 && y >= 8 && z >= 8 {
                broken.data[i] = 0.0;
            }
        }
        let items = vec![
            QcItem { id: "same".into(), original: v.clone(), defaced: v.clone() },
            QcItem { id: "octant".into(), original: v.clone(), defaced: broken.clone() },
        ];
        let src = BrainMaskSource::Fallback;
        let mut cfg = ExtractionConfig::default();
        cfg.closing_radius_mm = 0.0;
        let r = qc_report(&items, &src, &cfg, DEFAULT_FLAG_THRESHOLD).unwrap();
        assert_eq!(r.items[0].dice, Some(1.0));
        assert_eq!(r.items[1].status, QcStatus::Flagged);
        let full = BinaryMask::from_volume(&v);
        let cut = BinaryMask::from_volume(&broken);
        assert_eq!(r.items[1].dice, Some(dice(&full, &cut).unwrap()));
        assert!(qc_report(&[], &src, &cfg, 0.99).is_err());

        let same = vec![items[0].clone(), items[0].clone()];
        let r = qc_report(&same, &src, &cfg, DEFAULT_FLAG_THRESHOLD).unwrap();
        assert_eq!((r.mean, r.std, r.n), (1.0, 0.0, 2));
        assert!(r.passed());
    }

    proptest! {
        #[test]
        fn dice_properties(a in prop::collection::vec(0u8..2, 120), b in prop::collection::vec(0u8..2, 120)) {
            let (ma, mb) = (mask_from(&a), mask_from(&b));
            match dice(&ma, &mb) {
                Ok(d) => {
                    prop_assert!((0.0..=1.0).contains(&d));
                    prop_assert_eq!(d, dice(&mb, &ma).unwrap());
                    let la = LabelVolume::new(grid(), a.iter().map(|&x| x as u32).collect()).unwrap();
                    let lb = LabelVolume::new(grid(), b.iter().map(|&x| x as u32).collect()).unwrap();
                    prop_assert_eq!(multilabel_dice(&la, &lb).unwrap().get(&1).copied(), Some(d));
                }
                Err(_) => prop_assert!(ma.is_empty() && mb.is_empty()),
            }
            if !ma.is_empty() {
                prop_assert_eq!(dice(&ma, &ma).unwrap(), 1.0);
            }
        }
    }
}
