//! Joint intensity histograms and mutual information.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sample_trilinear, AffineTransform};
use crate::morphology::{dilate, BinaryMask};
use crate::volume::Volume;

/// Robust intensity window used for binning: the 0.5th and 99.5th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntensityWindow {
    pub lo: f64,
    pub hi: f64,
}

pub const LOW_PERCENTILE: f64 = 0.5;
pub const HIGH_PERCENTILE: f64 = 99.5;

impl IntensityWindow {
    /// Nearest-rank percentiles of the finite values.
    pub fn robust(data: &[f64]) -> Self {
        let mut v: Vec<f64> = data.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return IntensityWindow { lo: 0.0, hi: 0.0 };
        }
        v.sort_unstable_by(f64::total_cmp);
        let at = |p: f64| v[((p / 100.0) * (v.len() - 1) as f64).round() as usize];
        IntensityWindow {
            lo: at(LOW_PERCENTILE),
            hi: at(HIGH_PERCENTILE),
        }
    }

    /// Continuous bin coordinate in `[0, bins - 1]`; values outside the window clamp.
    #[inline]
    pub fn position(&self, v: f64, bins: usize) -> f64 {
        if self.hi <= self.lo {
            return 0.0;
        }
        let t = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        t * (bins - 1) as f64
    }
}

/// `bins x bins` table, row = fixed bin, column = moving bin.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub bins: usize,
    pub counts: Vec<f64>,
    pub fixed_range: IntensityWindow,
    pub moving_range: IntensityWindow,
}

impl JointHistogram {
    pub fn zeros(bins: usize, fixed_range: IntensityWindow, moving_range: IntensityWindow) -> Self {
        JointHistogram {
            bins,
            counts: vec![0.0; bins * bins],
            fixed_range,
            moving_range,
        }
    }

    /// Wraps a hand-built row-major table.
    pub fn from_counts(bins: usize, counts: Vec<f64>) -> Self {
        assert_eq!(counts.len(), bins * bins, "counts must be bins x bins");
        let unit = IntensityWindow { lo: 0.0, hi: 1.0 };
        JointHistogram {
            bins,
            counts,
            fixed_range: unit,
            moving_range: unit,
        }
    }

    #[inline]
    pub fn get(&self, fixed_bin: usize, moving_bin: usize) -> f64 {
        self.counts[fixed_bin * self.bins + moving_bin]
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    fn add(&mut self, other: &JointHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Mutual information in nats over the nonzero cells; clamped at zero to
/// absorb rounding.
pub fn mutual_information(h: &JointHistogram) -> f64 {
    let total = h.total();
    if total <= 0.0 {
        return 0.0;
    }
    let b = h.bins;
    let mut row = vec![0.0; b];
    let mut col = vec![0.0; b];
    for i in 0..b {
        for j in 0..b {
            let c = h.get(i, j);
            row[i] += c;
            col[j] += c;
        }
    }
    let mut mi = 0.0;
    for i in 0..b {
        if row[i] == 0.0 {
            continue;
        }
        for j in 0..b {
            let c = h.get(i, j);
            if c > 0.0 {
                // p_ij ln(p_ij / (p_i p_j)) with p = c / total
                mi += c * (c * total / (row[i] * col[j])).ln();
            }
        }
    }
    (mi / total).max(0.0)
}

/// Which fixed voxels contribute to the histogram.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingPlan {
    All,
    Indices(Vec<usize>),
}

impl SamplingPlan {
    /// Seeded stratified subsample: `fraction` of the foreground (above the
    /// window's low end) and `fraction` of the remaining voxels.
    pub fn stratified(fixed: &Volume, window: &IntensityWindow, fraction: f64, seed: u64) -> Self {
        if fraction >= 1.0 {
            return SamplingPlan::All;
        }
        Self::draw(fixed, window, None, 1, fraction, seed)
    }

    /// Like [`SamplingPlan::stratified`] but restricted to voxels whose
    /// indices are all multiples of `stride`, with background drawn only within
    /// `margin_mm` of the foreground so that the sample set does not depend on
    /// how much empty field of view surrounds the object.
    pub fn near_foreground(fixed: &Volume, window: &IntensityWindow, margin_mm: f64, stride: usize, fraction: f64, seed: u64) -> Self {
        let fg = BinaryMask {
            grid: fixed.grid.clone(),
            bits: fixed.data.iter().map(|&v| u8::from(v > window.lo)).collect(),
        };
        let domain = dilate(&fg, margin_mm);
        Self::draw(fixed, window, Some(&domain), stride.max(1), fraction, seed)
    }

    fn draw(fixed: &Volume, window: &IntensityWindow, domain: Option<&BinaryMask>, stride: usize, fraction: f64, seed: u64) -> Self {
        let on_lattice = |i: usize| stride == 1 || fixed.grid.coords(i).iter().all(|c| c % stride == 0);
        let inside = |i: usize| on_lattice(i) && domain.map_or(true, |d| d.bits[i] == 1);
        let (mut fg, mut bg): (Vec<usize>, Vec<usize>) =
            (0..fixed.data.len()).filter(|&i| inside(i)).partition(|&i| fixed.data[i] > window.lo);
        if fraction < 1.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            fg.shuffle(&mut rng);
            bg.shuffle(&mut rng);
            let take = |n: usize| ((n as f64 * fraction).ceil() as usize).min(n);
            fg.truncate(take(fg.len()));
            bg.truncate(take(bg.len()));
        }
        let mut idx = fg;
        idx.extend(bg);
        idx.sort_unstable();
        SamplingPlan::Indices(idx)
    }
}

const CHUNK: usize = 8192;

/// Precomputed fixed-side data for repeated histogram evaluation.
pub(crate) struct MetricContext<'a> {
    bins: usize,
    fixed_window: IntensityWindow,
    moving_window: IntensityWindow,
    /// fixed voxel coordinates of each sample
    coords: Vec<[f64; 3]>,
    fixed_bins: Vec<u16>,
    fixed_v2w: AffineTransform,
    moving: &'a Volume,
    moving_w2v: AffineTransform,
}

impl<'a> MetricContext<'a> {
    pub(crate) fn new(fixed: &Volume, moving: &'a Volume, bins: usize, plan: &SamplingPlan) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidConfig(format!("histogram needs at least 2 bins, got {bins}")));
        }
        if fixed.data.is_empty() || moving.data.is_empty() {
            return Err(Error::NoOverlap);
        }
        let fixed_window = IntensityWindow::robust(&fixed.data);
        let moving_window = IntensityWindow::robust(&moving.data);
        let indices: Vec<usize> = match plan {
            SamplingPlan::All => (0..fixed.data.len()).collect(),
            SamplingPlan::Indices(v) => v.clone(),
        };
        let mut coords = Vec::with_capacity(indices.len());
        let mut fixed_bins = Vec::with_capacity(indices.len());
        for &i in &indices {
            let [x, y, z] = fixed.grid.coords(i);
            coords.push([x as f64, y as f64, z as f64]);
            fixed_bins.push(fixed_window.position(fixed.data[i], bins).round() as u16);
        }
        Ok(MetricContext {
            bins,
            fixed_window,
            moving_window,
            coords,
            fixed_bins,
            fixed_v2w: fixed.grid.voxel_to_world,
            moving,
            moving_w2v: moving.grid.voxel_to_world.invert()?,
        })
    }

    pub(crate) fn sample_count(&self) -> usize {
        self.coords.len()
    }

    /// `fixed_to_moving` maps fixed world coordinates into moving world coordinates.
    pub(crate) fn histogram(&self, fixed_to_moving: &AffineTransform) -> Result<JointHistogram> {
        let map = self.moving_w2v.compose(fixed_to_moving).compose(&self.fixed_v2w);
        let dims = self.moving.grid.dims;
        let data = &self.moving.data;
        let bins = self.bins;
        let partials: Vec<JointHistogram> = self
            .coords
            .par_chunks(CHUNK)
            .zip(self.fixed_bins.par_chunks(CHUNK))
            .map(|(coords, fbins)| {
                let mut h = JointHistogram::zeros(bins, self.fixed_window, self.moving_window);
                for (c, &fb) in coords.iter().zip(fbins) {
                    let p = map.apply(*c);
                    let Some(v) = sample_trilinear(data, dims, p) else {
                        continue;
                    };
                    let pos = self.moving_window.position(v, bins);
                    let j0 = (pos.floor() as usize).min(bins - 1);
                    let t = pos - j0 as f64;
                    let row = fb as usize * bins;
                    if t > 0.0 && j0 + 1 < bins {
                        h.counts[row + j0] += 1.0 - t;
                        h.counts[row + j0 + 1] += t;
                    } else {
                        h.counts[row + j0] += 1.0;
                    }
                }
                h
            })
            .collect();
        let mut total = JointHistogram::zeros(bins, self.fixed_window, self.moving_window);
        for p in &partials {
            total.add(p);
        }
        if total.total() <= 0.0 {
            return Err(Error::NoOverlap);
        }
        Ok(total)
    }
}

/// Histogram of fixed intensities against moving intensities sampled at
/// `fixed_to_moving(x)` for every planned fixed voxel centre `x`.
///
/// Fixed intensities go to their nearest bin; the trilinearly interpolated
/// moving intensity is split linearly between its two neighbouring bins.
/// Both images are binned over their own robust window.
pub fn joint_histogram(
    fixed: &Volume,
    moving: &Volume,
    fixed_to_moving: &AffineTransform,
    bins: usize,
    plan: &SamplingPlan,
) -> Result<JointHistogram> {
    MetricContext::new(fixed, moving, bins, plan)?.histogram(fixed_to_moving)
}
