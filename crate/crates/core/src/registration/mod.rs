//! Affine registration by mutual information.
//!
//! A coarse-to-fine pyramid drives a bounded Nelder-Mead search over the
//! twelve affine parameters. Levels differ in Gaussian smoothing and in the
//! stride of the fixed-image sample lattice; neither image is resampled. The metric is a 32-bin joint histogram with
//! linear partial-volume weights on the moving side; both images are binned
//! over their 0.5 to 99.5 percentile window. Rotation, scale and shear act about
//! the fixed image's foreground centroid.

mod histogram;
mod optimizer;
mod params;
mod pyramid;

use serde::{Deserialize, Serialize};

pub use histogram::{joint_histogram, mutual_information, IntensityWindow, JointHistogram, SamplingPlan};
pub use optimizer::{nelder_mead, Bounds, Minimum, NelderMeadOptions};
pub use params::{AffineParams, N_PARAMS};

use crate::error::{Error, Result};
use crate::geometry::AffineTransform;
use crate::volume::Volume;
use histogram::MetricContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Sample-lattice stride per level, strictly decreasing to 1.
    pub pyramid_factors: Vec<usize>,
    pub smoothing_sigmas_mm: Vec<f64>,
    pub bins: usize,
    pub max_iters_per_level: usize,
    /// Relative MI spread across the simplex at which a level stops.
    pub convergence_tol: f64,
    /// Fraction of fixed voxels sampled at each level.
    pub sample_fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        RegistrationConfig {
            pyramid_factors: vec![4, 2, 1],
            smoothing_sigmas_mm: vec![4.0, 2.0, 0.0],
            bins: 32,
            max_iters_per_level: 200,
            convergence_tol: 1e-5,
            sample_fractions: vec![1.0, 1.0, 0.25],
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.pyramid_factors.len();
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if n == 0 {
            return bad("pyramid needs at least one level".into());
        }
        if self.smoothing_sigmas_mm.len() != n || self.sample_fractions.len() != n {
            return bad("pyramid_factors, smoothing_sigmas_mm and sample_fractions must share length".into());
        }
        if self.pyramid_factors.windows(2).any(|w| w[0] <= w[1]) || *self.pyramid_factors.last().unwrap() != 1 {
            return bad(format!("pyramid factors {:?} must strictly decrease to 1", self.pyramid_factors));
        }
        if self.sample_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return bad("sample fractions must lie in (0, 1]".into());
        }
        if self.smoothing_sigmas_mm.iter().any(|&s| !(s >= 0.0)) {
            return bad("smoothing sigmas must be nonnegative".into());
        }
        if self.bins < 2 {
            return bad("bins must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub factor: usize,
    pub sigma_mm: f64,
    pub samples: usize,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub converged: bool,
    pub initial_mi: f64,
    pub final_mi: f64,
    /// best MI after each simplex iteration
    pub mi_trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationDiagnostics {
    pub levels: Vec<LevelReport>,
    /// every level met its tolerance within its iteration budget
    pub converged: bool,
    pub final_mi: f64,
    pub center: [f64; 3],
    pub params: AffineParams,
}

/// Initial simplex edge per parameter at the coarsest level: translation
/// 10 mm, rotation 0.1 rad, log-scale 0.1, shear 0.05.
const BASE_STEPS: [f64; N_PARAMS] = [10.0, 10.0, 10.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05];
const ROTATION_LIMIT: f64 = 1.0;
const LOG_SCALE_LIMIT: f64 = 0.7;
const SHEAR_LIMIT: f64 = 0.5;
const MAX_RESTARTS: usize = 2;
/// Background samples are drawn within this distance of the fixed foreground.
const ROI_MARGIN_MM: f64 = 12.0;

fn parameter_bounds() -> Bounds {
    let mut lower = vec![f64::NEG_INFINITY; N_PARAMS];
    let mut upper = vec![f64::INFINITY; N_PARAMS];
    for i in 3..N_PARAMS {
        let lim = match i {
            3..=5 => ROTATION_LIMIT,
            6..=8 => LOG_SCALE_LIMIT,
            _ => SHEAR_LIMIT,
        };
        lower[i] = -lim;
        upper[i] = lim;
    }
    Bounds { lower, upper }
}

/// Intensity-weighted centroid above the robust low end, in world mm.
pub fn foreground_centroid(v: &Volume) -> [f64; 3] {
    let lo = IntensityWindow::robust(&v.data).lo;
    let mut acc = [0.0; 3];
    let mut wsum = 0.0;
    for (i, &x) in v.data.iter().enumerate() {
        let w = x - lo;
        if w > 0.0 {
            let [a, b, c] = v.grid.coords(i);
            let p = v.grid.world_of([a as f64, b as f64, c as f64]);
            for k in 0..3 {
                acc[k] += w * p[k];
            }
            wsum += w;
        }
    }
    if wsum == 0.0 {
        let d = v.grid.dims;
        return v.grid.world_of([0, 1, 2].map(|k| (d[k] as f64 - 1.0) * 0.5));
    }
    acc.map(|a| a / wsum)
}

/// Registers `moving` to `fixed`. The returned transform maps moving world
/// coordinates into fixed world coordinates. Running out of iterations is
/// reported in the diagnostics, not as an error.
pub fn register_affine(
    fixed: &Volume,
    moving: &Volume,
    config: &RegistrationConfig,
) -> Result<(AffineTransform, RegistrationDiagnostics)> {
    config.validate()?;
    let center = foreground_centroid(fixed);
    let moving_center = foreground_centroid(moving);
    // internal model maps fixed world -> moving world
    let mut params = AffineParams::identity(center);
    params.translation = [0, 1, 2].map(|k| moving_center[k] - center[k]);

    let bounds = parameter_bounds();
    let coarsest = config.pyramid_factors[0] as f64;
    let mut levels = Vec::new();

    for (li, &factor) in config.pyramid_factors.iter().enumerate() {
        let sigma = config.smoothing_sigmas_mm[li];
        // both images stay at full resolution; a level only smooths and thins the sample lattice
        let fixed_l = pyramid::smooth(fixed, sigma);
        let moving_l = pyramid::smooth(moving, sigma);
        let window = IntensityWindow::robust(&fixed_l.data);
        let seed = config.seed.wrapping_add(li as u64);
        let plan = SamplingPlan::near_foreground(&fixed_l, &window, ROI_MARGIN_MM, factor, config.sample_fractions[li], seed);
        let ctx = MetricContext::new(&fixed_l, &moving_l, config.bins, &plan)?;

        let level_scale = factor as f64 / coarsest;
        let scale: Vec<f64> = BASE_STEPS.iter().map(|s| s * level_scale).collect();
        let initial_mi = mutual_information(&ctx.histogram(&params.to_matrix())?);

        // optimise in units of the simplex step
        let to_params = |u: &[f64]| {
            let mut v = [0.0; N_PARAMS];
            for i in 0..N_PARAMS {
                v[i] = u[i] * scale[i];
            }
            AffineParams::from_vector(&v, center)
        };
        let objective = |u: &[f64]| match ctx.histogram(&to_params(u).to_matrix()) {
            Ok(h) => -mutual_information(&h),
            Err(_) => f64::INFINITY,
        };
        let unit_bounds = Bounds {
            lower: bounds.lower.iter().zip(&scale).map(|(b, s)| b / s).collect(),
            upper: bounds.upper.iter().zip(&scale).map(|(b, s)| b / s).collect(),
        };

        let mut u: Vec<f64> = params.to_vector().iter().zip(&scale).map(|(p, s)| p / s).collect();
        let mut best = -initial_mi;
        let mut budget = config.max_iters_per_level;
        let mut report = LevelReport {
            factor,
            sigma_mm: sigma,
            samples: ctx.sample_count(),
            iterations: 0,
            evaluations: 0,
            restarts: 0,
            converged: false,
            initial_mi,
            final_mi: initial_mi,
            mi_trajectory: Vec::new(),
        };
        let mut step = 1.0;
        loop {
            let opts = NelderMeadOptions {
                max_iters: budget,
                rel_tol: config.convergence_tol,
            };
            let m = nelder_mead(objective, &u, &vec![step; N_PARAMS], &unit_bounds, &opts);
            report.iterations += m.iterations;
            report.evaluations += m.evaluations;
            report.mi_trajectory.extend(m.trajectory.iter().map(|v| -v));
            budget -= m.iterations;
            let improved = m.value < best - config.convergence_tol * best.abs().max(1e-12);
            if m.value < best {
                best = m.value;
                u = m.x;
            }
            report.converged = m.converged;
            // a converged simplex may have collapsed early; restart smaller around the best point
            if !m.converged || budget == 0 || report.restarts >= MAX_RESTARTS || (!improved && report.restarts > 0) {
                break;
            }
            report.restarts += 1;
            step *= 0.5;
        }
        params = to_params(&u);
        report.final_mi = -best;
        log::debug!(
            "level x{factor}: MI {:.5} -> {:.5} in {} iterations ({} evaluations)",
            report.initial_mi,
            report.final_mi,
            report.iterations,
            report.evaluations
        );
        levels.push(report);
    }

    let fixed_to_moving = params.to_matrix();
    let moving_to_fixed = fixed_to_moving.invert()?;
    let diagnostics = RegistrationDiagnostics {
        converged: levels.iter().all(|l| l.converged),
        final_mi: levels.last().map(|l| l.final_mi).unwrap_or(0.0),
        levels,
        center,
        params,
    };
    Ok((moving_to_fixed, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{DataKind, Grid};

    #[test]
    fn config_validation() {
        assert!(RegistrationConfig::default().validate().is_ok());
        let mut c = RegistrationConfig::default();
        c.pyramid_factors = vec![2, 2, 1];
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.smoothing_sigmas_mm = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.sample_fractions[2] = 0.0;
        assert!(c.validate().is_err());
        let mut c = RegistrationConfig::default();
        c.pyramid_factors = vec![4, 2];
        c.smoothing_sigmas_mm = vec![1.0, 0.0];
        c.sample_fractions = vec![1.0, 1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn centroid_of_offset_blob() {
        let g = Grid::centered([20, 20, 20], [1.0; 3]);
        let v = Volume::from_world_fn(g, DataKind::F32, |w| {
            if (w[0] - 3.5).powi(2) + (w[1] + 2.5).powi(2) + w[2].powi(2) <= 9.0 {
                10.0
            } else {
                0.0
            }
        });
        let c = foreground_centroid(&v);
        assert!((c[0] - 3.5).abs() < 0.3 && (c[1] + 2.5).abs() < 0.3 && (c[2] - 0.5).abs() < 0.6);
    }

    use crate::phantom::{render, standard_grid, template, HeadAnatomy, Pose};

    struct Residual {
        angle_deg: f64,
        scale: f64,
        shift_mm: f64,
    }

    /// Registers a posed rendering of the standard head to its own template
    /// and measures how far `moving_to_fixed ∘ pose` is from identity.
    fn recover(pose: &Pose, config: &RegistrationConfig) -> (Residual, AffineTransform) {
        let anatomy = HeadAnatomy::standard();
        let (_, fixed, _) = template(&anatomy);
        let truth = pose.to_transform();
        let (moving, _, _) = render(&anatomy, &truth, &standard_grid(), DataKind::F32, 1.0, true);
        let (m2f, _) = register_affine(&fixed, &moving, config).unwrap();
        let e = AffineParams::from_matrix(&m2f.compose(&truth), anatomy.brain.center).unwrap();
        let r = Residual {
            angle_deg: e.rotation_angle().to_degrees(),
            scale: e.log_scale.iter().map(|s| (s.exp() - 1.0).abs()).fold(0.0, f64::max),
            shift_mm: e.translation.iter().map(|t| t.abs()).fold(0.0, f64::max),
        };
        (r, m2f)
    }

    #[test]
    fn self_registration_is_near_identity() {
        let (r, _) = recover(&Pose::identity([0.0; 3]), &RegistrationConfig::default());
        assert!(r.angle_deg < 0.2 && r.shift_mm < 0.2 && r.scale < 0.005, "{}° {} mm {}", r.angle_deg, r.shift_mm, r.scale);
    }

    #[test]
    fn recovers_translation_deterministically() {
        let mut pose = Pose::identity([0.0; 3]);
        pose.translation = [5.0, -3.0, 2.0];
        let cfg = RegistrationConfig::default();
        let (r, a) = recover(&pose, &cfg);
        assert!(r.shift_mm < 0.5 && r.angle_deg < 0.5, "{}° {} mm", r.angle_deg, r.shift_mm);
        let (_, b) = recover(&pose, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn recovers_rotation_and_scale() {
        let mut pose = Pose::identity([0.0, -8.0, 6.0]);
        pose.angle = 5f64.to_radians();
        pose.scale = 1.05;
        let (r, _) = recover(&pose, &RegistrationConfig::default());
        assert!(r.angle_deg < 0.5 && r.shift_mm < 0.5 && r.scale < 0.01, "{}° {} mm {}", r.angle_deg, r.shift_mm, r.scale);
    }

    #[test]
    fn reports_levels() {
        let anatomy = HeadAnatomy::standard();
        let (_, fixed, _) = template(&anatomy);
        let mut cfg = RegistrationConfig::default();
        cfg.max_iters_per_level = 3;
        let (_, d) = register_affine(&fixed, &fixed, &cfg).unwrap();
        assert_eq!(d.levels.len(), 3);
        assert_eq!(d.levels.iter().map(|l| l.factor).collect::<Vec<_>>(), vec![4, 2, 1]);
        assert!(d.levels.iter().all(|l| l.iterations <= 3 && l.mi_trajectory.len() == l.iterations));
        assert!(d.levels[0].samples < d.levels[1].samples);
    }
}
