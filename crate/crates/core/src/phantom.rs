//! Synthetic head phantoms with known anatomy and pose.
//!
//! Anatomy is described in template world coordinates (RAS, mm): an
//! ellipsoidal brain with white matter, ventricles and a bright focal blob,
//! a zero-intensity gap, a scalp shell, and a face made of two eyes and a
//! nose placed anterior-inferior to the brain. A subject is the anatomy under
//! a similarity pose, rendered with 4x4x4 supersampling onto a native grid
//! whose voxel axes may be permuted or flipped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{AffineTransform, AxisPermutation};
use crate::morphology::BinaryMask;
use crate::volume::{DataKind, Grid, Volume};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipsoid {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

impl Ellipsoid {
    pub fn new(center: [f64; 3], radii: [f64; 3]) -> Self {
        Ellipsoid { center, radii }
    }

    #[inline]
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let mut s = 0.0;
        for k in 0..3 {
            let d = (p[k] - self.center[k]) / self.radii[k];
            s += d * d;
        }
        s <= 1.0
    }

    fn grown(&self, by: f64) -> Ellipsoid {
        Ellipsoid::new(self.center, self.radii.map(|r| r + by))
    }
}

pub const GRAY: f64 = 70.0;
pub const WHITE: f64 = 110.0;
pub const CSF: f64 = 25.0;
pub const FOCAL: f64 = 135.0;
pub const NUCLEUS: f64 = 88.0;
pub const SULCUS: f64 = 35.0;
pub const SCALP: f64 = 40.0;
pub const EYE: f64 = 60.0;
pub const NOSE: f64 = 48.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadAnatomy {
    pub brain: Ellipsoid,
    pub white: Ellipsoid,
    pub ventricles: [Ellipsoid; 2],
    pub focal: Ellipsoid,
    pub nuclei: [Ellipsoid; 3],
    pub scalp_inner: Ellipsoid,
    pub scalp_outer: Ellipsoid,
    pub eyes: [Ellipsoid; 2],
    pub nose: Ellipsoid,
}

/// Skull gap and scalp thickness of the standard anatomy, in mm.
pub const SKULL_GAP_MM: f64 = 10.0;
pub const SCALP_MM: f64 = 6.0;

impl HeadAnatomy {
    pub fn standard() -> Self {
        Self::with_brain([0.0, -8.0, 6.0], [46.0, 57.0, 43.0])
    }

    /// Standard layout around a brain of the given centre and radii.
    pub fn with_brain(c: [f64; 3], r: [f64; 3]) -> Self {
        let at = |d: [f64; 3]| [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
        let brain = Ellipsoid::new(c, r);
        let scalp_inner = brain.grown(SKULL_GAP_MM);
        HeadAnatomy {
            brain,
            white: Ellipsoid::new(at([0.0, 3.0, 4.0]), r.map(|x| x * 0.7)),
            ventricles: [
                Ellipsoid::new(at([-9.0, 2.0, 8.0]), [6.0, 17.0, 8.0]),
                Ellipsoid::new(at([8.0, 6.0, 7.0]), [4.5, 13.0, 7.0]),
            ],
            focal: Ellipsoid::new(at([19.0, -21.0, 17.0]), [7.0, 9.0, 6.0]),
            nuclei: [
                Ellipsoid::new(at([-14.0, -6.0, -4.0]), [6.0, 8.0, 6.0]),
                Ellipsoid::new(at([13.0, -9.0, -3.0]), [7.0, 6.0, 5.0]),
                Ellipsoid::new(at([-4.0, 24.0, -10.0]), [9.0, 5.0, 5.0]),
            ],
            scalp_inner,
            scalp_outer: scalp_inner.grown(SCALP_MM),
            eyes: [
                Ellipsoid::new(at([-22.0, 0.95 * r[1] + 8.0, -0.9 * r[2] - 4.0]), [8.0; 3]),
                Ellipsoid::new(at([22.0, 0.95 * r[1] + 8.0, -0.9 * r[2] - 4.0]), [8.0; 3]),
            ],
            nose: Ellipsoid::new(at([0.0, 1.1 * r[1] + 12.0, -0.8 * r[2] - 6.0]), [7.0, 10.0, 12.0]),
        }
    }

    /// Standard anatomy with brain radii and position perturbed by a few percent.
    pub fn jittered(rng: &mut impl Rng) -> Self {
        let base = Self::standard();
        let c = base.brain.center.map(|x| x + rng.gen_range(-2.0..2.0));
        let r = base.brain.radii.map(|x| x * rng.gen_range(0.97..1.03));
        Self::with_brain(c, r)
    }

    pub fn in_brain(&self, p: [f64; 3]) -> bool {
        self.brain.contains(p)
    }

    /// Eyes or nose.
    pub fn in_face(&self, p: [f64; 3]) -> bool {
        !self.in_brain(p) && (self.eyes.iter().any(|e| e.contains(p)) || self.nose.contains(p))
    }

    /// White matter: the inner ellipsoid with a folded, gyrus-like surface.
    fn in_white(&self, p: [f64; 3]) -> bool {
        let w = &self.white;
        let q = [0, 1, 2].map(|k| (p[k] - w.center[k]) / w.radii[k]);
        let rho = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
        if rho < 1e-9 {
            return true;
        }
        let azimuth = q[1].atan2(q[0]);
        let polar = (q[2] / rho).acos();
        let fold = (5.0 * azimuth + 0.7).sin() * (4.0 * polar).cos() + 0.5 * (3.0 * azimuth - 1.1).cos() * (7.0 * polar + 0.4).sin();
        rho <= 1.0 + 0.12 * fold
    }

    /// Dark clefts cut into the cortex from the brain surface.
    fn in_sulcus(&self, p: [f64; 3]) -> bool {
        let b = &self.brain;
        let q = [0, 1, 2].map(|k| (p[k] - b.center[k]) / b.radii[k]);
        let rho = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
        if rho < 0.8 {
            return false;
        }
        let azimuth = q[1].atan2(q[0]);
        let polar = (q[2] / rho).acos();
        let wave = (6.0 * azimuth + 2.0 * polar).sin() * (5.0 * polar - 0.3).sin() + 0.4 * (9.0 * azimuth - 1.7).sin();
        wave > 0.75
    }

    pub fn brain_intensity(&self, p: [f64; 3]) -> f64 {
        if !self.brain.contains(p) {
            0.0
        } else if self.ventricles.iter().any(|v| v.contains(p)) {
            CSF
        } else if self.focal.contains(p) {
            FOCAL
        } else if self.nuclei.iter().any(|n| n.contains(p)) {
            NUCLEUS
        } else if self.in_white(p) {
            WHITE
        } else if self.in_sulcus(p) {
            SULCUS
        } else {
            GRAY
        }
    }

    pub fn head_intensity(&self, p: [f64; 3]) -> f64 {
        if self.brain.contains(p) {
            self.brain_intensity(p)
        } else if self.eyes.iter().any(|e| e.contains(p)) {
            EYE
        } else if self.nose.contains(p) {
            NOSE
        } else if self.scalp_outer.contains(p) && !self.scalp_inner.contains(p) {
            SCALP
        } else {
            0.0
        }
    }
}

/// 64³ grid at 3 mm centred on the world origin, in RAS voxel order.
pub fn standard_grid() -> Grid {
    Grid::centered([64; 3], [3.0; 3])
}

/// The same field of view as `grid` stored with permuted or flipped voxel axes.
pub fn native_grid(grid: &Grid, p: &AxisPermutation) -> Grid {
    p.inverse().apply_grid(grid)
}

/// Similarity pose about `center`: `x ↦ s·R·(x − c) + c + t`, with `R` a
/// rotation of `angle` radians about the unit `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub axis: [f64; 3],
    pub angle: f64,
    pub scale: f64,
    pub translation: [f64; 3],
    pub center: [f64; 3],
}

impl Pose {
    pub fn identity(center: [f64; 3]) -> Self {
        Pose {
            axis: [0.0, 0.0, 1.0],
            angle: 0.0,
            scale: 1.0,
            translation: [0.0; 3],
            center,
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let [x, y, z] = self.axis;
        let (s, c) = self.angle.sin_cos();
        let k = 1.0 - c;
        [
            [c + x * x * k, x * y * k - z * s, x * z * k + y * s],
            [y * x * k + z * s, c + y * y * k, y * z * k - x * s],
            [z * x * k - y * s, z * y * k + x * s, c + z * z * k],
        ]
    }

    /// Anatomy coordinates to subject world coordinates.
    pub fn to_transform(&self) -> AffineTransform {
        let r = self.rotation();
        let l = r.map(|row| row.map(|v| v * self.scale));
        let c = self.center;
        let t = [0, 1, 2].map(|i| c[i] + self.translation[i] - (0..3).map(|k| l[i][k] * c[k]).sum::<f64>());
        AffineTransform::from_linear(l, t)
    }

    /// Uniform random axis, angle up to `max_angle`, translation of magnitude up
    /// to `max_shift` mm in a uniform direction, and scale in `scale_range`.
    pub fn random(rng: &mut impl Rng, center: [f64; 3], max_angle: f64, max_shift: f64, scale_range: (f64, f64)) -> Self {
        let unit = |rng: &mut dyn rand::RngCore| loop {
            let v = [0; 3].map(|_| rng.gen_range(-1.0..1.0f64));
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 && n <= 1.0 {
                return v.map(|x| x / n);
            }
        };
        let axis = unit(rng);
        let dir = unit(rng);
        let angle = rng.gen_range(0.0..=max_angle);
        let shift = rng.gen_range(0.0..=max_shift);
        let scale = rng.gen_range(scale_range.0..=scale_range.1);
        Pose {
            axis,
            angle,
            scale,
            translation: dir.map(|d| d * shift),
            center,
        }
    }
}

/// A rendered subject with its ground truth.
#[derive(Debug, Clone)]
pub struct Subject {
    pub anatomy: HeadAnatomy,
    pub pose: Pose,
    /// anatomy (template world) to subject world
    pub anatomy_to_world: AffineTransform,
    pub volume: Volume,
    /// voxels whose centre lies in the posed brain
    pub brain: BinaryMask,
    /// voxels with any supersample inside an eye or the nose
    pub face: BinaryMask,
}

const SUPERSAMPLE: [f64; 4] = [-0.375, -0.125, 0.125, 0.375];

/// Renders `anatomy` under `anatomy_to_world` onto `grid`. `brain_only`
/// renders the skull-stripped image.
pub fn render(anatomy: &HeadAnatomy, anatomy_to_world: &AffineTransform, grid: &Grid, kind: DataKind, gain: f64, brain_only: bool) -> (Volume, BinaryMask, BinaryMask) {
    let to_anatomy = anatomy_to_world.invert().expect("pose must be invertible").compose(&grid.voxel_to_world);
    let n = grid.len();
    let mut data = Vec::with_capacity(n);
    let mut brain = BinaryMask::empty(grid.clone());
    let mut face = BinaryMask::empty(grid.clone());
    for idx in 0..n {
        let [x, y, z] = grid.coords(idx);
        let c = [x as f64, y as f64, z as f64];
        if anatomy.in_brain(to_anatomy.apply(c)) {
            brain.bits[idx] = 1;
        }
        let mut acc = 0.0;
        let mut touches_face = false;
        for dz in SUPERSAMPLE {
            for dy in SUPERSAMPLE {
                for dx in SUPERSAMPLE {
                    let p = to_anatomy.apply([c[0] + dx, c[1] + dy, c[2] + dz]);
                    acc += if brain_only { anatomy.brain_intensity(p) } else { anatomy.head_intensity(p) };
                    touches_face |= anatomy.in_face(p);
                }
            }
        }
        if touches_face && !brain_only {
            face.bits[idx] = 1;
        }
        data.push(kind.cast(gain * acc / 64.0));
    }
    let volume = Volume {
        grid: grid.clone(),
        kind,
        data,
        background: 0.0,
    };
    (volume, brain, face)
}

/// Template image pair for `anatomy` on the standard grid: the full head and
/// the skull-stripped brain, both f32, plus the brain mask.
pub fn template(anatomy: &HeadAnatomy) -> (Volume, Volume, BinaryMask) {
    let grid = standard_grid();
    let id = AffineTransform::identity();
    let (head, brain, _) = render(anatomy, &id, &grid, DataKind::F32, 1.0, false);
    let (stripped, _, _) = render(anatomy, &id, &grid, DataKind::F32, 1.0, true);
    (head, stripped, brain)
}

#[derive(Debug, Clone)]
pub struct SubjectOptions {
    pub jitter_anatomy: bool,
    pub max_angle_deg: f64,
    pub max_shift_mm: f64,
    pub scale_range: (f64, f64),
    /// store with a randomly chosen non-RAS voxel order
    pub random_orientation: bool,
    pub kind: DataKind,
}

impl Default for SubjectOptions {
    fn default() -> Self {
        SubjectOptions {
            jitter_anatomy: true,
            max_angle_deg: 10.0,
            max_shift_mm: 15.0,
            scale_range: (0.95, 1.05),
            random_orientation: true,
            kind: DataKind::I16,
        }
    }
}

const ORIENTATIONS: [AxisPermutation; 4] = [
    AxisPermutation::identity(),
    AxisPermutation { perm: [0, 1, 2], flips: [true, false, false] },
    AxisPermutation { perm: [0, 1, 2], flips: [true, true, false] },
    AxisPermutation { perm: [1, 2, 0], flips: [false, true, false] },
];

/// Seeded random subject on the standard field of view.
pub fn random_subject(seed: u64, opts: &SubjectOptions) -> Subject {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anatomy = if opts.jitter_anatomy { HeadAnatomy::jittered(&mut rng) } else { HeadAnatomy::standard() };
    let pose = Pose::random(&mut rng, anatomy.brain.center, opts.max_angle_deg.to_radians(), opts.max_shift_mm, opts.scale_range);
    let gain = rng.gen_range(0.8..1.25);
    let orient = if opts.random_orientation { ORIENTATIONS[rng.gen_range(0..ORIENTATIONS.len())] } else { AxisPermutation::identity() };
    let grid = native_grid(&standard_grid(), &orient);
    let anatomy_to_world = pose.to_transform();
    let (volume, brain, face) = render(&anatomy, &anatomy_to_world, &grid, opts.kind, gain, false);
    Subject {
        anatomy,
        pose,
        anatomy_to_world,
        volume,
        brain,
        face,
    }
}
