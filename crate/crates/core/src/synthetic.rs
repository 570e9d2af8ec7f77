//! Synthetic two-view scenes with known geometry and known labels.
//!
//! Used by the test suites, the acceptance benchmark, and `pairmatch synth`.
//! Ground truth comes from the camera model alone, never from the estimators.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point2, Point3, Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256StarStar;

use crate::featureio::{write_manifest, write_match_file, FormatError, ManifestEntry, PairLabel, PairManifest};
use crate::geometry::{skew_matrix, PointMatch};
use crate::model::{Channel, Correspondence, FundamentalMatrix, MatchSet};

pub type SynthRng = Xoshiro256StarStar;

pub fn synth_rng(seed: u64) -> SynthRng {
    SynthRng::seed_from_u64(seed)
}

/// Pinhole camera `x ~ K (R X + t)`.
#[derive(Debug, Clone)]
pub struct Camera {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn project(&self, x: &Point3<f64>) -> Option<Point2<f64>> {
        let cam = self.rotation * x.coords + self.translation;
        if cam.z <= 0.1 {
            return None;
        }
        let img = self.intrinsics * cam;
        Some(Point2::new(img.x / img.z, img.y / img.z))
    }
}

/// A plane `normal · X = offset` in the first camera's frame.
#[derive(Debug, Clone, Copy)]
pub struct Plane {
    pub normal: Unit<Vector3<f64>>,
    pub offset: f64,
}

/// Two cameras looking at a common volume; the first sits at the origin.
#[derive(Debug, Clone)]
pub struct TwoViewRig {
    pub first: Camera,
    pub second: Camera,
    pub width: f64,
    pub height: f64,
    pub depth_range: (f64, f64),
}

impl TwoViewRig {
    /// 1024×768 views, focal length 800 px, a mostly sideways baseline of
    /// 0.5–1.5 units, a 3–14° relative rotation, and depths 4–12.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let (width, height) = (1024.0, 768.0);
        let k = Matrix3::new(800.0, 0.0, width / 2.0, 0.0, 800.0, height / 2.0, 0.0, 0.0, 1.0);
        let axis = Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        let rotation = Rotation3::from_axis_angle(&axis, rng.random_range(0.05..0.25));
        let dir = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.3..0.3),
        )
        .normalize();
        let center = dir * rng.random_range(0.5..1.5);
        let translation = -(rotation * center);
        TwoViewRig {
            first: Camera {
                intrinsics: k,
                rotation: Rotation3::identity(),
                translation: Vector3::zeros(),
            },
            second: Camera {
                intrinsics: k,
                rotation,
                translation,
            },
            width,
            height,
            depth_range: (4.0, 12.0),
        }
    }

    /// Ground truth `F` with `bᵀ F a = 0`, from `E = [t]ₓ R`.
    pub fn fundamental(&self) -> FundamentalMatrix {
        let k1_inv = self.first.intrinsics.try_inverse().expect("invertible intrinsics");
        let k2_inv = self.second.intrinsics.try_inverse().expect("invertible intrinsics");
        let e = skew_matrix(&self.second.translation) * self.second.rotation.matrix();
        FundamentalMatrix::from_matrix(k2_inv.transpose() * e * k1_inv).expect("non-zero baseline")
    }

    pub fn in_bounds(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.x < self.width && p.y >= 0.0 && p.y < self.height
    }

    /// Noise-free projections into both views, if both are inside the images.
    pub fn observe(&self, x: &Point3<f64>) -> Option<PointMatch> {
        let a = self.first.project(x)?;
        let b = self.second.project(x)?;
        (self.in_bounds(&a) && self.in_bounds(&b)).then_some(PointMatch { a, b })
    }

    fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let k_inv = self.first.intrinsics.try_inverse().expect("invertible intrinsics");
        k_inv * Vector3::new(u, v, 1.0)
    }

    /// A point seen by both cameras, at a uniform depth.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Point3<f64> {
        loop {
            let d = self.ray(rng.random_range(0.0..self.width), rng.random_range(0.0..self.height));
            let z = rng.random_range(self.depth_range.0..self.depth_range.1);
            let x = Point3::from(d * z);
            if self.observe(&x).is_some() {
                return x;
            }
        }
    }

    /// A plane through a visible point, tilted up to ~35° from fronto-parallel.
    pub fn random_plane<R: Rng>(&self, rng: &mut R) -> Plane {
        let anchor = {
            let d = self.ray(self.width / 2.0, self.height / 2.0);
            let z = rng.random_range(self.depth_range.0 + 1.0..self.depth_range.1 - 2.0);
            d * z
        };
        let normal = Unit::new_normalize(Vector3::new(
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            1.0,
        ));
        Plane {
            normal,
            offset: normal.dot(&anchor),
        }
    }

    pub fn random_point_on_plane<R: Rng>(&self, rng: &mut R, plane: &Plane) -> Point3<f64> {
        loop {
            let d = self.ray(rng.random_range(0.0..self.width), rng.random_range(0.0..self.height));
            let denom = plane.normal.dot(&d);
            if denom.abs() < 1e-9 {
                continue;
            }
            let x = Point3::from(d * (plane.offset / denom));
            if x.z > 0.5 && self.observe(&x).is_some() {
                return x;
            }
        }
    }

    pub fn random_outlier<R: Rng>(&self, rng: &mut R) -> PointMatch {
        PointMatch::new(
            rng.random_range(0.0..self.width),
            rng.random_range(0.0..self.height),
            rng.random_range(0.0..self.width),
            rng.random_range(0.0..self.height),
        )
    }
}

pub fn perturb<R: Rng>(rng: &mut R, m: &PointMatch, sigma: f64) -> PointMatch {
    if sigma == 0.0 {
        return *m;
    }
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    PointMatch::new(
        m.a.x + noise.sample(rng),
        m.a.y + noise.sample(rng),
        m.b.x + noise.sample(rng),
        m.b.y + noise.sample(rng),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Inlier,
    PlanarInlier,
    Outlier,
}

impl Role {
    pub fn is_true_match(self) -> bool {
        self != Role::Outlier
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    /// True correspondences, including the planar ones.
    pub inliers: usize,
    pub outliers: usize,
    /// Per-coordinate Gaussian noise on true correspondences, in pixels.
    pub noise_sigma: f64,
    /// Fraction of `inliers` lying on one scene plane.
    pub plane_fraction: f64,
    /// Extra noisy off-plane true correspondences returned separately.
    pub held_out: usize,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub rig: TwoViewRig,
    pub matches: Vec<PointMatch>,
    pub roles: Vec<Role>,
    pub held_out: Vec<PointMatch>,
    pub fundamental: FundamentalMatrix,
}

pub fn generate_scene<R: Rng>(rng: &mut R, spec: &SceneSpec) -> Scene {
    let rig = TwoViewRig::random(rng);
    let planar = (spec.inliers as f64 * spec.plane_fraction).round() as usize;
    let plane = rig.random_plane(rng);
    let mut labelled: Vec<(PointMatch, Role)> = Vec::with_capacity(spec.inliers + spec.outliers);
    for i in 0..spec.inliers {
        let (x, role) = if i < planar {
            (rig.random_point_on_plane(rng, &plane), Role::PlanarInlier)
        } else {
            (rig.random_point(rng), Role::Inlier)
        };
        let clean = rig.observe(&x).expect("visible by construction");
        labelled.push((perturb(rng, &clean, spec.noise_sigma), role));
    }
    for _ in 0..spec.outliers {
        labelled.push((rig.random_outlier(rng), Role::Outlier));
    }
    labelled.shuffle(rng);
    let held_out = (0..spec.held_out)
        .map(|_| {
            let clean = rig.observe(&rig.random_point(rng)).expect("visible by construction");
            perturb(rng, &clean, spec.noise_sigma)
        })
        .collect();
    let fundamental = rig.fundamental();
    let (matches, roles) = labelled.into_iter().unzip();
    Scene {
        rig,
        matches,
        roles,
        held_out,
        fundamental,
    }
}

pub fn to_correspondence(m: &PointMatch, confidence: f32, channel: Channel, scale_tag: f32) -> Correspondence {
    Correspondence {
        a: [m.a.x as f32, m.a.y as f32],
        b: [m.b.x as f32, m.b.y as f32],
        confidence,
        channel,
        scale_tag,
    }
}

/// Whether a synthetic pair depicts the same scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Matching,
    NonMatching,
}

/// Raw per-channel matcher output for one synthetic pair: every channel set
/// holds correspondences from all scales, tagged by `scale_tag`.
#[derive(Debug, Clone)]
pub struct BenchmarkPair {
    pub kind: PairKind,
    pub channels: Vec<MatchSet>,
}

/// Generator of realistic-looking matcher output with controlled structure.
///
/// Matching pairs observe a common 3D point set from both channels at the
/// scales `{1, 1/√2, 1/2}`; coarser scales re-detect part of the points with
/// proportionally larger noise, detect some new ones, and add false matches.
/// Non-matching pairs carry random false matches plus, for half of them, a
/// geometrically consistent "look-alike" structure (repeated texture), which
/// also grows with extra scales.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    pub noise_sigma: f64,
    pub scales: [f32; 3],
    /// Minimum pixel spacing between distinct scene points in either view.
    pub min_spacing: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            noise_sigma: 0.5,
            scales: [1.0, std::f32::consts::FRAC_1_SQRT_2, 0.5],
            min_spacing: 8.0,
        }
    }
}

impl BenchmarkSpec {
    pub fn generate<R: Rng>(&self, rng: &mut R, pair_id: &str, kind: PairKind) -> BenchmarkPair {
        let (points, outliers_per_set, observe_prob) = match kind {
            PairKind::Matching => (rng.random_range(120..320), rng.random_range(10..40), 0.55),
            PairKind::NonMatching => {
                let lookalike = if rng.random_bool(0.5) { rng.random_range(6..30) } else { 0 };
                (lookalike, rng.random_range(0..14), 0.6)
            }
        };
        let rig = TwoViewRig::random(rng);
        let clean = self.spaced_points(rng, &rig, points);
        let mut channels = Vec::new();
        for channel in Channel::ALL {
            let mut set = MatchSet::new(pair_id, format!("{pair_id}/a"), format!("{pair_id}/b"));
            let (conf_lo, conf_hi) = match channel {
                Channel::Sp => (0.15, 1.0),
                Channel::Disk => (0.6, 1.0),
            };
            for (level, &scale) in self.scales.iter().enumerate() {
                let sigma = self.noise_sigma / f64::from(scale);
                for m in &clean {
                    let seen = if level == 0 {
                        rng.random_bool(observe_prob)
                    } else {
                        rng.random_bool(0.3)
                    };
                    if seen {
                        let noisy = perturb(rng, m, sigma);
                        let c = rng.random_range(conf_lo..conf_hi) as f32;
                        set.correspondences.push(to_correspondence(&noisy, c, channel, scale));
                    }
                }
                for _ in 0..outliers_per_set {
                    let o = rig.random_outlier(rng);
                    let c = rng.random_range(0.0..1.0) as f32;
                    set.correspondences.push(to_correspondence(&o, c, channel, scale));
                }
            }
            channels.push(set);
        }
        BenchmarkPair { kind, channels }
    }

    fn spaced_points<R: Rng>(&self, rng: &mut R, rig: &TwoViewRig, count: usize) -> Vec<PointMatch> {
        let mut out: Vec<PointMatch> = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < count * 50 {
            attempts += 1;
            let m = rig.observe(&rig.random_point(rng)).expect("visible by construction");
            let crowded = out.iter().any(|o| {
                (o.a - m.a).norm() < self.min_spacing || (o.b - m.b).norm() < self.min_spacing
            });
            if !crowded {
                out.push(m);
            }
        }
        out
    }
}

/// `matching` pairs named `m0000…` followed by `non_matching` pairs `n0000…`,
/// all drawn from one stream seeded by `seed`.
pub fn benchmark_pairs(spec: &BenchmarkSpec, matching: usize, non_matching: usize, seed: u64) -> Vec<(String, BenchmarkPair)> {
    let mut rng = synth_rng(seed);
    let kinds = std::iter::repeat_n(('m', PairKind::Matching), matching)
        .enumerate()
        .chain(std::iter::repeat_n(('n', PairKind::NonMatching), non_matching).enumerate());
    kinds
        .map(|(i, (prefix, kind))| {
            let pair_id = format!("{prefix}{i:04}");
            let pair = spec.generate(&mut rng, &pair_id, kind);
            (pair_id, pair)
        })
        .collect()
}

/// Writes one MMT1 file per pair and channel plus `manifest.tsv` into `dir`,
/// and returns the manifest path.
pub fn write_benchmark_dataset(
    dir: &Path,
    spec: &BenchmarkSpec,
    matching: usize,
    non_matching: usize,
    seed: u64,
) -> Result<PathBuf, FormatError> {
    fs::create_dir_all(dir)?;
    let mut manifest = PairManifest::default();
    for (pair_id, pair) in benchmark_pairs(spec, matching, non_matching, seed) {
        let mut match_files = Vec::new();
        for (channel, set) in Channel::ALL.iter().zip(&pair.channels) {
            let path = dir.join(format!("{pair_id}_{}.mmt", channel.as_str().to_lowercase()));
            write_match_file(set, &path)?;
            match_files.push((*channel, path));
        }
        manifest.entries.push(ManifestEntry {
            label: match pair.kind {
                PairKind::Matching => PairLabel::Matching,
                PairKind::NonMatching => PairLabel::NonMatching,
            },
            image_a: pair.channels[0].image_a.clone(),
            image_b: pair.channels[0].image_b.clone(),
            pair_id,
            features_a: Vec::new(),
            features_b: Vec::new(),
            match_files,
        });
    }
    let path = dir.join("manifest.tsv");
    write_manifest(&manifest, &path)?;
    Ok(path)
}
