//! Shared domain types and their validation.
//!
//! Every value the pipeline produces can be checked with a `validate` call;
//! readers run the same checks on ingest.

use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;

/// Relative tolerance on the unit norm of descriptor rows.
pub const DESCRIPTOR_NORM_TOL: f64 = 1e-4;
/// Upper bound on `σ3 / σ1` for a matrix to count as rank 2.
pub const RANK2_TOL: f64 = 1e-7;
/// Tolerance on the Frobenius norm of canonical 3×3 models.
pub const CANONICAL_NORM_TOL: f64 = 1e-9;
/// Fewest correspondences from which a fundamental matrix can be solved linearly.
pub const MIN_SOLVABLE_MATCHES: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invariant violated: {0}")]
pub struct ValidationError(pub String);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(ValidationError(format!($($arg)+)));
        }
    };
}

/// Feature family. The derived order (SP before DISK) is the dedup tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Sp,
    Disk,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Sp, Channel::Disk];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Sp => "SP",
            Channel::Disk => "DISK",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Channel::Sp => 0,
            Channel::Disk => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Channel::Sp),
            1 => Some(Channel::Disk),
            _ => None,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SP" => Ok(Channel::Sp),
            "DISK" => Ok(Channel::Disk),
            other => Err(format!("unknown channel {other:?}")),
        }
    }
}

/// Which pretrained weights produced the features. Carried through, never interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightsVariant {
    #[default]
    Outdoor,
    Indoor,
}

impl WeightsVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightsVariant::Outdoor => "outdoor",
            WeightsVariant::Indoor => "indoor",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            WeightsVariant::Outdoor => 0,
            WeightsVariant::Indoor => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(WeightsVariant::Outdoor),
            1 => Some(WeightsVariant::Indoor),
            _ => None,
        }
    }
}

impl FromStr for WeightsVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outdoor" => Ok(WeightsVariant::Outdoor),
            "indoor" => Ok(WeightsVariant::Indoor),
            other => Err(format!("unknown weights variant {other:?}")),
        }
    }
}

/// A detected keypoint in working-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub score: f32,
    /// Ordinal within the owning [`FeatureSet`].
    pub index: u32,
}

/// Keypoints and unit-norm descriptors for one image, one channel, one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub image_id: String,
    pub channel: Channel,
    pub weights_variant: WeightsVariant,
    /// `working / original`, isotropic.
    pub scale_factor: f64,
    pub original_size: (u32, u32),
    pub working_size: (u32, u32),
    pub keypoints: Vec<Keypoint>,
    /// Row-major `keypoints.len() × descriptor_dim`.
    pub descriptors: Vec<f32>,
    pub descriptor_dim: usize,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn descriptor(&self, row: usize) -> &[f32] {
        let d = self.descriptor_dim;
        &self.descriptors[row * d..(row + 1) * d]
    }

    /// Rescales every descriptor row to unit Euclidean norm. Rows whose norm
    /// is already within tolerance are left bit-identical.
    pub fn normalize_descriptors(&mut self) -> Result<(), ValidationError> {
        let d = self.descriptor_dim;
        if d == 0 {
            return Ok(());
        }
        for (row, chunk) in self.descriptors.chunks_mut(d).enumerate() {
            let norm = chunk.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
            ensure!(norm.is_finite() && norm > 0.0, "descriptor row {row} has norm {norm}");
            if (norm - 1.0).abs() > DESCRIPTOR_NORM_TOL {
                for v in chunk.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        Ok(())
    }

    /// Keeps the keypoints whose `index` is listed (in the given order) and
    /// renumbers them; descriptor rows follow their keypoints.
    pub fn select(&self, kept: &[Keypoint]) -> FeatureSet {
        let d = self.descriptor_dim;
        let mut keypoints = Vec::with_capacity(kept.len());
        let mut descriptors = Vec::with_capacity(kept.len() * d);
        for (ordinal, kp) in kept.iter().enumerate() {
            let row = kp.index as usize;
            descriptors.extend_from_slice(self.descriptor(row));
            keypoints.push(Keypoint { index: ordinal as u32, ..*kp });
        }
        FeatureSet {
            keypoints,
            descriptors,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> FeatureSet {
        FeatureSet {
            image_id: self.image_id.clone(),
            channel: self.channel,
            weights_variant: self.weights_variant,
            scale_factor: self.scale_factor,
            original_size: self.original_size,
            working_size: self.working_size,
            keypoints: Vec::new(),
            descriptors: Vec::new(),
            descriptor_dim: self.descriptor_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let n = self.keypoints.len();
        let (ow, oh) = self.original_size;
        let (ww, wh) = self.working_size;
        ensure!(ow > 0 && oh > 0, "original size {ow}x{oh} must be positive");
        ensure!(ww > 0 && wh > 0, "working size {ww}x{wh} must be positive");
        ensure!(
            self.scale_factor.is_finite() && self.scale_factor > 0.0,
            "scale factor {} must be positive",
            self.scale_factor
        );
        // Integer rounding of the working size bounds the achievable isotropy.
        for (working, original) in [(ww, ow), (wh, oh)] {
            let ratio = f64::from(working) / f64::from(original);
            let tol = (0.5 / f64::from(original)).max(1e-6);
            ensure!(
                (ratio - self.scale_factor).abs() <= tol,
                "scale factor {} inconsistent with {working}/{original}",
                self.scale_factor
            );
        }
        ensure!(
            self.descriptors.len() == n * self.descriptor_dim,
            "descriptor block has {} values, expected {n}x{}",
            self.descriptors.len(),
            self.descriptor_dim
        );
        ensure!(n == 0 || self.descriptor_dim > 0, "non-empty set with zero descriptor dim");
        for (i, kp) in self.keypoints.iter().enumerate() {
            ensure!(kp.index as usize == i, "keypoint {i} carries index {}", kp.index);
            ensure!(kp.x.is_finite() && kp.y.is_finite(), "keypoint {i} is not finite");
            ensure!(
                kp.x >= 0.0 && kp.x < ww as f32 && kp.y >= 0.0 && kp.y < wh as f32,
                "keypoint {i} at ({}, {}) outside {ww}x{wh}",
                kp.x,
                kp.y
            );
            ensure!(kp.score.is_finite() && kp.score >= 0.0, "keypoint {i} score {}", kp.score);
        }
        if self.descriptor_dim > 0 {
            for (row, chunk) in self.descriptors.chunks(self.descriptor_dim).enumerate() {
                let norm = chunk.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt();
                ensure!(
                    (norm - 1.0).abs() <= DESCRIPTOR_NORM_TOL,
                    "descriptor row {row} has norm {norm}"
                );
            }
        }
        Ok(())
    }
}

/// One candidate match, in original image coordinates of both images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub a: [f32; 2],
    pub b: [f32; 2],
    pub confidence: f32,
    pub channel: Channel,
    pub scale_tag: f32,
}

impl Correspondence {
    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure!(
            self.a.iter().chain(&self.b).all(|v| v.is_finite()),
            "non-finite coordinate in {:?}",
            self
        );
        ensure!(
            self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence),
            "confidence {} outside [0, 1]",
            self.confidence
        );
        ensure!(
            self.scale_tag.is_finite() && self.scale_tag > 0.0,
            "scale tag {} must be positive",
            self.scale_tag
        );
        Ok(())
    }

    /// Bit pattern identifying the correspondence for duplicate detection.
    pub(crate) fn identity_key(&self) -> [u32; 6] {
        [
            self.a[0].to_bits(),
            self.a[1].to_bits(),
            self.b[0].to_bits(),
            self.b[1].to_bits(),
            u32::from(self.channel.to_byte()),
            self.scale_tag.to_bits(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
    pub correspondences: Vec<Correspondence>,
}

impl MatchSet {
    pub fn new(pair_id: impl Into<String>, image_a: impl Into<String>, image_b: impl Into<String>) -> Self {
        MatchSet {
            pair_id: pair_id.into(),
            image_a: image_a.into(),
            image_b: image_b.into(),
            correspondences: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.correspondences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correspondences.is_empty()
    }

    /// Same pair metadata, no correspondences.
    pub fn emptied(&self) -> MatchSet {
        MatchSet {
            correspondences: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_correspondences(&self, correspondences: Vec<Correspondence>) -> MatchSet {
        MatchSet {
            pair_id: self.pair_id.clone(),
            image_a: self.image_a.clone(),
            image_b: self.image_b.clone(),
            correspondences,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut seen = std::collections::HashSet::with_capacity(self.correspondences.len());
        for (i, c) in self.correspondences.iter().enumerate() {
            c.validate().map_err(|e| ValidationError(format!("correspondence {i}: {}", e.0)))?;
            ensure!(seen.insert(c.identity_key()), "correspondence {i} duplicates an earlier row");
        }
        Ok(())
    }
}

/// One row of the submission table plus the knobs the table leaves implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub sp_max_keypoints: usize,
    pub disk_max_keypoints: usize,
    pub sp_nms_radius: f64,
    pub disk_nms_radius: f64,
    pub sp_match_score: f64,
    pub disk_match_score: f64,
    pub working_max_dim: u32,
    pub multi_scale_sp: bool,
    pub multi_scale_disk: bool,
    pub scale_set: Vec<f64>,
    pub dedup_tolerance: f64,
    pub discard_num: usize,
    pub degensac_threshold: f64,
    pub degensac_max_iters: u64,
    pub degensac_confidence: f64,
    pub rng_seed: u64,
    pub weights_variant: WeightsVariant,
}

pub const DEFAULT_SCALE_SET: [f64; 3] = [1.0, std::f64::consts::FRAC_1_SQRT_2, 0.5];

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sp_max_keypoints: 4096,
            disk_max_keypoints: 6000,
            sp_nms_radius: 4.0,
            disk_nms_radius: 4.0,
            sp_match_score: 0.2,
            disk_match_score: 0.7,
            working_max_dim: 1600,
            multi_scale_sp: false,
            multi_scale_disk: false,
            scale_set: DEFAULT_SCALE_SET.to_vec(),
            dedup_tolerance: 2.0,
            discard_num: 0,
            degensac_threshold: 1.1,
            degensac_max_iters: 1_000_000,
            degensac_confidence: 0.9999,
            rng_seed: 0,
            weights_variant: WeightsVariant::Outdoor,
        }
    }
}

impl PipelineConfig {
    pub fn match_score(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Sp => self.sp_match_score,
            Channel::Disk => self.disk_match_score,
        }
    }

    pub fn max_keypoints(&self, channel: Channel) -> usize {
        match channel {
            Channel::Sp => self.sp_max_keypoints,
            Channel::Disk => self.disk_max_keypoints,
        }
    }

    pub fn nms_radius(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Sp => self.sp_nms_radius,
            Channel::Disk => self.disk_nms_radius,
        }
    }

    pub fn multi_scale(&self, channel: Channel) -> bool {
        match channel {
            Channel::Sp => self.multi_scale_sp,
            Channel::Disk => self.multi_scale_disk,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure!(
            self.degensac_threshold.is_finite() && self.degensac_threshold > 0.0,
            "degensac_threshold must be > 0"
        );
        ensure!(self.degensac_max_iters >= 1, "degensac_max_iters must be >= 1");
        ensure!(
            self.degensac_confidence > 0.0 && self.degensac_confidence < 1.0,
            "degensac_confidence must lie in (0, 1)"
        );
        for (name, v) in [("sp_match_score", self.sp_match_score), ("disk_match_score", self.disk_match_score)] {
            ensure!((0.0..=1.0).contains(&v), "{name} {v} outside [0, 1]");
        }
        for (name, v) in [
            ("sp_nms_radius", self.sp_nms_radius),
            ("disk_nms_radius", self.disk_nms_radius),
            ("dedup_tolerance", self.dedup_tolerance),
        ] {
            ensure!(v.is_finite() && v >= 0.0, "{name} {v} must be >= 0");
        }
        ensure!(self.working_max_dim > 0, "working_max_dim must be positive");
        ensure!(
            self.scale_set.contains(&1.0),
            "scale_set must contain 1.0"
        );
        ensure!(
            self.scale_set.iter().all(|&s| s > 0.0 && s <= 1.0),
            "scale_set values must lie in (0, 1]"
        );
        Ok(())
    }
}

/// Rank-2 fundamental matrix in canonical scale: unit Frobenius norm with the
/// largest-magnitude entry positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Canonicalizes `m`. Returns `None` for a zero or non-finite matrix.
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        canonicalize(m).map(FundamentalMatrix)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `σ3 / σ1` of the matrix.
    pub fn rank_ratio(&self) -> f64 {
        let sv = self.0.singular_values();
        let max = sv.max();
        if max == 0.0 {
            return f64::INFINITY;
        }
        sv.min() / max
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure!(self.0.iter().all(|v| v.is_finite()), "fundamental matrix is not finite");
        let norm = self.0.norm();
        ensure!((norm - 1.0).abs() <= CANONICAL_NORM_TOL, "Frobenius norm {norm} != 1");
        let ratio = self.rank_ratio();
        ensure!(ratio < RANK2_TOL, "not rank 2: sigma ratio {ratio:e}");
        Ok(())
    }
}

/// Unit Frobenius norm, sign fixed so that the largest-magnitude entry
/// (first in row-major order on ties) is positive.
pub(crate) fn canonicalize(m: Matrix3<f64>) -> Option<Matrix3<f64>> {
    let norm = m.norm();
    if !norm.is_finite() || norm == 0.0 {
        return None;
    }
    let mut pivot = 0.0f64;
    for r in 0..3 {
        for c in 0..3 {
            let v = m[(r, c)];
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
    }
    let scale = if pivot < 0.0 { -norm } else { norm };
    Some(m / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VerificationStatus {
    Verified,
    DiscardedPrefilter,
    TooFewMatches,
    NoModel,
    DegeneratePlane,
}

impl VerificationStatus {
    pub const ALL: [VerificationStatus; 5] = [
        VerificationStatus::Verified,
        VerificationStatus::DiscardedPrefilter,
        VerificationStatus::TooFewMatches,
        VerificationStatus::NoModel,
        VerificationStatus::DegeneratePlane,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerificationStatus::Verified => "VERIFIED",
            VerificationStatus::DiscardedPrefilter => "DISCARDED_PREFILTER",
            VerificationStatus::TooFewMatches => "TOO_FEW_MATCHES",
            VerificationStatus::NoModel => "NO_MODEL",
            VerificationStatus::DegeneratePlane => "DEGENERATE_PLANE",
        }
    }
}

impl fmt::Display for VerificationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerificationStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub pair_id: String,
    pub status: VerificationStatus,
    pub fundamental: Option<FundamentalMatrix>,
    /// One flag per input correspondence.
    pub inlier_mask: Vec<bool>,
    pub iterations_run: u64,
    pub inlier_count: usize,
}

impl VerificationResult {
    /// A result carrying no model and no inliers.
    pub fn without_model(pair_id: &str, status: VerificationStatus, n: usize, iterations_run: u64) -> Self {
        VerificationResult {
            pair_id: pair_id.to_owned(),
            status,
            fundamental: None,
            inlier_mask: vec![false; n],
            iterations_run,
            inlier_count: 0,
        }
    }

    /// Checks the result against the correspondences it was computed from.
    pub fn validate(&self, set: &MatchSet, threshold: f64) -> Result<(), ValidationError> {
        ensure!(
            self.inlier_mask.len() == set.len(),
            "mask length {} != {} correspondences",
            self.inlier_mask.len(),
            set.len()
        );
        let popcount = self.inlier_mask.iter().filter(|&&m| m).count();
        ensure!(popcount == self.inlier_count, "inlier_count {} != mask popcount {popcount}", self.inlier_count);
        if self.status == VerificationStatus::Verified {
            ensure!(self.fundamental.is_some(), "VERIFIED without a model");
            ensure!(
                self.inlier_count >= MIN_SOLVABLE_MATCHES,
                "VERIFIED with only {} inliers",
                self.inlier_count
            );
        }
        if let Some(f) = &self.fundamental {
            f.validate()?;
            let inliers = set.correspondences.iter().zip(&self.inlier_mask).enumerate();
            for (i, (c, _)) in inliers.filter(|(_, (_, &m))| m) {
                let d = crate::geometry::sampson_distance(f, &crate::geometry::to_point_match(c));
                ensure!(
                    matches!(d, Ok(d) if d <= threshold),
                    "inlier {i} has Sampson distance {d:?} > {threshold}"
                );
            }
        }
        Ok(())
    }
}
