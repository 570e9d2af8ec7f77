//! Per-pair pipeline: channel matches, score filter, scale merge, channel
//! fusion, discard threshold, verification.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::evalharness::{finalize_pair, PairRecord};
use crate::featureio::{read_feature_file, read_match_file, FormatError, ManifestEntry, PairManifest};
use crate::fusion::{apply_discard_threshold, fuse_channels, merge_scales, split_by_scale, FusionError};
use crate::geometry::degensac;
use crate::matching::{budget_features, filter_matches_by_score, mutual_nn_match, rescale_to_working, MatchingError};
use crate::model::{Channel, FeatureSet, MatchSet, PipelineConfig, VerificationResult, VerificationStatus};

/// Relative tolerance when pairing feature sets of two images by scale level.
const SCALE_LEVEL_TOL: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{pair_id}: {}: {source}", path.display())]
    Format {
        pair_id: String,
        path: PathBuf,
        source: FormatError,
    },
    #[error("{pair_id}: {source}")]
    Matching { pair_id: String, source: MatchingError },
    #[error("{pair_id}: {source}")]
    Fusion { pair_id: String, source: FusionError },
    #[error("{pair_id}: INVALID: {msg}")]
    Invalid { pair_id: String, msg: String },
}

impl PipelineError {
    fn invalid(pair_id: &str, msg: impl Into<String>) -> Self {
        PipelineError::Invalid {
            pair_id: pair_id.to_owned(),
            msg: msg.into(),
        }
    }
}

/// Everything the pipeline needs for one pair, already in memory.
#[derive(Debug, Clone, Default)]
pub struct PairInput {
    pub pair_id: String,
    pub image_a: String,
    pub image_b: String,
    pub features_a: Vec<FeatureSet>,
    pub features_b: Vec<FeatureSet>,
    /// Precomputed matcher output; takes precedence over features of the same channel.
    pub match_sets: Vec<(Channel, MatchSet)>,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    /// Fused set before the discard threshold.
    pub fused: MatchSet,
    pub result: VerificationResult,
}

/// Scale of `set` relative to the base working resolution of its image.
fn scale_level(set: &FeatureSet, cfg: &PipelineConfig) -> f64 {
    let (_, base) = rescale_to_working(set.original_size, cfg.working_max_dim);
    set.scale_factor / base
}

fn check_working_size(pair_id: &str, set: &FeatureSet, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let (w, h) = set.working_size;
    if w.max(h) > cfg.working_max_dim {
        return Err(PipelineError::invalid(
            pair_id,
            format!(
                "{} working size {w}x{h} exceeds working_max_dim {}",
                set.image_id, cfg.working_max_dim
            ),
        ));
    }
    Ok(())
}

/// Mutual-nearest-neighbour matches for one channel, one set per scale level
/// present in both images. Coarse levels are skipped when the channel runs
/// single-scale.
fn match_channel_features(input: &PairInput, channel: Channel, cfg: &PipelineConfig) -> Result<MatchSet, PipelineError> {
    let pair_id = input.pair_id.as_str();
    let mut out = MatchSet::new(pair_id, input.image_a.as_str(), input.image_b.as_str());
    let sets_a: Vec<&FeatureSet> = input.features_a.iter().filter(|s| s.channel == channel).collect();
    let sets_b: Vec<&FeatureSet> = input.features_b.iter().filter(|s| s.channel == channel).collect();
    for set_a in &sets_a {
        check_working_size(pair_id, set_a, cfg)?;
        let level = scale_level(set_a, cfg);
        let is_base = (level - 1.0).abs() <= SCALE_LEVEL_TOL;
        if !is_base && !cfg.multi_scale(channel) {
            continue;
        }
        let Some(set_b) = sets_b
            .iter()
            .find(|b| (scale_level(b, cfg) - level).abs() <= SCALE_LEVEL_TOL * level)
        else {
            continue;
        };
        check_working_size(pair_id, set_b, cfg)?;
        let radius = cfg.nms_radius(channel);
        let budget = cfg.max_keypoints(channel);
        let a = budget_features(set_a, radius, budget);
        let b = budget_features(set_b, radius, budget);
        let tag = if is_base { 1.0 } else { level as f32 };
        let matched = mutual_nn_match(pair_id, &a, &b, 0.0, tag).map_err(|source| PipelineError::Matching {
            pair_id: pair_id.to_owned(),
            source,
        })?;
        out.correspondences.extend(matched.correspondences);
    }
    Ok(out)
}

/// Raw matcher output per channel, from match files when given, else from features.
pub fn channel_matches(input: &PairInput, cfg: &PipelineConfig) -> Result<Vec<MatchSet>, PipelineError> {
    Channel::ALL
        .iter()
        .map(|&channel| {
            let given: Vec<&MatchSet> = input
                .match_sets
                .iter()
                .filter(|(c, _)| *c == channel)
                .map(|(_, m)| m)
                .collect();
            match given.as_slice() {
                [] => match_channel_features(input, channel, cfg),
                [one] => {
                    if one.correspondences.iter().any(|c| c.channel != channel) {
                        return Err(PipelineError::invalid(
                            &input.pair_id,
                            format!("match set listed as {channel} holds other channels"),
                        ));
                    }
                    Ok((*one).clone())
                }
                _ => Err(PipelineError::invalid(
                    &input.pair_id,
                    format!("more than one match set for channel {channel}"),
                )),
            }
        })
        .collect()
}

/// Score filter, per-channel scale merge, channel fusion, discard threshold
/// and verification for raw per-channel matcher output.
pub fn process_channels(pair_id: &str, channels: &[MatchSet], cfg: &PipelineConfig) -> Result<PairOutcome, PipelineError> {
    let fusion_err = |source| PipelineError::Fusion {
        pair_id: pair_id.to_owned(),
        source,
    };
    if let Some(other) = channels.iter().find(|m| m.pair_id != pair_id) {
        return Err(fusion_err(FusionError::PairIdMismatch {
            expected: pair_id.to_owned(),
            found: other.pair_id.clone(),
        }));
    }
    let mut merged = Vec::with_capacity(Channel::ALL.len());
    for &channel in &Channel::ALL {
        let mut raw = channels
            .first()
            .map_or_else(|| MatchSet::new(pair_id, "", ""), MatchSet::emptied);
        for set in channels {
            raw.correspondences
                .extend(set.correspondences.iter().filter(|c| c.channel == channel));
        }
        let filtered = filter_matches_by_score(&raw, cfg.sp_match_score, cfg.disk_match_score);
        let per_scale = split_by_scale(&filtered);
        if per_scale.is_empty() {
            merged.push(filtered);
            continue;
        }
        merged.push(merge_scales(&per_scale, cfg.multi_scale(channel), cfg.dedup_tolerance).map_err(fusion_err)?);
    }
    let fused = fuse_channels(&merged, cfg.dedup_tolerance).map_err(fusion_err)?;
    let kept = apply_discard_threshold(&fused, cfg.discard_num);
    let result = if kept.is_empty() && cfg.discard_num > 0 {
        VerificationResult::without_model(pair_id, VerificationStatus::DiscardedPrefilter, 0, 0)
    } else {
        degensac(&kept, cfg)
    };
    Ok(PairOutcome { fused, result })
}

pub fn process_pair(input: &PairInput, cfg: &PipelineConfig) -> Result<PairOutcome, PipelineError> {
    let channels = channel_matches(input, cfg)?;
    process_channels(&input.pair_id, &channels, cfg)
}

/// Reads every file an entry references.
pub fn load_pair(entry: &ManifestEntry) -> Result<PairInput, PipelineError> {
    let format_err = |path: &Path| {
        let pair_id = entry.pair_id.clone();
        let path = path.to_path_buf();
        move |source| PipelineError::Format { pair_id, path, source }
    };
    let read_features = |files: &[(Channel, PathBuf)]| {
        files
            .iter()
            .map(|(channel, path)| {
                let set = read_feature_file(path).map_err(format_err(path))?;
                if set.channel != *channel {
                    return Err(PipelineError::invalid(
                        &entry.pair_id,
                        format!("{} holds {} features, listed as {channel}", path.display(), set.channel),
                    ));
                }
                Ok(set)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let match_sets = entry
        .match_files
        .iter()
        .map(|(channel, path)| Ok((*channel, read_match_file(path).map_err(format_err(path))?)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PairInput {
        pair_id: entry.pair_id.clone(),
        image_a: entry.image_a.clone(),
        image_b: entry.image_b.clone(),
        features_a: read_features(&entry.features_a)?,
        features_b: read_features(&entry.features_b)?,
        match_sets,
    })
}

/// Runs every manifest pair on a pool of `jobs` threads; records come back
/// in manifest order. The first failing pair in manifest order is reported.
pub fn run_manifest(manifest: &PairManifest, cfg: &PipelineConfig, jobs: usize) -> Result<Vec<PairRecord>, PipelineError> {
    let run = || {
        manifest
            .entries
            .par_iter()
            .map(|entry| {
                let input = load_pair(entry)?;
                let outcome = process_pair(&input, cfg)?;
                Ok(finalize_pair(&outcome.result, entry.label))
            })
            .collect::<Vec<Result<PairRecord, PipelineError>>>()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    results.into_iter().collect()
}
