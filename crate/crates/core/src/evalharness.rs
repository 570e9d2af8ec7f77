//! Per-pair records, benchmark aggregation, report files, and the submission presets.

use std::fmt::Write as _;

use crate::featureio::PairLabel;
use crate::model::{PipelineConfig, VerificationResult, VerificationStatus, WeightsVariant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRecord {
    pub pair_id: String,
    pub label: PairLabel,
    pub status: VerificationStatus,
    /// Matches the pair hands to the benchmark: the inliers when verified, else 0.
    pub reported_matches: usize,
    pub inlier_count: usize,
}

pub fn finalize_pair(vr: &VerificationResult, label: PairLabel) -> PairRecord {
    let reported_matches = if vr.status == VerificationStatus::Verified {
        vr.inlier_count
    } else {
        0
    };
    PairRecord {
        pair_id: vr.pair_id.clone(),
        label,
        status: vr.status,
        reported_matches,
        inlier_count: vr.inlier_count,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Mean inlier count over matching pairs.
    pub mean_inliers: Option<f64>,
    /// Fraction of matching pairs that were verified.
    pub match_success_rate: Option<f64>,
    /// Mean reported matches over non-matching pairs.
    pub mean_nonmatch_matches: Option<f64>,
    /// Record count per status, in [`VerificationStatus::ALL`] order.
    pub status_counts: Vec<(VerificationStatus, usize)>,
    pub config_fingerprint: String,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(records: &[PairRecord], config_fingerprint: &str) -> Report {
    let matching = || records.iter().filter(|r| r.label == PairLabel::Matching);
    let verified = |r: &PairRecord| if r.status == VerificationStatus::Verified { 1.0 } else { 0.0 };
    Report {
        mean_inliers: mean(matching().map(|r| r.inlier_count as f64)),
        match_success_rate: mean(matching().map(verified)),
        mean_nonmatch_matches: mean(
            records
                .iter()
                .filter(|r| r.label == PairLabel::NonMatching)
                .map(|r| r.reported_matches as f64),
        ),
        status_counts: VerificationStatus::ALL
            .iter()
            .map(|&s| (s, records.iter().filter(|r| r.status == s).count()))
            .collect(),
        config_fingerprint: config_fingerprint.to_owned(),
    }
}

pub const REPORT_HEADER: &str = "pair_id\tlabel\tstatus\treported\tinliers";

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"))
}

/// Header, one line per record in the given order, then the footers.
pub fn format_report(records: &[PairRecord], report: &Report) -> String {
    let mut out = String::new();
    writeln!(out, "{REPORT_HEADER}").unwrap();
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.pair_id, r.label, r.status, r.reported_matches, r.inlier_count
        )
        .unwrap();
    }
    writeln!(out, "#mean_inliers {}", metric(report.mean_inliers)).unwrap();
    writeln!(out, "#match_success_rate {}", metric(report.match_success_rate)).unwrap();
    writeln!(out, "#mean_nonmatch_matches {}", metric(report.mean_nonmatch_matches)).unwrap();
    writeln!(out, "#config {}", report.config_fingerprint).unwrap();
    out
}

/// One submission row: the knobs and the leaderboard results it obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub working_max_dim: u32,
    /// Indoor weights.
    pub scannet: bool,
    pub discard_num: usize,
    pub degensac_threshold: f64,
    pub multi_scale_sp: bool,
    pub multi_scale_disk: bool,
    pub disk_nms_radius: f64,
    pub sp_nms_radius: f64,
    pub disk_max_keypoints: usize,
    pub sp_max_keypoints: usize,
    pub disk_match_score: f64,
    pub sp_match_score: f64,
    pub degensac_max_iters: u64,
    pub reported_inliers: f64,
    /// Percent.
    pub reported_success_rate: f64,
    pub reported_nonmatch_matches: f64,
}

const fn row(
    name: &'static str,
    scannet: bool,
    discard_num: usize,
    degensac_threshold: f64,
    multi_scale: bool,
    sp_max_keypoints: usize,
    degensac_max_iters: u64,
    reported: (f64, f64, f64),
) -> Preset {
    Preset {
        name,
        working_max_dim: 1600,
        scannet,
        discard_num,
        degensac_threshold,
        multi_scale_sp: multi_scale,
        multi_scale_disk: multi_scale,
        disk_nms_radius: 4.0,
        sp_nms_radius: 4.0,
        disk_max_keypoints: 6000,
        sp_max_keypoints,
        disk_match_score: 0.7,
        sp_match_score: 0.2,
        degensac_max_iters,
        reported_inliers: reported.0,
        reported_success_rate: reported.1,
        reported_nonmatch_matches: reported.2,
    }
}

pub const PRESETS: [Preset; 7] = [
    row("sss-sd_100k_1", false, 0, 1.1, true, 2048, 100_000, (248.66, 51.02, 47.72)),
    row("sss-sd_100k_6", true, 0, 1.1, true, 2048, 1_000_000, (241.23, 50.12, 36.99)),
    row("sss-sd_100k_8", false, 0, 1.1, true, 4096, 1_000_000, (319.02, 52.19, 47.23)),
    row("aaa-1000k_no_ms", false, 8, 1.1, false, 4096, 1_000_000, (314.43, 51.04, 30.01)),
    row("aaa-1000k_no_ms2", false, 50, 1.1, false, 4096, 1_000_000, (312.75, 44.63, 23.15)),
    row("aaa-1000k_80_no_ms111", false, 8, 0.8, false, 4096, 100_000, (275.39, 51.40, 26.30)),
    row("aaa-1000k_50_no_ms111", false, 8, 0.5, false, 4096, 100_000, (214.70, 51.56, 21.80)),
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("UNKNOWN_PRESET: {0:?}")]
pub struct UnknownPreset(pub String);

pub fn find_preset(name: &str) -> Result<&'static Preset, UnknownPreset> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| UnknownPreset(name.to_owned()))
}

impl Preset {
    /// Knobs the row does not fix keep their [`PipelineConfig`] defaults.
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            sp_max_keypoints: self.sp_max_keypoints,
            disk_max_keypoints: self.disk_max_keypoints,
            sp_nms_radius: self.sp_nms_radius,
            disk_nms_radius: self.disk_nms_radius,
            sp_match_score: self.sp_match_score,
            disk_match_score: self.disk_match_score,
            working_max_dim: self.working_max_dim,
            multi_scale_sp: self.multi_scale_sp,
            multi_scale_disk: self.multi_scale_disk,
            discard_num: self.discard_num,
            degensac_threshold: self.degensac_threshold,
            degensac_max_iters: self.degensac_max_iters,
            weights_variant: if self.scannet {
                WeightsVariant::Indoor
            } else {
                WeightsVariant::Outdoor
            },
            ..PipelineConfig::default()
        }
    }
}

pub fn preset(name: &str) -> Result<PipelineConfig, UnknownPreset> {
    find_preset(name).map(Preset::config)
}

pub const PRESET_HEADER: &str = "methods\timage_size\tscannet\tdiscard_nums\tdegensac_th\tscale\tdisk_nms\tsp_nms\t\
disk_max_keypoints\tsp_max_keypoints\tdisk_match_score\tsp_match_score\tdegensac_iter\tinliers\tmatch_success_rate\t\
nonmatch_matches";

fn flag(v: bool) -> &'static str {
    if v {
        "Y"
    } else {
        "N"
    }
}

/// One tab-separated line in the column order of [`PRESET_HEADER`].
pub fn format_preset_row(p: &Preset) -> String {
    format!(
        "{}\t{}/{}\t{}\t{}\t{}\t{}/{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}k\t{:.2}\t{:.2}%\t{:.2}",
        p.name,
        p.working_max_dim,
        p.working_max_dim,
        flag(p.scannet),
        p.discard_num,
        p.degensac_threshold,
        flag(p.multi_scale_sp),
        flag(p.multi_scale_disk),
        p.disk_nms_radius,
        p.sp_nms_radius,
        p.disk_max_keypoints,
        p.sp_max_keypoints,
        p.disk_match_score,
        p.sp_match_score,
        p.degensac_max_iters / 1000,
        p.reported_inliers,
        p.reported_success_rate,
        p.reported_nonmatch_matches,
    )
}
