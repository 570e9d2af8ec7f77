//! Line-oriented `key=value` text form of [`PipelineConfig`].
//!
//! Every field is one line. Blank lines and `#` comments are ignored when
//! parsing; keys missing from the text keep their default value.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::model::{PipelineConfig, ValidationError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("PARSE_ERROR: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("INVALID: {0}")]
    Invalid(String),
}

impl From<ValidationError> for ConfigError {
    fn from(e: ValidationError) -> Self {
        ConfigError::Invalid(e.0)
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "Y"
    } else {
        "N"
    }
}

/// Canonical text: fixed key order, shortest round-trip float formatting.
pub fn to_text(cfg: &PipelineConfig) -> String {
    let scale_set = cfg.scale_set.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    let mut line = |k: &str, v: &dyn std::fmt::Display| {
        writeln!(out, "{k}={v}").expect("writing to a String");
    };
    line("sp_max_keypoints", &cfg.sp_max_keypoints);
    line("disk_max_keypoints", &cfg.disk_max_keypoints);
    line("sp_nms_radius", &cfg.sp_nms_radius);
    line("disk_nms_radius", &cfg.disk_nms_radius);
    line("sp_match_score", &cfg.sp_match_score);
    line("disk_match_score", &cfg.disk_match_score);
    line("working_max_dim", &cfg.working_max_dim);
    line("multi_scale_sp", &yes_no(cfg.multi_scale_sp));
    line("multi_scale_disk", &yes_no(cfg.multi_scale_disk));
    line("scale_set", &scale_set);
    line("dedup_tolerance", &cfg.dedup_tolerance);
    line("discard_num", &cfg.discard_num);
    line("degensac_threshold", &cfg.degensac_threshold);
    line("degensac_max_iters", &cfg.degensac_max_iters);
    line("degensac_confidence", &cfg.degensac_confidence);
    line("rng_seed", &cfg.rng_seed);
    line("weights_variant", &cfg.weights_variant.as_str());
    out
}

fn parse_value<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("bad value {v:?} for {key}"),
    })
}

fn parse_flag(v: &str, line: usize, key: &str) -> Result<bool, ConfigError> {
    match v {
        "Y" | "y" | "true" | "1" => Ok(true),
        "N" | "n" | "false" | "0" => Ok(false),
        _ => Err(ConfigError::Parse {
            line,
            msg: format!("bad flag {v:?} for {key}"),
        }),
    }
}

/// Parses config text over the defaults, then validates.
pub fn from_text(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = PipelineConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let (key, value) = raw.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            msg: format!("expected key=value, got {raw:?}"),
        })?;
        let (key, v) = (key.trim(), value.trim());
        match key {
            "sp_max_keypoints" => cfg.sp_max_keypoints = parse_value(v, line, key)?,
            "disk_max_keypoints" => cfg.disk_max_keypoints = parse_value(v, line, key)?,
            "sp_nms_radius" => cfg.sp_nms_radius = parse_value(v, line, key)?,
            "disk_nms_radius" => cfg.disk_nms_radius = parse_value(v, line, key)?,
            "sp_match_score" => cfg.sp_match_score = parse_value(v, line, key)?,
            "disk_match_score" => cfg.disk_match_score = parse_value(v, line, key)?,
            "working_max_dim" => cfg.working_max_dim = parse_value(v, line, key)?,
            "multi_scale_sp" => cfg.multi_scale_sp = parse_flag(v, line, key)?,
            "multi_scale_disk" => cfg.multi_scale_disk = parse_flag(v, line, key)?,
            "scale_set" => {
                cfg.scale_set = v
                    .split(',')
                    .map(|s| parse_value(s.trim(), line, key))
                    .collect::<Result<_, _>>()?
            }
            "dedup_tolerance" => cfg.dedup_tolerance = parse_value(v, line, key)?,
            "discard_num" => cfg.discard_num = parse_value(v, line, key)?,
            "degensac_threshold" => cfg.degensac_threshold = parse_value(v, line, key)?,
            "degensac_max_iters" => cfg.degensac_max_iters = parse_value(v, line, key)?,
            "degensac_confidence" => cfg.degensac_confidence = parse_value(v, line, key)?,
            "rng_seed" => cfg.rng_seed = parse_value(v, line, key)?,
            "weights_variant" => {
                cfg.weights_variant = v.parse().map_err(|msg| ConfigError::Parse { line, msg })?
            }
            other => {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// First 16 hex digits of the SHA-256 of the canonical text.
pub fn fingerprint(cfg: &PipelineConfig) -> String {
    let digest = Sha256::digest(to_text(cfg).as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
