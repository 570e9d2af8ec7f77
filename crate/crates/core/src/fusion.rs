//! Channel and scale fusion, deduplication, and the discarding threshold.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::model::{Correspondence, MatchSet};

/// Scale tags within this distance of 1.0 count as the base scale.
const BASE_SCALE_TOL: f32 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FusionError {
    #[error("PAIR_ID_MISMATCH: expected {expected:?}, found {found:?}")]
    PairIdMismatch { expected: String, found: String },
    #[error("nothing to fuse")]
    Empty,
}

pub fn is_base_scale(scale: f32) -> bool {
    (scale - 1.0).abs() <= BASE_SCALE_TOL
}

/// Survivor priority: higher confidence, then SP before DISK, then lower
/// scale tag, then coordinates. Total, so the order never depends on input order.
fn priority(x: &Correspondence, y: &Correspondence) -> Ordering {
    y.confidence
        .total_cmp(&x.confidence)
        .then(x.channel.cmp(&y.channel))
        .then(x.scale_tag.total_cmp(&y.scale_tag))
        .then(x.a[0].total_cmp(&y.a[0]))
        .then(x.a[1].total_cmp(&y.a[1]))
        .then(x.b[0].total_cmp(&y.b[0]))
        .then(x.b[1].total_cmp(&y.b[1]))
}

/// Greedy spatial deduplication.
///
/// Two correspondences are duplicates when both endpoint distances are
/// `<= tolerance`. Candidates are visited in priority order and kept unless a
/// kept one duplicates them; the output is in that order.
pub fn dedup(correspondences: &[Correspondence], tolerance: f64) -> Vec<Correspondence> {
    let mut order: Vec<&Correspondence> = correspondences.iter().collect();
    order.sort_by(|x, y| priority(x, y));

    let cell = if tolerance > 0.0 { tolerance } else { 1.0 };
    let key = |p: [f32; 2]| {
        (
            (f64::from(p[0]) / cell).floor() as i64,
            (f64::from(p[1]) / cell).floor() as i64,
        )
    };
    let dist = |p: [f32; 2], q: [f32; 2]| {
        (f64::from(p[0]) - f64::from(q[0])).hypot(f64::from(p[1]) - f64::from(q[1]))
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<Correspondence> = Vec::new();
    for c in order {
        let (kx, ky) = key(c.a);
        let duplicate = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(kx + dx, ky + dy)).is_some_and(|bucket| {
                    bucket.iter().any(|&k| {
                        let other = &kept[k];
                        dist(other.a, c.a) <= tolerance && dist(other.b, c.b) <= tolerance
                    })
                })
            })
        });
        if !duplicate {
            grid.entry((kx, ky)).or_default().push(kept.len());
            kept.push(*c);
        }
    }
    kept
}

fn check_pair_ids<'a>(mut sets: impl Iterator<Item = &'a MatchSet>) -> Result<&'a MatchSet, FusionError> {
    let first = sets.next().ok_or(FusionError::Empty)?;
    for s in sets {
        if s.pair_id != first.pair_id {
            return Err(FusionError::PairIdMismatch {
                expected: first.pair_id.clone(),
                found: s.pair_id.clone(),
            });
        }
    }
    Ok(first)
}

/// Union of per-channel match sets for one pair, deduplicated.
pub fn fuse_channels(sets: &[MatchSet], tolerance: f64) -> Result<MatchSet, FusionError> {
    let first = check_pair_ids(sets.iter())?;
    let all: Vec<Correspondence> = sets.iter().flat_map(|s| s.correspondences.iter().copied()).collect();
    Ok(first.with_correspondences(dedup(&all, tolerance)))
}

/// Union of per-scale match sets, deduplicated. With `multi_scale` off only
/// the base scale contributes.
pub fn merge_scales(per_scale: &[(f32, MatchSet)], multi_scale: bool, tolerance: f64) -> Result<MatchSet, FusionError> {
    let first = check_pair_ids(per_scale.iter().map(|(_, s)| s))?;
    let all: Vec<Correspondence> = per_scale
        .iter()
        .filter(|(scale, _)| multi_scale || is_base_scale(*scale))
        .flat_map(|(_, s)| s.correspondences.iter().copied())
        .collect();
    Ok(first.with_correspondences(dedup(&all, tolerance)))
}

/// Splits a set by `scale_tag`, in ascending scale order.
pub fn split_by_scale(set: &MatchSet) -> Vec<(f32, MatchSet)> {
    let mut groups: Vec<(f32, MatchSet)> = Vec::new();
    for c in &set.correspondences {
        match groups.iter_mut().find(|(s, _)| s.to_bits() == c.scale_tag.to_bits()) {
            Some((_, g)) => g.correspondences.push(*c),
            None => {
                let mut g = set.emptied();
                g.correspondences.push(*c);
                groups.push((c.scale_tag, g));
            }
        }
    }
    groups.sort_by(|x, y| x.0.total_cmp(&y.0));
    groups
}

/// All-or-nothing: fewer than `discard_num` matches empties the set.
pub fn apply_discard_threshold(set: &MatchSet, discard_num: usize) -> MatchSet {
    if set.len() < discard_num {
        set.emptied()
    } else {
        set.clone()
    }
}
