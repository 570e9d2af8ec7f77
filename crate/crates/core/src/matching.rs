//! Keypoint budgeting and match production.
//!
//! Keypoints live in working-resolution pixels; every correspondence this
//! module emits is in original-image pixels.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::model::{Channel, Correspondence, FeatureSet, Keypoint, MatchSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchingError {
    #[error("DIM_MISMATCH: descriptor dims {0} and {1} differ")]
    DimMismatch(usize, usize),
    #[error("CHANNEL_MISMATCH: cannot match {0} against {1}")]
    ChannelMismatch(Channel, Channel),
}

/// Working size and scale factor for an image whose longer side is capped at
/// `working_max_dim`. Never upscales.
pub fn rescale_to_working(original_size: (u32, u32), working_max_dim: u32) -> ((u32, u32), f64) {
    let (w, h) = original_size;
    let long = w.max(h);
    if long <= working_max_dim {
        return (original_size, 1.0);
    }
    let factor = f64::from(working_max_dim) / f64::from(long);
    let scaled = |side: u32| {
        if side == long {
            working_max_dim
        } else {
            ((f64::from(side) * factor).round() as u32).clamp(1, working_max_dim)
        }
    };
    ((scaled(w), scaled(h)), factor)
}

/// Descending score, then ascending index.
fn score_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    b.score.total_cmp(&a.score).then(a.index.cmp(&b.index))
}

/// Greedy radius suppression.
///
/// Visits keypoints by descending score (ties by ascending index) and keeps a
/// keypoint iff no kept keypoint lies within `radius`. The output keeps the
/// input order.
pub fn radius_nms(keypoints: &[Keypoint], radius: f64) -> Vec<Keypoint> {
    if keypoints.is_empty() {
        return Vec::new();
    }
    let cell = if radius > 0.0 { radius } else { 1.0 };
    let key = |x: f64, y: f64| ((x / cell).floor() as i64, (y / cell).floor() as i64);
    let mut order: Vec<usize> = (0..keypoints.len()).collect();
    order.sort_by(|&i, &j| score_order(&keypoints[i], &keypoints[j]));

    let mut grid: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
    let mut keep = vec![false; keypoints.len()];
    let r2 = radius * radius;
    for i in order {
        let (x, y) = (f64::from(keypoints[i].x), f64::from(keypoints[i].y));
        let (cx, cy) = key(x, y);
        let suppressed = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(cx + dx, cy + dy)).is_some_and(|pts| {
                    pts.iter().any(|&(px, py)| (px - x).powi(2) + (py - y).powi(2) <= r2)
                })
            })
        });
        if !suppressed {
            keep[i] = true;
            grid.entry((cx, cy)).or_default().push((x, y));
        }
    }
    keypoints
        .iter()
        .zip(keep)
        .filter_map(|(kp, k)| k.then_some(*kp))
        .collect()
}

/// The `k` best keypoints by score (ties by ascending index), best first.
pub fn top_k(keypoints: &[Keypoint], k: usize) -> Vec<Keypoint> {
    let mut sorted = keypoints.to_vec();
    sorted.sort_by(score_order);
    sorted.truncate(k);
    sorted
}

/// NMS followed by top-k, applied to a feature set; descriptor rows follow
/// their keypoints and the survivors are renumbered.
pub fn budget_features(set: &FeatureSet, radius: f64, k: usize) -> FeatureSet {
    let kept = top_k(&radius_nms(&set.keypoints, radius), k);
    set.select(&kept)
}

/// Keeps correspondences whose confidence reaches their channel's threshold.
pub fn filter_matches_by_score(set: &MatchSet, sp_min: f64, disk_min: f64) -> MatchSet {
    let kept = set
        .correspondences
        .iter()
        .filter(|c| {
            let min = match c.channel {
                Channel::Sp => sp_min,
                Channel::Disk => disk_min,
            };
            c.confidence >= min as f32
        })
        .copied()
        .collect();
    set.with_correspondences(kept)
}

fn nearest_rows(sim: &[f64], rows: usize, cols: usize, by_row: bool) -> Vec<usize> {
    let (outer, inner) = if by_row { (rows, cols) } else { (cols, rows) };
    (0..outer)
        .map(|o| {
            let mut best = 0;
            let mut best_s = f64::NEG_INFINITY;
            for i in 0..inner {
                let s = if by_row { sim[o * cols + i] } else { sim[i * cols + o] };
                // strict > keeps the lowest index on ties
                if s > best_s {
                    best_s = s;
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Mutual nearest neighbours by cosine similarity, scored `(s + 1) / 2`.
///
/// Ties in nearest-neighbour search go to the lower index. Coordinates are
/// divided by each set's `scale_factor`; every correspondence carries
/// `scale_tag`.
pub fn mutual_nn_match(
    pair_id: &str,
    set_a: &FeatureSet,
    set_b: &FeatureSet,
    min_score: f64,
    scale_tag: f32,
) -> Result<MatchSet, MatchingError> {
    if set_a.channel != set_b.channel {
        return Err(MatchingError::ChannelMismatch(set_a.channel, set_b.channel));
    }
    let mut out = MatchSet::new(pair_id, set_a.image_id.clone(), set_b.image_id.clone());
    if set_a.is_empty() || set_b.is_empty() {
        return Ok(out);
    }
    if set_a.descriptor_dim != set_b.descriptor_dim {
        return Err(MatchingError::DimMismatch(set_a.descriptor_dim, set_b.descriptor_dim));
    }
    let (n, m) = (set_a.len(), set_b.len());
    let mut sim = vec![0.0f64; n * m];
    for i in 0..n {
        let da = set_a.descriptor(i);
        for j in 0..m {
            let db = set_b.descriptor(j);
            sim[i * m + j] = da.iter().zip(db).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
        }
    }
    let nn_ab = nearest_rows(&sim, n, m, true);
    let nn_ba = nearest_rows(&sim, n, m, false);
    for (i, &j) in nn_ab.iter().enumerate() {
        if nn_ba[j] != i {
            continue;
        }
        let score = ((sim[i * m + j] + 1.0) / 2.0).clamp(0.0, 1.0);
        if score < min_score {
            continue;
        }
        let (ka, kb) = (&set_a.keypoints[i], &set_b.keypoints[j]);
        let to_original = |v: f32, s: f64| (f64::from(v) / s) as f32;
        out.correspondences.push(Correspondence {
            a: [to_original(ka.x, set_a.scale_factor), to_original(ka.y, set_a.scale_factor)],
            b: [to_original(kb.x, set_b.scale_factor), to_original(kb.y, set_b.scale_factor)],
            confidence: score as f32,
            channel: set_a.channel,
            scale_tag,
        });
    }
    Ok(out)
}
