use super::homography::{solve_h_4pt, Homography};
use super::{PointMatch, SAMPLE_SIZE};

/// A minimal sample is plane-degenerate when at least this many of its seven
/// correspondences agree with a single homography.
pub const MIN_PLANE_CONSISTENT: usize = 5;

/// Four-point subsets tried on a seven-point sample: the complements of the
/// seven lines of the Fano plane. Any two indices lie together on exactly one
/// line, so whenever five of the seven points share a plane, at least one
/// subset consists of planar points only.
const PLANE_SUBSETS: [[usize; 4]; 7] = [
    [3, 4, 5, 6],
    [1, 2, 5, 6],
    [1, 2, 3, 4],
    [0, 2, 4, 6],
    [0, 2, 3, 5],
    [0, 1, 4, 5],
    [0, 1, 3, 6],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyCheck {
    /// Largest number of sample points consistent with one subset homography.
    pub consistent: usize,
    pub homography: Option<Homography>,
}

impl DegeneracyCheck {
    pub fn is_degenerate(&self) -> bool {
        self.consistent >= MIN_PLANE_CONSISTENT
    }
}

/// Tests whether a seven-point sample is dominated by a scene plane.
///
/// A homography is fitted to each predefined four-point subset; sample points
/// with symmetric transfer error `<= threshold` are counted. Subsets with three
/// collinear points are skipped. The first subset reaching the maximum wins.
pub fn plane_degeneracy_check(sample: &[PointMatch], threshold: f64) -> DegeneracyCheck {
    let mut best = DegeneracyCheck {
        consistent: 0,
        homography: None,
    };
    if sample.len() != SAMPLE_SIZE {
        return best;
    }
    for subset in PLANE_SUBSETS {
        let quad = subset.map(|i| sample[i]);
        let Ok(h) = solve_h_4pt(&quad) else {
            continue;
        };
        let consistent = sample
            .iter()
            .filter(|m| h.symmetric_transfer_error(m) <= threshold)
            .count();
        if consistent > best.consistent {
            best = DegeneracyCheck {
                consistent,
                homography: Some(h),
            };
        }
    }
    best
}

/// Every subset homography with at least [`MIN_PLANE_CONSISTENT`] consistent
/// sample points, in subset order.
pub fn plane_candidates(sample: &[PointMatch], threshold: f64) -> Vec<Homography> {
    if sample.len() != SAMPLE_SIZE {
        return Vec::new();
    }
    PLANE_SUBSETS
        .iter()
        .filter_map(|subset| solve_h_4pt(&subset.map(|i| sample[i])).ok())
        .filter(|h| sample.iter().filter(|m| h.symmetric_transfer_error(m) <= threshold).count() >= MIN_PLANE_CONSISTENT)
        .collect()
}
