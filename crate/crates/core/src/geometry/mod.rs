//! Two-view geometry: point conditioning, minimal and linear fundamental
//! matrix solvers, homographies for the plane test, and the DegenSAC loop.

mod degeneracy;
mod fundamental;
mod homography;
mod linalg;
mod normalize;
mod ransac;
pub mod rng;

pub use degeneracy::{plane_candidates, plane_degeneracy_check, DegeneracyCheck, MIN_PLANE_CONSISTENT};
pub use fundamental::{
    count_inliers, inlier_mask, sampson_distance, solve_f_7pt, solve_f_8pt, SAMPLE_SIZE,
};
pub use homography::{solve_h_4pt, solve_h_lsq, Homography};
pub use linalg::skew as skew_matrix;
pub use normalize::normalize_points;
pub use ransac::{adaptive_iterations, degensac, verify_matches, DegensacOptions};

use nalgebra::Point2;

use crate::model::Correspondence;

/// A correspondence reduced to its two endpoints in double precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl PointMatch {
    pub fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        PointMatch {
            a: Point2::new(ax, ay),
            b: Point2::new(bx, by),
        }
    }
}

pub fn to_point_match(c: &Correspondence) -> PointMatch {
    PointMatch::new(
        f64::from(c.a[0]),
        f64::from(c.a[1]),
        f64::from(c.b[0]),
        f64::from(c.b[1]),
    )
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("sampson distance undefined: both epipolar gradients vanish")]
    Undefined,
    #[error("expected {expected} correspondences, got {got}")]
    SampleSize { expected: usize, got: usize },
}
