use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use super::linalg::{mat3_from_row_major, null_space_9};
use super::normalize::Conditioner;
use super::{GeometryError, PointMatch};
use crate::model::canonicalize;

/// Twice the triangle area (in conditioned units) below which three points
/// count as collinear.
const COLLINEAR_TOL: f64 = 1e-8;

/// Invertible plane-to-plane map `b ~ H a`, canonical scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    forward: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Homography {
    pub fn from_matrix(m: Matrix3<f64>) -> Option<Self> {
        let forward = canonicalize(m)?;
        let inverse = forward.try_inverse()?;
        if !inverse.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Homography { forward, inverse })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.forward
    }

    pub fn inverse_matrix(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn map(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        apply(&self.forward, p)
    }

    pub fn map_inverse(&self, p: &Point2<f64>) -> Option<Point2<f64>> {
        apply(&self.inverse, p)
    }

    /// RMS of the forward and backward transfer distances, in pixels.
    /// Infinite when either mapping sends a point to infinity.
    pub fn symmetric_transfer_error(&self, m: &PointMatch) -> f64 {
        match (self.map(&m.a), self.map_inverse(&m.b)) {
            (Some(fwd), Some(bwd)) => {
                let d1 = (fwd - m.b).norm_squared();
                let d2 = (bwd - m.a).norm_squared();
                (0.5 * (d1 + d2)).sqrt()
            }
            _ => f64::INFINITY,
        }
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.forward.singular_values();
        sv.max() / sv.min()
    }
}

#[inline]
fn apply(h: &Matrix3<f64>, p: &Point2<f64>) -> Option<Point2<f64>> {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    let (x, y) = (v.x / v.z, v.y / v.z);
    (x.is_finite() && y.is_finite()).then(|| Point2::new(x, y))
}

fn any_three_collinear(pts: &[(f64, f64); 4]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().any(|&[i, j, k]| {
        let (p, q, r) = (pts[i], pts[j], pts[k]);
        let cross = (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
        cross.abs() < COLLINEAR_TOL
    })
}

/// Four-point DLT on conditioned coordinates.
pub fn solve_h_4pt(sample: &[PointMatch]) -> Result<Homography, GeometryError> {
    if sample.len() != 4 {
        return Err(GeometryError::SampleSize {
            expected: 4,
            got: sample.len(),
        });
    }
    let ca = Conditioner::fit(sample.iter().map(|m| &m.a))?;
    let cb = Conditioner::fit(sample.iter().map(|m| &m.b))?;
    let mut pa = [(0.0, 0.0); 4];
    let mut pb = [(0.0, 0.0); 4];
    for (k, m) in sample.iter().enumerate() {
        pa[k] = ca.apply(&m.a);
        pb[k] = cb.apply(&m.b);
    }
    if any_three_collinear(&pa) || any_three_collinear(&pb) {
        return Err(GeometryError::DegenerateInput("three collinear points"));
    }
    let mut rows = [[0.0; 9]; 8];
    for k in 0..4 {
        let ((x, y), (u, v)) = (pa[k], pb[k]);
        rows[2 * k] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        rows[2 * k + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
    }
    let (rank, basis) = null_space_9(&mut rows, 1e-12);
    if rank < 8 {
        return Err(GeometryError::DegenerateInput("rank-deficient homography system"));
    }
    let hn = mat3_from_row_major(&basis[0]);
    let h = denormalize(&hn, &ca, &cb);
    Homography::from_matrix(h).ok_or(GeometryError::DegenerateInput("singular homography"))
}

/// Least-squares DLT over four or more matches on conditioned coordinates.
pub fn solve_h_lsq(matches: &[PointMatch]) -> Result<Homography, GeometryError> {
    if matches.len() == 4 {
        return solve_h_4pt(matches);
    }
    if matches.len() < 4 {
        return Err(GeometryError::SampleSize {
            expected: 4,
            got: matches.len(),
        });
    }
    let ca = Conditioner::fit(matches.iter().map(|m| &m.a))?;
    let cb = Conditioner::fit(matches.iter().map(|m| &m.b))?;
    let mut a = DMatrix::<f64>::zeros(2 * matches.len(), 9);
    for (k, m) in matches.iter().enumerate() {
        let ((x, y), (u, v)) = (ca.apply(&m.a), cb.apply(&m.b));
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if !(sv(7) > 1e-10 * sv(0)) {
        return Err(GeometryError::DegenerateInput("rank-deficient homography system"));
    }
    let hn = Matrix3::from_iterator(v_t.row(order[8]).iter().copied()).transpose();
    Homography::from_matrix(denormalize(&hn, &ca, &cb)).ok_or(GeometryError::DegenerateInput("singular homography"))
}

fn denormalize(hn: &Matrix3<f64>, ca: &Conditioner, cb: &Conditioner) -> Matrix3<f64> {
    cb.inverse_matrix() * hn * ca.matrix()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> [Point2<f64>; 4] {
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ]
    }

    #[test]
    fn least_squares_matches_four_point_on_exact_data() {
        let h = Matrix3::new(1.2, 0.1, 3.0, -0.05, 0.9, -2.0, 1e-4, 2e-4, 1.0);
        let pts = [(0.0, 0.0), (100.0, 5.0), (90.0, 120.0), (-10.0, 80.0), (50.0, 50.0), (20.0, 70.0)];
        let sample: Vec<PointMatch> = pts
            .iter()
            .map(|&(x, y)| {
                let a = Point2::new(x, y);
                PointMatch { a, b: apply(&h, &a).unwrap() }
            })
            .collect();
        let four = solve_h_4pt(&sample[..4]).unwrap();
        let all = solve_h_lsq(&sample).unwrap();
        assert!((four.matrix() - all.matrix()).abs().max() < 1e-9);
        assert!(solve_h_lsq(&sample[..3]).is_err());
    }

    #[test]
    fn identity_from_fixed_square() {
        let sample: Vec<_> = square().iter().map(|p| PointMatch { a: *p, b: *p }).collect();
        let h = solve_h_4pt(&sample).unwrap();
        let want = Matrix3::identity() / 3f64.sqrt();
        assert!((h.matrix() - want).abs().max() < 1e-12, "{}", h.matrix());
    }

    #[test]
    fn recovers_known_affine_map() {
        let affine = Matrix3::new(1.5, 0.3, 12.0, -0.2, 0.8, -4.0, 0.0, 0.0, 1.0);
        let sample: Vec<_> = square()
            .iter()
            .map(|p| {
                let q = affine * Vector3::new(p.x, p.y, 1.0);
                PointMatch { a: *p, b: Point2::new(q.x, q.y) }
            })
            .collect();
        let h = solve_h_4pt(&sample).unwrap();
        let want = canonicalize(affine).unwrap();
        assert!((h.matrix() - want).abs().max() < 1e-8);
        for m in &sample {
            assert!((h.map(&m.a).unwrap() - m.b).norm() < 1e-8);
            assert!(h.symmetric_transfer_error(m) < 1e-8);
        }
        assert!(h.condition_number().is_finite());
    }

    #[test]
    fn rejects_collinear_triple() {
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)];
        let sample: Vec<_> = pts
            .iter()
            .map(|&(x, y)| PointMatch::new(x, y, x + 1.0, 2.0 * y + 0.5 * x))
            .collect();
        assert!(matches!(solve_h_4pt(&sample), Err(GeometryError::DegenerateInput(_))));
    }
}
