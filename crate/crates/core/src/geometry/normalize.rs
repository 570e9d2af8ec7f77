use nalgebra::{Matrix3, Point2};

use super::GeometryError;

/// Isotropic conditioning: translate the centroid to the origin and scale so
/// the mean distance from it is √2.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Conditioner {
    scale: f64,
    cx: f64,
    cy: f64,
}

impl Conditioner {
    pub(crate) fn fit<'a>(points: impl Iterator<Item = &'a Point2<f64>> + Clone) -> Result<Self, GeometryError> {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in points.clone() {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
        if n == 0 {
            return Err(GeometryError::DegenerateInput("no points"));
        }
        let (cx, cy) = (sx / n as f64, sy / n as f64);
        let mean_dist = points.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n as f64;
        let extent = 1.0 + cx.abs().max(cy.abs());
        if !(mean_dist > 1e-12 * extent) {
            return Err(GeometryError::DegenerateInput("all points coincide"));
        }
        Ok(Conditioner {
            scale: std::f64::consts::SQRT_2 / mean_dist,
            cx,
            cy,
        })
    }

    #[inline]
    pub(crate) fn apply(&self, p: &Point2<f64>) -> (f64, f64) {
        ((p.x - self.cx) * self.scale, (p.y - self.cy) * self.scale)
    }

    pub(crate) fn matrix(&self) -> Matrix3<f64> {
        let s = self.scale;
        Matrix3::new(s, 0.0, -s * self.cx, 0.0, s, -s * self.cy, 0.0, 0.0, 1.0)
    }

    pub(crate) fn inverse_matrix(&self) -> Matrix3<f64> {
        let inv = 1.0 / self.scale;
        Matrix3::new(inv, 0.0, self.cx, 0.0, inv, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Conditions `points` for the linear solvers.
///
/// Returns the transformed points and the similarity `T` with `p' = T p`.
/// Fails with `DegenerateInput` when every point coincides.
pub fn normalize_points(points: &[Point2<f64>]) -> Result<(Vec<Point2<f64>>, Matrix3<f64>), GeometryError> {
    let cond = Conditioner::fit(points.iter())?;
    let out = points
        .iter()
        .map(|p| {
            let (x, y) = cond.apply(p);
            Point2::new(x, y)
        })
        .collect();
    Ok((out, cond.matrix()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centroid_and_spread(pts: &[Point2<f64>]) -> (f64, f64, f64) {
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
        let spread = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
        (cx, cy, spread)
    }

    #[test]
    fn two_symmetric_points_scale_by_sqrt2() {
        let (out, t) = normalize_points(&[Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)]).unwrap();
        let (cx, cy, spread) = centroid_and_spread(&out);
        assert!(cx.abs() < 1e-9 && cy.abs() < 1e-9);
        assert!((spread - 2f64.sqrt()).abs() < 1e-9);
        assert!((t[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert!((t[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(t[(0, 2)], 0.0);
    }

    #[test]
    fn normalized_cloud_is_a_fixed_point() {
        let pts: Vec<_> = [(3.0, 7.0), (-2.0, 1.0), (10.0, -4.0), (0.5, 0.25)]
            .iter()
            .map(|&(x, y)| Point2::new(x, y))
            .collect();
        let (once, _) = normalize_points(&pts).unwrap();
        let (twice, t) = normalize_points(&once).unwrap();
        assert!((t - Matrix3::identity()).abs().max() < 1e-9);
        for (p, q) in once.iter().zip(&twice) {
            assert!((p - q).norm() < 1e-9);
        }
        let (cx, cy, spread) = centroid_and_spread(&once);
        assert!(cx.abs() < 1e-9 && cy.abs() < 1e-9);
        assert!((spread - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![Point2::new(4.0, 4.0); 5];
        assert!(matches!(normalize_points(&pts), Err(GeometryError::DegenerateInput(_))));
    }

    #[test]
    fn inverse_matrix_inverts() {
        let cond = Conditioner::fit([Point2::new(1.0, 2.0), Point2::new(5.0, -1.0)].iter()).unwrap();
        let prod = cond.matrix() * cond.inverse_matrix();
        assert!((prod - Matrix3::identity()).abs().max() < 1e-12);
    }
}
