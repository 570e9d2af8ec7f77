use nalgebra::{DMatrix, Matrix3};

use super::linalg::{mat3_from_row_major, null_space_9, real_cubic_roots};
use super::normalize::Conditioner;
use super::{GeometryError, PointMatch};
use crate::model::FundamentalMatrix;

/// Minimal sample size of the fundamental matrix.
pub const SAMPLE_SIZE: usize = 7;

const NULL_SPACE_TOL: f64 = 1e-10;
const PENCIL_TOL: f64 = 1e-14;

#[inline]
fn design_row((ax, ay): (f64, f64), (bx, by): (f64, f64)) -> [f64; 9] {
    [bx * ax, bx * ay, bx, by * ax, by * ay, by, ax, ay, 1.0]
}

fn denormalize(fn_: &Matrix3<f64>, ca: &Conditioner, cb: &Conditioner) -> Matrix3<f64> {
    cb.matrix().transpose() * fn_ * ca.matrix()
}

/// Seven-point solver: the 1–3 rank-2 matrices through a minimal sample.
///
/// The two-dimensional null space `{α F1 + (1-α) F2}` of the design matrix is
/// intersected with the cubic `det = 0`.
pub fn solve_f_7pt(sample: &[PointMatch]) -> Result<Vec<FundamentalMatrix>, GeometryError> {
    if sample.len() != SAMPLE_SIZE {
        return Err(GeometryError::SampleSize {
            expected: SAMPLE_SIZE,
            got: sample.len(),
        });
    }
    let ca = Conditioner::fit(sample.iter().map(|m| &m.a))?;
    let cb = Conditioner::fit(sample.iter().map(|m| &m.b))?;
    let mut rows = [[0.0; 9]; SAMPLE_SIZE];
    for (row, m) in rows.iter_mut().zip(sample) {
        *row = design_row(ca.apply(&m.a), cb.apply(&m.b));
    }
    let (rank, basis) = null_space_9(&mut rows, NULL_SPACE_TOL);
    if rank < SAMPLE_SIZE {
        return Err(GeometryError::DegenerateInput("null space dimension exceeds 2"));
    }
    let f1 = mat3_from_row_major(&basis[0]);
    let f2 = mat3_from_row_major(&basis[1]);

    let det_at = |alpha: f64| (f1 * alpha + f2 * (1.0 - alpha)).determinant();
    let (d0, d1, dm, d2) = (det_at(0.0), det_at(1.0), det_at(-1.0), det_at(2.0));
    let c0 = d0;
    let c2 = 0.5 * (d1 + dm) - d0;
    let c3 = (d2 - 4.0 * c2 - (d1 - dm) - c0) / 6.0;
    let c1 = 0.5 * (d1 - dm) - c3;
    let mag = c0.abs().max(c1.abs()).max(c2.abs()).max(c3.abs());
    if mag < PENCIL_TOL {
        return Err(GeometryError::DegenerateInput("every member of the solution pencil is singular"));
    }

    let mut candidates: Vec<Matrix3<f64>> = real_cubic_roots(c3, c2, c1, c0)
        .into_iter()
        .map(|alpha| f1 * alpha + f2 * (1.0 - alpha))
        .collect();
    if c3.abs() <= 1e-12 * mag {
        // root at infinity
        candidates.push(f1 - f2);
    }
    Ok(candidates
        .iter()
        .filter_map(|fn_| FundamentalMatrix::from_matrix(denormalize(fn_, &ca, &cb)))
        .collect())
}

/// Normalized eight-point least squares with the nearest rank-2 projection.
pub fn solve_f_8pt(matches: &[PointMatch]) -> Result<FundamentalMatrix, GeometryError> {
    solve_f_8pt_weighted(matches, None)
}

/// [`solve_f_8pt`] with one weight per row of the design matrix.
pub(crate) fn solve_f_8pt_weighted(matches: &[PointMatch], weights: Option<&[f64]>) -> Result<FundamentalMatrix, GeometryError> {
    if matches.len() < 8 {
        return Err(GeometryError::SampleSize {
            expected: 8,
            got: matches.len(),
        });
    }
    let ca = Conditioner::fit(matches.iter().map(|m| &m.a))?;
    let cb = Conditioner::fit(matches.iter().map(|m| &m.b))?;
    // zero rows pad the system so the SVD yields a full 9×9 right basis
    let mut a = DMatrix::<f64>::zeros(matches.len().max(9), 9);
    for (i, m) in matches.iter().enumerate() {
        let row = design_row(ca.apply(&m.a), cb.apply(&m.b));
        let w = weights.map_or(1.0, |w| w[i]);
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = w * *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if !(sv(7) > 1e-10 * sv(0)) {
        return Err(GeometryError::DegenerateInput("design matrix rank below 8"));
    }
    let null = v_t.row(order[8]);
    let fn_full = Matrix3::from_iterator(null.iter().copied()).transpose();

    let mut f_svd = fn_full.svd(true, true);
    let (imin, _) = f_svd.singular_values.argmin();
    f_svd.singular_values[imin] = 0.0;
    let fn_rank2 = f_svd.recompose().map_err(|_| GeometryError::DegenerateInput("rank-2 projection failed"))?;
    FundamentalMatrix::from_matrix(denormalize(&fn_rank2, &ca, &cb))
        .ok_or(GeometryError::DegenerateInput("vanishing solution"))
}

/// First-order geometric distance `|bᵀFa| / ‖((Fa)₁,(Fa)₂,(Fᵀb)₁,(Fᵀb)₂)‖`.
/// `None` when the denominator vanishes.
#[inline]
pub(crate) fn sampson_raw(f: &Matrix3<f64>, m: &PointMatch) -> Option<f64> {
    let (ax, ay, bx, by) = (m.a.x, m.a.y, m.b.x, m.b.y);
    let fa0 = f[(0, 0)] * ax + f[(0, 1)] * ay + f[(0, 2)];
    let fa1 = f[(1, 0)] * ax + f[(1, 1)] * ay + f[(1, 2)];
    let fa2 = f[(2, 0)] * ax + f[(2, 1)] * ay + f[(2, 2)];
    let ftb0 = f[(0, 0)] * bx + f[(1, 0)] * by + f[(2, 0)];
    let ftb1 = f[(0, 1)] * bx + f[(1, 1)] * by + f[(2, 1)];
    let residual = bx * fa0 + by * fa1 + fa2;
    let den = fa0 * fa0 + fa1 * fa1 + ftb0 * ftb0 + ftb1 * ftb1;
    if den > 0.0 && den.is_finite() {
        Some(residual.abs() / den.sqrt())
    } else {
        None
    }
}

/// Inverse of the Sampson denominator: scales `bᵀFa` to a distance.
pub(crate) fn sampson_weight(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let a = m.a.to_homogeneous();
    let b = m.b.to_homogeneous();
    let fa = f * a;
    let ftb = f.transpose() * b;
    let den = (fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y).sqrt();
    if den > 0.0 && den.is_finite() {
        1.0 / den
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn is_inlier(f: &Matrix3<f64>, m: &PointMatch, threshold: f64) -> bool {
    matches!(sampson_raw(f, m), Some(d) if d <= threshold)
}

/// Sampson distance in pixels.
pub fn sampson_distance(f: &FundamentalMatrix, m: &PointMatch) -> Result<f64, GeometryError> {
    sampson_raw(f.matrix(), m).ok_or(GeometryError::Undefined)
}

/// Inlier flags under `sampson_distance <= threshold`; undefined distances are outliers.
pub fn inlier_mask(f: &FundamentalMatrix, matches: &[PointMatch], threshold: f64) -> Vec<bool> {
    matches.iter().map(|m| is_inlier(f.matrix(), m, threshold)).collect()
}

pub fn count_inliers(f: &FundamentalMatrix, matches: &[PointMatch], threshold: f64) -> usize {
    matches.iter().filter(|m| is_inlier(f.matrix(), m, threshold)).count()
}

/// Counts inliers but gives up (returning a value below `target`) as soon as
/// `target` became unreachable.
pub(crate) fn count_inliers_until(f: &Matrix3<f64>, matches: &[PointMatch], threshold: f64, target: usize) -> usize {
    let n = matches.len();
    let mut count = 0;
    for (i, m) in matches.iter().enumerate() {
        if is_inlier(f, m, threshold) {
            count += 1;
        } else if count + (n - i - 1) < target {
            return count;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    /// Horizontal stereo: bᵀ F₀ a = a_y - b_y.
    fn f0() -> FundamentalMatrix {
        FundamentalMatrix::from_matrix(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0)).unwrap()
    }

    /// Geometric distance to the surface `bᵀFa = 0` in ℝ⁴, by iterated
    /// linearization about the current foot point with central-difference
    /// gradients.
    fn geometric_distance_fd(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
        let g = |x: &[f64; 4]| {
            let a = Vector3::new(x[0], x[1], 1.0);
            let b = Vector3::new(x[2], x[3], 1.0);
            b.dot(&(f * a))
        };
        let x0 = [m.a.x, m.a.y, m.b.x, m.b.y];
        let mut x = x0;
        for _ in 0..50 {
            let h = 1e-5;
            let mut grad = [0.0; 4];
            for k in 0..4 {
                let (mut up, mut dn) = (x, x);
                up[k] += h;
                dn[k] -= h;
                grad[k] = (g(&up) - g(&dn)) / (2.0 * h);
            }
            let gn2: f64 = grad.iter().map(|v| v * v).sum();
            let lin = g(&x) + (0..4).map(|k| grad[k] * (x0[k] - x[k])).sum::<f64>();
            for k in 0..4 {
                x[k] = x0[k] - lin / gn2 * grad[k];
            }
        }
        (0..4).map(|k| (x[k] - x0[k]).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn sampson_zero_on_the_constraint() {
        let d = sampson_distance(&f0(), &PointMatch::new(0.0, 0.0, 0.0, 0.0)).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn sampson_unit_vertical_offset() {
        let m = PointMatch::new(0.0, 0.0, 0.0, 1.0);
        let d = sampson_distance(&f0(), &m).unwrap();
        assert!((d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let oracle = geometric_distance_fd(f0().matrix(), &m);
        assert!((oracle - 0.707_106_781).abs() < 1e-6, "{oracle}");
    }

    #[test]
    fn sampson_is_scale_free() {
        let m = PointMatch::new(3.0, -2.0, 7.5, 4.0);
        let raw = *f0().matrix();
        let base = sampson_raw(&raw, &m).unwrap();
        for s in [1e-3, 0.5, 2.0, 1e4] {
            let d = sampson_raw(&(raw * s), &m).unwrap();
            assert!((d - base).abs() <= 1e-12 * base.max(1.0));
        }
    }

    #[test]
    fn sampson_undefined_when_gradients_vanish() {
        let f = FundamentalMatrix::from_matrix(Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(
            sampson_distance(&f, &PointMatch::new(1.0, 2.0, 3.0, 4.0)),
            Err(GeometryError::Undefined)
        );
        assert!(inlier_mask(&f, &[PointMatch::new(1.0, 2.0, 3.0, 4.0)], 10.0) == vec![false]);
    }

    #[test]
    fn seven_point_recovers_horizontal_stereo() {
        let xs = [(12.0, 5.0, 3.0), (40.0, -7.0, 9.5), (-3.0, 22.0, 1.25), (7.0, 13.0, 14.0), (-25.0, -9.0, 6.0), (31.0, 30.0, 2.0), (0.5, -18.0, 11.0)];
        let sample: Vec<_> = xs.iter().map(|&(x, y, disp)| PointMatch::new(x, y, x + disp, y)).collect();
        let cands = solve_f_7pt(&sample).unwrap();
        assert!(!cands.is_empty() && cands.len() <= 3);
        let want = f0();
        assert!(
            cands.iter().any(|f| (f.matrix() - want.matrix()).abs().max() < 1e-9),
            "{cands:?}"
        );
        for f in &cands {
            assert!(f.rank_ratio() < 1e-7);
        }
    }

    #[test]
    fn seven_point_rejects_collinear_sample() {
        let sample: Vec<_> = (0..7)
            .map(|i| {
                let t = i as f64;
                PointMatch::new(t, 2.0 * t + 1.0, 5.0 * (t * 1.7).sin(), t * t)
            })
            .collect();
        assert!(matches!(solve_f_7pt(&sample), Err(GeometryError::DegenerateInput(_))));
        assert!(matches!(
            solve_f_7pt(&sample[..6]),
            Err(GeometryError::SampleSize { expected: 7, got: 6 })
        ));
    }

    #[test]
    fn eight_point_rejects_repeated_correspondence() {
        let sample = vec![PointMatch::new(3.0, 4.0, 5.0, 6.0); 8];
        assert!(matches!(solve_f_8pt(&sample), Err(GeometryError::DegenerateInput(_))));
    }

    #[test]
    fn bounded_count_matches_full_count_when_reachable() {
        let f = f0();
        let pts: Vec<_> = (0..20).map(|i| PointMatch::new(i as f64, 0.0, 0.0, (i % 3) as f64)).collect();
        let full = count_inliers(&f, &pts, 1.0);
        assert_eq!(count_inliers_until(f.matrix(), &pts, 1.0, full), full);
        assert!(count_inliers_until(f.matrix(), &pts, 1.0, full + 1) <= full);
    }
}
