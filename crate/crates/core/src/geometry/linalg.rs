use nalgebra::{Matrix3, Vector3};

/// Null space of an `m × 9` system by Gauss-Jordan elimination with complete
/// pivoting. Pivots below `rel_tol · max|entry|` end the elimination.
///
/// Returns the numerical rank and a unit-norm basis of the null space.
pub(crate) fn null_space_9(rows: &mut [[f64; 9]], rel_tol: f64) -> (usize, Vec<[f64; 9]>) {
    let m = rows.len();
    let scale = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut perm: [usize; 9] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut rank = 0;
    if scale > 0.0 {
        let tol = rel_tol * scale;
        for r in 0..m.min(9) {
            let (mut pi, mut pj, mut best) = (r, r, 0.0f64);
            for (i, row) in rows.iter().enumerate().skip(r) {
                for (j, v) in row.iter().enumerate().skip(r) {
                    if v.abs() > best {
                        best = v.abs();
                        pi = i;
                        pj = j;
                    }
                }
            }
            if best <= tol {
                break;
            }
            rows.swap(r, pi);
            if pj != r {
                for row in rows.iter_mut() {
                    row.swap(r, pj);
                }
                perm.swap(r, pj);
            }
            let inv = 1.0 / rows[r][r];
            for v in rows[r].iter_mut().skip(r) {
                *v *= inv;
            }
            let pivot_row = rows[r];
            for (i, row) in rows.iter_mut().enumerate() {
                if i == r {
                    continue;
                }
                let factor = row[r];
                if factor != 0.0 {
                    for j in r..9 {
                        row[j] -= factor * pivot_row[j];
                    }
                }
            }
            rank += 1;
        }
    }
    let basis = (rank..9)
        .map(|free| {
            let mut v = [0.0; 9];
            v[perm[free]] = 1.0;
            for (i, row) in rows.iter().enumerate().take(rank) {
                v[perm[i]] = -row[free];
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect();
    (rank, basis)
}

pub(crate) fn mat3_from_row_major(v: &[f64; 9]) -> Matrix3<f64> {
    Matrix3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8])
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Real roots of `c3 x³ + c2 x² + c1 x + c0`, each polished by Newton steps.
/// Falls back to lower degree when leading coefficients vanish.
pub(crate) fn real_cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let mag = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if mag == 0.0 {
        return Vec::new();
    }
    let eps = 1e-12 * mag;
    let mut roots = if c3.abs() > eps {
        monic_cubic_roots(c2 / c3, c1 / c3, c0 / c3)
    } else if c2.abs() > eps {
        quadratic_roots(c2, c1, c0)
    } else if c1.abs() > eps {
        vec![-c0 / c1]
    } else {
        Vec::new()
    };
    for x in roots.iter_mut() {
        for _ in 0..3 {
            let p = ((c3 * *x + c2) * *x + c1) * *x + c0;
            let dp = (3.0 * c3 * *x + 2.0 * c2) * *x + c1;
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    roots
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

fn monic_cubic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    // x = t - a/3 gives t³ + p t + q = 0
    let a3 = a / 3.0;
    let p = b - a * a3;
    let q = 2.0 * a3 * a3 * a3 - a3 * b + c;
    let half_q = q / 2.0;
    let third_p = p / 3.0;
    let disc = half_q * half_q + third_p * third_p * third_p;
    if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-half_q + sq).cbrt();
        let v = (-half_q - sq).cbrt();
        vec![u + v - a3]
    } else if third_p == 0.0 {
        vec![-a3]
    } else {
        let r = (-third_p).sqrt();
        let cos_arg = (-half_q / (r * r * r)).clamp(-1.0, 1.0);
        let phi = cos_arg.acos() / 3.0;
        let two_pi_3 = 2.0 * std::f64::consts::FRAC_PI_3;
        (0..3)
            .map(|k| 2.0 * r * (phi - two_pi_3 * k as f64).cos() - a3)
            .collect()
    }
}
