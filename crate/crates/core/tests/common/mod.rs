#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Vector4};
use pairmatch::geometry::PointMatch;
use pairmatch::model::{Channel, Correspondence, FeatureSet, FundamentalMatrix, Keypoint, MatchSet, WeightsVariant};
use pairmatch::synthetic::{generate_scene, Scene, SceneSpec, SynthRng};
use rand::Rng;

/// `bᵀ F a` evaluated in pixel coordinates.
pub fn epipolar_residual(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let a = m.a.to_homogeneous();
    let b = m.b.to_homogeneous();
    (b.transpose() * f * a)[(0, 0)]
}

fn residual4(f: &Matrix3<f64>, p: &Vector4<f64>) -> f64 {
    epipolar_residual(f, &PointMatch::new(p[0], p[1], p[2], p[3]))
}

/// Distance in ℝ⁴ from `(a, b)` to the surface `bᵀFa = 0`, found by repeated
/// projection onto the local linearization. Gradients come from central
/// differences only, never from the closed form.
pub fn geometric_distance(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let start = Vector4::new(m.a.x, m.a.y, m.b.x, m.b.y);
    let mut x = start;
    for _ in 0..50 {
        let r = residual4(f, &x);
        let mut g = Vector4::zeros();
        for k in 0..4 {
            let h = 1e-3;
            let mut lo = x;
            let mut hi = x;
            lo[k] -= h;
            hi[k] += h;
            g[k] = (residual4(f, &hi) - residual4(f, &lo)) / (2.0 * h);
        }
        let gg = g.norm_squared();
        if gg == 0.0 {
            break;
        }
        // Foot point of the linearization about x, measured from the start.
        let next = start - g * ((r + g.dot(&(start - x))) / gg);
        if (next - x).norm() < 1e-12 {
            x = next;
            break;
        }
        x = next;
    }
    (x - start).norm()
}

/// Largest absolute entry difference after canonical scaling.
pub fn max_abs_diff(x: &FundamentalMatrix, y: &FundamentalMatrix) -> f64 {
    (x.matrix() - y.matrix()).abs().max()
}

pub fn clean_scene(rng: &mut SynthRng, inliers: usize) -> Scene {
    generate_scene(
        rng,
        &SceneSpec {
            inliers,
            outliers: 0,
            noise_sigma: 0.0,
            plane_fraction: 0.0,
            held_out: 0,
        },
    )
}

/// Normalized DLT homography `b ~ H a` over all given matches, least squares.
pub fn dlt_homography(matches: &[PointMatch]) -> Option<Matrix3<f64>> {
    let similarity = |pts: Vec<(f64, f64)>| {
        let n = pts.len() as f64;
        let (cx, cy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p.0 / n, y + p.1 / n));
        let mean_dist = pts.iter().map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()).sum::<f64>() / n;
        let s = std::f64::consts::SQRT_2 / mean_dist;
        Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
    };
    let ta = similarity(matches.iter().map(|m| (m.a.x, m.a.y)).collect());
    let tb = similarity(matches.iter().map(|m| (m.b.x, m.b.y)).collect());
    let mut rows = DMatrix::<f64>::zeros(2 * matches.len().max(5), 9);
    for (k, m) in matches.iter().enumerate() {
        let a = ta * m.a.to_homogeneous();
        let b = tb * m.b.to_homogeneous();
        let (x, y, u, v) = (a.x / a.z, a.y / a.z, b.x / b.z, b.y / b.z);
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for j in 0..9 {
            rows[(2 * k, j)] = r0[j];
            rows[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = rows.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd.singular_values.argmin();
    let hn = Matrix3::from_iterator(v_t.row(imin).iter().copied()).transpose();
    tb.try_inverse().map(|tb_inv| tb_inv * hn * ta)
}

/// Larger of the forward and backward transfer distances of `m` under `h`.
pub fn max_transfer(h: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let map = |h: &Matrix3<f64>, p: &nalgebra::Point2<f64>| {
        let v = h * p.to_homogeneous();
        nalgebra::Point2::new(v.x / v.z, v.y / v.z)
    };
    let Some(inv) = h.try_inverse() else {
        return f64::INFINITY;
    };
    let d = (map(h, &m.a) - m.b).norm().max((map(&inv, &m.b) - m.a).norm());
    if d.is_finite() {
        d
    } else {
        f64::INFINITY
    }
}

fn random_id(rng: &mut SynthRng) -> String {
    const ALPHABET: [&str; 8] = ["a", "Z", "0", "_", "-", "é", "圖", " "];
    let len = rng.random_range(0..12);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

/// A valid feature set with exactly representable sizes and unit rows.
pub fn random_feature_set(rng: &mut SynthRng) -> FeatureSet {
    let original = (4 * rng.random_range(1..500u32), 4 * rng.random_range(1..500u32));
    let scale = [1.0, 0.75, 0.5, 0.25][rng.random_range(0..4)];
    let working = (
        (f64::from(original.0) * scale) as u32,
        (f64::from(original.1) * scale) as u32,
    );
    let n = rng.random_range(0..40usize);
    let d = [1usize, 3, 128][rng.random_range(0..3)];
    let keypoints = (0..n)
        .map(|i| Keypoint {
            x: rng.random_range(0.0..working.0 as f32),
            y: rng.random_range(0.0..working.1 as f32),
            score: rng.random_range(0.0..10.0f32),
            index: i as u32,
        })
        .collect();
    let mut descriptors = Vec::with_capacity(n * d);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0f64) + 1e-3).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        descriptors.extend(row.iter().map(|v| (v / norm) as f32));
    }
    let set = FeatureSet {
        image_id: random_id(rng),
        channel: Channel::ALL[rng.random_range(0..2)],
        weights_variant: if rng.random_bool(0.5) {
            WeightsVariant::Outdoor
        } else {
            WeightsVariant::Indoor
        },
        scale_factor: scale,
        original_size: original,
        working_size: working,
        keypoints,
        descriptors,
        descriptor_dim: d,
    };
    set.validate().expect("generator yields valid sets");
    set
}

/// A valid match set without duplicate rows.
pub fn random_match_set(rng: &mut SynthRng) -> MatchSet {
    let mut set = MatchSet::new(random_id(rng), random_id(rng), random_id(rng));
    let n = rng.random_range(0..60usize);
    for _ in 0..n {
        let c = Correspondence {
            a: [rng.random_range(-10.0..5000.0f32), rng.random_range(-10.0..5000.0f32)],
            b: [rng.random_range(-10.0..5000.0f32), rng.random_range(-10.0..5000.0f32)],
            confidence: [0.0, 1.0, rng.random_range(0.0..=1.0f32)][rng.random_range(0..3)],
            channel: Channel::ALL[rng.random_range(0..2)],
            scale_tag: [1.0, std::f32::consts::FRAC_1_SQRT_2, 0.5][rng.random_range(0..3)],
        };
        set.correspondences.push(c);
    }
    set.correspondences.dedup_by(|x, y| x == y);
    set.validate().expect("generator yields valid sets");
    set
}

/// One random damage: byte flips, a truncation, an insertion or a header overwrite.
pub fn corrupt(rng: &mut SynthRng, bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    match rng.random_range(0..4) {
        0 => {
            for _ in 0..rng.random_range(1..4) {
                if out.is_empty() {
                    break;
                }
                let i = rng.random_range(0..out.len());
                out[i] ^= 1 << rng.random_range(0..8);
            }
        }
        1 => out.truncate(rng.random_range(0..out.len().max(1))),
        2 => {
            let i = rng.random_range(0..=out.len());
            out.insert(i, rng.random());
        }
        _ => {
            let end = out.len().min(24);
            if end > 0 {
                let i = rng.random_range(0..end);
                out[i] = rng.random();
            }
        }
    }
    out
}
