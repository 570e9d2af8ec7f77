use nalgebra::{Matrix3, Vector3};

use super::degeneracy::{plane_candidates, plane_degeneracy_check};
use super::fundamental::{
    count_inliers_until, inlier_mask, is_inlier, sampson_weight, solve_f_7pt, solve_f_8pt, solve_f_8pt_weighted, SAMPLE_SIZE,
};
use super::homography::{solve_h_lsq, Homography};
use super::linalg::skew;
use super::rng::PairRng;
use super::{to_point_match, PointMatch};
use crate::model::{
    FundamentalMatrix, MatchSet, PipelineConfig, VerificationResult, VerificationStatus, MIN_SOLVABLE_MATCHES,
};

/// Bound on least-squares refits of a plane and of an epipole.
const PLANE_REFITS: usize = 10;

/// Reweighting rounds of the least-squares epipole.
const EPIPOLE_REWEIGHTS: usize = 3;

/// Sampson reweighting rounds of the terminal refit.
const REFIT_REWEIGHTS: usize = 3;

/// Inner draws of the terminal local optimization.
const LO_DRAWS: usize = 20;

/// Inliers per inner draw.
const LO_SAMPLE: usize = 20;

/// Knobs of the verification loop that are not part of [`PipelineConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegensacOptions {
    /// Run the plane test on every new best sample. Disabling it turns the
    /// loop into plain seven-point RANSAC.
    pub degeneracy_test: bool,
    /// Cap on plane-and-parallax trials per degenerate sample.
    pub parallax_trials: u64,
    /// Off-plane inliers (the two sampled ones included) needed to accept a
    /// plane-and-parallax model.
    pub min_parallax_support: usize,
    /// The plane test on a sample uses `degensac_threshold` times this factor.
    pub plane_check_factor: f64,
    /// Homography consensus over all matches uses `degensac_threshold` times
    /// this factor.
    pub homography_threshold_factor: f64,
    /// Refit random inlier subsets of the best model before the final refit.
    pub local_optimization: bool,
}

impl Default for DegensacOptions {
    fn default() -> Self {
        DegensacOptions {
            degeneracy_test: true,
            parallax_trials: 10_000,
            min_parallax_support: 8,
            plane_check_factor: 3.0,
            homography_threshold_factor: 2.0,
            local_optimization: true,
        }
    }
}

/// Number of samples needed to draw one all-inlier sample with probability
/// `confidence`, clamped to `max_iters`.
///
/// `w^m == 0` yields `max_iters`; `w^m == 1` yields 1.
pub fn adaptive_iterations(inlier_ratio: f64, sample_size: u32, confidence: f64, max_iters: u64) -> u64 {
    let max_iters = max_iters.max(1);
    let w_m = inlier_ratio.clamp(0.0, 1.0).powi(sample_size as i32);
    if w_m >= 1.0 {
        return 1;
    }
    if w_m <= 0.0 {
        return max_iters;
    }
    let needed = ((1.0 - confidence).ln() / (-w_m).ln_1p()).ceil();
    if !needed.is_finite() || needed >= max_iters as f64 {
        max_iters
    } else {
        (needed as u64).max(1)
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    f: FundamentalMatrix,
    count: usize,
    /// Set when the hypothesis came from a plane-degenerate sample that no
    /// off-plane support could rescue: the homography consensus.
    plane_consensus: Option<Vec<bool>>,
}

/// Robust two-view verification of an already fused and filtered match set.
pub fn degensac(set: &MatchSet, cfg: &PipelineConfig) -> VerificationResult {
    let matches: Vec<PointMatch> = set.correspondences.iter().map(to_point_match).collect();
    verify_matches(&set.pair_id, &matches, cfg, &DegensacOptions::default())
}

/// The verification loop on raw point matches.
///
/// Samples come from the stream seeded by `(cfg.rng_seed, pair_id)`, so the
/// result is a pure function of the arguments.
pub fn verify_matches(
    pair_id: &str,
    matches: &[PointMatch],
    cfg: &PipelineConfig,
    opts: &DegensacOptions,
) -> VerificationResult {
    let n = matches.len();
    if n < MIN_SOLVABLE_MATCHES {
        return VerificationResult::without_model(pair_id, VerificationStatus::TooFewMatches, n, 0);
    }
    let threshold = cfg.degensac_threshold;
    let mut rng = PairRng::for_pair(cfg.rng_seed, pair_id);
    let mut best: Option<Hypothesis> = None;
    let mut limit = cfg.degensac_max_iters.max(1);
    let mut iterations = 0u64;
    let mut sample = [PointMatch::new(0.0, 0.0, 0.0, 0.0); SAMPLE_SIZE];

    while iterations < limit {
        iterations += 1;
        let picked: [usize; SAMPLE_SIZE] = rng.distinct(n);
        for (slot, &i) in sample.iter_mut().zip(&picked) {
            *slot = matches[i];
        }
        let Ok(candidates) = solve_f_7pt(&sample) else {
            continue;
        };
        let best_count = best.as_ref().map_or(0, |h| h.count);
        let mut improved: Option<(FundamentalMatrix, usize)> = None;
        for f in candidates {
            let target = improved.as_ref().map_or(best_count, |(_, c)| *c) + 1;
            let count = count_inliers_until(f.matrix(), matches, threshold, target);
            if count >= target {
                improved = Some((f, count));
            }
        }
        let Some((f, count)) = improved else {
            continue;
        };
        let mut hypothesis = Hypothesis {
            f,
            count,
            plane_consensus: None,
        };
        if opts.degeneracy_test {
            let check_threshold = threshold * opts.plane_check_factor;
            if plane_degeneracy_check(&sample, check_threshold).is_degenerate() {
                let planes = plane_candidates(&sample, check_threshold);
                hypothesis = recover_from_plane(hypothesis, &planes, matches, cfg, opts, &mut rng);
            }
        }
        limit = adaptive_iterations(
            hypothesis.count as f64 / n as f64,
            SAMPLE_SIZE as u32,
            cfg.degensac_confidence,
            cfg.degensac_max_iters,
        );
        best = Some(hypothesis);
    }

    let Some(best) = best else {
        return VerificationResult::without_model(pair_id, VerificationStatus::NoModel, n, iterations);
    };
    if let Some(consensus) = best.plane_consensus {
        let inlier_count = consensus.iter().filter(|&&m| m).count();
        return VerificationResult {
            pair_id: pair_id.to_owned(),
            status: VerificationStatus::DegeneratePlane,
            fundamental: None,
            inlier_mask: consensus,
            iterations_run: iterations,
            inlier_count,
        };
    }

    let f = if opts.local_optimization {
        local_optimize(best.f, best.count, matches, threshold, &mut rng)
    } else {
        best.f
    };
    let (f, mask, inlier_count) = refine(f, matches, threshold);
    if inlier_count < MIN_SOLVABLE_MATCHES {
        return VerificationResult::without_model(pair_id, VerificationStatus::NoModel, n, iterations);
    }
    VerificationResult {
        pair_id: pair_id.to_owned(),
        status: VerificationStatus::Verified,
        fundamental: Some(f),
        inlier_mask: mask,
        iterations_run: iterations,
        inlier_count,
    }
}

/// Eight-point fits on random subsets of the current inliers, each followed
/// by one refit on its own inliers. A fit replaces the model only when it
/// gains inliers.
fn local_optimize(
    f: FundamentalMatrix,
    count: usize,
    matches: &[PointMatch],
    threshold: f64,
    rng: &mut PairRng,
) -> FundamentalMatrix {
    let (mut best, mut best_count) = (f, count);
    for _ in 0..LO_DRAWS {
        let mut inliers: Vec<PointMatch> = matches
            .iter()
            .filter(|m| is_inlier(best.matrix(), m, threshold))
            .copied()
            .collect();
        let k = LO_SAMPLE.min(inliers.len());
        if k < MIN_SOLVABLE_MATCHES {
            break;
        }
        for i in 0..k {
            let j = i + rng.index(inliers.len() - i);
            inliers.swap(i, j);
        }
        let Ok(fit) = solve_f_8pt(&inliers[..k]) else {
            continue;
        };
        let support: Vec<PointMatch> = matches
            .iter()
            .filter(|m| is_inlier(fit.matrix(), m, threshold))
            .copied()
            .collect();
        let Ok(refit) = solve_f_8pt(&support) else {
            continue;
        };
        let refit_count = count_inliers_until(refit.matrix(), matches, threshold, best_count + 1);
        if refit_count > best_count {
            best = refit;
            best_count = refit_count;
        }
    }
    best
}

/// One eight-point refit on the inliers, Sampson-reweighted, kept unless it
/// loses inliers.
fn refine(f: FundamentalMatrix, matches: &[PointMatch], threshold: f64) -> (FundamentalMatrix, Vec<bool>, usize) {
    let mask = inlier_mask(&f, matches, threshold);
    let count = mask.iter().filter(|&&m| m).count();
    if count < MIN_SOLVABLE_MATCHES {
        return (f, mask, count);
    }
    let inliers: Vec<PointMatch> = matches.iter().zip(&mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
    let mut refit = f;
    for _ in 0..REFIT_REWEIGHTS {
        let weights: Vec<f64> = inliers.iter().map(|m| sampson_weight(refit.matrix(), m)).collect();
        match solve_f_8pt_weighted(&inliers, Some(&weights)) {
            Ok(next) => refit = next,
            Err(_) => break,
        }
    }
    let refit_mask = inlier_mask(&refit, matches, threshold);
    let refit_count = refit_mask.iter().filter(|&&m| m).count();
    if refit != f && refit_count >= count {
        return (refit, refit_mask, refit_count);
    }
    (f, mask, count)
}

/// `F = [e']ₓ H` where the epipole `e'` is the intersection of the parallax
/// lines `(H a) × b` of two off-plane correspondences.
fn parallax_fundamental(h: &Homography, p: &PointMatch, q: &PointMatch) -> Option<FundamentalMatrix> {
    let line = |m: &PointMatch| {
        let ha = h.matrix() * Vector3::new(m.a.x, m.a.y, 1.0);
        let l = ha.cross(&Vector3::new(m.b.x, m.b.y, 1.0));
        let norm = l.norm();
        (norm > 0.0 && norm.is_finite()).then(|| l / norm)
    };
    let epipole = line(p)?.cross(&line(q)?);
    if !(epipole.norm() > 1e-12) {
        return None;
    }
    FundamentalMatrix::from_matrix(skew(&epipole) * h.matrix())
}

/// `F = [e']ₓ H` with `e'` minimizing the Sampson errors of `matches` under
/// the weights of `prior`. The residual `bᵀ[e']ₓHa = e'ᵀ((Ha) × b)` is linear in `e'`.
fn parallax_fundamental_lsq(h: &Homography, matches: &[PointMatch], prior: &FundamentalMatrix) -> Option<FundamentalMatrix> {
    if matches.len() < 2 {
        return None;
    }
    let mut f = *prior;
    for _ in 0..EPIPOLE_REWEIGHTS {
        let mut scatter = Matrix3::zeros();
        for m in matches {
            let a = m.a.to_homogeneous();
            let b = m.b.to_homogeneous();
            let fa = f.matrix() * a;
            let ftb = f.matrix().transpose() * b;
            let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
            if !(den > 0.0 && den.is_finite()) {
                continue;
            }
            let l = (h.matrix() * a).cross(&b);
            scatter += l * l.transpose() / den;
        }
        let eig = scatter.symmetric_eigen();
        let (imin, _) = eig.eigenvalues.argmin();
        let epipole: Vector3<f64> = eig.eigenvectors.column(imin).into();
        f = FundamentalMatrix::from_matrix(skew(&epipole) * h.matrix())?;
    }
    Some(f)
}

/// Least-squares refits of `h` on its consensus until the consensus settles
/// or shrinks.
fn grow_plane(h: Homography, matches: &[PointMatch], h_threshold: f64) -> (Homography, Vec<bool>, usize) {
    let mut h = h;
    let mut consensus = homography_consensus(&h, matches, h_threshold);
    let mut size = consensus.iter().filter(|&&m| m).count();
    for _ in 0..PLANE_REFITS {
        let on_plane: Vec<PointMatch> = matches.iter().zip(&consensus).filter(|(_, &c)| c).map(|(m, _)| *m).collect();
        let Ok(refit) = solve_h_lsq(&on_plane) else {
            break;
        };
        let grown = homography_consensus(&refit, matches, h_threshold);
        let grown_size = grown.iter().filter(|&&m| m).count();
        if grown_size < size {
            break;
        }
        let settled = grown == consensus;
        (h, consensus, size) = (refit, grown, grown_size);
        if settled {
            break;
        }
    }
    (h, consensus, size)
}

fn homography_consensus(h: &Homography, matches: &[PointMatch], h_threshold: f64) -> Vec<bool> {
    matches.iter().map(|m| h.symmetric_transfer_error(m) <= h_threshold).collect()
}

/// Plane-and-parallax recovery for a degenerate sample.
///
/// Grows the homography consensus over all matches with least-squares refits, then searches pairs of
/// correspondences outside it for the epipole with the most off-plane support. All pairs are tried
/// when they fit in `parallax_trials`, otherwise pairs are drawn at random.
fn recover_from_plane(
    sampled: Hypothesis,
    planes: &[Homography],
    matches: &[PointMatch],
    cfg: &PipelineConfig,
    opts: &DegensacOptions,
    rng: &mut PairRng,
) -> Hypothesis {
    let threshold = cfg.degensac_threshold;
    let h_threshold = threshold * opts.homography_threshold_factor;
    let mut plane: Option<(Homography, Vec<bool>, usize)> = None;
    for h in planes {
        let grown = grow_plane(*h, matches, h_threshold);
        if plane.as_ref().is_none_or(|p| grown.2 > p.2) {
            plane = Some(grown);
        }
    }
    let Some((h, consensus, plane_size)) = plane else {
        return sampled;
    };
    let h = &h;
    let outside: Vec<PointMatch> = matches
        .iter()
        .zip(&consensus)
        .filter(|(_, &on_plane)| !on_plane)
        .map(|(m, _)| *m)
        .collect();

    let mut best: Option<(FundamentalMatrix, usize)> = None;
    let try_pair = |i: usize, j: usize, best: &mut Option<(FundamentalMatrix, usize)>| {
        let Some(f) = parallax_fundamental(h, &outside[i], &outside[j]) else {
            return false;
        };
        let target = best.as_ref().map_or(0, |(_, s)| *s) + 1;
        let support = count_inliers_until(f.matrix(), &outside, threshold, target);
        if support >= target {
            *best = Some((f, support));
        }
        support >= target
    };
    let k = outside.len() as u64;
    if k * k.saturating_sub(1) / 2 <= opts.parallax_trials {
        for i in 0..outside.len() {
            for j in i + 1..outside.len() {
                try_pair(i, j, &mut best);
            }
        }
    } else {
        let mut limit = opts.parallax_trials.max(1);
        let mut trials = 0u64;
        while trials < limit {
            trials += 1;
            let [i, j]: [usize; 2] = rng.distinct(outside.len());
            if try_pair(i, j, &mut best) {
                let support = best.as_ref().map_or(0, |(_, s)| *s);
                limit = adaptive_iterations(
                    support as f64 / outside.len() as f64,
                    2,
                    cfg.degensac_confidence,
                    opts.parallax_trials,
                );
            }
        }
    }

    if let Some((f, support)) = best.as_mut() {
        for _ in 0..PLANE_REFITS {
            let supporters: Vec<PointMatch> =
                outside.iter().filter(|m| is_inlier(f.matrix(), m, threshold)).copied().collect();
            let Some(refit) = parallax_fundamental_lsq(h, &supporters, f) else {
                break;
            };
            let refit_support = outside.iter().filter(|m| is_inlier(refit.matrix(), m, threshold)).count();
            if refit_support < *support {
                break;
            }
            (*f, *support) = (refit, refit_support);
        }
    }

    match best {
        // the plane does not dominate: leave it to ordinary sampling
        Some((_, support)) if support > plane_size => sampled,
        Some((f, support)) if support >= opts.min_parallax_support => {
            let count = matches.iter().filter(|m| is_inlier(f.matrix(), m, threshold)).count();
            if count >= sampled.count {
                Hypothesis {
                    f,
                    count,
                    plane_consensus: None,
                }
            } else {
                sampled
            }
        }
        _ => Hypothesis {
            plane_consensus: Some(consensus),
            ..sampled
        },
    }
}
