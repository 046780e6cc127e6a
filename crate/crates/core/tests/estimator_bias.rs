//! Monte Carlo bias of the on-policy estimator against the exact gradient.

use drm_pg::distortion::{DistortionFn, Family};
use drm_pg::estimators::grad_onpolicy;
use drm_pg::mdp::{rollout_batch, EpisodicMdp};
use drm_pg::oracle::{exact_grad, EpisodeAtlas};
use drm_pg::parallel::{map_indices, Execution};
use drm_pg::rng::derive_seed;

const GAMMA: f64 = 0.9;

/// Returns (||mean(estimate) - exact||, sqrt(MSE / batches)), the second being
/// the scale of the Monte Carlo error of the first.
fn bias(g: &DistortionFn, m: usize, batches: usize, seed: u64) -> (f64, f64) {
    let mdp = EpisodicMdp::oracle_chain();
    let atlas = EpisodeAtlas::enumerate(&mdp, GAMMA).unwrap();
    let mr = mdp.tight_return_bound(GAMMA);
    let pi = atlas.policy(vec![0.0, 0.0, 0.5, -0.3, -0.4, 0.6]).unwrap();
    let exact = exact_grad(&atlas, &pi, g, mr).unwrap();
    let errors: Vec<Vec<f64>> = map_indices(Execution::Parallel, batches, |k| {
        let batch = rollout_batch(&mdp, &pi, &pi, GAMMA, derive_seed(seed, k as u64), m, Execution::Sequential).unwrap();
        let est = grad_onpolicy(&batch, g, mr).unwrap().grad;
        est.iter().zip(&exact).map(|(a, b)| a - b).collect()
    });
    let n = batches as f64;
    let mean: Vec<f64> = (0..6).map(|i| errors.iter().map(|e| e[i]).sum::<f64>() / n).collect();
    let mse = errors.iter().map(|e| e.iter().map(|x| x * x).sum::<f64>()).sum::<f64>() / n;
    (mean.iter().map(|x| x * x).sum::<f64>().sqrt(), (mse / n).sqrt())
}

#[test]
fn bias_shrinks_with_batch_size() {
    for fam in [Family::Logarithmic, Family::DualPower, Family::Exponential] {
        let g = DistortionFn::with_default(fam);
        let points: Vec<(f64, f64)> = [32, 128, 512].iter().map(|&m| bias(&g, m, 200, 31 + m as u64)).collect();
        for w in points.windows(2) {
            let ((b0, s0), (b1, s1)) = (w[0], w[1]);
            assert!(b1 <= b0 + 2.0 * (s0 + s1), "{fam:?}: {points:?}");
        }
        assert!(points[2].0 < points[0].0, "{fam:?}: {points:?}");
    }
}

#[test]
fn small_batch_bias_is_real_and_vanishes() {
    // With many batches the Monte Carlo error is small enough to resolve the
    // O(1/m) bias at m = 8, and to see it gone by m = 128.
    let g = DistortionFn::with_default(Family::DualPower);
    let (b8, s8) = bias(&g, 8, 20_000, 8);
    let (b128, s128) = bias(&g, 128, 20_000, 128);
    assert!(b8 > 2.0 * s8, "bias {b8} not resolved above noise {s8}");
    assert!(b128 < b8 / 4.0 && b128 < 3.0 * s128, "m=128: {b128} (noise {s128}) vs m=8: {b8}");
}
