//! Property tests of the enumeration oracle on the fixture chain.

use drm_pg::distortion::{DistortionFn, Family};
use drm_pg::mdp::EpisodicMdp;
use drm_pg::oracle::{
    bound_constants_for, exact_cdf, exact_cdf_offpolicy, exact_grad, finite_diff_grad, EpisodeAtlas,
};
use proptest::prelude::*;

const GAMMA: f64 = 0.9;

fn setup() -> (EpisodicMdp, EpisodeAtlas, f64) {
    let mdp = EpisodicMdp::oracle_chain();
    let atlas = EpisodeAtlas::enumerate(&mdp, GAMMA).unwrap();
    let mr = mdp.tight_return_bound(GAMMA);
    (mdp, atlas, mr)
}

fn theta(bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, 6)
}

/// Any family with a parameter drawn from its valid domain.
fn distortion() -> impl Strategy<Value = DistortionFn> {
    prop_oneof![
        (2.0f64..6.0).prop_map(|r| DistortionFn::new(Family::DualPower, r).unwrap()),
        (0.0f64..=1.0).prop_map(|r| DistortionFn::new(Family::Quadratic, r).unwrap()),
        (0.05f64..5.0).prop_map(|r| DistortionFn::new(Family::Exponential, r).unwrap()),
        (0.05f64..5.0).prop_map(|r| DistortionFn::new(Family::SquareRoot, r).unwrap()),
        (0.05f64..5.0).prop_map(|r| DistortionFn::new(Family::Logarithmic, r).unwrap()),
        Just(DistortionFn::identity()),
    ]
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_sum_to_one(t in theta(4.0)) {
        let (_, atlas, _) = setup();
        let mass = atlas.total_mass(&atlas.policy(t).unwrap());
        prop_assert!((mass - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn cdf_is_a_distribution_function(t in theta(4.0), xs in prop::collection::vec(-6.0f64..6.0, 2..20)) {
        let (_, atlas, _) = setup();
        let pi = atlas.policy(t).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let values: Vec<f64> = xs.iter().map(|&x| exact_cdf(&atlas, &pi, x)).collect();
        prop_assert!(values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    }

    #[test]
    fn importance_weighted_cdf_is_exact(b in theta(3.0), t in theta(3.0)) {
        let (_, atlas, _) = setup();
        let (pb, pt) = (atlas.policy(b).unwrap(), atlas.policy(t).unwrap());
        for x in atlas.breakpoints() {
            prop_assert!((exact_cdf(&atlas, &pt, x) - exact_cdf_offpolicy(&atlas, &pb, &pt, x)).abs() <= 1e-10);
        }
    }

    #[test]
    fn exact_gradient_matches_finite_differences(t in theta(2.0), g in distortion()) {
        let (_, atlas, mr) = setup();
        let pi = atlas.policy(t).unwrap();
        let exact = exact_grad(&atlas, &pi, &g, mr).unwrap();
        let fd = finite_diff_grad(&atlas, &pi, &g, 1e-5).unwrap();
        prop_assert!(max_rel(&exact, &fd) <= 1e-5, "{g}: {exact:?} vs {fd:?}");
    }

    #[test]
    fn gradient_is_lipschitz(t1 in theta(2.0), t2 in theta(2.0), g in distortion()) {
        let (mdp, atlas, mr) = setup();
        let l = bound_constants_for(&mdp, &atlas, None, &g, GAMMA).l_rho_prime;
        let g1 = exact_grad(&atlas, &atlas.policy(t1.clone()).unwrap(), &g, mr).unwrap();
        let g2 = exact_grad(&atlas, &atlas.policy(t2.clone()).unwrap(), &g, mr).unwrap();
        let norm = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lhs = norm(g1.iter().zip(&g2).map(|(a, b)| a - b).collect());
        let rhs = l * norm(t1.iter().zip(&t2).map(|(a, b)| a - b).collect());
        prop_assert!(lhs <= rhs);
    }

    #[test]
    fn gradient_does_not_depend_on_the_return_bound(t in theta(2.0), g in distortion(), extra in 0.0f64..50.0) {
        let (_, atlas, mr) = setup();
        let pi = atlas.policy(t).unwrap();
        let a = exact_grad(&atlas, &pi, &g, mr).unwrap();
        let b = exact_grad(&atlas, &pi, &g, mr + extra).unwrap();
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * (scale + 1.0) * (mr + extra));
        }
    }
}
