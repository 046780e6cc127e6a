use std::hash::{Hash, Hasher};

use rand::Rng;

use super::{EpisodicMdp, SoftmaxPolicy};
use crate::error::{Error, Result};
use crate::parallel::{try_map_indices, Execution};
use crate::rng::{stream_rng, TAG_BATCH};

/// One rollout. `score_sum` and `is_ratio` are taken with respect to the
/// target policy; actions were drawn from the behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub ret: f64,
    pub score_sum: Vec<f64>,
    pub is_ratio: f64,
    fingerprint: u64,
}

impl Episode {
    /// Assembles an episode from precomputed parts (used by tests and oracles).
    pub fn from_parts(
        states: Vec<usize>,
        actions: Vec<usize>,
        ret: f64,
        score_sum: Vec<f64>,
        is_ratio: f64,
    ) -> Self {
        let fingerprint = fingerprint(&states, &actions, ret, is_ratio);
        Self {
            states,
            actions,
            ret,
            score_sum,
            is_ratio,
            fingerprint,
        }
    }

    pub fn length(&self) -> usize {
        self.actions.len()
    }

    /// Content hash of the trajectory; secondary sort key among tied returns.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

fn fingerprint(states: &[usize], actions: &[usize], ret: f64, is_ratio: f64) -> u64 {
    // DefaultHasher::new() uses fixed keys, so this is stable within a build.
    let mut h = std::collections::hash_map::DefaultHasher::new();
    states.hash(&mut h);
    actions.hash(&mut h);
    ret.to_bits().hash(&mut h);
    is_ratio.to_bits().hash(&mut h);
    h.finish()
}

fn check_shapes(mdp: &EpisodicMdp, policy: &SoftmaxPolicy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Dimension {
            expected: mdp.dim(),
            got: policy.dim(),
        });
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Simulates one episode with actions from `behavior`, accumulating the
/// discounted return, the target score sum and the importance ratio
/// `prod_t target(A_t|S_t) / behavior(A_t|S_t)`. When both policies carry
/// identical parameters the ratio is exactly 1.
pub fn rollout_with_rng<R: Rng + ?Sized>(
    mdp: &EpisodicMdp,
    behavior: &SoftmaxPolicy,
    target: &SoftmaxPolicy,
    gamma: f64,
    rng: &mut R,
) -> Result<Episode> {
    check_shapes(mdp, behavior)?;
    check_shapes(mdp, target)?;
    let on_policy = behavior.theta() == target.theta();
    let k = mdp.n_actions();
    let mut pb = vec![0.0; k];
    let mut pt = vec![0.0; k];
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut score_sum = vec![0.0; mdp.dim()];
    let mut ret = 0.0;
    let mut discount = 1.0;
    let mut ratio = 1.0;
    let mut s = mdp.start();
    while s != mdp.terminal() && actions.len() < mdp.episode_cap() {
        behavior.probs_into(s, &mut pb);
        let a = sample_index(rng, pb.iter().copied());
        if on_policy {
            target.add_score_with_probs(s, a, &pb, 1.0, &mut score_sum);
        } else {
            target.probs_into(s, &mut pt);
            // absolute continuity: target mass only where behavior has mass
            if let Some(bad) = (0..k).find(|&b| pb[b] <= 0.0 && pt[b] > 0.0) {
                return Err(Error::ZeroBehaviorProbability {
                    state: s,
                    action: bad,
                });
            }
            ratio *= pt[a] / pb[a];
            target.add_score_with_probs(s, a, &pt, 1.0, &mut score_sum);
        }
        let row = mdp.transitions(s, a);
        let t = row[sample_index(rng, row.iter().map(|t| t.prob))];
        ret += discount * t.reward;
        discount *= gamma;
        states.push(s);
        actions.push(a);
        s = t.next;
    }
    Ok(Episode::from_parts(states, actions, ret, score_sum, ratio))
}

/// [`rollout_with_rng`] on a fresh stream derived from `seed`.
pub fn rollout(
    mdp: &EpisodicMdp,
    behavior: &SoftmaxPolicy,
    target: &SoftmaxPolicy,
    gamma: f64,
    seed: u64,
) -> Result<Episode> {
    let mut rng = stream_rng(seed, TAG_BATCH, 0);
    rollout_with_rng(mdp, behavior, target, gamma, &mut rng)
}

/// `m` independent rollouts; episode `i` uses its own stream keyed by
/// `(seed, i)`, so the batch is identical in sequential and parallel mode.
pub fn rollout_batch(
    mdp: &EpisodicMdp,
    behavior: &SoftmaxPolicy,
    target: &SoftmaxPolicy,
    gamma: f64,
    seed: u64,
    m: usize,
    exec: Execution,
) -> Result<Vec<Episode>> {
    try_map_indices(exec, m, |i| {
        let mut rng = stream_rng(seed, TAG_BATCH, i as u64);
        rollout_with_rng(mdp, behavior, target, gamma, &mut rng)
    })
}
