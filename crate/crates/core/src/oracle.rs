//! Brute-force ground truth for desk-sized MDPs: every episode is enumerated,
//! so the return CDF, the DRM and its policy gradient are exact sums.

use serde::{Deserialize, Serialize};

use crate::distortion::DistortionFn;
use crate::drm::{drm_exact, DiscreteDist};
use crate::error::{Error, Result};
use crate::mdp::{EpisodicMdp, SoftmaxPolicy};
use crate::numeric::{compensated_sum, CompensatedScalar, CompensatedVec};

pub const DEFAULT_ATLAS_LIMIT: usize = 1_000_000;
const LEAK_TOL: f64 = 1e-10;

/// A single enumerated episode. `kernel_prob` is the product of transition
/// probabilities along the path; the probability under a policy multiplies in
/// the action probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasEpisode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub ret: f64,
    pub kernel_prob: f64,
}

impl AtlasEpisode {
    pub fn prob(&self, policy: &SoftmaxPolicy) -> f64 {
        self.states
            .iter()
            .zip(&self.actions)
            .fold(self.kernel_prob, |p, (&s, &a)| p * policy.prob(s, a))
    }

    /// `sum_t grad log pi(a_t|s_t)`.
    pub fn score_sum(&self, policy: &SoftmaxPolicy) -> Vec<f64> {
        let mut out = vec![0.0; policy.dim()];
        for (&s, &a) in self.states.iter().zip(&self.actions) {
            policy.add_score_into(s, a, 1.0, &mut out);
        }
        out
    }

    /// `prod_t target(a_t|s_t) / behavior(a_t|s_t)`.
    pub fn is_ratio(&self, behavior: &SoftmaxPolicy, target: &SoftmaxPolicy) -> f64 {
        self.states
            .iter()
            .zip(&self.actions)
            .map(|(&s, &a)| target.prob(s, a) / behavior.prob(s, a))
            .product()
    }
}

/// Every episode of an MDP up to its cap, with discounted returns.
#[derive(Debug, Clone)]
pub struct EpisodeAtlas {
    episodes: Vec<AtlasEpisode>,
    n_states: usize,
    n_actions: usize,
    gamma: f64,
}

impl EpisodeAtlas {
    pub fn enumerate(mdp: &EpisodicMdp, gamma: f64) -> Result<Self> {
        Self::enumerate_with_limit(mdp, gamma, DEFAULT_ATLAS_LIMIT)
    }

    pub fn enumerate_with_limit(mdp: &EpisodicMdp, gamma: f64, limit: usize) -> Result<Self> {
        let mut episodes = Vec::new();
        let mut states = Vec::new();
        let mut actions = Vec::new();
        walk(
            mdp,
            gamma,
            limit,
            mdp.start(),
            0.0,
            1.0,
            1.0,
            &mut states,
            &mut actions,
            &mut episodes,
        )?;
        let atlas = Self {
            episodes,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            gamma,
        };
        let mass = atlas.total_mass(&SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()));
        if (mass - 1.0).abs() > LEAK_TOL {
            return Err(Error::ProbabilityLeak { mass });
        }
        Ok(atlas)
    }

    pub fn episodes(&self) -> &[AtlasEpisode] {
        &self.episodes
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// A policy of the atlas's shape with parameters `theta`.
    pub fn policy(&self, theta: Vec<f64>) -> Result<SoftmaxPolicy> {
        SoftmaxPolicy::new(self.n_states, self.n_actions, theta)
    }

    pub fn total_mass(&self, policy: &SoftmaxPolicy) -> f64 {
        compensated_sum(self.episodes.iter().map(|e| e.prob(policy)))
    }

    /// Sorted distinct returns.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.episodes.iter().map(|e| e.ret).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Exact return distribution under `policy`, equal returns merged.
    pub fn distribution(&self, policy: &SoftmaxPolicy) -> Result<DiscreteDist> {
        DiscreteDist::from_atoms(self.episodes.iter().map(|e| (e.ret, e.prob(policy))))
    }

    pub fn max_is_ratio(&self, behavior: &SoftmaxPolicy, target: &SoftmaxPolicy) -> f64 {
        self.episodes
            .iter()
            .filter(|e| e.prob(behavior) > 0.0)
            .map(|e| e.is_ratio(behavior, target))
            .fold(0.0, f64::max)
    }
}

#[allow(clippy::too_many_arguments)]
fn walk(
    mdp: &EpisodicMdp,
    gamma: f64,
    limit: usize,
    state: usize,
    ret: f64,
    discount: f64,
    kernel_prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    out: &mut Vec<AtlasEpisode>,
) -> Result<()> {
    if state == mdp.terminal() || actions.len() == mdp.episode_cap() {
        if out.len() == limit {
            return Err(Error::AtlasOverflow { limit });
        }
        out.push(AtlasEpisode {
            states: states.clone(),
            actions: actions.clone(),
            ret,
            kernel_prob,
        });
        return Ok(());
    }
    for a in 0..mdp.n_actions() {
        for t in mdp.transitions(state, a) {
            states.push(state);
            actions.push(a);
            walk(
                mdp,
                gamma,
                limit,
                t.next,
                ret + discount * t.reward,
                discount * gamma,
                kernel_prob * t.prob,
                states,
                actions,
                out,
            )?;
            states.pop();
            actions.pop();
        }
    }
    Ok(())
}

/// `F(x) = sum_{omega: R(omega) <= x} P_theta(omega)`.
pub fn exact_cdf(atlas: &EpisodeAtlas, policy: &SoftmaxPolicy, x: f64) -> f64 {
    compensated_sum(
        atlas
            .episodes
            .iter()
            .filter(|e| e.ret <= x)
            .map(|e| e.prob(policy)),
    )
}

/// The same CDF written as a behavior-policy expectation:
/// `sum_omega P_b(omega) psi(omega) 1{R(omega) <= x}`.
pub fn exact_cdf_offpolicy(
    atlas: &EpisodeAtlas,
    behavior: &SoftmaxPolicy,
    target: &SoftmaxPolicy,
    x: f64,
) -> f64 {
    compensated_sum(
        atlas
            .episodes
            .iter()
            .filter(|e| e.ret <= x)
            .map(|e| e.prob(behavior) * e.is_ratio(behavior, target)),
    )
}

pub fn exact_drm(atlas: &EpisodeAtlas, policy: &SoftmaxPolicy, g: &DistortionFn) -> Result<f64> {
    Ok(drm_exact(&atlas.distribution(policy)?, g))
}

/// Exact DRM policy gradient
/// `-int_{-M_r}^{M_r} g'(1 - F(x)) grad F(x) dx`. Both F and grad F are step
/// functions with jumps at the distinct returns, so the integral is a finite
/// sum over segments; the top segment `[R_max, M_r]` carries
/// `grad F = sum_omega grad P_theta(omega)`, which is zero up to round-off.
pub fn exact_grad(
    atlas: &EpisodeAtlas,
    policy: &SoftmaxPolicy,
    g: &DistortionFn,
    return_bound: f64,
) -> Result<Vec<f64>> {
    let dim = policy.dim();
    let mut eps: Vec<(f64, f64, Vec<f64>)> = atlas
        .episodes
        .iter()
        .map(|e| (e.ret, e.prob(policy), e.score_sum(policy)))
        .collect();
    eps.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Atoms: (value, mass, grad mass = sum P grad log P).
    let mut atoms: Vec<(f64, f64, CompensatedVec)> = Vec::new();
    for (ret, p, score) in &eps {
        if atoms.last().map(|a| a.0) != Some(*ret) {
            atoms.push((*ret, 0.0, CompensatedVec::zeros(dim)));
        }
        let atom = atoms.last_mut().unwrap();
        atom.1 += p;
        atom.2.add_scaled(score, *p);
    }
    let top = atoms.last().map(|a| a.0).ok_or(Error::Empty)?;
    if top > return_bound {
        return Err(Error::ReturnExceedsBound {
            ret: top,
            bound: return_bound,
        });
    }

    // Tail masses P(R > v_k) from suffix sums, as in `drm_exact`.
    let n = atoms.len();
    let mut tails = vec![0.0; n];
    let mut acc = CompensatedScalar::default();
    for k in (0..n).rev() {
        tails[k] = acc.value().clamp(0.0, 1.0);
        acc.add(atoms[k].1);
    }

    let mut grad_cdf = CompensatedVec::zeros(dim);
    let mut grad = CompensatedVec::zeros(dim);
    for k in 0..n {
        grad_cdf.add_scaled_acc(&atoms[k].2, 1.0);
        let width = if k + 1 < n {
            atoms[k + 1].0 - atoms[k].0
        } else {
            return_bound - atoms[k].0
        };
        let slope = if k + 1 < n {
            g.deriv_unchecked(tails[k])
        } else {
            g.right_deriv_zero()
        };
        grad.add_scaled_acc(&grad_cdf, -width * slope);
    }
    Ok(grad.value())
}

/// Central differences of [`exact_drm`], one component at a time.
pub fn finite_diff_grad(
    atlas: &EpisodeAtlas,
    policy: &SoftmaxPolicy,
    g: &DistortionFn,
    h: f64,
) -> Result<Vec<f64>> {
    let theta = policy.theta();
    (0..theta.len())
        .map(|i| {
            let mut up = theta.to_vec();
            up[i] += h;
            let mut dn = theta.to_vec();
            dn[i] -= h;
            let fu = exact_drm(atlas, &policy.with_theta(up)?, g)?;
            let fd = exact_drm(atlas, &policy.with_theta(dn)?, g)?;
            Ok((fu - fd) / (2.0 * h))
        })
        .collect()
}

/// Analysis constants for a tabular softmax policy class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub m_r: f64,
    pub m_e: f64,
    pub m_d: f64,
    pub m_h: f64,
    pub m_s: f64,
    pub m_gprime: f64,
    pub m_gdprime: f64,
    pub l_rho_prime: f64,
}

impl BoundConstants {
    /// Assembles the constants and derives the smoothness constant
    /// `L = 2 M_r M_e (M_h M_g' + M_e M_d^2 (M_g' + M_g''))`.
    pub fn new(m_r: f64, m_e: f64, m_d: f64, m_h: f64, m_s: f64, g: &DistortionFn) -> Self {
        let (m_gprime, m_gdprime) = g.bound_constants();
        let l_rho_prime =
            2.0 * m_r * m_e * (m_h * m_gprime + m_e * m_d * m_d * (m_gprime + m_gdprime));
        Self {
            m_r,
            m_e,
            m_d,
            m_h,
            m_s,
            m_gprime,
            m_gdprime,
            l_rho_prime,
        }
    }

    /// On-policy MSE bound `32 M_r^2 M_e^2 M_d^2 (e^2 M_g'^2 + M_g''^2) / m`.
    pub fn mse_bound_onpolicy(&self, m: usize) -> f64 {
        let e2 = std::f64::consts::E.powi(2);
        32.0 * (self.m_r * self.m_e * self.m_d).powi(2)
            * (e2 * self.m_gprime.powi(2) + self.m_gdprime.powi(2))
            / m as f64
    }

    /// Off-policy MSE bound
    /// `32 M_r^2 M_s^2 M_e^2 M_d^2 (e^2 M_g'^2 + M_g''^2 M_s^2) / m`.
    pub fn mse_bound_offpolicy(&self, m: usize) -> f64 {
        let e2 = std::f64::consts::E.powi(2);
        32.0 * (self.m_r * self.m_s * self.m_e * self.m_d).powi(2)
            * (e2 * self.m_gprime.powi(2) + self.m_gdprime.powi(2) * self.m_s.powi(2))
            / m as f64
    }
}

/// Constants for the tabular softmax class on `mdp`: `M_d = sqrt 2`,
/// `M_h = 1/2` (see [`SoftmaxPolicy`]), `M_e` the episode cap, `M_r` the
/// cap-aware return bound, and `M_s` the exact maximum importance ratio over
/// the atlas when a (behavior, target) pair is given, else 1.
pub fn bound_constants_for(
    mdp: &EpisodicMdp,
    atlas: &EpisodeAtlas,
    off_policy: Option<(&SoftmaxPolicy, &SoftmaxPolicy)>,
    g: &DistortionFn,
    gamma: f64,
) -> BoundConstants {
    let m_s = off_policy
        .map(|(b, t)| atlas.max_is_ratio(b, t))
        .unwrap_or(1.0);
    BoundConstants::new(
        mdp.tight_return_bound(gamma),
        mdp.episode_cap() as f64,
        SoftmaxPolicy::SCORE_BOUND,
        SoftmaxPolicy::HESSIAN_BOUND,
        m_s,
        g,
    )
}
