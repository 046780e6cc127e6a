//! Gradient-ascent training loops: on-policy and off-policy DRM policy
//! gradient, and a mini-batch REINFORCE baseline. All three share one loop;
//! only the batch source and the estimator differ.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distortion::DistortionFn;
use crate::drm::drm_of_returns;
use crate::error::{Error, Result};
use crate::estimators::{grad_offpolicy, grad_onpolicy, grad_reinforce};
use crate::mdp::{rollout_batch, EpisodicMdp, SoftmaxPolicy};
use crate::numeric::norm;
use crate::parallel::Execution;
use crate::rng::{derive_seed, stream_rng, TAG_BATCH, TAG_SELECT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    #[serde(rename = "drm-onp-lr")]
    OnPolicy,
    #[serde(rename = "drm-offp-lr")]
    OffPolicy,
    Reinforce,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OnPolicy => "drm-onp-lr",
            Algorithm::OffPolicy => "drm-offp-lr",
            Algorithm::Reinforce => "reinforce",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub gamma: f64,
    pub distortion: DistortionFn,
    /// `M_r`, the upper limit of the DRM integral used by the estimators.
    pub return_bound: f64,
    pub seed: u64,
    pub mode: Algorithm,
    pub execution: Execution,
}

impl TrainConfig {
    /// Config with `m = ceil(sqrt N)` and `alpha = 1 / sqrt N`.
    pub fn with_defaults(
        iterations: usize,
        gamma: f64,
        distortion: DistortionFn,
        return_bound: f64,
        seed: u64,
        mode: Algorithm,
    ) -> Self {
        Self {
            iterations,
            batch_size: default_batch_size(iterations),
            step_size: default_step_size(iterations),
            gamma,
            distortion,
            return_bound,
            seed,
            mode,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations < 1 {
            return bad("iterations must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be >= 1".into());
        }
        // alpha = 0 is accepted as a no-op run
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size {} must be a finite non-negative number", self.step_size));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.return_bound >= 0.0 && self.return_bound.is_finite()) {
            return bad(format!("return bound {} invalid", self.return_bound));
        }
        Ok(())
    }
}

pub fn default_batch_size(iterations: usize) -> usize {
    ((iterations as f64).sqrt().ceil() as usize).max(1)
}

pub fn default_step_size(iterations: usize) -> f64 {
    1.0 / (iterations as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_return: f64,
    pub batch_drm: f64,
    pub grad_norm: f64,
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// `theta_0 ..= theta_N`.
    pub thetas: Vec<Vec<f64>>,
    pub records: Vec<IterationRecord>,
    /// Index R in `1..=N` of the randomly selected output iterate.
    pub selected: usize,
}

impl TrainTrace {
    pub fn theta_r(&self) -> &[f64] {
        &self.thetas[self.selected]
    }

    pub fn theta_final(&self) -> &[f64] {
        self.thetas.last().expect("trace holds at least theta_0")
    }

    pub fn iterations(&self) -> usize {
        self.thetas.len() - 1
    }
}

/// Index drawn uniformly from `1..=n`; `theta_0` is never chosen.
pub fn pick_random_index<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    assert!(n >= 1, "need at least one iterate");
    rng.random_range(1..=n)
}

/// A uniformly random iterate among `theta_1 ..= theta_N`.
pub fn pick_random_iterate<'a, R: Rng + ?Sized>(trace: &'a TrainTrace, rng: &mut R) -> &'a [f64] {
    &trace.thetas[pick_random_index(trace.iterations(), rng)]
}

/// On-policy DRM policy gradient ascent.
pub fn drm_onp_lr(mdp: &EpisodicMdp, init: &SoftmaxPolicy, cfg: &TrainConfig) -> Result<TrainTrace> {
    expect_mode(cfg, Algorithm::OnPolicy)?;
    run(mdp, init, None, cfg)
}

/// Off-policy DRM policy gradient ascent with episodes from `behavior`.
pub fn drm_offp_lr(
    mdp: &EpisodicMdp,
    init: &SoftmaxPolicy,
    behavior: &SoftmaxPolicy,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    expect_mode(cfg, Algorithm::OffPolicy)?;
    run(mdp, init, Some(behavior), cfg)
}

/// Mini-batch REINFORCE on the expected return.
pub fn reinforce(mdp: &EpisodicMdp, init: &SoftmaxPolicy, cfg: &TrainConfig) -> Result<TrainTrace> {
    expect_mode(cfg, Algorithm::Reinforce)?;
    run(mdp, init, None, cfg)
}

/// Dispatches on `cfg.mode`. `behavior` is required for off-policy runs.
pub fn train(
    mdp: &EpisodicMdp,
    init: &SoftmaxPolicy,
    behavior: Option<&SoftmaxPolicy>,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    match cfg.mode {
        Algorithm::OnPolicy => drm_onp_lr(mdp, init, cfg),
        Algorithm::Reinforce => reinforce(mdp, init, cfg),
        Algorithm::OffPolicy => {
            let b = behavior
                .ok_or_else(|| Error::Config("off-policy training needs a behavior policy".into()))?;
            drm_offp_lr(mdp, init, b, cfg)
        }
    }
}

fn expect_mode(cfg: &TrainConfig, mode: Algorithm) -> Result<()> {
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "config mode {} does not match {}",
            cfg.mode.name(),
            mode.name()
        )));
    }
    Ok(())
}

/// Seed of the batch rolled out at iteration `k`.
pub fn batch_seed(run_seed: u64, k: usize) -> u64 {
    derive_seed(derive_seed(run_seed, TAG_BATCH), k as u64)
}

fn run(
    mdp: &EpisodicMdp,
    init: &SoftmaxPolicy,
    behavior: Option<&SoftmaxPolicy>,
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    if init.dim() != mdp.dim() {
        return Err(Error::Dimension {
            expected: mdp.dim(),
            got: init.dim(),
        });
    }
    let mut policy = init.clone();
    let mut thetas = Vec::with_capacity(cfg.iterations + 1);
    thetas.push(policy.theta().to_vec());
    let mut records = Vec::with_capacity(cfg.iterations);

    for k in 0..cfg.iterations {
        let started = Instant::now();
        let source = behavior.unwrap_or(&policy);
        let episodes = rollout_batch(
            mdp,
            source,
            &policy,
            cfg.gamma,
            batch_seed(cfg.seed, k),
            cfg.batch_size,
            cfg.execution,
        )?;
        let grad = match cfg.mode {
            Algorithm::OnPolicy => grad_onpolicy(&episodes, &cfg.distortion, cfg.return_bound)?.grad,
            Algorithm::OffPolicy => grad_offpolicy(&episodes, &cfg.distortion, cfg.return_bound)?.grad,
            Algorithm::Reinforce => grad_reinforce(&episodes)?,
        };
        let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
        let grad_norm = norm(&grad);
        for (t, g) in policy.theta_mut().iter_mut().zip(&grad) {
            *t += cfg.step_size * g;
        }
        if policy.theta().iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                grad_norm,
            });
        }
        thetas.push(policy.theta().to_vec());
        records.push(IterationRecord {
            iteration: k,
            mean_return: returns.iter().sum::<f64>() / returns.len() as f64,
            batch_drm: drm_of_returns(&returns, &cfg.distortion)?,
            grad_norm,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let mut rng = stream_rng(cfg.seed, TAG_SELECT, 0);
    let selected = pick_random_index(cfg.iterations, &mut rng);
    Ok(TrainTrace {
        thetas,
        records,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::Family;
    use crate::estimators::grad_onpolicy;
    use crate::oracle::{exact_drm, EpisodeAtlas};

    const GAMMA: f64 = 0.9;

    fn chain() -> EpisodicMdp {
        EpisodicMdp::oracle_chain()
    }

    fn cfg(n: usize, mode: Algorithm, g: DistortionFn, seed: u64) -> TrainConfig {
        TrainConfig::with_defaults(n, GAMMA, g, chain().tight_return_bound(GAMMA), seed, mode)
    }

    #[test]
    fn defaults_follow_sqrt_n() {
        let c = cfg(10_000, Algorithm::OnPolicy, DistortionFn::identity(), 0);
        assert_eq!(c.batch_size, 100);
        assert_eq!(c.step_size, 0.01);
        assert_eq!(default_batch_size(2000), 45);
    }

    #[test]
    fn zero_step_is_a_noop() {
        let mdp = chain();
        let init = SoftmaxPolicy::new(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        for mode in [Algorithm::OnPolicy, Algorithm::Reinforce, Algorithm::OffPolicy] {
            let mut c = cfg(3, mode, DistortionFn::identity(), 1);
            c.batch_size = 4;
            c.step_size = 0.0;
            let b = SoftmaxPolicy::uniform(3, 2);
            let t = train(&mdp, &init, Some(&b), &c).unwrap();
            assert_eq!(t.thetas.len(), 4);
            assert!(t.thetas.iter().all(|th| th == init.theta()));
        }
        let mut c = cfg(1, Algorithm::OnPolicy, DistortionFn::identity(), 1);
        c.batch_size = 1;
        c.step_size = 0.0;
        let t = drm_onp_lr(&mdp, &init, &c).unwrap();
        assert_eq!(t.thetas.len(), 2);
        assert_eq!(t.selected, 1);
    }

    #[test]
    fn deterministic_given_seed() {
        let mdp = chain();
        let init = SoftmaxPolicy::uniform(3, 2);
        let g = DistortionFn::with_default(Family::Logarithmic);
        let mut a_cfg = cfg(50, Algorithm::OnPolicy, g, 42);
        let a = drm_onp_lr(&mdp, &init, &a_cfg).unwrap();
        a_cfg.execution = Execution::Sequential;
        let b = drm_onp_lr(&mdp, &init, &a_cfg).unwrap();
        assert_eq!(a.thetas, b.thetas);
        assert_eq!(a.selected, b.selected);
        let strip = |t: &TrainTrace| {
            t.records
                .iter()
                .map(|r| (r.mean_return, r.batch_drm, r.grad_norm))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn update_rule_is_exact() {
        let mdp = chain();
        let init = SoftmaxPolicy::uniform(3, 2);
        let g = DistortionFn::with_default(Family::Quadratic);
        let c = cfg(5, Algorithm::OnPolicy, g, 3);
        let t = drm_onp_lr(&mdp, &init, &c).unwrap();
        for k in 0..5 {
            let pi = init.with_theta(t.thetas[k].clone()).unwrap();
            let eps = rollout_batch(&mdp, &pi, &pi, GAMMA, batch_seed(3, k), c.batch_size, Execution::Sequential).unwrap();
            let grad = grad_onpolicy(&eps, &g, c.return_bound).unwrap().grad;
            for (i, gi) in grad.iter().enumerate() {
                assert_eq!(t.thetas[k + 1][i], t.thetas[k][i] + c.step_size * gi);
            }
        }
    }

    #[test]
    fn off_policy_first_step_matches_on_policy() {
        let mdp = chain();
        let init = SoftmaxPolicy::new(3, 2, vec![0.0, 0.0, 0.5, -0.5, 1.0, 0.0]).unwrap();
        let g = DistortionFn::with_default(Family::SquareRoot);
        let on = drm_onp_lr(&mdp, &init, &cfg(1, Algorithm::OnPolicy, g, 8)).unwrap();
        let off = drm_offp_lr(&mdp, &init, &init, &cfg(1, Algorithm::OffPolicy, g, 8)).unwrap();
        assert_eq!(on.thetas[1], off.thetas[1]);
    }

    #[test]
    fn mean_objective_improves() {
        let mdp = chain();
        let init = SoftmaxPolicy::uniform(3, 2);
        let t = drm_onp_lr(&mdp, &init, &cfg(200, Algorithm::OnPolicy, DistortionFn::identity(), 5)).unwrap();
        let first = &t.records[..20];
        let last = &t.records[180..];
        let avg = |r: &[IterationRecord]| r.iter().map(|x| x.batch_drm).sum::<f64>() / r.len() as f64;
        assert!(avg(last) > avg(first), "{} vs {}", avg(last), avg(first));
    }

    #[test]
    fn off_policy_improves_exact_drm() {
        let mdp = chain();
        let atlas = EpisodeAtlas::enumerate(&mdp, GAMMA).unwrap();
        let init = SoftmaxPolicy::uniform(3, 2);
        let g = DistortionFn::with_default(Family::Logarithmic);
        let t = drm_offp_lr(&mdp, &init, &init, &cfg(200, Algorithm::OffPolicy, g, 6)).unwrap();
        let before = exact_drm(&atlas, &init, &g).unwrap();
        let after = exact_drm(&atlas, &init.with_theta(t.theta_final().to_vec()).unwrap(), &g).unwrap();
        assert!(after >= before, "{after} < {before}");
    }

    #[test]
    fn mode_mismatch_and_invalid_config() {
        let mdp = chain();
        let init = SoftmaxPolicy::uniform(3, 2);
        let c = cfg(2, Algorithm::Reinforce, DistortionFn::identity(), 0);
        assert!(drm_onp_lr(&mdp, &init, &c).is_err());
        let mut c = cfg(2, Algorithm::OnPolicy, DistortionFn::identity(), 0);
        c.gamma = 1.0;
        assert!(drm_onp_lr(&mdp, &init, &c).is_err());
        let c = cfg(2, Algorithm::OffPolicy, DistortionFn::identity(), 0);
        assert!(train(&mdp, &init, None, &c).is_err());
    }

    #[test]
    fn divergence_aborts() {
        let mdp = chain();
        let init = SoftmaxPolicy::uniform(3, 2);
        let mut c = cfg(5, Algorithm::OnPolicy, DistortionFn::identity(), 0);
        c.return_bound = 1e6;
        c.step_size = 1e305;
        assert!(matches!(drm_onp_lr(&mdp, &init, &c), Err(Error::NonFinite { iteration: 0, .. })));
    }

    #[test]
    fn random_iterate_is_uniform_over_one_to_n() {
        let mut rng = stream_rng(99, TAG_SELECT, 1);
        let n = 10;
        let draws = 100_000;
        let mut counts = [0usize; 11];
        for _ in 0..draws {
            counts[pick_random_index(n, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let p = 0.1;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[1..] {
            assert!((c as f64 - draws as f64 * p).abs() <= 3.0 * sigma);
        }
        assert_eq!(pick_random_index(1, &mut rng), 1);
    }

    #[test]
    fn reinforce_and_identity_drm_agree_in_expectation() {
        // Identity DRM gradient = (1/m) sum (R - M_r) dl; REINFORCE = (1/m) sum R dl.
        // Their difference -M_r * mean(dl) has mean zero.
        let mdp = chain();
        let pi = SoftmaxPolicy::new(3, 2, vec![0.0, 0.0, 0.3, -0.2, 0.7, 0.1]).unwrap();
        let mr = mdp.tight_return_bound(GAMMA);
        let n = 10_000;
        let eps = rollout_batch(&mdp, &pi, &pi, GAMMA, 1234, n, Execution::Parallel).unwrap();
        let d = pi.dim();
        let mut mean = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for chunk in eps.chunks(1) {
            let a = grad_onpolicy(chunk, &DistortionFn::identity(), mr).unwrap().grad;
            let b = grad_reinforce(chunk).unwrap();
            for i in 0..d {
                let diff = a[i] - b[i];
                mean[i] += diff / n as f64;
                sq[i] += diff * diff / n as f64;
            }
        }
        for i in 0..d {
            let sd = ((sq[i] - mean[i] * mean[i]).max(0.0) / n as f64).sqrt();
            assert!(mean[i].abs() <= 3.0 * sd + 1e-12, "component {i}: {} vs 3 sigma {}", mean[i], 3.0 * sd);
        }
    }
}
