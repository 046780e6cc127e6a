use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig};
use super::{create_dir, write_json, write_text, Check, SCHEMA_VERSION};
use crate::distortion::{DistortionFn, Family};
use crate::drm::{edf, Sample};
use crate::error::Result;
use crate::mdp::{rollout_batch, EpisodicMdp, MdpBuilder, SoftmaxPolicy};
use crate::numeric::{dist, CompensatedVec};
use crate::oracle::{
    bound_constants_for, exact_cdf, exact_cdf_offpolicy, exact_grad, finite_diff_grad, BoundConstants,
    EpisodeAtlas,
};
use crate::parallel::{try_map_indices, Execution};
use crate::rng::{derive_seed, stream_rng, TAG_SUITE};

/// Test hooks for checking that the suite notices a broken oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Negates every exact gradient the suite computes.
    pub flip_exact_grad_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedConstants {
    pub distortion: DistortionFn,
    pub on_policy: BoundConstants,
    /// Uniform behavior against the first random target policy.
    pub off_policy: BoundConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub bound_constants: Vec<NamedConstants>,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn run_oracle_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    run_oracle_suite_with(cfg, SuiteOptions::default())
}

/// `max_i |a_i - b_i| / max_i |b_i|`, falling back to the absolute error when
/// `b` is identically zero.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

fn configurations() -> Vec<DistortionFn> {
    Family::ALL.iter().map(|&f| DistortionFn::with_default(f)).collect()
}

/// One state, two actions with identical return distributions.
fn symmetric_mdp() -> Result<EpisodicMdp> {
    let mut b = MdpBuilder::new(2, 2).start(1).terminal(0).cap(1);
    for a in 0..2 {
        b = b.transition(1, a, 0, 0.5, 1.0)?.transition(1, a, 0, 0.5, -1.0)?;
    }
    b.build()
}

/// Runs every oracle invariant on the configured (enumerable) MDP and writes
/// `report.json`. The report lists each violating input.
pub fn run_oracle_suite_with(cfg: &ExperimentConfig, opts: SuiteOptions) -> Result<SuiteReport> {
    cfg.validate(Experiment::OracleSuite)?;
    let s = &cfg.suite;
    let seed = cfg.run_seeds()[0];
    let gamma = cfg.env.gamma;
    let mdp = cfg.env.build()?;
    let atlas = EpisodeAtlas::enumerate(&mdp, gamma)?;
    let d = mdp.dim();
    let m_r = mdp.tight_return_bound(gamma);

    let mut rng = stream_rng(seed, TAG_SUITE, 0);
    let mut draw = || -> Vec<f64> { (0..d).map(|_| rng.random_range(-s.theta_box..=s.theta_box)).collect() };
    let thetas: Vec<Vec<f64>> = (0..s.random_thetas).map(|_| draw()).collect();
    let behaviors: Vec<Vec<f64>> = (0..s.random_thetas).map(|_| draw()).collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..s.smoothness_pairs).map(|_| (draw(), draw())).collect();
    let policy = |t: &[f64]| atlas.policy(t.to_vec());
    let grad = |pi: &SoftmaxPolicy, g: &DistortionFn| -> Result<Vec<f64>> {
        let mut v = exact_grad(&atlas, pi, g, m_r)?;
        if opts.flip_exact_grad_sign {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(v)
    };
    let configs = configurations();
    let mut checks = Vec::new();

    let mut bad = Vec::new();
    for t in &thetas {
        let mass = atlas.total_mass(&policy(t)?);
        if (mass - 1.0).abs() > s.cdf_tol {
            bad.push(format!("theta={t:?}: total mass {mass}"));
        }
    }
    checks.push(Check::new(
        "atlas-normalization",
        bad,
        format!("{} episodes, {} random policies, tol {:e}", atlas.len(), thetas.len(), s.cdf_tol),
    ));

    let breaks = atlas.breakpoints();
    let (lo, hi) = (breaks[0], *breaks.last().unwrap());
    let mut probes = vec![lo - 1.0];
    for w in breaks.windows(2) {
        probes.push(w[0]);
        probes.push(0.5 * (w[0] + w[1]));
    }
    probes.push(hi);
    probes.push(hi + 1.0);
    let mut bad = Vec::new();
    for t in &thetas {
        let pi = policy(t)?;
        let values: Vec<f64> = probes.iter().map(|&x| exact_cdf(&atlas, &pi, x)).collect();
        let monotone = values.windows(2).all(|w| w[0] <= w[1] + 1e-15);
        let ranged = values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v));
        let ends = values[0] == 0.0 && (exact_cdf(&atlas, &pi, hi) - 1.0).abs() <= s.cdf_tol;
        if !(monotone && ranged && ends) {
            bad.push(format!("theta={t:?}: cdf {values:?}"));
        }
    }
    checks.push(Check::new(
        "cdf-monotone",
        bad,
        format!("{} probes per policy, F(min - 1) = 0, F(max) = 1", probes.len()),
    ));

    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for g in &configs {
        for t in &thetas {
            let pi = policy(t)?;
            let exact = grad(&pi, g)?;
            let fd = finite_diff_grad(&atlas, &pi, g, s.fd_step)?;
            let e = rel_err(&exact, &fd);
            worst = worst.max(e);
            if !(e <= s.fd_rel_tol) {
                bad.push(format!("{g} theta={t:?}: relative error {e:.3e}"));
            }
        }
    }
    checks.push(Check::new(
        "exact-vs-finite-difference",
        bad,
        format!(
            "{} distortions x {} policies, h = {:e}, max relative error {worst:.3e} (tol {:e})",
            configs.len(),
            thetas.len(),
            s.fd_step,
            s.fd_rel_tol
        ),
    ));

    // Identity distortion: the gradient is the REINFORCE gradient with baseline M_r.
    let mut bad = Vec::new();
    for t in &thetas {
        let pi = policy(t)?;
        let exact = grad(&pi, &DistortionFn::identity())?;
        let mut reference = CompensatedVec::zeros(d);
        for e in atlas.episodes() {
            reference.add_scaled(&e.score_sum(&pi), e.prob(&pi) * (e.ret - m_r));
        }
        let err = rel_err(&exact, &reference.value());
        if !(err <= s.identity_tol) {
            bad.push(format!("theta={t:?}: relative error {err:.3e}"));
        }
    }
    checks.push(Check::new(
        "identity-reduction",
        bad,
        format!("exact gradient under identity vs sum P (R - M_r) grad log P, tol {:e}", s.identity_tol),
    ));

    let sym = symmetric_mdp()?;
    let sym_atlas = EpisodeAtlas::enumerate(&sym, gamma)?;
    let uniform = SoftmaxPolicy::uniform(2, 2);
    let mut bad = Vec::new();
    for g in &configs {
        let mut exact = exact_grad(&sym_atlas, &uniform, g, sym.tight_return_bound(gamma))?;
        if opts.flip_exact_grad_sign {
            exact.iter_mut().for_each(|x| *x = -*x);
        }
        let fd = finite_diff_grad(&sym_atlas, &uniform, g, s.fd_step)?;
        if exact.iter().chain(&fd).any(|x| x.abs() > 1e-12) {
            bad.push(format!("{g}: exact {exact:?}, finite difference {fd:?}"));
        }
    }
    checks.push(Check::new(
        "symmetric-zero-gradient",
        bad,
        "uniform policy on two actions with equal return laws".into(),
    ));

    let mut bad = Vec::new();
    for (t, b) in thetas.iter().zip(&behaviors) {
        let (pi, pb) = (policy(t)?, policy(b)?);
        for &x in &breaks {
            let diff = (exact_cdf(&atlas, &pi, x) - exact_cdf_offpolicy(&atlas, &pb, &pi, x)).abs();
            if diff > s.cdf_tol {
                bad.push(format!("theta={t:?} behavior={b:?} x={x}: diff {diff:.3e}"));
            }
        }
    }
    checks.push(Check::new(
        "offpolicy-cdf-identity",
        bad,
        format!("{} (behavior, target) pairs at every breakpoint, tol {:e}", thetas.len(), s.cdf_tol),
    ));

    let pi0 = policy(&thetas[0])?;
    let limit = 3.0 / (s.mc_episodes as f64).sqrt();
    let sups = try_map_indices(Execution::Parallel, s.mc_seeds, |j| {
        let batch = rollout_batch(
            &mdp,
            &pi0,
            &pi0,
            gamma,
            derive_seed(derive_seed(seed, TAG_SUITE), j as u64),
            s.mc_episodes,
            Execution::Sequential,
        )?;
        let sample = Sample::new(batch.iter().map(|e| e.ret).collect())?;
        Ok::<_, crate::error::Error>(
            breaks
                .iter()
                .map(|&x| (edf(&sample, x) - exact_cdf(&atlas, &pi0, x)).abs())
                .fold(0.0, f64::max),
        )
    })?;
    let passes = sups.iter().filter(|&&x| x <= limit).count();
    let bad = if passes >= s.mc_min_pass {
        Vec::new()
    } else {
        sups.iter()
            .enumerate()
            .filter(|(_, &x)| x > limit)
            .map(|(j, x)| format!("seed index {j}: sup deviation {x:.4e} > {limit:.4e}"))
            .collect()
    };
    checks.push(Check::new(
        "mc-cdf-consistency",
        bad,
        format!(
            "{passes}/{} seeds within 3/sqrt(m) = {limit:.4e} at m = {} (need {})",
            s.mc_seeds, s.mc_episodes, s.mc_min_pass
        ),
    ));

    let mut bad = Vec::new();
    let mut named = Vec::new();
    let uniform_d = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    for g in &configs {
        let c = bound_constants_for(&mdp, &atlas, None, g, gamma);
        let c_off = bound_constants_for(&mdp, &atlas, Some((&uniform_d, &pi0)), g, gamma);
        named.push(NamedConstants {
            distortion: *g,
            on_policy: c,
            off_policy: c_off,
        });
        for (t1, t2) in &pairs {
            let lhs = dist(&grad(&policy(t1)?, g)?, &grad(&policy(t2)?, g)?);
            let rhs = c.l_rho_prime * dist(t1, t2);
            if !(lhs <= rhs) {
                bad.push(format!("{g} theta1={t1:?} theta2={t2:?}: {lhs:.4e} > {rhs:.4e}"));
            }
        }
    }
    checks.push(Check::new(
        "smoothness",
        bad,
        format!(
            "{} distortions x {} pairs in the box |theta|_inf <= {}",
            configs.len(),
            pairs.len(),
            s.theta_box
        ),
    ));

    let mut bad = Vec::new();
    for n in &named {
        for c in [&n.on_policy, &n.off_policy] {
            let positive = [c.m_r, c.m_e, c.m_d, c.m_h, c.m_s, c.m_gprime, c.l_rho_prime]
                .iter()
                .all(|&x| x > 0.0 && x.is_finite());
            let l = 2.0 * c.m_r * c.m_e * (c.m_h * c.m_gprime + c.m_e * c.m_d * c.m_d * (c.m_gprime + c.m_gdprime));
            if !positive || c.m_gdprime < 0.0 || (l - c.l_rho_prime).abs() > 1e-12 * l {
                bad.push(format!("{}: {c:?}", n.distortion));
            }
        }
    }
    checks.push(Check::new(
        "bound-constants",
        bad,
        "constants positive (M_g'' >= 0), smoothness constant consistent".into(),
    ));

    let report = SuiteReport {
        schema_version: SCHEMA_VERSION,
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
        bound_constants: named,
    };
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml_string()?)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    Ok(report)
}
