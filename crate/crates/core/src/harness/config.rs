//! Experiment configuration: a TOML file, optionally layered over a named
//! preset. Every field has a default, so a config only lists what it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionFn, Family};
use crate::error::{Error, Result};
use crate::mdp::{EpisodicMdp, FrozenLake, FrozenLakeParams, SoftmaxPolicy};
use crate::optimizer::{default_batch_size, default_step_size, Algorithm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    MseStudy,
    OracleSuite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::MseStudy => "mse-study",
            Experiment::OracleSuite => "oracle-suite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Informational; when set, running a different experiment is an error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    /// Base seed. Without an explicit `seeds` list, repetition `i` uses `seed + i`.
    pub seed: u64,
    /// Explicit per-repetition seeds; overrides `seed` and `repetitions`.
    pub seeds: Vec<u64>,
    pub repetitions: usize,
    pub out: PathBuf,
    pub env: EnvSpec,
    pub train: TrainSection,
    pub mse: MseSection,
    pub suite: SuiteSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            seed: 0,
            seeds: Vec::new(),
            repetitions: 1,
            out: PathBuf::from("runs"),
            env: EnvSpec::default(),
            train: TrainSection::default(),
            mse: MseSection::default(),
            suite: SuiteSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    FrozenLake,
    OracleChain,
    MdpFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub gamma: f64,
    /// Frozen Lake grid file; the built-in 6x9 map when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    /// MDP description file for `kind = "mdp-file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub frozen_lake: FrozenLakeParams,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            kind: EnvKind::FrozenLake,
            gamma: 0.99,
            layout: None,
            path: None,
            frozen_lake: FrozenLakeParams::default(),
        }
    }
}

impl EnvSpec {
    pub fn build(&self) -> Result<EpisodicMdp> {
        match self.kind {
            EnvKind::OracleChain => Ok(EpisodicMdp::oracle_chain()),
            EnvKind::FrozenLake => match &self.layout {
                None => Ok(FrozenLake::default_map(self.frozen_lake)?.into_mdp()),
                Some(p) => Ok(FrozenLake::new(&read(p)?, self.frozen_lake)?.into_mdp()),
            },
            EnvKind::MdpFile => {
                let p = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("env.path is required for kind = \"mdp-file\"".into()))?;
                EpisodicMdp::from_text(&read(p)?)
            }
        }
    }
}

/// Named bound rules, or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundRule {
    /// `r_max (1 - gamma^cap) / (1 - gamma)`.
    Tight,
    /// Largest `|R|` over trajectories the MDP can actually produce.
    Reachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReturnBound {
    Rule(BoundRule),
    Value(f64),
}

impl ReturnBound {
    pub fn resolve(self, mdp: &EpisodicMdp, gamma: f64) -> Result<f64> {
        match self {
            ReturnBound::Rule(BoundRule::Tight) => Ok(mdp.tight_return_bound(gamma)),
            ReturnBound::Rule(BoundRule::Reachable) => Ok(mdp.reachable_return_bound(gamma)),
            ReturnBound::Value(v) if v.is_finite() && v >= 0.0 => Ok(v),
            ReturnBound::Value(v) => Err(Error::Config(format!("return bound {v} invalid"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub algorithms: Vec<Algorithm>,
    pub iterations: usize,
    /// Defaults to `ceil(sqrt(iterations))`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Defaults to `1 / sqrt(iterations)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    pub return_bound: ReturnBound,
    /// Behavior policy parameters (policy text file) for off-policy runs;
    /// uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<PathBuf>,
    /// Fresh episodes per evaluated policy.
    pub eval_episodes: usize,
    /// Trailing moving-average window for plot.csv.
    pub smoothing_window: usize,
    pub distortion: DistortionFn,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::OnPolicy],
            iterations: 10_000,
            batch_size: None,
            step_size: None,
            return_bound: ReturnBound::Rule(BoundRule::Tight),
            behavior: None,
            eval_episodes: 1000,
            smoothing_window: 100,
            distortion: DistortionFn::with_default(Family::Logarithmic),
        }
    }
}

impl TrainSection {
    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or_else(|| default_batch_size(self.iterations))
    }

    pub fn step_size(&self) -> f64 {
        self.step_size.unwrap_or_else(|| default_step_size(self.iterations))
    }

    pub fn behavior_policy(&self, mdp: &EpisodicMdp) -> Result<SoftmaxPolicy> {
        let policy = match &self.behavior {
            None => SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()),
            Some(p) => SoftmaxPolicy::from_text(&read(p)?)?,
        };
        if policy.dim() != mdp.dim() {
            return Err(Error::Dimension {
                expected: mdp.dim(),
                got: policy.dim(),
            });
        }
        Ok(policy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MseSection {
    pub ladder: Vec<usize>,
    pub batches: usize,
    /// Also study the off-policy estimator with `behavior` as the sampler.
    pub off_policy: bool,
    /// Target policy parameters; drawn uniformly from `[-1, 1]^d` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Behavior policy parameters; uniform when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<Vec<f64>>,
    pub distortion: DistortionFn,
}

impl Default for MseSection {
    fn default() -> Self {
        Self {
            ladder: vec![32, 64, 128, 256, 512, 1024],
            batches: 500,
            off_policy: true,
            theta: None,
            behavior: None,
            distortion: DistortionFn::with_default(Family::Logarithmic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    /// Random parameter vectors per check, drawn from `[-theta_box, theta_box]^d`.
    pub random_thetas: usize,
    pub theta_box: f64,
    pub fd_step: f64,
    /// Bound on `max_i |exact_i - fd_i| / max_i |fd_i|`.
    pub fd_rel_tol: f64,
    pub identity_tol: f64,
    pub cdf_tol: f64,
    pub mc_episodes: usize,
    pub mc_seeds: usize,
    pub mc_min_pass: usize,
    pub smoothness_pairs: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            random_thetas: 10,
            theta_box: 2.0,
            fd_step: 1e-5,
            fd_rel_tol: 1e-5,
            identity_tol: 1e-10,
            cdf_tol: 1e-10,
            mc_episodes: 100_000,
            mc_seeds: 20,
            mc_min_pass: 19,
            smoothness_pairs: 100,
        }
    }
}

const PRESETS: &[(&str, &str)] = &[
    ("frozenlake-paper", include_str!("../../presets/frozenlake-paper.toml")),
    ("oracle-chain", include_str!("../../presets/oracle-chain.toml")),
    ("smoke", include_str!("../../presets/smoke.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

fn preset_table(name: &str) -> Result<toml::Table> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let known: Vec<_> = preset_names().collect();
        Error::Config(format!("unknown preset {name:?}; known: {}", known.join(", ")))
    })?;
    Ok(toml::from_str(text)?)
}

/// Recursively overlays `top` onto `base`: tables merge, everything else is replaced.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        Self::from_table(preset_table(name)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads `path`, layered over `preset` when given. Relative paths inside
    /// the file (`env.layout`, `env.path`, `train.behavior`) are resolved
    /// against the file's directory; `out` stays relative to the working
    /// directory.
    pub fn load(preset: Option<&str>, path: Option<&Path>) -> Result<Self> {
        let mut table = match preset {
            Some(name) => preset_table(name)?,
            None => toml::Table::new(),
        };
        let mut base_dir = None;
        if let Some(p) = path {
            let file: toml::Table = toml::from_str(&read(p)?)?;
            merge(&mut table, file);
            base_dir = p.parent().map(Path::to_path_buf);
        }
        let mut cfg = Self::from_table(table)?;
        if let Some(dir) = base_dir {
            cfg.resolve_paths(&dir);
        }
        Ok(cfg)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        Ok(toml::Table::try_into(table)?)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.env.layout, &mut self.env.path, &mut self.train.behavior]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Seeds of the repetitions, in order.
    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repetitions as u64).map(|i| self.seed.wrapping_add(i)).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let Some(e) = self.experiment {
            if e != experiment {
                return bad(format!("config is for {}, not {}", e.name(), experiment.name()));
            }
        }
        if self.seeds.is_empty() && self.repetitions < 1 {
            return bad("repetitions must be >= 1".into());
        }
        if !self.seeds.is_empty() && self.repetitions != 1 && self.repetitions != self.seeds.len() {
            return bad(format!(
                "repetitions = {} disagrees with {} explicit seeds",
                self.repetitions,
                self.seeds.len()
            ));
        }
        if !(self.env.gamma > 0.0 && self.env.gamma < 1.0) {
            return bad(format!("env.gamma {} outside (0, 1)", self.env.gamma));
        }
        match experiment {
            Experiment::Train => {
                let t = &self.train;
                if t.algorithms.is_empty() {
                    return bad("train.algorithms is empty".into());
                }
                if t.iterations < 1 || t.batch_size() < 1 {
                    return bad("train.iterations and train.batch_size must be >= 1".into());
                }
                if t.eval_episodes < 1 || t.smoothing_window < 1 {
                    return bad("train.eval_episodes and train.smoothing_window must be >= 1".into());
                }
            }
            Experiment::MseStudy => {
                let m = &self.mse;
                if m.ladder.is_empty() || m.ladder.contains(&0) {
                    return bad("mse.ladder must be non-empty with positive batch sizes".into());
                }
                if m.batches < 2 {
                    return bad("mse.batches must be >= 2".into());
                }
            }
            Experiment::OracleSuite => {
                let s = &self.suite;
                if s.random_thetas < 1 || s.mc_seeds < 1 || s.mc_episodes < 1 {
                    return bad("suite sample counts must be >= 1".into());
                }
                if s.mc_min_pass > s.mc_seeds {
                    return bad("suite.mc_min_pass exceeds suite.mc_seeds".into());
                }
                if !(s.fd_step > 0.0 && s.theta_box > 0.0) {
                    return bad("suite.fd_step and suite.theta_box must be positive".into());
                }
            }
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
