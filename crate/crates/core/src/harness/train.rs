use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{EnvSpec, Experiment, ExperimentConfig};
use super::{create_dir, write_csv, write_json, write_text, FileSchema, Manifest, SCHEMA_VERSION};
use crate::distortion::DistortionFn;
use crate::drm::drm_of_returns;
use crate::error::Result;
use crate::mdp::{rollout_batch, EpisodicMdp, SoftmaxPolicy};
use crate::optimizer::{train, Algorithm, IterationRecord, TrainConfig};
use crate::parallel::{try_map_indices, Execution};
use crate::rng::{derive_seed, TAG_EVAL};

const TRAIN_COLUMNS: &[&str] = &["iteration", "mean_return", "batch_drm", "grad_norm"];
const TIMING_COLUMNS: &[&str] = &["iteration", "wall_ms"];
const PLOT_COLUMNS: &[&str] = &[
    "iteration",
    "mean_return",
    "mean_return_smoothed",
    "batch_drm",
    "batch_drm_smoothed",
];
const EVAL_COLUMNS: &[&str] = &["policy", "iterate", "episodes", "mean_return", "empirical_drm"];

/// Post-training evaluation of one iterate on fresh episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// `theta_0`, `theta_r` or `theta_final`.
    pub policy: String,
    pub iterate: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub empirical_drm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub repetition: usize,
    pub seed: u64,
    pub iterations: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub gamma: f64,
    pub return_bound: f64,
    pub distortion: DistortionFn,
    pub env: EnvSpec,
    /// Index R of the randomly selected output iterate.
    pub selected_iterate: usize,
    pub eval: Vec<EvalRow>,
}

impl RunSummary {
    pub fn eval_of(&self, policy: &str) -> Option<&EvalRow> {
        self.eval.iter().find(|e| e.policy == policy)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub records: Vec<IterationRecord>,
    pub thetas: [Vec<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub out: PathBuf,
    pub runs: Vec<RunOutcome>,
}

#[derive(Serialize)]
struct TimingRow {
    iteration: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct PlotRow {
    iteration: usize,
    mean_return: f64,
    mean_return_smoothed: f64,
    batch_drm: f64,
    batch_drm_smoothed: f64,
}

/// Trailing moving average over at most `window` points.
fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        sum += x;
        if k >= window {
            sum -= xs[k - window];
        }
        out.push(sum / (k + 1).min(window) as f64);
    }
    out
}

/// Trains every configured algorithm for every repetition seed, evaluates
/// `theta_0`, `theta_R` and `theta_N` on common fresh episodes, and writes
/// one artifact directory per run under `out/rep-<i>/<algorithm>/`.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate(Experiment::Train)?;
    let t = &cfg.train;
    let mdp = cfg.env.build()?;
    let gamma = cfg.env.gamma;
    let return_bound = t.return_bound.resolve(&mdp, gamma)?;
    let behavior = t.behavior_policy(&mdp)?;
    let init = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let seeds = cfg.run_seeds();

    let jobs: Vec<(usize, u64, Algorithm)> = seeds
        .iter()
        .enumerate()
        .flat_map(|(rep, &seed)| t.algorithms.iter().map(move |&a| (rep, seed, a)))
        .collect();

    let runs = try_map_indices(Execution::Parallel, jobs.len(), |j| {
        let (repetition, seed, algorithm) = jobs[j];
        let tc = TrainConfig {
            iterations: t.iterations,
            batch_size: t.batch_size(),
            step_size: t.step_size(),
            gamma,
            distortion: t.distortion,
            return_bound,
            seed,
            mode: algorithm,
            execution: Execution::Parallel,
        };
        let trace = train(&mdp, &init, Some(&behavior), &tc)?;
        let eval_seed = derive_seed(seed, TAG_EVAL);
        let picks = [
            ("theta_0", 0),
            ("theta_r", trace.selected),
            ("theta_final", trace.iterations()),
        ];
        let eval = picks
            .iter()
            .map(|&(name, k)| {
                evaluate(&mdp, &init, &trace.thetas[k], gamma, &t.distortion, eval_seed, t.eval_episodes)
                    .map(|(mean_return, empirical_drm)| EvalRow {
                        policy: name.to_string(),
                        iterate: k,
                        episodes: t.eval_episodes,
                        mean_return,
                        empirical_drm,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let summary = RunSummary {
            schema_version: SCHEMA_VERSION,
            algorithm,
            repetition,
            seed,
            iterations: tc.iterations,
            batch_size: tc.batch_size,
            step_size: tc.step_size,
            gamma,
            return_bound,
            distortion: tc.distortion,
            env: cfg.env.clone(),
            selected_iterate: trace.selected,
            eval,
        };
        let thetas = [
            trace.thetas[0].clone(),
            trace.theta_r().to_vec(),
            trace.theta_final().to_vec(),
        ];
        Ok::<_, crate::error::Error>(RunOutcome {
            dir: cfg.out.join(format!("rep-{repetition}")).join(algorithm.name()),
            summary,
            records: trace.records,
            thetas,
        })
    })?;

    write_artifacts(cfg, &seeds, &init, &runs)?;
    Ok(TrainReport {
        out: cfg.out.clone(),
        runs,
    })
}

fn evaluate(
    mdp: &EpisodicMdp,
    template: &SoftmaxPolicy,
    theta: &[f64],
    gamma: f64,
    g: &DistortionFn,
    seed: u64,
    episodes: usize,
) -> Result<(f64, f64)> {
    let policy = template.with_theta(theta.to_vec())?;
    let batch = rollout_batch(mdp, &policy, &policy, gamma, seed, episodes, Execution::Parallel)?;
    let returns: Vec<f64> = batch.iter().map(|e| e.ret).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    Ok((mean, drm_of_returns(&returns, g)?))
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    template: &SoftmaxPolicy,
    runs: &[RunOutcome],
) -> Result<()> {
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml_string()?)?;
    let mut files = Vec::new();
    for run in runs {
        create_dir(&run.dir)?;
        let rel = run.dir.strip_prefix(&cfg.out).unwrap_or(&run.dir).to_path_buf();
        write_csv(&run.dir.join("train.csv"), &run.records)?;
        let timing: Vec<TimingRow> = run
            .records
            .iter()
            .map(|r| TimingRow {
                iteration: r.iteration,
                wall_ms: r.wall_ms,
            })
            .collect();
        write_csv(&run.dir.join("timing.csv"), &timing)?;
        let returns: Vec<f64> = run.records.iter().map(|r| r.mean_return).collect();
        let drms: Vec<f64> = run.records.iter().map(|r| r.batch_drm).collect();
        let w = cfg.train.smoothing_window;
        let plot: Vec<PlotRow> = smooth(&returns, w)
            .into_iter()
            .zip(smooth(&drms, w))
            .enumerate()
            .map(|(k, (rs, ds))| PlotRow {
                iteration: k,
                mean_return: returns[k],
                mean_return_smoothed: rs,
                batch_drm: drms[k],
                batch_drm_smoothed: ds,
            })
            .collect();
        write_csv(&run.dir.join("plot.csv"), &plot)?;
        write_csv(&run.dir.join("eval.csv"), &run.summary.eval)?;
        for (name, theta) in ["theta_0", "theta_r", "theta_final"].iter().zip(&run.thetas) {
            let policy = template.with_theta(theta.clone())?;
            write_text(&run.dir.join(format!("{name}.txt")), &policy.to_text())?;
        }
        write_json(&run.dir.join("summary.json"), &run.summary)?;
        for (file, columns) in [
            ("train.csv", TRAIN_COLUMNS),
            ("timing.csv", TIMING_COLUMNS),
            ("plot.csv", PLOT_COLUMNS),
            ("eval.csv", EVAL_COLUMNS),
        ] {
            files.push(FileSchema {
                path: rel.join(file).to_string_lossy().into_owned(),
                columns,
            });
        }
    }
    write_json(
        &cfg.out.join("manifest.json"),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Train.name(),
            seeds,
            files,
        },
    )
}
