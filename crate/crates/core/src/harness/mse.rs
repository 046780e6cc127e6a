use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, ExperimentConfig};
use super::{create_dir, write_csv, write_json, write_text, Check, FileSchema, Manifest, SCHEMA_VERSION};
use crate::error::Result;
use crate::estimators::{grad_offpolicy, grad_onpolicy};
use crate::mdp::{rollout_batch, SoftmaxPolicy};
use crate::numeric::{compensated_sum, dist};
use crate::oracle::{bound_constants_for, exact_grad, BoundConstants, EpisodeAtlas};
use crate::parallel::{try_map_indices, Execution};
use crate::rng::{derive_seed, stream_rng, TAG_MSE};

const MSE_COLUMNS: &[&str] = &[
    "mode",
    "m",
    "batches",
    "empirical_mse",
    "lemma_bound",
    "ratio",
    "decay_4x",
];

/// Accepted range for `mse(m) / mse(4m)` under `O(1/m)` decay.
pub const DECAY_RANGE: (f64, f64) = (2.5, 6.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    /// `on-policy` or `off-policy`.
    pub mode: String,
    pub m: usize,
    pub batches: usize,
    /// Mean of `||estimate - exact gradient||^2` over the batches.
    pub empirical_mse: f64,
    pub lemma_bound: f64,
    /// `empirical_mse / lemma_bound`.
    pub ratio: f64,
    /// `mse(m) / mse(4m)` when `4m` is also on the ladder.
    pub decay_4x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub schema_version: u32,
    pub seed: u64,
    pub theta: Vec<f64>,
    pub behavior: Vec<f64>,
    pub exact_grad: Vec<f64>,
    pub constants_onpolicy: BoundConstants,
    pub constants_offpolicy: Option<BoundConstants>,
    pub rows: Vec<MseRow>,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl MseReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn row(&self, mode: &str, m: usize) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.mode == mode && r.m == m)
    }
}

/// Estimates the gradient-estimator MSE against the exact gradient along the
/// batch-size ladder, then checks `O(1/m)` decay and the analytical bounds.
pub fn run_mse_study(cfg: &ExperimentConfig) -> Result<MseReport> {
    cfg.validate(Experiment::MseStudy)?;
    let s = &cfg.mse;
    let seed = cfg.run_seeds()[0];
    let gamma = cfg.env.gamma;
    let mdp = cfg.env.build()?;
    let atlas = EpisodeAtlas::enumerate(&mdp, gamma)?;
    let d = mdp.dim();

    let theta = match &s.theta {
        Some(t) => t.clone(),
        None => {
            let mut rng = stream_rng(seed, TAG_MSE, 0);
            (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()
        }
    };
    let target = atlas.policy(theta.clone())?;
    let behavior = match &s.behavior {
        Some(b) => atlas.policy(b.clone())?,
        None => SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions()),
    };
    let g = s.distortion;
    let on = bound_constants_for(&mdp, &atlas, None, &g, gamma);
    let off = s
        .off_policy
        .then(|| bound_constants_for(&mdp, &atlas, Some((&behavior, &target)), &g, gamma));
    let return_bound = on.m_r;
    let exact = exact_grad(&atlas, &target, &g, return_bound)?;

    let mut modes = vec![("on-policy", false)];
    if s.off_policy {
        modes.push(("off-policy", true));
    }
    let mut rows = Vec::new();
    for (mode_idx, &(mode, off_policy)) in modes.iter().enumerate() {
        let sampler = if off_policy { &behavior } else { &target };
        for &m in &s.ladder {
            let point_seed = derive_seed(derive_seed(derive_seed(seed, TAG_MSE), mode_idx as u64 + 1), m as u64);
            let errors = try_map_indices(Execution::Parallel, s.batches, |k| {
                let batch = rollout_batch(
                    &mdp,
                    sampler,
                    &target,
                    gamma,
                    derive_seed(point_seed, k as u64),
                    m,
                    Execution::Sequential,
                )?;
                let est = if off_policy {
                    grad_offpolicy(&batch, &g, return_bound)?
                } else {
                    grad_onpolicy(&batch, &g, return_bound)?
                };
                Ok::<_, crate::error::Error>(dist(&est.grad, &exact).powi(2))
            })?;
            let empirical_mse = compensated_sum(errors) / s.batches as f64;
            let lemma_bound = match (off_policy, &off) {
                (true, Some(c)) => c.mse_bound_offpolicy(m),
                _ => on.mse_bound_onpolicy(m),
            };
            rows.push(MseRow {
                mode: mode.to_string(),
                m,
                batches: s.batches,
                empirical_mse,
                lemma_bound,
                ratio: empirical_mse / lemma_bound,
                decay_4x: None,
            });
        }
    }
    let snapshot = rows.clone();
    for row in &mut rows {
        row.decay_4x = snapshot
            .iter()
            .find(|r| r.mode == row.mode && r.m == 4 * row.m)
            .map(|r| row.empirical_mse / r.empirical_mse);
    }

    let decay_violations: Vec<String> = rows
        .iter()
        .filter_map(|r| r.decay_4x.map(|x| (r, x)))
        .filter(|(_, x)| !(DECAY_RANGE.0..=DECAY_RANGE.1).contains(x))
        .map(|(r, x)| format!("{} m={}: mse(m)/mse(4m) = {x:.4}", r.mode, r.m))
        .collect();
    let bound_violations: Vec<String> = rows
        .iter()
        .filter(|r| !(r.empirical_mse <= r.lemma_bound))
        .map(|r| format!("{} m={}: mse {:.6e} > bound {:.6e}", r.mode, r.m, r.empirical_mse, r.lemma_bound))
        .collect();
    let n_decay = rows.iter().filter(|r| r.decay_4x.is_some()).count();
    let checks = vec![
        Check::new(
            "mse-decay",
            decay_violations,
            format!("{n_decay} ladder pairs (m, 4m), ratio within [{}, {}]", DECAY_RANGE.0, DECAY_RANGE.1),
        ),
        Check::new(
            "mse-below-bound",
            bound_violations,
            format!("{} rows, empirical MSE <= analytical bound", rows.len()),
        ),
    ];

    let report = MseReport {
        schema_version: SCHEMA_VERSION,
        seed,
        theta,
        behavior: behavior.theta().to_vec(),
        exact_grad: exact,
        constants_onpolicy: on,
        constants_offpolicy: off,
        rows,
        checks,
        out: cfg.out.clone(),
    };

    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("config.toml"), &cfg.to_toml_string()?)?;
    write_csv(&cfg.out.join("mse.csv"), &report.rows)?;
    write_json(&cfg.out.join("report.json"), &report)?;
    write_json(
        &cfg.out.join("manifest.json"),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::MseStudy.name(),
            seeds: &[seed],
            files: vec![FileSchema {
                path: "mse.csv".into(),
                columns: MSE_COLUMNS,
            }],
        },
    )?;
    Ok(report)
}
