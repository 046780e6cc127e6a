use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drm_pg::distortion::{DistortionFn, Family};
use drm_pg::estimators::{grad_offpolicy, grad_onpolicy};
use drm_pg::mdp::{rollout_batch, EpisodicMdp, FrozenLake, FrozenLakeParams, SoftmaxPolicy};
use drm_pg::parallel::{map_indices, Execution};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn frozen_lake() -> (EpisodicMdp, f64) {
    let mdp = FrozenLake::default_map(FrozenLakeParams::default()).unwrap().into_mdp();
    let bound = mdp.reachable_return_bound(0.99);
    (mdp, bound)
}

fn rollouts(c: &mut Criterion) {
    let (mdp, _) = frozen_lake();
    let pi = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let mut group = c.benchmark_group("rollout_batch");
    for m in [100usize, 1000] {
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, m), &m, |b, &m| {
                b.iter(|| rollout_batch(&mdp, &pi, &pi, 0.99, black_box(7), m, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let (mdp, bound) = frozen_lake();
    let pi = SoftmaxPolicy::uniform(mdp.n_states(), mdp.n_actions());
    let g = DistortionFn::with_default(Family::Logarithmic);
    let mut group = c.benchmark_group("estimator");
    for m in [100usize, 1000] {
        let batch = rollout_batch(&mdp, &pi, &pi, 0.99, 3, m, Execution::Parallel).unwrap();
        group.bench_with_input(BenchmarkId::new("on-policy", m), &batch, |b, batch| {
            b.iter(|| grad_onpolicy(black_box(batch), &g, bound).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("off-policy", m), &batch, |b, batch| {
            b.iter(|| grad_offpolicy(black_box(batch), &g, bound).unwrap())
        });
    }
    group.finish();
}

/// Many independent (rollout, estimate) batches, as in the MSE study.
fn mse_batches(c: &mut Criterion) {
    let mdp = EpisodicMdp::oracle_chain();
    let pi = SoftmaxPolicy::new(3, 2, vec![0.0, 0.0, 0.5, -0.3, -0.4, 0.6]).unwrap();
    let g = DistortionFn::with_default(Family::Logarithmic);
    let bound = mdp.tight_return_bound(0.9);
    let mut group = c.benchmark_group("mse_batches");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "200x128"), |b| {
            b.iter(|| {
                map_indices(exec, 200, |k| {
                    let batch = rollout_batch(&mdp, &pi, &pi, 0.9, k as u64, 128, Execution::Sequential).unwrap();
                    grad_onpolicy(&batch, &g, bound).unwrap().norm()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, rollouts, estimators, mse_batches);
criterion_main!(benches);
