//! Policy-gradient optimization of distortion risk measures (DRMs) of the
//! cumulative reward in finite episodic MDPs.
//!
//! - [`distortion`]: smooth distortion functions with closed-form derivatives.
//! - [`drm`]: Choquet-integral DRMs of discrete and empirical distributions.
//! - [`mdp`]: episodic MDPs, tabular softmax policies, seeded rollouts, and
//!   the Frozen Lake grid world.
//! - [`estimators`]: on- and off-policy order-statistic gradient estimators.
//! - [`optimizer`]: DRM policy-gradient ascent and a REINFORCE baseline.
//! - [`oracle`]: exhaustive-enumeration ground truth for small MDPs.
//! - [`harness`]: experiment runners behind the `drmpg` CLI.
//!
//! Batch work (rollouts, Monte Carlo repetitions) runs on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise;
//! per-episode RNG streams make both modes produce identical results.

// `!(x <= y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distortion;
pub mod drm;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod mdp;
pub mod numeric;
pub mod optimizer;
pub mod oracle;
pub mod parallel;
pub mod rng;

pub use distortion::{DistortionFn, Family};
pub use drm::{drm_empirical, drm_exact, edf, DiscreteDist, Sample};
pub use error::{Error, Result};
pub use estimators::{cdf_grad_onpolicy, grad_offpolicy, grad_onpolicy, GradReport};
pub use mdp::{Episode, EpisodicMdp, FrozenLake, FrozenLakeParams, SoftmaxPolicy};
pub use optimizer::{Algorithm, TrainConfig, TrainTrace};
pub use oracle::{BoundConstants, EpisodeAtlas};
pub use parallel::Execution;
