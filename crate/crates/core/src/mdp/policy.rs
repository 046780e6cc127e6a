use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tabular softmax policy `pi(a|s) = exp(theta[s,a]) / sum_b exp(theta[s,b])`.
///
/// Every action has strictly positive probability for finite `theta`. The
/// score `grad log pi(a|s)` touches only the block of state `s`, where it is
/// `e_a - pi(.|s)`. Its squared norm is `(1 - pi_a)^2 + sum_{b != a} pi_b^2
/// <= 2 (1 - pi_a)^2 < 2`, hence `M_d = sqrt(2)`. The Hessian block is
/// `-(diag(pi) - pi pi^T)`, a covariance matrix of a one-hot vector; for a
/// unit vector v its quadratic form is the variance of `v_I` with `I ~ pi`,
/// which is at most `(v_i - v_j)^2 / 4 <= 1/2`, hence `M_h = 1/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    theta: Vec<f64>,
}

impl SoftmaxPolicy {
    /// Bound on the Euclidean norm of the score.
    pub const SCORE_BOUND: f64 = std::f64::consts::SQRT_2;
    /// Bound on the operator norm of the Hessian of `log pi`.
    pub const HESSIAN_BOUND: f64 = 0.5;

    pub fn new(n_states: usize, n_actions: usize, theta: Vec<f64>) -> Result<Self> {
        let expected = n_states * n_actions;
        if theta.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: theta.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            theta,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            theta: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_theta(self) -> Vec<f64> {
        self.theta
    }

    /// Same shape, new parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, theta)
    }

    #[inline]
    pub fn index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    fn block(&self, state: usize) -> &[f64] {
        let k = self.n_actions;
        &self.theta[state * k..(state + 1) * k]
    }

    /// Writes `pi(.|state)` into `out` (length `n_actions`).
    pub fn probs_into(&self, state: usize, out: &mut [f64]) {
        let block = self.block(state);
        let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &t) in out.iter_mut().zip(block) {
            *o = (t - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn probs(&self, state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        self.probs_into(state, &mut out);
        out
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.log_prob(state, action).exp()
    }

    /// `log pi(action|state)` via a stable log-sum-exp.
    pub fn log_prob(&self, state: usize, action: usize) -> f64 {
        let block = self.block(state);
        let max = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + block.iter().map(|&t| (t - max).exp()).sum::<f64>().ln();
        block[action] - lse
    }

    /// Adds `scale * grad log pi(action|state)` to `out` (length `dim`).
    pub fn add_score_into(&self, state: usize, action: usize, scale: f64, out: &mut [f64]) {
        let k = self.n_actions;
        let mut p = vec![0.0; k];
        self.probs_into(state, &mut p);
        self.add_score_with_probs(state, action, &p, scale, out);
    }

    pub(crate) fn add_score_with_probs(
        &self,
        state: usize,
        action: usize,
        probs: &[f64],
        scale: f64,
        out: &mut [f64],
    ) {
        let base = state * self.n_actions;
        for (b, &p) in probs.iter().enumerate() {
            let ind = if b == action { 1.0 } else { 0.0 };
            out[base + b] += scale * (ind - p);
        }
    }

    /// `grad log pi(action|state)` as a dense `dim`-vector.
    pub fn score(&self, state: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.add_score_into(state, action, 1.0, &mut out);
        out
    }

    /// Text form: a `n_states n_actions` header line, then the flat parameter
    /// array on one comma-separated line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_states, self.n_actions);
        for (i, t) in self.theta.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{t:?}");
        }
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let perr = |line, msg: String| Error::Parse { line, msg };
        let header = lines
            .next()
            .ok_or_else(|| perr(1, "missing header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(1, format!("bad header: {e}")))?;
        if dims.len() != 2 {
            return Err(perr(1, "header must be `n_states n_actions`".into()));
        }
        let theta: Vec<f64> = match lines.next() {
            None => Vec::new(),
            Some(body) => body
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(2, format!("bad parameter: {e}")))?,
        };
        Self::new(dims[0], dims[1], theta)
    }
}
