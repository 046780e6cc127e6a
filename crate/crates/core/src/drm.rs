//! Distortion risk measures of step distributions via the Choquet integral.
//!
//! For a step CDF with atoms v_1 < ... < v_n the Choquet integral collapses to
//! `v_1 + sum_{i>=2} (v_i - v_{i-1}) g(P(X > v_{i-1}))`, and for an empirical
//! sample to the L-statistic `sum_i R_(i) [g((m-i+1)/m) - g((m-i)/m)]`.

use crate::distortion::DistortionFn;
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

const MASS_TOL: f64 = 1e-12;

/// A finite discrete distribution with strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidDistribution(msg));
        if values.is_empty() {
            return invalid("no atoms".into());
        }
        if values.len() != probs.len() {
            return invalid(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite value".into());
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("values must be strictly increasing".into());
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return invalid("negative or NaN probability".into());
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > MASS_TOL {
            return invalid(format!("probabilities sum to {total}"));
        }
        Ok(Self { values, probs })
    }

    /// Builds a distribution from unsorted `(value, prob)` atoms, merging
    /// atoms with identical values.
    pub fn from_atoms<I: IntoIterator<Item = (f64, f64)>>(atoms: I) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut probs: Vec<f64> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match values.last() {
                Some(&last) if last == v => *probs.last_mut().unwrap() += p,
                _ => {
                    values.push(v);
                    probs.push(p);
                }
            }
        }
        Self::new(values, probs)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.values.iter().zip(&self.probs).map(|(v, p)| v * p))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        compensated_sum(self.probs[..k].iter().copied()).min(1.0)
    }

    /// `P(X > v_i)` for each atom index i, from suffix sums.
    pub fn tail_masses(&self) -> Vec<f64> {
        let n = self.probs.len();
        let mut tails = vec![0.0; n];
        let mut acc = 0.0f64;
        for i in (0..n).rev() {
            tails[i] = acc.min(1.0);
            acc += self.probs[i];
        }
        tails
    }
}

/// Empirical returns `{R_i}`, m >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    returns: Vec<f64>,
}

impl Sample {
    pub fn new(returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::Empty);
        }
        Ok(Self { returns })
    }

    /// As [`Sample::new`], additionally enforcing `|R_i| <= bound`.
    pub fn with_bound(returns: Vec<f64>, bound: f64) -> Result<Self> {
        if let Some(&ret) = returns.iter().find(|r| r.abs() > bound) {
            return Err(Error::ReturnExceedsBound { ret, bound });
        }
        Self::new(returns)
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.returns.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Exact DRM of a discrete distribution.
pub fn drm_exact(dist: &DiscreteDist, g: &DistortionFn) -> f64 {
    let values = dist.values();
    let tails = dist.tail_masses();
    let mut terms = Vec::with_capacity(values.len());
    terms.push(values[0]);
    for i in 1..values.len() {
        terms.push((values[i] - values[i - 1]) * g.eval_unchecked(tails[i - 1]));
    }
    compensated_sum(terms)
}

/// DRM of the empirical distribution of `sample` (L-statistic form).
pub fn drm_empirical(sample: &Sample, g: &DistortionFn) -> f64 {
    let sorted = sample.sorted();
    let m = sorted.len() as f64;
    compensated_sum(sorted.iter().enumerate().map(|(k, &r)| {
        let i = (k + 1) as f64;
        r * (g.eval_unchecked((m - i + 1.0) / m) - g.eval_unchecked((m - i) / m))
    }))
}

/// Convenience wrapper over a raw return slice; errors on an empty slice.
pub fn drm_of_returns(returns: &[f64], g: &DistortionFn) -> Result<f64> {
    Ok(drm_empirical(&Sample::new(returns.to_vec())?, g))
}

/// Empirical CDF `G^m(x)`: fraction of returns <= x.
pub fn edf(sample: &Sample, x: f64) -> f64 {
    let count = sample.returns.iter().filter(|&&r| r <= x).count();
    count as f64 / sample.len() as f64
}
