//! Order-statistic likelihood-ratio estimators of the DRM policy gradient.
//!
//! Plugging the empirical CDF and its likelihood-ratio gradient into
//! `grad rho = -int_{-M_r}^{M_r} g'(1 - F(x)) grad F(x) dx` gives a sum over
//! the gaps between consecutive order statistics:
//!
//! ```text
//! (1/m) sum_{i<m} (R_(i) - R_(i+1)) g'(1 - F_i) sum_{j<=i} w_(j) dl_(j)
//!   + (1/m) (R_(m) - M_r) g'_+(0) sum_j w_(j) dl_(j)
//! ```
//!
//! with `F_i = i/m`, `w = 1` on-policy, and `F_i = min(1, (1/m) sum_{j<=i} psi_(j))`,
//! `w = psi` off-policy.

use std::io::Write;

use serde::Serialize;

use crate::distortion::DistortionFn;
use crate::error::{Error, Result};
use crate::mdp::Episode;
use crate::numeric::{norm, CompensatedScalar, CompensatedVec};

/// One order statistic's contribution, kept for audit dumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderTerm {
    pub rank: usize,
    pub ret: f64,
    /// `R_(i) - R_(i+1)`, or `R_(m) - M_r` for the last rank.
    pub gap: f64,
    /// CDF level at which g' is evaluated (`1 - level` is the argument).
    pub cdf_level: f64,
    pub g_prime: f64,
    pub psi: f64,
    pub partial_score_norm: f64,
    /// Scalar multiplying the partial score sum: `gap * g_prime / m`.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub grad: Vec<f64>,
    pub m: usize,
    pub return_bound: f64,
    pub terms: Option<Vec<OrderTerm>>,
}

impl GradReport {
    pub fn norm(&self) -> f64 {
        norm(&self.grad)
    }

    /// Almost-sure ceiling `2 M_r M_g' M_e M_d M_s` on the estimate's norm
    /// (`M_s = 1` on-policy).
    pub fn sanity_ceiling(&self, m_gprime: f64, m_e: f64, m_d: f64, m_s: f64) -> f64 {
        2.0 * self.return_bound * m_gprime * m_e * m_d * m_s
    }

    /// Writes the audit terms as CSV (header row, one row per order statistic).
    /// Writes only the header when the report was computed without audit.
    pub fn write_terms_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.terms {
            Some(terms) if !terms.is_empty() => {
                for t in terms {
                    w.serialize(t)?;
                }
            }
            _ => w.write_record([
                "rank",
                "ret",
                "gap",
                "cdf_level",
                "g_prime",
                "psi",
                "partial_score_norm",
                "coefficient",
            ])?,
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Sorts by return ascending, ties by trajectory fingerprint.
fn order(episodes: &[Episode]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..episodes.len()).collect();
    idx.sort_by(|&a, &b| {
        episodes[a]
            .ret
            .total_cmp(&episodes[b].ret)
            .then(episodes[a].fingerprint().cmp(&episodes[b].fingerprint()))
    });
    idx
}

fn validate(episodes: &[Episode], return_bound: f64) -> Result<usize> {
    let first = episodes.first().ok_or(Error::Empty)?;
    let dim = first.score_sum.len();
    for ep in episodes {
        if ep.score_sum.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: ep.score_sum.len(),
            });
        }
        if ep.ret.abs() > return_bound || ep.ret.is_nan() {
            return Err(Error::ReturnExceedsBound {
                ret: ep.ret,
                bound: return_bound,
            });
        }
    }
    Ok(dim)
}

fn order_statistic_gradient(
    episodes: &[Episode],
    g: &DistortionFn,
    return_bound: f64,
    importance_weighted: bool,
    audit: bool,
) -> Result<GradReport> {
    let dim = validate(episodes, return_bound)?;
    if importance_weighted {
        if let Some(ep) = episodes
            .iter()
            .find(|e| !(e.is_ratio.is_finite() && e.is_ratio >= 0.0))
        {
            return Err(Error::InvalidDistribution(format!(
                "importance ratio {} is not a finite non-negative number",
                ep.is_ratio
            )));
        }
    }
    let m = episodes.len();
    let mf = m as f64;
    let sorted = order(episodes);
    let mut partial = CompensatedVec::zeros(dim);
    let mut grad = CompensatedVec::zeros(dim);
    let mut mass = CompensatedScalar::default();
    let mut terms = audit.then(|| Vec::with_capacity(m));

    for (k, &idx) in sorted.iter().enumerate() {
        let ep = &episodes[idx];
        let w = if importance_weighted { ep.is_ratio } else { 1.0 };
        partial.add_scaled(&ep.score_sum, w);
        mass.add(w);
        let (gap, level, g_prime) = if k + 1 < m {
            let level = (mass.value() / mf).min(1.0);
            let gap = ep.ret - episodes[sorted[k + 1]].ret;
            let g_prime = if gap == 0.0 {
                0.0
            } else {
                g.deriv_unchecked(1.0 - level)
            };
            (gap, level, g_prime)
        } else {
            (ep.ret - return_bound, 1.0, g.right_deriv_zero())
        };
        let coefficient = gap * g_prime / mf;
        if coefficient != 0.0 {
            grad.add_scaled_acc(&partial, coefficient);
        }
        if let Some(terms) = terms.as_mut() {
            terms.push(OrderTerm {
                rank: k + 1,
                ret: ep.ret,
                gap,
                cdf_level: level,
                g_prime,
                psi: w,
                partial_score_norm: partial.norm(),
                coefficient,
            });
        }
    }
    Ok(GradReport {
        grad: grad.value(),
        m,
        return_bound,
        terms,
    })
}

/// On-policy estimate from `m` episodes of the current policy.
pub fn grad_onpolicy(episodes: &[Episode], g: &DistortionFn, return_bound: f64) -> Result<GradReport> {
    order_statistic_gradient(episodes, g, return_bound, false, false)
}

/// Off-policy estimate from behavior-policy episodes carrying importance
/// ratios for the target. The `min(1, .)` clip applies to the CDF level only;
/// score sums are weighted by the unclipped ratios.
pub fn grad_offpolicy(episodes: &[Episode], g: &DistortionFn, return_bound: f64) -> Result<GradReport> {
    order_statistic_gradient(episodes, g, return_bound, true, false)
}

/// As [`grad_onpolicy`] / [`grad_offpolicy`], also recording per-rank terms.
pub fn grad_audited(
    episodes: &[Episode],
    g: &DistortionFn,
    return_bound: f64,
    off_policy: bool,
) -> Result<GradReport> {
    order_statistic_gradient(episodes, g, return_bound, off_policy, true)
}

/// Risk-neutral REINFORCE estimate `(1/m) sum_i R_i dl_i`, no baseline.
pub fn grad_reinforce(episodes: &[Episode]) -> Result<Vec<f64>> {
    let first = episodes.first().ok_or(Error::Empty)?;
    let mut acc = CompensatedVec::zeros(first.score_sum.len());
    let m = episodes.len() as f64;
    for ep in episodes {
        acc.add_scaled(&ep.score_sum, ep.ret / m);
    }
    Ok(acc.value())
}

/// Estimated CDF gradient at `x`: `(1/m) sum_i 1{R_i <= x} dl_i`.
pub fn cdf_grad_onpolicy(episodes: &[Episode], x: f64) -> Result<Vec<f64>> {
    let first = episodes.first().ok_or(Error::Empty)?;
    let mut acc = CompensatedVec::zeros(first.score_sum.len());
    let m = episodes.len() as f64;
    for ep in episodes.iter().filter(|e| e.ret <= x) {
        acc.add_scaled(&ep.score_sum, 1.0 / m);
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::Family;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ep(ret: f64, score: Vec<f64>, psi: f64) -> Episode {
        let tag = (ret * 1000.0) as usize;
        Episode::from_parts(vec![tag], vec![0], ret, score, psi)
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        diff / norm(b).max(1e-300)
    }

    #[test]
    fn single_episode_is_boundary_term() {
        let g = DistortionFn::with_default(Family::Logarithmic);
        let e = ep(1.5, vec![0.5, -1.0], 1.0);
        let r = grad_onpolicy(std::slice::from_ref(&e), &g, 4.0).unwrap();
        let c = (1.5 - 4.0) * g.right_deriv_zero();
        assert_relative_eq!(r.grad[0], c * 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.grad[1], -c, epsilon = 1e-15);

        let e = ep(1.5, vec![0.5, -1.0], 2.5);
        let r = grad_offpolicy(std::slice::from_ref(&e), &g, 4.0).unwrap();
        assert_relative_eq!(r.grad[0], c * 2.5 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn equal_returns_leave_only_boundary_term() {
        let g = DistortionFn::with_default(Family::Exponential);
        let eps = vec![
            ep(2.0, vec![1.0, 0.0], 1.0),
            ep(2.0, vec![0.0, 3.0], 1.0),
            ep(2.0, vec![-1.0, 1.0], 1.0),
        ];
        let r = grad_onpolicy(&eps, &g, 5.0).unwrap();
        let c = (2.0 - 5.0) * g.right_deriv_zero();
        assert_relative_eq!(r.grad[0], c * 0.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(r.grad[1], c * 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_distortion_is_baselined_reinforce() {
        let eps = vec![
            ep(-1.0, vec![1.0, 2.0], 1.0),
            ep(3.0, vec![0.5, -1.0], 1.0),
            ep(0.5, vec![-2.0, 0.25], 1.0),
        ];
        let mr = 4.0;
        let r = grad_onpolicy(&eps, &DistortionFn::identity(), mr).unwrap();
        let mut want = vec![0.0; 2];
        for e in &eps {
            for (w, s) in want.iter_mut().zip(&e.score_sum) {
                *w += (e.ret - mr) * s / 3.0;
            }
        }
        assert!(rel_err(&r.grad, &want) <= 1e-12);
    }

    #[test]
    fn two_episode_off_policy_by_hand() {
        // sorted: R_(1) = 0 (psi 2, dl = (1, 0)), R_(2) = 1 (psi 0, dl = (0, 1))
        let g = DistortionFn::new(Family::DualPower, 2.0).unwrap();
        let eps = vec![ep(1.0, vec![0.0, 1.0], 0.0), ep(0.0, vec![1.0, 0.0], 2.0)];
        let mr = 3.0;
        let r = grad_audited(&eps, &g, mr, true).unwrap();
        // i = 1: level = min(1, 2/2) = 1 -> clipped, g'(0) = 2; partial = 2*(1,0)
        // term = (0 - 1) * 2 * (2, 0) / 2 = (-2, 0)
        // boundary: (1 - 3) * 2 * (2*(1,0) + 0*(0,1)) / 2 = (-4, 0)
        assert_relative_eq!(r.grad[0], -6.0, epsilon = 1e-14);
        assert_eq!(r.grad[1], 0.0);
        let terms = r.terms.unwrap();
        assert_eq!(terms[0].cdf_level, 1.0);
        assert_eq!(terms[1].psi, 0.0);
    }

    #[test]
    fn clip_engages_only_above_one() {
        let g = DistortionFn::with_default(Family::Logarithmic);
        let eps = vec![
            ep(0.0, vec![1.0], 3.0),
            ep(1.0, vec![1.0], 0.5),
            ep(2.0, vec![1.0], 0.1),
        ];
        let r = grad_audited(&eps, &g, 5.0, true).unwrap();
        let t = r.terms.unwrap();
        assert_eq!(t[0].cdf_level, 1.0);
        assert_eq!(t[1].cdf_level, 1.0);
        let eps = vec![ep(0.0, vec![1.0], 0.3), ep(1.0, vec![1.0], 0.3)];
        let t = grad_audited(&eps, &g, 5.0, true).unwrap().terms.unwrap();
        assert_relative_eq!(t[0].cdf_level, 0.15);
    }

    #[test]
    fn errors() {
        let g = DistortionFn::identity();
        assert!(matches!(grad_onpolicy(&[], &g, 1.0), Err(Error::Empty)));
        assert!(matches!(grad_offpolicy(&[], &g, 1.0), Err(Error::Empty)));
        let e = ep(3.0, vec![1.0], 1.0);
        assert!(matches!(
            grad_onpolicy(std::slice::from_ref(&e), &g, 2.0),
            Err(Error::ReturnExceedsBound { .. })
        ));
        let e = ep(1.0, vec![1.0], f64::NAN);
        assert!(grad_offpolicy(std::slice::from_ref(&e), &g, 2.0).is_err());
    }

    #[test]
    fn cdf_gradient_counts() {
        let eps = vec![ep(0.0, vec![2.0, 0.0], 1.0), ep(1.0, vec![0.0, 4.0], 1.0)];
        assert_eq!(cdf_grad_onpolicy(&eps, -1.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(cdf_grad_onpolicy(&eps, 0.5).unwrap(), vec![1.0, 0.0]);
        assert_eq!(cdf_grad_onpolicy(&eps, 9.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn audit_csv_has_one_row_per_rank() {
        let eps = vec![ep(0.0, vec![1.0], 1.0), ep(1.0, vec![1.0], 1.0)];
        let r = grad_audited(&eps, &DistortionFn::identity(), 2.0, false).unwrap();
        let mut buf = Vec::new();
        r.write_terms_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("rank,ret,gap,cdf_level,g_prime,psi,partial_score_norm,coefficient"));
    }

    fn batch() -> impl Strategy<Value = Vec<(f64, Vec<f64>, f64)>> {
        prop::collection::vec(
            (
                prop_oneof![
                    prop::sample::select(vec![-2.0, -0.5, 0.0, 0.5, 1.0, 3.0]),
                    -4.0f64..4.0,
                ],
                prop::collection::vec(-3.0f64..3.0, 3),
                0.0f64..3.0,
            ),
            1..40,
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant(raw in batch(), seed in any::<u64>(), fam in prop::sample::select(Family::ALL.to_vec())) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let g = DistortionFn::with_default(fam);
            let eps: Vec<Episode> = raw
                .iter()
                .enumerate()
                .map(|(i, (r, s, p))| Episode::from_parts(vec![i], vec![0], *r, s.clone(), *p))
                .collect();
            let mut shuffled = eps.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            for off in [false, true] {
                let a = order_statistic_gradient(&eps, &g, 5.0, off, false).unwrap();
                let b = order_statistic_gradient(&shuffled, &g, 5.0, off, false).unwrap();
                prop_assert_eq!(a.grad, b.grad);
            }
        }

        #[test]
        fn on_off_agree_when_ratios_are_one(raw in batch(), fam in prop::sample::select(Family::ALL.to_vec())) {
            let g = DistortionFn::with_default(fam);
            let eps: Vec<Episode> = raw
                .iter()
                .enumerate()
                .map(|(i, (r, s, _))| Episode::from_parts(vec![i], vec![0], *r, s.clone(), 1.0))
                .collect();
            let on = grad_onpolicy(&eps, &g, 5.0).unwrap();
            let off = grad_offpolicy(&eps, &g, 5.0).unwrap();
            prop_assert_eq!(on.grad, off.grad);
        }

        #[test]
        fn norm_within_sanity_ceiling(raw in batch(), fam in prop::sample::select(Family::ALL.to_vec())) {
            // score sums here have norm <= 3 * sqrt(3); treat that as M_e * M_d
            let g = DistortionFn::with_default(fam);
            let eps: Vec<Episode> = raw
                .iter()
                .enumerate()
                .map(|(i, (r, s, p))| Episode::from_parts(vec![i], vec![0], *r, s.clone(), *p))
                .collect();
            let (mg1, _) = g.bound_constants();
            let on = grad_onpolicy(&eps, &g, 5.0).unwrap();
            prop_assert!(on.norm() <= on.sanity_ceiling(mg1, 3.0 * 3f64.sqrt(), 1.0, 1.0) * (1.0 + 1e-12));
            let off = grad_offpolicy(&eps, &g, 5.0).unwrap();
            prop_assert!(off.norm() <= off.sanity_ceiling(mg1, 3.0 * 3f64.sqrt(), 1.0, 3.0) * (1.0 + 1e-12));
        }
    }
}
