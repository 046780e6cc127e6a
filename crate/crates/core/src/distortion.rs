//! Smooth distortion functions g: [0,1] -> [0,1] with closed-form first and
//! second derivatives and the sup-norm constants of |g'| and |g''|.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    DualPower,
    Quadratic,
    Exponential,
    SquareRoot,
    Logarithmic,
    Identity,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::DualPower,
        Family::Quadratic,
        Family::Exponential,
        Family::SquareRoot,
        Family::Logarithmic,
        Family::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::DualPower => "dual-power",
            Family::Quadratic => "quadratic",
            Family::Exponential => "exponential",
            Family::SquareRoot => "square-root",
            Family::Logarithmic => "logarithmic",
            Family::Identity => "identity",
        }
    }

    /// Parameter used when a config names only the family.
    pub fn default_r(self) -> f64 {
        match self {
            Family::DualPower => 2.0,
            Family::Quadratic => 0.5,
            Family::Exponential | Family::SquareRoot | Family::Logarithmic | Family::Identity => {
                1.0
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated distortion function. Construction rejects parameters outside
/// the family's domain; nothing is clamped silently.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistortionSpec", into = "DistortionSpec")]
pub struct DistortionFn {
    family: Family,
    r: f64,
    // Normalizer of the closed form, precomputed: 1 - e^{-r}, sqrt(1+r) - 1, ln(1+r).
    norm: f64,
}

/// Serialized form: `{ family = "logarithmic", r = 1.0 }`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl TryFrom<DistortionSpec> for DistortionFn {
    type Error = Error;

    fn try_from(spec: DistortionSpec) -> Result<Self> {
        DistortionFn::new(spec.family, spec.r.unwrap_or(spec.family.default_r()))
    }
}

impl From<DistortionFn> for DistortionSpec {
    fn from(g: DistortionFn) -> Self {
        DistortionSpec {
            family: g.family,
            r: (g.family != Family::Identity).then_some(g.r),
        }
    }
}

impl DistortionFn {
    pub fn new(family: Family, r: f64) -> Result<Self> {
        let bad = |reason| Error::DistortionParam {
            family: family.name(),
            r,
            reason,
        };
        if !r.is_finite() {
            return Err(bad("parameter must be finite"));
        }
        let norm = match family {
            Family::DualPower if r < 2.0 => return Err(bad("requires r >= 2")),
            Family::Quadratic if !(0.0..=1.0).contains(&r) => {
                return Err(bad("requires 0 <= r <= 1"))
            }
            Family::Exponential | Family::SquareRoot | Family::Logarithmic if r <= 0.0 => {
                return Err(bad("requires r > 0"))
            }
            Family::Exponential => -(-r).exp_m1(),
            Family::SquareRoot => (1.0 + r).sqrt() - 1.0,
            Family::Logarithmic => r.ln_1p(),
            Family::DualPower | Family::Quadratic | Family::Identity => 1.0,
        };
        Ok(Self { family, r, norm })
    }

    pub fn identity() -> Self {
        Self {
            family: Family::Identity,
            r: 1.0,
            norm: 1.0,
        }
    }

    /// The family at its default parameter.
    pub fn with_default(family: Family) -> Self {
        Self::new(family, family.default_r()).expect("default parameters are valid")
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    fn check(s: f64) -> Result<f64> {
        if !(-DOMAIN_TOL..=1.0 + DOMAIN_TOL).contains(&s) {
            return Err(Error::DistortionDomain { value: s });
        }
        Ok(s.clamp(0.0, 1.0))
    }

    /// g(s).
    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(self.eval_unchecked(Self::check(s)?))
    }

    /// g'(s); one-sided at the endpoints.
    pub fn deriv(&self, s: f64) -> Result<f64> {
        Ok(self.deriv_unchecked(Self::check(s)?))
    }

    /// g''(s).
    pub fn second_deriv(&self, s: f64) -> Result<f64> {
        Ok(self.second_deriv_unchecked(Self::check(s)?))
    }

    /// g'_+(0).
    pub fn right_deriv_zero(&self) -> f64 {
        self.deriv_unchecked(0.0)
    }

    /// Tight suprema (M_g', M_g'') of |g'| and |g''| over (0, 1).
    ///
    /// Every non-identity family is concave with g' decreasing and |g''|
    /// decreasing in s, so both suprema sit at s = 0.
    pub fn bound_constants(&self) -> (f64, f64) {
        match self.family {
            Family::Identity => (1.0, 0.0),
            _ => (
                self.deriv_unchecked(0.0),
                self.second_deriv_unchecked(0.0).abs(),
            ),
        }
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        let r = self.r;
        match self.family {
            Family::DualPower => 1.0 - (1.0 - s).powf(r),
            Family::Quadratic => (1.0 + r) * s - r * s * s,
            Family::Exponential => -(-r * s).exp_m1() / self.norm,
            // sqrt(1+rs) - 1 written as rs / (sqrt(1+rs) + 1) to avoid cancellation
            Family::SquareRoot => r * s / ((1.0 + r * s).sqrt() + 1.0) / self.norm,
            Family::Logarithmic => (r * s).ln_1p() / self.norm,
            Family::Identity => s,
        }
    }

    pub(crate) fn deriv_unchecked(&self, s: f64) -> f64 {
        let r = self.r;
        match self.family {
            Family::DualPower => r * (1.0 - s).powf(r - 1.0),
            Family::Quadratic => (1.0 + r) - 2.0 * r * s,
            Family::Exponential => r * (-r * s).exp() / self.norm,
            Family::SquareRoot => r / (2.0 * (1.0 + r * s).sqrt() * self.norm),
            Family::Logarithmic => r / ((1.0 + r * s) * self.norm),
            Family::Identity => 1.0,
        }
    }

    pub(crate) fn second_deriv_unchecked(&self, s: f64) -> f64 {
        let r = self.r;
        match self.family {
            Family::DualPower => -r * (r - 1.0) * (1.0 - s).powf(r - 2.0),
            Family::Quadratic => -2.0 * r,
            Family::Exponential => -r * r * (-r * s).exp() / self.norm,
            Family::SquareRoot => -r * r / (4.0 * (1.0 + r * s).powf(1.5) * self.norm),
            Family::Logarithmic => -r * r / ((1.0 + r * s).powi(2) * self.norm),
            Family::Identity => 0.0,
        }
    }
}

impl fmt::Display for DistortionFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Identity => write!(f, "identity"),
            fam => write!(f, "{fam}(r={})", self.r),
        }
    }
}
