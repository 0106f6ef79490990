//! ON/OFF period laws and unit-mean service laws.
//!
//! Everything is sampled by inverse CDF so that one uniform draw maps to one
//! variate and streams replay exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Serialized form of a period law, as it appears in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PeriodSpec {
    /// Pareto with tail index `alpha` in (1,2) and the given mean.
    Pareto { alpha: f64, mean: f64 },
    Exponential { mean: f64 },
    /// Uniform on `[low, high]` with `0 <= low < high`.
    UniformPositive { low: f64, high: f64 },
    Deterministic { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PeriodKind {
    Pareto { alpha: f64, scale: f64 },
    Exponential { mean: f64 },
    Uniform { low: f64, high: f64 },
    Deterministic { value: f64 },
}

/// Law of an ON or OFF period length. Immutable once built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PeriodSpec", into = "PeriodSpec")]
pub struct PeriodDistribution {
    kind: PeriodKind,
    spec: PeriodSpec,
}

impl TryFrom<PeriodSpec> for PeriodDistribution {
    type Error = Error;

    fn try_from(spec: PeriodSpec) -> Result<Self> {
        let kind = match spec {
            PeriodSpec::Pareto { alpha, mean } => {
                if !(alpha > 1.0 && alpha < 2.0) {
                    return Err(Error::InvalidDistribution(format!(
                        "pareto shape must lie strictly in (1,2), got {alpha}"
                    )));
                }
                check_positive("pareto mean", mean)?;
                PeriodKind::Pareto { alpha, scale: (alpha - 1.0) / alpha * mean }
            }
            PeriodSpec::Exponential { mean } => {
                check_positive("exponential mean", mean)?;
                PeriodKind::Exponential { mean }
            }
            PeriodSpec::UniformPositive { low, high } => {
                if !(low.is_finite() && high.is_finite() && low >= 0.0 && low < high) {
                    return Err(Error::InvalidDistribution(format!(
                        "uniform-positive needs 0 <= low < high, got [{low}, {high}]"
                    )));
                }
                PeriodKind::Uniform { low, high }
            }
            PeriodSpec::Deterministic { value } => {
                check_positive("deterministic value", value)?;
                PeriodKind::Deterministic { value }
            }
        };
        Ok(Self { kind, spec })
    }
}

impl From<PeriodDistribution> for PeriodSpec {
    fn from(d: PeriodDistribution) -> Self {
        d.spec
    }
}

fn check_positive(what: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidDistribution(format!("{what} must be finite and > 0, got {x}")))
    }
}

impl PeriodDistribution {
    pub fn pareto(alpha: f64, mean: f64) -> Result<Self> {
        PeriodSpec::Pareto { alpha, mean }.try_into()
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        PeriodSpec::Exponential { mean }.try_into()
    }

    pub fn uniform_positive(low: f64, high: f64) -> Result<Self> {
        PeriodSpec::UniformPositive { low, high }.try_into()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        PeriodSpec::Deterministic { value }.try_into()
    }

    pub fn spec(&self) -> PeriodSpec {
        self.spec
    }

    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self.kind, PeriodKind::Pareto { .. })
    }

    /// Pareto scale cutoff `x_m`, if this is a Pareto law.
    pub fn pareto_scale(&self) -> Option<f64> {
        match self.kind {
            PeriodKind::Pareto { scale, .. } => Some(scale),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            PeriodKind::Pareto { alpha, scale } => alpha * scale / (alpha - 1.0),
            PeriodKind::Exponential { mean } => mean,
            PeriodKind::Uniform { low, high } => 0.5 * (low + high),
            PeriodKind::Deterministic { value } => value,
        }
    }

    /// Variance; `f64::INFINITY` for Pareto laws.
    pub fn variance(&self) -> f64 {
        match self.kind {
            PeriodKind::Pareto { .. } => f64::INFINITY,
            PeriodKind::Exponential { mean } => mean * mean,
            PeriodKind::Uniform { low, high } => (high - low).powi(2) / 12.0,
            PeriodKind::Deterministic { .. } => 0.0,
        }
    }

    /// Tail index: the Pareto shape, or 2 for finite-variance laws.
    pub fn tail_index(&self) -> f64 {
        match self.kind {
            PeriodKind::Pareto { alpha, .. } => alpha,
            _ => 2.0,
        }
    }

    /// Constant slowly varying part of the tail, `x_m^alpha` for Pareto and 1
    /// otherwise.
    pub fn slowly_varying_constant(&self) -> f64 {
        match self.kind {
            PeriodKind::Pareto { alpha, scale } => scale.powf(alpha),
            _ => 1.0,
        }
    }

    /// Whether the law is absolutely continuous with a density bounded near
    /// zero, as the Gaussian-limit regime requires.
    pub fn has_bounded_density_at_zero(&self) -> bool {
        !matches!(self.kind, PeriodKind::Deterministic { .. })
    }

    /// Variance-side constant `a_i`: `Gamma(2-alpha)/(alpha-1)` for heavy
    /// tails, `sigma^2 / 2` otherwise.
    pub fn tail_constant(&self) -> f64 {
        match self.kind {
            PeriodKind::Pareto { alpha, .. } => gamma(2.0 - alpha) / (alpha - 1.0),
            _ => self.variance() / 2.0,
        }
    }

    /// Exact `P(X > x)`.
    pub fn complementary_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self.kind {
            PeriodKind::Pareto { alpha, scale } => {
                if x < scale {
                    1.0
                } else {
                    (scale / x).powf(alpha)
                }
            }
            PeriodKind::Exponential { mean } => (-x / mean).exp(),
            PeriodKind::Uniform { low, high } => {
                if x < low {
                    1.0
                } else if x >= high {
                    0.0
                } else {
                    (high - x) / (high - low)
                }
            }
            PeriodKind::Deterministic { value } => {
                if x < value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse of the CDF at `u` in (0,1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            PeriodKind::Pareto { alpha, scale } => scale * (1.0 - u).powf(-1.0 / alpha),
            PeriodKind::Exponential { mean } => -mean * (1.0 - u).ln(),
            PeriodKind::Uniform { low, high } => low + u * (high - low),
            PeriodKind::Deterministic { value } => value,
        }
    }

    /// Inverse of the integrated-tail law `F^e(x) = (1/mean) * int_0^x P(X > s) ds`.
    pub fn equilibrium_quantile(&self, u: f64) -> f64 {
        let mean = self.mean();
        match self.kind {
            PeriodKind::Pareto { alpha, scale } => {
                // F^e is linear below the cutoff and 1 - (1/alpha)(x_m/x)^(alpha-1) above.
                if u <= 1.0 - 1.0 / alpha {
                    u * mean
                } else {
                    scale * (alpha * (1.0 - u)).powf(-1.0 / (alpha - 1.0))
                }
            }
            PeriodKind::Exponential { mean } => -mean * (1.0 - u).ln(),
            PeriodKind::Uniform { low, high } => {
                let target = u * mean;
                if target <= low {
                    target
                } else {
                    let w = high - low;
                    let disc = (w * w - 2.0 * w * (target - low)).max(0.0);
                    low + w - disc.sqrt()
                }
            }
            PeriodKind::Deterministic { value } => u * value,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(open_unit(rng))
    }

    /// Draws a residual period length for a renewal process started in
    /// equilibrium.
    pub fn sample_equilibrium_residual<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.equilibrium_quantile(open_unit(rng))
    }
}

/// Free-standing form of [`PeriodDistribution::sample`].
pub fn sample_period<R: Rng + ?Sized>(dist: &PeriodDistribution, rng: &mut R) -> f64 {
    dist.sample(rng)
}

pub fn sample_equilibrium_residual<R: Rng + ?Sized>(dist: &PeriodDistribution, rng: &mut R) -> f64 {
    dist.sample_equilibrium_residual(rng)
}

pub fn tail_constant(dist: &PeriodDistribution) -> f64 {
    dist.tail_constant()
}

pub fn complementary_cdf(dist: &PeriodDistribution, x: f64) -> f64 {
    dist.complementary_cdf(x)
}

/// Packet work requirement in units of mean work; the mean is exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ServiceDistribution {
    Deterministic,
    Exponential,
    /// Takes `low` or `high` with the probabilities that make the mean 1.
    TwoPoint { low: f64, high: f64 },
}

impl ServiceDistribution {
    pub fn two_point(low: f64, high: f64) -> Result<Self> {
        let d = ServiceDistribution::TwoPoint { low, high };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if let ServiceDistribution::TwoPoint { low, high } = *self {
            if !(low.is_finite() && high.is_finite() && (0.0..1.0).contains(&low) && high > 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "two-point service needs 0 <= low < 1 < high, got ({low}, {high})"
                )));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ServiceDistribution::Deterministic => 0.0,
            ServiceDistribution::Exponential => 1.0,
            ServiceDistribution::TwoPoint { low, high } => (1.0 - low) * (high - 1.0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceDistribution::Deterministic => 1.0,
            ServiceDistribution::Exponential => -open_unit(rng).ln(),
            ServiceDistribution::TwoPoint { low, high } => {
                let p_high = (1.0 - low) / (high - low);
                if open_unit(rng) < p_high {
                    high
                } else {
                    low
                }
            }
        }
    }
}
