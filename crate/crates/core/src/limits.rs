//! Constants of the heavy-traffic limits and the scalings that lead to them.
//!
//! Slowly varying tail factors are constants here: a Pareto tail
//! `P(X > x) = x_m^α x^{-α}` contributes `c = x_m^α`, finite-variance laws
//! contribute 1.

use std::fmt::Write as _;

use statrs::function::gamma::gamma as gamma_fn;

use crate::distributions::PeriodDistribution;
use crate::error::{Error, Result};
use crate::path::{SampledPath, TimeGrid};
use crate::queue::QueueTrace;

/// Which period law dominates the variance of cumulative ON time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    /// Equal tail indices; both laws contribute (`0 < b < ∞`).
    Both,
    /// ON tail is heavier (`b = ∞`).
    On,
    /// OFF tail is heavier (`b = 0`).
    Off,
}

/// Period whose tail plays the role of `F̄_L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitParams {
    pub mean_on: f64,
    pub mean_off: f64,
    /// Long-run fraction of time ON.
    pub gamma: f64,
    pub alpha_on: f64,
    pub alpha_off: f64,
    pub a_on: f64,
    pub a_off: f64,
    /// Ratio of tail constants; `f64::INFINITY` or 0 when the indices differ.
    pub b: f64,
    pub alpha_min: f64,
    pub dominance: Dominance,
    pub pi_squared: f64,
    pub hurst: f64,
    /// Constant slowly varying factor `L` of the reference tail.
    pub slowly_varying: f64,
    pub tail_reference: Phase,
    reference: PeriodDistribution,
}

impl LimitParams {
    pub fn pi(&self) -> f64 {
        self.pi_squared.sqrt()
    }

    pub fn is_heavy(&self) -> bool {
        self.alpha_min < 2.0
    }

    /// `F̄_L(x)` for the reference tail.
    pub fn reference_tail(&self, x: f64) -> f64 {
        self.reference.complementary_cdf(x)
    }

    /// `(key, value)` pairs in a fixed order for reports.
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        let dominance = match self.dominance {
            Dominance::Both => "both",
            Dominance::On => "on",
            Dominance::Off => "off",
        };
        let reference = match self.tail_reference {
            Phase::On => "on",
            Phase::Off => "off",
        };
        vec![
            ("mu_on", self.mean_on.to_string()),
            ("mu_off", self.mean_off.to_string()),
            ("gamma", self.gamma.to_string()),
            ("alpha_on", self.alpha_on.to_string()),
            ("alpha_off", self.alpha_off.to_string()),
            ("a_on", self.a_on.to_string()),
            ("a_off", self.a_off.to_string()),
            ("b", self.b.to_string()),
            ("alpha_min", self.alpha_min.to_string()),
            ("dominance", dominance.to_string()),
            ("pi_squared", self.pi_squared.to_string()),
            ("hurst", self.hurst.to_string()),
            ("L", self.slowly_varying.to_string()),
            ("tail_reference", reference.to_string()),
        ]
    }

    /// Aligned two-column table of [`Self::key_values`].
    pub fn table(&self) -> String {
        let kv = self.key_values();
        let width = kv.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

/// Fraction of time a source is ON, `μ_on / (μ_on + μ_off)`.
pub fn gamma(mean_on: f64, mean_off: f64) -> Result<f64> {
    for m in [mean_on, mean_off] {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidArgument(format!("period means must be > 0, got {m}")));
        }
    }
    Ok(mean_on / (mean_on + mean_off))
}

/// Derives every limit constant from the two period laws.
pub fn limit_params(on: &PeriodDistribution, off: &PeriodDistribution) -> LimitParams {
    let (m1, m2) = (on.mean(), off.mean());
    let (al1, al2) = (on.tail_index(), off.tail_index());
    let (a1, a2) = (on.tail_constant(), off.tail_constant());
    let (c1, c2) = (on.slowly_varying_constant(), off.slowly_varying_constant());
    let denom_base = (m1 + m2).powi(3);

    let (dominance, b) = if al1 == al2 {
        (Dominance::Both, c1 / c2)
    } else if al1 < al2 {
        (Dominance::On, f64::INFINITY)
    } else {
        (Dominance::Off, 0.0)
    };
    let (alpha_min, pi_squared, slowly_varying, tail_reference, reference) = match dominance {
        Dominance::Both => {
            let pi2 = 2.0 * (m2 * m2 * a1 * b + m1 * m1 * a2) / (denom_base * gamma_fn(4.0 - al1));
            (al1, pi2, c2, Phase::Off, *off)
        }
        Dominance::On => {
            let pi2 = 2.0 * m2 * m2 * a1 / (denom_base * gamma_fn(4.0 - al1));
            (al1, pi2, c1, Phase::On, *on)
        }
        Dominance::Off => {
            let pi2 = 2.0 * m1 * m1 * a2 / (denom_base * gamma_fn(4.0 - al2));
            (al2, pi2, c2, Phase::Off, *off)
        }
    };
    LimitParams {
        mean_on: m1,
        mean_off: m2,
        gamma: m1 / (m1 + m2),
        alpha_on: al1,
        alpha_off: al2,
        a_on: a1,
        a_off: a2,
        b,
        alpha_min,
        dominance,
        pi_squared,
        hurst: (3.0 - alpha_min) / 2.0,
        slowly_varying,
        tail_reference,
        reference,
    }
}

pub(crate) fn require_heavy(params: &LimitParams) -> Result<()> {
    if params.is_heavy() {
        Ok(())
    } else {
        Err(Error::Regime("the R-scaling regime needs an infinite-variance period (alpha_min < 2)".into()))
    }
}

/// `d_R = (N R^{3-α_min} L)^{1/2}`.
pub fn normalizer_d_r(n: usize, r: f64, params: &LimitParams) -> Result<f64> {
    require_heavy(params)?;
    Ok((n as f64 * r.powf(3.0 - params.alpha_min) * params.slowly_varying).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastGrowth {
    pub sources: usize,
    /// `N R F̄_L(R)`, which must diverge along an R-ladder.
    pub growth: f64,
}

/// `N = ⌈κ R^{α_min - 1 + ε}⌉`, so that `N R F̄_L(R)` grows like `R^ε`.
pub fn choose_n_fast_growth(r: f64, params: &LimitParams, epsilon: f64, kappa: f64) -> Result<FastGrowth> {
    require_heavy(params)?;
    if !(epsilon > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "fast growth needs epsilon > 0 and kappa > 0, got ({epsilon}, {kappa})"
        )));
    }
    let raw = kappa * r.powf(params.alpha_min - 1.0 + epsilon);
    // Powers such as 100^0.6 land a hair above an integer.
    let rounded = raw.round();
    let sources = if (raw - rounded).abs() <= 1e-9 * raw { rounded } else { raw.ceil() } as usize;
    let sources = sources.max(1);
    Ok(FastGrowth { sources, growth: sources as f64 * r * params.reference_tail(r) })
}

/// `(Q̃^N, L̃^N) = (Q^N / √N, (μ^N / √N) L^N)`.
pub fn scale_n(trace: &QueueTrace, n: usize, mu: f64) -> (SampledPath, SampledPath) {
    let root = (n as f64).sqrt();
    let q = trace.queue_length.iter().map(|&q| q as f64 / root).collect();
    let factor = mu / root;
    let l = trace.workload.iter().map(|&l| factor * l).collect();
    (
        SampledPath::new(trace.grid, q).expect("trace columns share the grid"),
        SampledPath::new(trace.grid, l).expect("trace columns share the grid"),
    )
}

/// Inverse of [`scale_n`]: queue lengths exactly, workloads to within an ulp.
pub fn unscale_n(q: &SampledPath, l: &SampledPath, n: usize, mu: f64) -> (Vec<u64>, Vec<f64>) {
    let root = (n as f64).sqrt();
    let factor = mu / root;
    (
        q.values().iter().map(|&v| (v * root).round() as u64).collect(),
        l.values().iter().map(|&v| v / factor).collect(),
    )
}

/// `(Q̃^R, L̃^R)(t) = (Q^N(Rt) / d_R, (μ^R / d_R) L^N(Rt))` on `[0, scaled_horizon]`.
///
/// The trace grid step must equal `R` times the scaled step, so scaled grid
/// points fall exactly on trace grid points.
pub fn scale_r(
    trace: &QueueTrace,
    r: f64,
    mu: f64,
    d_r: f64,
    scaled_horizon: f64,
) -> Result<(SampledPath, SampledPath)> {
    let needed = r * scaled_horizon;
    if needed > trace.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "trace horizon {} is shorter than R * scaled horizon = {needed}",
            trace.horizon()
        )));
    }
    let grid = TimeGrid::covering(trace.grid.step() / r, scaled_horizon)?;
    let q = trace.queue_length[..grid.len()].iter().map(|&q| q as f64 / d_r).collect();
    let factor = mu / d_r;
    let l = trace.workload[..grid.len()].iter().map(|&l| factor * l).collect();
    Ok((SampledPath::new(grid, q)?, SampledPath::new(grid, l)?))
}

/// `U(T) = T^{1-α_min/2} L^{1/2}` and `V(T) = T^{α_min/2-1/2} / L^{1/2}`; both
/// diverge as `T` grows.
pub fn uv_diagnostic(t: f64, params: &LimitParams) -> Result<(f64, f64)> {
    require_heavy(params)?;
    let c = params.slowly_varying.sqrt();
    let a = params.alpha_min;
    Ok((t.powf(1.0 - a / 2.0) * c, t.powf(a / 2.0 - 0.5) / c))
}
