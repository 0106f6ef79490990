//! Gaussian limit processes and the one-sided reflection map.
//!
//! Fractional Brownian motion uses circulant embedding of fractional Gaussian
//! noise, which is exact in law and costs one FFT per path. The light-tail
//! ON-time process `T̃` has a general stationary-increment covariance and is
//! drawn from a dense Cholesky factor instead, so its grids are capped at
//! [`MAX_DENSE_POINTS`].

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::distributions::PeriodDistribution;
use crate::error::{Error, Result};
use crate::limits::LimitParams;
pub use crate::path::{SampledPath, TimeGrid};
use crate::sources::simulate_source;
use crate::rng::open_unit;

/// Largest grid accepted by the dense covariance sampler.
pub const MAX_DENSE_POINTS: usize = 4096;

/// Relative tolerance on negative Cholesky pivots.
const PSD_TOLERANCE: f64 = 1e-8;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Brownian motion with variance `rate * t`, started at 0.
pub fn bm_path<R: Rng + ?Sized>(rate: f64, grid: TimeGrid, rng: &mut R) -> SampledPath {
    let sd = (rate.max(0.0) * grid.step()).sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = 0.0;
    values.push(0.0);
    for _ in 1..grid.len() {
        x += sd * normal(rng);
        values.push(x);
    }
    SampledPath::new(grid, values).expect("one value per grid point")
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact sampler of standard fractional Brownian motion on a fixed grid.
///
/// The circulant eigenvalues and FFT plan are computed once; the generator is
/// then shared read-only across workers.
#[derive(Clone)]
pub struct FbmGenerator {
    hurst: f64,
    grid: TimeGrid,
    /// `sqrt(λ_k / m)` for the circulant of size `m`.
    weights: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("embedding", &self.weights.len())
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: f64, grid: TimeGrid) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidArgument(format!("Hurst index must lie in (0,1), got {hurst}")));
        }
        let n = (grid.len() - 1).max(1);
        let mut half = n;
        let mut planner = FftPlanner::new();
        // One doubling of the embedding is attempted before giving up.
        for _ in 0..2 {
            let m = 2 * half;
            let mut row: Vec<Complex<f64>> = (0..m)
                .map(|j| {
                    let lag = if j <= half { j } else { m - j };
                    Complex::new(fgn_autocovariance(hurst, lag), 0.0)
                })
                .collect();
            planner.plan_fft_forward(m).process(&mut row);
            let max = row.iter().map(|z| z.re).fold(0.0, f64::max);
            let min = row.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
            if min < -1e-10 * max {
                if half == n {
                    half *= 2;
                    continue;
                }
                return Err(Error::EmbeddingFailed { size: m, min_eigenvalue: min });
            }
            let weights = row.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
            let fft = planner.plan_fft_forward(m);
            return Ok(Self { hurst, grid, weights, fft });
        }
        unreachable!("loop returns on its second pass")
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// Fractional Gaussian noise: the `len - 1` increments of the path.
    pub fn sample_fgn<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.grid.len() - 1;
        let mut w: Vec<Complex<f64>> =
            self.weights.iter().map(|&s| Complex::new(s * normal(rng), s * normal(rng))).collect();
        self.fft.process(&mut w);
        let scale = self.grid.step().powf(self.hurst);
        w[..n].iter().map(|z| z.re * scale).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledPath {
        let mut values = Vec::with_capacity(self.grid.len());
        let mut x = 0.0;
        values.push(0.0);
        for dx in self.sample_fgn(rng) {
            x += dx;
            values.push(x);
        }
        SampledPath::new(self.grid, values).expect("one value per grid point")
    }
}

/// One standard FBM path; build an [`FbmGenerator`] when drawing many.
pub fn fbm_path<R: Rng + ?Sized>(hurst: f64, grid: TimeGrid, rng: &mut R) -> Result<SampledPath> {
    Ok(FbmGenerator::new(hurst, grid)?.sample(rng))
}

/// Variance law of the limit ON-time process `T̃`.
#[derive(Debug, Clone, PartialEq)]
pub enum TtildeCovariance {
    /// Exponential ON/OFF periods: `W` is a two-state Markov chain with
    /// autocovariance `γ(1-γ) e^{-r u}`, `r = 1/μ_on + 1/μ_off`.
    MarkovExact { mean_on: f64, mean_off: f64 },
    /// `π² t^{2H} L`, used as if exact.
    AsymptoticHeavy { pi_squared: f64, hurst: f64, slowly_varying: f64 },
    /// Variance tabulated at multiples of `step` from an estimated
    /// autocovariance. Experimental.
    Tabulated { step: f64, variances: Vec<f64> },
}

impl TtildeCovariance {
    pub fn markov_exact(mean_on: f64, mean_off: f64) -> Self {
        TtildeCovariance::MarkovExact { mean_on, mean_off }
    }

    pub fn asymptotic_heavy(params: &LimitParams) -> Self {
        TtildeCovariance::AsymptoticHeavy {
            pi_squared: params.pi_squared,
            hurst: params.hurst,
            slowly_varying: params.slowly_varying,
        }
    }

    /// Picks the exact Markov form for exponential pairs and the asymptotic
    /// form for heavy tails. Other light-tailed laws need
    /// [`TtildeCovariance::estimate`].
    pub fn for_periods(on: &PeriodDistribution, off: &PeriodDistribution, params: &LimitParams) -> Option<Self> {
        use crate::distributions::PeriodSpec::Exponential;
        match (on.spec(), off.spec()) {
            (Exponential { mean: a }, Exponential { mean: b }) => Some(Self::markov_exact(a, b)),
            _ if params.is_heavy() => Some(Self::asymptotic_heavy(params)),
            _ => None,
        }
    }

    /// Estimates the stationary autocovariance of `W` from `paths` simulated
    /// sources and integrates it twice on `grid`. Experimental: the estimate
    /// carries Monte Carlo noise and need not yield a PSD covariance.
    pub fn estimate<R: Rng + ?Sized>(
        on: &PeriodDistribution,
        off: &PeriodDistribution,
        grid: TimeGrid,
        paths: usize,
        rng: &mut R,
    ) -> Self {
        let gamma = on.mean() / (on.mean() + off.mean());
        let lags = grid.len();
        let span = 4 * lags;
        let sim_horizon = grid.step() * (span + lags) as f64;
        let mut eta = vec![0.0; lags];
        for _ in 0..paths.max(1) {
            let p = simulate_source(on, off, sim_horizon, rng);
            let w: Vec<f64> = (0..span + lags).map(|k| f64::from(p.state(grid.time(k))) - gamma).collect();
            for (lag, e) in eta.iter_mut().enumerate() {
                *e += (0..span).map(|s| w[s] * w[s + lag]).sum::<f64>() / span as f64;
            }
        }
        eta.iter_mut().for_each(|e| *e /= paths.max(1) as f64);
        // Var(t) = 2 ∫_0^t ∫_0^v η(u) du dv by cumulative trapezoids.
        let h = grid.step();
        let mut inner = vec![0.0; lags];
        for k in 1..lags {
            inner[k] = inner[k - 1] + 0.5 * h * (eta[k - 1] + eta[k]);
        }
        let mut variances = vec![0.0; lags];
        for k in 1..lags {
            variances[k] = variances[k - 1] + h * (inner[k - 1] + inner[k]);
        }
        TtildeCovariance::Tabulated { step: h, variances }
    }

    pub fn variance(&self, t: f64) -> f64 {
        let t = t.abs();
        match *self {
            TtildeCovariance::MarkovExact { mean_on, mean_off } => {
                let gamma = mean_on / (mean_on + mean_off);
                let r = 1.0 / mean_on + 1.0 / mean_off;
                2.0 * gamma * (1.0 - gamma) * (t / r - (-(r * t)).exp_m1().abs() / (r * r))
            }
            TtildeCovariance::AsymptoticHeavy { pi_squared, hurst, slowly_varying } => {
                pi_squared * t.powf(2.0 * hurst) * slowly_varying
            }
            TtildeCovariance::Tabulated { step, ref variances } => {
                let x = t / step;
                let k = x.floor() as usize;
                if k + 1 >= variances.len() {
                    return *variances.last().unwrap_or(&0.0);
                }
                let frac = x - k as f64;
                variances[k] + frac * (variances[k + 1] - variances[k])
            }
        }
    }

    /// Stationary-increment covariance `(V(t) + V(s) - V(t-s)) / 2`.
    pub fn covariance(&self, t: f64, s: f64) -> f64 {
        0.5 * (self.variance(t) + self.variance(s) - self.variance(t - s))
    }
}

/// Lower Cholesky factor of a symmetric PSD matrix (row-major, `n × n`);
/// pivots within the relative tolerance of zero give zero columns.
fn cholesky(mut a: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = PSD_TOLERANCE * scale;
    for j in 0..n {
        let d = a[j * n + j] - a[j * n..j * n + j].iter().map(|x| x * x).sum::<f64>();
        if d < -tol {
            return Err(Error::NotPositiveSemidefinite { index: j, pivot: d });
        }
        let pivot = if d <= tol { 0.0 } else { d.sqrt() };
        a[j * n + j] = pivot;
        a[j * n + j + 1..j * n + n].iter_mut().for_each(|x| *x = 0.0);
        for i in j + 1..n {
            let (top, bottom) = a.split_at_mut(i * n);
            let row_j = &top[j * n..j * n + j];
            let row_i = &mut bottom[..n];
            let dot: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
            row_i[j] = if pivot > 0.0 { (row_i[j] - dot) / pivot } else { 0.0 };
        }
    }
    Ok(a)
}

/// Dense sampler for a zero-mean Gaussian process started at 0 on a grid.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    grid: TimeGrid,
    /// Factor for grid points `1..len`.
    factor: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(cov: &TtildeCovariance, grid: TimeGrid) -> Result<Self> {
        if grid.len() > MAX_DENSE_POINTS {
            return Err(Error::InvalidArgument(format!(
                "dense Gaussian sampler supports at most {MAX_DENSE_POINTS} grid points, got {}",
                grid.len()
            )));
        }
        let n = grid.len() - 1;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = cov.covariance(grid.time(i + 1), grid.time(j + 1));
                k[i * n + j] = c;
                k[j * n + i] = c;
            }
        }
        Ok(Self { grid, factor: cholesky(k, n)? })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledPath {
        let n = self.grid.len() - 1;
        let z: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i + 1];
            values.push(row.iter().zip(&z).map(|(a, b)| a * b).sum());
        }
        SampledPath::new(self.grid, values).expect("one value per grid point")
    }
}

/// One draw of `T̃`; build a [`GaussianSampler`] when drawing many.
pub fn ttilde_path<R: Rng + ?Sized>(cov: &TtildeCovariance, grid: TimeGrid, rng: &mut R) -> Result<SampledPath> {
    Ok(GaussianSampler::new(cov, grid)?.sample(rng))
}

/// Output of the reflection map.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    /// `x + regulator`, non-negative.
    pub reflected: SampledPath,
    /// `sup_{s <= t} max(-x(s), 0)`, non-decreasing.
    pub regulator: SampledPath,
}

/// One-sided reflection at zero on the grid.
pub fn reflect(path: &SampledPath) -> Reflection {
    let mut regulator = Vec::with_capacity(path.len());
    let mut reflected = Vec::with_capacity(path.len());
    let mut sup = 0.0f64;
    for &x in path.values() {
        sup = sup.max(-x);
        regulator.push(sup);
        reflected.push(x + sup);
    }
    let grid = *path.grid();
    Reflection {
        reflected: SampledPath::new(grid, reflected).expect("same grid"),
        regulator: SampledPath::new(grid, regulator).expect("same grid"),
    }
}

/// Reflection whose regulator also sees the minimum between grid points.
///
/// Between consecutive grid points the path is treated as a Brownian bridge
/// with variance rate `variance_rate`, and its minimum is drawn exactly
/// given the endpoints. This removes the upward bias of the grid regulator
/// at fixed times. With `variance_rate = 0` it equals [`reflect`].
pub fn reflect_bridged<R: Rng + ?Sized>(path: &SampledPath, variance_rate: f64, rng: &mut R) -> Reflection {
    let dt = path.grid().step();
    let values = path.values();
    let mut regulator = Vec::with_capacity(values.len());
    let mut reflected = Vec::with_capacity(values.len());
    let mut sup = 0.0f64;
    for (k, &x) in values.iter().enumerate() {
        let mut low = x;
        if k > 0 && variance_rate > 0.0 {
            let a = values[k - 1];
            let u = open_unit(rng);
            let spread = ((x - a).powi(2) - 2.0 * variance_rate * dt * u.ln()).sqrt();
            low = 0.5 * (a + x - spread);
        }
        sup = sup.max(-low);
        regulator.push(sup);
        reflected.push(x + sup);
    }
    let grid = *path.grid();
    Reflection {
        reflected: SampledPath::new(grid, reflected).expect("same grid"),
        regulator: SampledPath::new(grid, regulator).expect("same grid"),
    }
}

/// Three independent drivers of the light-tail limit.
#[derive(Debug, Clone)]
pub struct LightDrivers {
    /// `Ã(γ·)`, variance rate `λγ`.
    pub arrivals: SampledPath,
    /// `T̃`.
    pub on_time: SampledPath,
    /// `S̃(λγ·)`, variance rate `λγσ_v²`.
    pub service: SampledPath,
}

/// Sampler for the reflected Gaussian limit
/// `Q̃ = Ã(γ·) + λT̃ − S̃(λγ·) − θ· + Ĩ`.
#[derive(Debug, Clone)]
pub struct LightLimit {
    gamma: f64,
    lambda: f64,
    theta: f64,
    service_variance: f64,
    on_time: GaussianSampler,
}

impl LightLimit {
    pub fn new(
        params: &LimitParams,
        lambda: f64,
        theta: f64,
        service_variance: f64,
        cov: &TtildeCovariance,
        grid: TimeGrid,
    ) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be > 0, got {theta}")));
        }
        Ok(Self {
            gamma: params.gamma,
            lambda,
            theta,
            service_variance,
            on_time: GaussianSampler::new(cov, grid)?,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.on_time.grid()
    }

    pub fn sample_drivers<R: Rng + ?Sized>(&self, rng: &mut R) -> LightDrivers {
        let grid = self.grid();
        let rate = self.lambda * self.gamma;
        let arrivals = bm_path(rate, grid, rng);
        let on_time = self.on_time.sample(rng);
        let service = bm_path(rate * self.service_variance, grid, rng);
        LightDrivers { arrivals, on_time, service }
    }

    /// Free process `X̃` before reflection.
    pub fn free_path(&self, d: &LightDrivers) -> SampledPath {
        let values = self
            .grid()
            .times()
            .enumerate()
            .map(|(k, t)| {
                d.arrivals.values()[k] + self.lambda * d.on_time.values()[k] - d.service.values()[k] - self.theta * t
            })
            .collect();
        SampledPath::new(self.grid(), values).expect("same grid")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Reflection {
        reflect(&self.free_path(&self.sample_drivers(rng)))
    }

    /// Local variance rate of the Brownian part of the free path. The
    /// ON-time driver has zero quadratic variation.
    pub fn brownian_rate(&self) -> f64 {
        self.lambda * self.gamma * (1.0 + self.service_variance)
    }

    /// Like [`sample`](Self::sample), with the regulator corrected for
    /// excursions below zero between grid points.
    pub fn sample_bridged<R: Rng + ?Sized>(&self, rng: &mut R) -> Reflection {
        let free = self.free_path(&self.sample_drivers(rng));
        reflect_bridged(&free, self.brownian_rate(), rng)
    }
}

/// One draw of the light-tail limit and its regulator.
pub fn limit_q_light<R: Rng + ?Sized>(
    params: &LimitParams,
    lambda: f64,
    theta: f64,
    service_variance: f64,
    cov: &TtildeCovariance,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Reflection> {
    Ok(LightLimit::new(params, lambda, theta, service_variance, cov, grid)?.sample(rng))
}

/// Sampler for the reflected FBM limit `Q̃_H = λπB_H − θ· + Ĩ_H`.
#[derive(Debug, Clone)]
pub struct HeavyLimit {
    scale: f64,
    theta: f64,
    fbm: FbmGenerator,
}

impl HeavyLimit {
    pub fn new(params: &LimitParams, lambda: f64, theta: f64, grid: TimeGrid) -> Result<Self> {
        crate::limits::require_heavy(params)?;
        if !(theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be > 0, got {theta}")));
        }
        Ok(Self { scale: lambda * params.pi(), theta, fbm: FbmGenerator::new(params.hurst, grid)? })
    }

    pub fn grid(&self) -> TimeGrid {
        self.fbm.grid()
    }

    pub fn free_path<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledPath {
        self.fbm.sample(rng).map(|t, b| self.scale * b - self.theta * t)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Reflection {
        reflect(&self.free_path(rng))
    }
}

pub fn limit_q_heavy<R: Rng + ?Sized>(
    params: &LimitParams,
    theta: f64,
    lambda: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<Reflection> {
    Ok(HeavyLimit::new(params, lambda, theta, grid)?.sample(rng))
}
