//! Reductions that turn simulated ensembles into evidence about limit laws.

use std::io::Write;

use crate::error::{Error, Result};
use crate::path::{SampledPath, TimeGrid};

/// Significance level used throughout.
pub const LEVEL: f64 = 0.01;

/// Replications of one process on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub name: String,
    grid: TimeGrid,
    rows: Vec<Vec<f64>>,
    /// Replication indices the rows were drawn under.
    pub seeds: Vec<u64>,
}

impl Ensemble {
    pub fn new(name: impl Into<String>, grid: TimeGrid, rows: Vec<Vec<f64>>, seeds: Vec<u64>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument("an ensemble needs at least two replications".into()));
        }
        if rows.iter().any(|r| r.len() != grid.len()) || seeds.len() != rows.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { name: name.into(), grid, rows, seeds })
    }

    pub fn from_paths(name: impl Into<String>, paths: Vec<SampledPath>) -> Result<Self> {
        let grid = *paths.first().ok_or(Error::EmptySample)?.grid();
        if paths.iter().any(|p| *p.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let seeds = (0..paths.len() as u64).collect();
        Self::new(name, grid, paths.into_iter().map(SampledPath::into_values).collect(), seeds)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn replications(&self) -> usize {
        self.rows.len()
    }

    /// Cross-section at grid time `t`.
    pub fn column_at(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.grid.index_of(t).ok_or_else(|| Error::InvalidArgument(format!("{t} is not a grid time")))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic critical value at [`LEVEL`].
    pub critical: f64,
}

impl KsResult {
    pub fn rejects(&self) -> bool {
        self.statistic >= self.critical
    }
}

/// `c(α) sqrt((n + m) / (n m))` with `c(α) = sqrt(-ln(α/2) / 2)`.
pub fn ks_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

/// Two-sample Kolmogorov–Smirnov distance between empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        // Step past every copy of v in both samples before comparing.
        while i < n && x[i] == v {
            i += 1;
        }
        while j < m && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(KsResult { statistic: d, critical: ks_critical(n, m, LEVEL) })
}

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("linear fit needs at least three paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("regressor is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_std_error = (sse / (n - 2.0) / sxx).sqrt();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LinearFit { slope, intercept, slope_std_error, r_squared })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HurstEstimate {
    pub hurst: f64,
    pub std_error: f64,
    /// `(block size, variance of block sums)` used in the fit.
    pub points: Vec<(usize, f64)>,
}

/// Aggregated-variance Hurst estimate over block sizes `2^0 .. n/8`.
pub fn estimate_hurst(series: &[Vec<f64>]) -> Result<HurstEstimate> {
    estimate_hurst_blocks(series, 0, None)
}

/// Aggregated-variance Hurst estimate over block sizes `2^min_exp ..= 2^max_exp`
/// (default upper end: one eighth of the series length).
///
/// Block sums are centred on the pooled mean of all replications, which are
/// independent draws of the same stationary sequence; centring each series on
/// its own mean biases long-memory estimates downwards.
pub fn estimate_hurst_blocks(series: &[Vec<f64>], min_exp: u32, max_exp: Option<u32>) -> Result<HurstEstimate> {
    if series.len() < 32 {
        return Err(Error::InvalidArgument(format!("need at least 32 series, got {}", series.len())));
    }
    let len = series[0].len();
    if len < 1024 || series.iter().any(|s| s.len() != len) {
        return Err(Error::InvalidArgument("series must share one length of at least 1024".into()));
    }
    let total = (series.len() * len) as f64;
    let mean = series.iter().flatten().sum::<f64>() / total;
    if series.iter().flatten().all(|&x| x == series[0][0]) {
        return Err(Error::Degenerate("constant series".into()));
    }
    let top = max_exp.unwrap_or_else(|| (len / 8).ilog2());
    if min_exp + 2 > top {
        return Err(Error::InvalidArgument(format!("block range 2^{min_exp}..2^{top} is too narrow")));
    }
    let mut points = Vec::new();
    for e in min_exp..=top {
        let m = 1usize << e;
        let blocks = len / m;
        let mut acc = 0.0;
        let mut count = 0usize;
        for s in series {
            for b in 0..blocks {
                let sum: f64 = s[b * m..(b + 1) * m].iter().sum();
                acc += (sum - m as f64 * mean).powi(2);
                count += 1;
            }
        }
        points.push((m, acc / count as f64));
    }
    let x: Vec<f64> = points.iter().map(|&(m, _)| (m as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|&(_, v)| v.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(HurstEstimate { hurst: fit.slope / 2.0, std_error: fit.slope_std_error / 2.0, points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub t: f64,
    pub variance: f64,
    pub std_error: f64,
}

/// Unbiased sample variance and its standard error from the fourth central moment.
pub fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - var * var * (n - 3.0) / (n - 1.0)).max(0.0) / n).sqrt();
    (var, se)
}

/// Cross-replication variance at each requested time. Standard errors are
/// only trustworthy from about a thousand replications.
pub fn empirical_variance_curve(ensemble: &Ensemble, times: &[f64]) -> Result<Vec<VarianceEstimate>> {
    times
        .iter()
        .map(|&t| {
            let col = ensemble.column_at(t)?;
            let (variance, std_error) = sample_variance(&col);
            Ok(VarianceEstimate { t, variance, std_error })
        })
        .collect()
}

/// `max_t |Q̃(t) − L̃(t)|`.
pub fn collapse_gap(q: &SampledPath, l: &SampledPath) -> Result<f64> {
    if q.grid() != l.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(q.values().iter().zip(l.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One line of a report: `experiment,N,t,statistic,critical,pass`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: String,
    /// Ladder label (source count or time scale).
    pub size: String,
    pub t: f64,
    pub statistic: f64,
    pub critical: Option<f64>,
    pub pass: bool,
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["experiment", "N", "t", "statistic", "critical", "pass"])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.size.clone(),
            r.t.to_string(),
            r.statistic.to_string(),
            r.critical.map(|c| c.to_string()).unwrap_or_default(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// KS statistic of one ladder rung against the limit at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCell {
    pub size: f64,
    pub t: f64,
    pub ks: KsResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub cells: Vec<ConvergenceCell>,
    pub times: Vec<f64>,
}

impl ConvergenceReport {
    fn at(&self, t: f64) -> Vec<&ConvergenceCell> {
        self.cells.iter().filter(|c| c.t == t).collect()
    }

    /// Statistic at the largest rung is below that at the smallest rung.
    pub fn decreases(&self, t: f64) -> bool {
        let cells = self.at(t);
        match (cells.first(), cells.last()) {
            (Some(a), Some(b)) if cells.len() >= 2 => b.ks.statistic < a.ks.statistic,
            _ => false,
        }
    }

    /// Statistic strictly decreases between every pair of consecutive rungs.
    pub fn decreases_monotonically(&self, t: f64) -> bool {
        self.at(t).windows(2).all(|w| w[1].ks.statistic < w[0].ks.statistic)
    }

    /// Statistic at the largest rung is below `factor` times its critical value.
    pub fn largest_within(&self, t: f64, factor: f64) -> bool {
        self.at(t).last().is_some_and(|c| c.ks.statistic < factor * c.ks.critical)
    }

    /// `decreases` and `largest_within(2)` at every time.
    pub fn passes(&self) -> bool {
        self.times.iter().all(|&t| self.decreases(t) && self.largest_within(t, 2.0))
    }
}

/// KS distances between each ladder ensemble and the limit ensemble at each
/// time. Ladder entries are `(size, ensemble)` in increasing size order.
pub fn marginal_convergence_report(
    ladder: &[(f64, &Ensemble)],
    limit: &Ensemble,
    times: &[f64],
) -> Result<ConvergenceReport> {
    let mut cells = Vec::new();
    for &t in times {
        let reference = limit.column_at(t)?;
        for &(size, ens) in ladder {
            let ks = ks_two_sample(&ens.column_at(t)?, &reference)?;
            cells.push(ConvergenceCell { size, t, ks });
        }
    }
    Ok(ConvergenceReport { cells, times: times.to_vec() })
}
