//! FIFO, non-idling single-server queue fed by an arrival stream.
//!
//! The event engine tracks every job individually and samples queue length,
//! unfinished work and cumulative busy time on a grid. [`lindley_oracle`]
//! recomputes unfinished work from the scalar workload recursion and exists
//! only to cross-check the engine.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{PeriodDistribution, ServiceDistribution};
use crate::error::{Error, Result};
use crate::limits::{self, LimitParams};
use crate::path::TimeGrid;
use crate::sources::ArrivalStream;

/// Heavy-traffic scaling regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Regime {
    /// Service rate `N λ γ + θ √N`.
    NScaling,
    /// Service rate `N λ γ + θ (N R^{1-α_min} c)^{1/2}` with time scale `r`.
    RScaling { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueConfig {
    pub sources: usize,
    pub lambda: f64,
    pub theta: f64,
    pub on: PeriodDistribution,
    pub off: PeriodDistribution,
    pub service: ServiceDistribution,
    pub regime: Regime,
    pub horizon: f64,
}

impl QueueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sources == 0 {
            return Err(Error::InvalidArgument("need at least one source".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::InvalidArgument(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if let Regime::RScaling { r } = self.regime {
            if !(r.is_finite() && r >= 1.0) {
                return Err(Error::InvalidArgument(format!("time scale R must be >= 1, got {r}")));
            }
        }
        self.service.validate()
    }

    pub fn gamma(&self) -> f64 {
        self.on.mean() / (self.on.mean() + self.off.mean())
    }
}

/// `μ^N = N λ γ + θ √N`.
pub fn service_rate_n(cfg: &QueueConfig) -> Result<f64> {
    if cfg.regime != Regime::NScaling {
        return Err(Error::Regime("N-scaling service rate requested for an R-scaling config".into()));
    }
    let n = cfg.sources as f64;
    Ok(n * cfg.lambda * cfg.gamma() + cfg.theta * n.sqrt())
}

/// `μ^R = N λ γ + θ (N R^{1-α_min} c)^{1/2}`.
pub fn service_rate_r(cfg: &QueueConfig, params: &LimitParams) -> Result<f64> {
    let Regime::RScaling { r } = cfg.regime else {
        return Err(Error::Regime("R-scaling service rate requested for an N-scaling config".into()));
    };
    limits::require_heavy(params)?;
    let n = cfg.sources as f64;
    let drift = (n * r.powf(1.0 - params.alpha_min) * params.slowly_varying).sqrt();
    Ok(n * cfg.lambda * params.gamma + cfg.theta * drift)
}

/// Grid samples of one queue run.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    pub grid: TimeGrid,
    /// Packets in system, including the one in service.
    pub queue_length: Vec<u64>,
    /// Unfinished work `V^N(A^N(t)) - B^N(t)` in time units.
    pub workload: Vec<f64>,
    /// Cumulative busy time.
    pub busy_time: Vec<f64>,
    /// Arrivals in `[0, horizon]`.
    pub arrivals: u64,
    /// Departures in `[0, horizon]`.
    pub departures: u64,
    pub service_rate: f64,
}

impl QueueTrace {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Writes `t,Q,L,B` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "Q", "L", "B"])?;
        for k in 0..self.grid.len() {
            w.write_record([
                self.grid.time(k).to_string(),
                self.queue_length[k].to_string(),
                self.workload[k].to_string(),
                self.busy_time[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One completed job, in departure order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Departure {
    /// Position of the job in the arrival sequence.
    pub arrival_index: usize,
    pub time: f64,
    /// Service duration `v(i) / μ`.
    pub service: f64,
}

/// Job-level record accompanying a trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub departures: Vec<Departure>,
    /// Start time and duration of the job in service at the horizon, if any.
    pub in_service: Option<(f64, f64)>,
}

/// Runs the queue with service requirements drawn from `svc`, one per
/// arrival, in arrival order.
pub fn simulate_queue<R: Rng + ?Sized>(
    arrivals: &ArrivalStream,
    svc: &ServiceDistribution,
    mu: f64,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<QueueTrace> {
    let work: Vec<f64> = (0..arrivals.len()).map(|_| svc.sample(rng)).collect();
    simulate_queue_with_work(arrivals.epochs(), &work, mu, grid).map(|(trace, _)| trace)
}

/// Event engine on explicit arrival epochs and unit-mean work requirements.
pub fn simulate_queue_with_work(
    epochs: &[f64],
    work: &[f64],
    mu: f64,
    grid: TimeGrid,
) -> Result<(QueueTrace, EventLog)> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidArgument(format!("service rate must be > 0, got {mu}")));
    }
    if work.len() < epochs.len() {
        return Err(Error::InvalidArgument("fewer work samples than arrivals".into()));
    }
    let horizon = grid.horizon();
    let n = grid.len();
    let mut trace = QueueTrace {
        grid,
        queue_length: Vec::with_capacity(n),
        workload: Vec::with_capacity(n),
        busy_time: Vec::with_capacity(n),
        arrivals: 0,
        departures: 0,
        service_rate: mu,
    };
    let mut log = EventLog::default();

    let mut now = 0.0;
    let mut busy = 0.0;
    // (arrival index, start, duration) of the job in service.
    let mut head: Option<(usize, f64, f64)> = None;
    let mut waiting: VecDeque<(usize, f64)> = VecDeque::new();
    let mut waiting_work = 0.0;
    let mut next_arrival = 0;

    let sample = |trace: &mut QueueTrace, g: f64, now: f64, busy: f64, head: Option<(usize, f64, f64)>, waiting: usize, waiting_work: f64| {
        match head {
            Some((_, start, dur)) => {
                trace.queue_length.push(1 + waiting as u64);
                trace.busy_time.push(busy + (g - now));
                trace.workload.push(start + dur - g + waiting_work);
            }
            None => {
                trace.queue_length.push(0);
                trace.busy_time.push(busy);
                trace.workload.push(0.0);
            }
        }
    };

    loop {
        let t_arr = epochs.get(next_arrival).copied().unwrap_or(f64::INFINITY);
        let t_dep = head.map_or(f64::INFINITY, |(_, s, d)| s + d);
        let t_event = t_arr.min(t_dep);
        if t_event > horizon {
            break;
        }
        while trace.queue_length.len() < n && grid.time(trace.queue_length.len()) < t_event {
            let g = grid.time(trace.queue_length.len());
            sample(&mut trace, g, now, busy, head, waiting.len(), waiting_work);
        }
        if head.is_some() {
            busy += t_event - now;
        }
        now = t_event;
        if t_dep <= t_arr {
            let (idx, start, dur) = head.take().expect("departure without a job in service");
            log.departures.push(Departure { arrival_index: idx, time: start + dur, service: dur });
            trace.departures += 1;
            if let Some((next, w)) = waiting.pop_front() {
                waiting_work = if waiting.is_empty() { 0.0 } else { waiting_work - w };
                head = Some((next, now, w));
            }
        } else {
            let w = work[next_arrival] / mu;
            trace.arrivals += 1;
            if head.is_none() {
                head = Some((next_arrival, now, w));
            } else {
                waiting.push_back((next_arrival, w));
                waiting_work += w;
            }
            next_arrival += 1;
        }
    }
    while trace.queue_length.len() < n {
        let g = grid.time(trace.queue_length.len());
        sample(&mut trace, g, now, busy, head, waiting.len(), waiting_work);
    }
    log.in_service = head.map(|(_, s, d)| (s, d));
    Ok((trace, log))
}

/// Unfinished work on the grid from the workload recursion
/// `W_k = max(W_{k-1} - (a_k - a_{k-1}), 0) + v_k / μ`, drained linearly between arrivals.
pub fn lindley_oracle(epochs: &[f64], work: &[f64], mu: f64, grid: &TimeGrid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    let mut w = 0.0;
    let mut last = 0.0;
    for g in grid.times() {
        while k < epochs.len() && epochs[k] <= g {
            w = (w - (epochs[k] - last)).max(0.0) + work[k] / mu;
            last = epochs[k];
            k += 1;
        }
        out.push((w - (g - last)).max(0.0));
    }
    out
}
