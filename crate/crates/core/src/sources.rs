//! Stationary ON/OFF sources, their superposition, and Poisson packet arrivals.
//!
//! Two arrival constructions are provided. The direct one runs a rate-λ
//! Poisson clock on each source's own ON-time axis and merges the results.
//! The modulated one runs a single rate-λ clock on the aggregate ON-time axis
//! `T^N` and maps its points back through the inverse of `T^N`. Both give the
//! same law for the aggregate count process.

use std::io::Write;

use rand::Rng;

use crate::distributions::PeriodDistribution;
use crate::error::{Error, Result};
use crate::rng::open_unit;

/// Piecewise-linear non-decreasing clock `t -> ∫_0^t level(s) ds` with integer
/// slopes, stored as breakpoints.
#[derive(Debug, Clone, PartialEq)]
struct Clock {
    /// Segment start times; `starts[0] == 0`.
    starts: Vec<f64>,
    /// Slope on `[starts[k], starts[k+1])`.
    levels: Vec<u32>,
    /// Clock value at `starts[k]`.
    cum: Vec<f64>,
    horizon: f64,
}

impl Clock {
    fn build(initial: u32, switches: impl Iterator<Item = (f64, i64)>, horizon: f64) -> Self {
        let mut starts = vec![0.0];
        let mut levels = vec![initial];
        let mut cum = vec![0.0];
        let mut level = i64::from(initial);
        for (t, delta) in switches {
            level += delta;
            debug_assert!(level >= 0);
            let last = starts.len() - 1;
            if t == starts[last] {
                levels[last] = level as u32;
                continue;
            }
            let c = cum[last] + f64::from(levels[last]) * (t - starts[last]);
            starts.push(t);
            levels.push(level as u32);
            cum.push(c);
        }
        Self { starts, levels, cum, horizon }
    }

    fn segment(&self, t: f64) -> usize {
        self.starts.partition_point(|&s| s <= t) - 1
    }

    fn level(&self, t: f64) -> u32 {
        self.levels[self.segment(t)]
    }

    fn value(&self, t: f64) -> f64 {
        let k = self.segment(t);
        self.cum[k] + f64::from(self.levels[k]) * (t - self.starts[k])
    }

    fn total(&self) -> f64 {
        self.value(self.horizon)
    }

    /// Poisson points of rate `lambda` on the clock axis, mapped back to real
    /// time through the right-continuous inverse `inf{t : clock(t) > s}`.
    fn poisson_epochs<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> Vec<f64> {
        let total = self.total();
        let mut out = Vec::new();
        let mut s = 0.0;
        let mut k = 0;
        loop {
            s += -open_unit(rng).ln() / lambda;
            if s >= total {
                break;
            }
            while k + 1 < self.starts.len() && self.cum[k + 1] <= s {
                k += 1;
            }
            let t = self.starts[k] + (s - self.cum[k]) / f64::from(self.levels[k]);
            out.push(t.min(self.horizon));
        }
        out
    }
}

/// One source's ON/OFF trajectory over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySourcePath {
    initial_on: bool,
    epochs: Vec<f64>,
    horizon: f64,
    clock: Clock,
}

impl BinarySourcePath {
    /// Builds a path from its initial phase and switch epochs.
    pub fn new(initial_on: bool, epochs: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad horizon {horizon}")));
        }
        let ordered = epochs.windows(2).all(|w| w[0] < w[1]);
        let inside = epochs.iter().all(|&e| e > 0.0 && e <= horizon);
        if !ordered || !inside {
            return Err(Error::InvalidArgument(
                "switch epochs must be strictly increasing within (0, horizon]".into(),
            ));
        }
        let switches = epochs.iter().enumerate().map(|(i, &e)| {
            let now_on = initial_on ^ (i % 2 == 0);
            (e, if now_on { 1 } else { -1 })
        });
        let clock = Clock::build(u32::from(initial_on), switches, horizon);
        Ok(Self { initial_on, epochs, horizon, clock })
    }

    pub fn initial_on(&self) -> bool {
        self.initial_on
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `W(t)`: 1 when ON at `t`, right-continuous at switches.
    pub fn state(&self, t: f64) -> u8 {
        let k = self.epochs.partition_point(|&e| e <= t);
        u8::from(self.initial_on ^ (k % 2 == 1))
    }

    /// `T(t) = ∫_0^t W(s) ds`.
    pub fn cumulative_on_time(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutsideHorizon { t, horizon: self.horizon });
        }
        Ok(self.clock.value(t))
    }
}

/// Simulates one source started in its stationary regime.
///
/// The initial phase is ON with probability `mu_on / (mu_on + mu_off)` and the
/// first period is a residual drawn from the equilibrium law of that phase;
/// later periods are full draws.
pub fn simulate_source<R: Rng + ?Sized>(
    on: &PeriodDistribution,
    off: &PeriodDistribution,
    horizon: f64,
    rng: &mut R,
) -> BinarySourcePath {
    let gamma = on.mean() / (on.mean() + off.mean());
    let mut initial_on = open_unit(rng) < gamma;
    let mut epochs: Vec<f64> = Vec::new();
    let mut phase_on = initial_on;
    let mut t = if phase_on {
        on.sample_equilibrium_residual(rng)
    } else {
        off.sample_equilibrium_residual(rng)
    };
    while t < horizon {
        // A period shorter than one ulp of t lands on the previous epoch; the
        // two switches then cancel.
        if t <= 0.0 {
            initial_on = !initial_on;
        } else if epochs.last() == Some(&t) {
            epochs.pop();
        } else {
            epochs.push(t);
        }
        phase_on = !phase_on;
        t += if phase_on { on.sample(rng) } else { off.sample(rng) };
    }
    BinarySourcePath::new(initial_on, epochs, horizon.max(0.0))
        .expect("simulated epochs are ordered and inside the horizon")
}

pub fn cumulative_on_time(path: &BinarySourcePath, t: f64) -> Result<f64> {
    path.cumulative_on_time(t)
}

/// Aggregate of `N` sources: `W^N(t)` and `T^N(t) = ∫_0^t W^N(s) ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpositionPath {
    sources: usize,
    clock: Clock,
}

impl SuperpositionPath {
    pub fn source_count(&self) -> usize {
        self.sources
    }

    pub fn horizon(&self) -> f64 {
        self.clock.horizon
    }

    /// `W^N(t)`, the number of sources ON at `t`.
    pub fn active(&self, t: f64) -> u32 {
        self.clock.level(t)
    }

    pub fn cumulative_on_time(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.clock.horizon).contains(&t) {
            return Err(Error::OutsideHorizon { t, horizon: self.clock.horizon });
        }
        Ok(self.clock.value(t))
    }

    /// Times at which `W^N` changes, starting with 0.
    pub fn breakpoints(&self) -> &[f64] {
        &self.clock.starts
    }
}

/// Merges source paths sharing one horizon into their superposition.
pub fn superpose(paths: &[BinarySourcePath]) -> Result<SuperpositionPath> {
    let Some(first) = paths.first() else {
        return Err(Error::InvalidArgument("superposition of zero sources".into()));
    };
    let horizon = first.horizon;
    if let Some(p) = paths.iter().find(|p| p.horizon != horizon) {
        return Err(Error::HorizonMismatch(horizon, p.horizon));
    }
    let initial = paths.iter().filter(|p| p.initial_on).count() as u32;
    let mut switches: Vec<(f64, i64)> = paths
        .iter()
        .flat_map(|p| {
            p.epochs.iter().enumerate().map(move |(i, &e)| {
                let now_on = p.initial_on ^ (i % 2 == 0);
                (e, if now_on { 1 } else { -1 })
            })
        })
        .collect();
    // Upward switches first at ties keep the running level non-negative.
    switches.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    Ok(SuperpositionPath { sources: paths.len(), clock: Clock::build(initial, switches.into_iter(), horizon) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationMode {
    Direct,
    Modulated,
}

/// Sorted packet arrival epochs over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStream {
    epochs: Vec<f64>,
    /// Originating source per epoch, known for direct generation only.
    sources: Option<Vec<u32>>,
    horizon: f64,
    mode: GenerationMode,
}

impl ArrivalStream {
    pub fn new(epochs: Vec<f64>, horizon: f64, mode: GenerationMode) -> Result<Self> {
        if !epochs.windows(2).all(|w| w[0] <= w[1]) || epochs.iter().any(|&e| !(0.0..=horizon).contains(&e)) {
            return Err(Error::InvalidArgument("arrival epochs must be sorted within [0, horizon]".into()));
        }
        Ok(Self { epochs, sources: None, horizon, mode })
    }

    pub fn empty(horizon: f64) -> Self {
        Self { epochs: Vec::new(), sources: None, horizon, mode: GenerationMode::Direct }
    }

    pub fn epochs(&self) -> &[f64] {
        &self.epochs
    }

    pub fn sources(&self) -> Option<&[u32]> {
        self.sources.as_deref()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn mode(&self) -> GenerationMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `A(t)`, the number of arrivals in `[0, t]`.
    pub fn count(&self, t: f64) -> usize {
        self.epochs.partition_point(|&e| e <= t)
    }

    /// Merges per-source direct streams into the aggregate stream `A^N`,
    /// remembering which source produced each arrival.
    pub fn merge(streams: &[ArrivalStream]) -> Result<Self> {
        let horizon = streams.first().map_or(0.0, |s| s.horizon);
        if let Some(s) = streams.iter().find(|s| s.horizon != horizon) {
            return Err(Error::HorizonMismatch(horizon, s.horizon));
        }
        let mut tagged: Vec<(f64, u32)> = streams
            .iter()
            .enumerate()
            .flat_map(|(id, s)| s.epochs.iter().map(move |&e| (e, id as u32)))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (epochs, sources) = tagged.into_iter().unzip();
        Ok(Self { epochs, sources: Some(sources), horizon, mode: GenerationMode::Direct })
    }

    /// Writes `source_id,epoch` rows; the id is empty when unknown.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source_id", "epoch"])?;
        for (i, e) in self.epochs.iter().enumerate() {
            let id = self.sources.as_ref().map(|s| s[i].to_string()).unwrap_or_default();
            w.write_record([id, e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("arrival rate must be > 0, got {lambda}")))
    }
}

/// Arrivals of one source: a rate-λ Poisson clock that runs only while ON.
pub fn arrivals_direct<R: Rng + ?Sized>(path: &BinarySourcePath, lambda: f64, rng: &mut R) -> Result<ArrivalStream> {
    check_rate(lambda)?;
    let epochs = path.clock.poisson_epochs(lambda, rng);
    Ok(ArrivalStream { epochs, sources: None, horizon: path.horizon, mode: GenerationMode::Direct })
}

/// Aggregate arrivals as one rate-λ Poisson process run on the `T^N` axis.
pub fn arrivals_modulated<R: Rng + ?Sized>(
    sup: &SuperpositionPath,
    lambda: f64,
    rng: &mut R,
) -> Result<ArrivalStream> {
    check_rate(lambda)?;
    let epochs = sup.clock.poisson_epochs(lambda, rng);
    Ok(ArrivalStream { epochs, sources: None, horizon: sup.clock.horizon, mode: GenerationMode::Modulated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn on_off_on() -> BinarySourcePath {
        BinarySourcePath::new(true, vec![1.0, 2.0], 3.0).unwrap()
    }

    #[test]
    fn always_on_cumulative() {
        let p = BinarySourcePath::new(true, vec![], 5.0).unwrap();
        assert_eq!(p.cumulative_on_time(3.0).unwrap(), 3.0);
    }

    #[test]
    fn piecewise_cumulative() {
        let p = on_off_on();
        assert_eq!(p.cumulative_on_time(2.5).unwrap(), 1.5);
        assert_eq!(p.state(0.5), 1);
        assert_eq!(p.state(1.0), 0);
        assert_eq!(p.state(2.0), 1);
        assert!(p.cumulative_on_time(3.5).is_err());
        assert!(p.cumulative_on_time(-0.1).is_err());
    }

    #[test]
    fn rejects_unordered_epochs() {
        assert!(BinarySourcePath::new(true, vec![2.0, 1.0], 3.0).is_err());
        assert!(BinarySourcePath::new(true, vec![1.0, 4.0], 3.0).is_err());
    }

    #[test]
    fn zero_horizon() {
        let on = PeriodDistribution::exponential(1.0).unwrap();
        let mut rng = derive_stream(1, &["zero"]);
        let p = simulate_source(&on, &on, 0.0, &mut rng);
        assert!(p.epochs().is_empty());
        assert_eq!(p.cumulative_on_time(0.0).unwrap(), 0.0);
    }

    #[test]
    fn superpose_always_on() {
        let p = BinarySourcePath::new(true, vec![], 4.0).unwrap();
        let s = superpose(&[p.clone(), p]).unwrap();
        assert_eq!(s.active(0.0), 2);
        assert_eq!(s.active(3.9), 2);
        assert_eq!(s.cumulative_on_time(4.0).unwrap(), 8.0);
    }

    #[test]
    fn superpose_mismatched_horizons() {
        let a = BinarySourcePath::new(true, vec![], 4.0).unwrap();
        let b = BinarySourcePath::new(true, vec![], 5.0).unwrap();
        assert!(matches!(superpose(&[a, b]), Err(Error::HorizonMismatch(..))));
    }

    #[test]
    fn superpose_counts_levels() {
        let a = on_off_on();
        let b = BinarySourcePath::new(false, vec![0.5, 2.0], 3.0).unwrap();
        let s = superpose(&[a, b]).unwrap();
        assert_eq!(s.active(0.25), 1);
        assert_eq!(s.active(0.75), 2);
        assert_eq!(s.active(1.5), 1);
        assert_eq!(s.active(2.5), 1);
        // a: 1 + 1 = 2, b: 1.5
        assert!((s.cumulative_on_time(3.0).unwrap() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn always_off_is_silent() {
        let p = BinarySourcePath::new(false, vec![], 100.0).unwrap();
        let mut rng = derive_stream(2, &["off"]);
        assert!(arrivals_direct(&p, 5.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn arrivals_only_while_on() {
        let p = BinarySourcePath::new(true, vec![10.0, 20.0, 30.0], 40.0).unwrap();
        let mut rng = derive_stream(3, &["on"]);
        let a = arrivals_direct(&p, 3.0, &mut rng).unwrap();
        assert!(!a.is_empty());
        assert!(a.epochs().iter().all(|&e| p.state(e) == 1 || p.epochs().contains(&e)));
        assert_eq!(a.count(0.0), 0);
    }

    #[test]
    fn bad_rate() {
        let p = on_off_on();
        let mut rng = derive_stream(4, &["rate"]);
        assert!(arrivals_direct(&p, 0.0, &mut rng).is_err());
    }

    #[test]
    fn merge_tracks_sources() {
        let a = ArrivalStream::new(vec![1.0, 3.0], 4.0, GenerationMode::Direct).unwrap();
        let b = ArrivalStream::new(vec![2.0], 4.0, GenerationMode::Direct).unwrap();
        let m = ArrivalStream::merge(&[a, b]).unwrap();
        assert_eq!(m.epochs(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.sources().unwrap(), &[0, 1, 0]);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "source_id,epoch\n0,1\n1,2\n0,3\n");
    }
}
