//! Uniform time grids and processes sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points `0, step, 2*step, ..., (len-1)*step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs step > 0 and at least one point (step {step}, len {len})"
            )));
        }
        Ok(Self { step, len })
    }

    /// Grid covering `[0, horizon]`; `horizon` must be a whole number of steps
    /// up to a relative slack of 1e-9.
    pub fn covering(step: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::InvalidArgument(format!("bad horizon {horizon}")));
        }
        let k = (horizon / step).round();
        if (k * step - horizon).abs() > 1e-9 * horizon.max(step) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is not a multiple of grid step {step}"
            )));
        }
        Self::new(step, k as usize + 1)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |k| self.time(k))
    }

    /// Index of the grid point equal to `t`, if `t` is on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.step).round();
        if k < 0.0 || k as usize >= self.len {
            return None;
        }
        ((k * self.step - t).abs() <= 1e-9 * t.abs().max(self.step)).then_some(k as usize)
    }
}

/// Values of one process realization on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at grid time `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.grid.index_of(t).map(|k| self.values[k])
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self.grid.times().zip(&self.values).map(|(t, &v)| f(t, v)).collect();
        Self { grid: self.grid, values }
    }
}
