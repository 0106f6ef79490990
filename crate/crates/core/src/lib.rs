//! Simulation lab for queues fed by superposed ON/OFF sources with possibly
//! heavy-tailed periods, and for their reflected Gaussian and reflected
//! fractional Brownian heavy-traffic limits.
//!
//! Modules, bottom-up:
//!
//! - [`distributions`]: period and service laws.
//! - [`sources`]: stationary ON/OFF paths, superposition, packet arrivals.
//! - [`queue`]: FIFO single-server event engine and service-rate rules.
//! - [`limits`]: limit constants, normalizers, scalings.
//! - [`gaussian`]: limit drivers (BM, FBM, `T̃`) and the reflection map.
//! - [`stats`]: KS tests, Hurst and variance estimation, collapse gap.
//! - [`harness`]: configs, seeded replication, canned experiments.

pub mod distributions;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod limits;
pub mod path;
pub mod queue;
pub mod rng;
pub mod sources;
pub mod stats;

pub use error::{Error, Result};
