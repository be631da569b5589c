//! Desk-scale simulator for a three-node distributed phased array.
//!
//! The crate models the full chain a cable-free array has to get right
//! before it can beamform: wireless two-way time transfer between node
//! clocks, pairwise ranging from the same exchanges, planar localization
//! of the array from the measured ranges, and finally near-field
//! multi-constraint beamforming (a focus at one receiver, a null at
//! another) driven by the estimated — not true — geometry.
//!
//! Two fidelity levels are supported everywhere:
//!
//! * **Waveform level** — timestamp exchanges are carried by sampled
//!   complex-baseband pulses through a delay/multipath/AWGN channel and
//!   recovered by matched filtering, so estimator artifacts (peak
//!   interpolation bias, ambiguous correlation peaks) show up naturally.
//! * **Abstract error** — timestamps are formed directly from geometry
//!   plus a Gaussian measurement error, for fast Monte-Carlo sweeps.
//!
//! Modules mirror the processing chain: [`scenario`] (geometry and
//! configuration), [`waveform`] (pulse synthesis), [`estimation`]
//! (matched filter and arrival-time estimation), [`sync`] (two-way
//! exchanges and clock algebra), [`localization`] (range-based plane
//! geometry), [`beamformer`] (constrained weights and field prediction),
//! and [`pipeline`] (seeded end-to-end runs, Monte-Carlo batches, and
//! file outputs).

pub mod beamformer;
pub mod error;
pub mod estimation;
pub mod localization;
pub mod pipeline;
pub mod scenario;
pub mod sync;
pub mod waveform;

pub use error::{Error, Result};

/// Propagation speed used for every time-of-flight/range conversion (m/s).
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
