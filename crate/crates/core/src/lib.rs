//! Simulation and optimization library for nonlinear Tomlinson-Harashima-precoded
//! hybrid analog/digital transceivers in multiuser mmWave MIMO downlinks.
//!
//! The library covers the full design-and-evaluate loop:
//!
//! * [`linalg`]: complex-matrix primitives shared by every algorithm
//!   (strictly-lower extraction, unit-modulus phase projection, permutations).
//! * [`channel`]: clustered mmWave channel generation with ULA steering,
//!   statistical CSI errors and Doppler evolution for delay studies.
//! * [`thp`]: QAM alphabets, the modulo operator, THP successive
//!   encoding/decoding and the norm-based cancellation-ordering heuristic.
//! * [`objective`]: robust sum-MSE objectives, the scaling between the
//!   power-constrained and transformed problems, and KKT residual checks.
//! * [`bcd`]: the five-block coordinate-descent solver with closed-form
//!   block updates and element-wise unit-modulus sweeps.
//! * [`tosca`]: the two-timescale design: per-slot digital solves on
//!   effective CSI plus stochastic surrogate updates of the analog phases.
//! * [`baselines`]: fully-digital, linear, separate and zero-forcing
//!   reference designs.
//! * [`harness`]: Monte-Carlo SER/MSE engine, delay and feedback-overhead
//!   models, experiment presets and CSV/JSON reporting.

pub mod baselines;
pub mod bcd;
pub mod channel;
pub mod checks;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod objective;
pub mod oracle;
pub mod thp;
pub mod tosca;

pub use channel::{ChannelSet, RayParameters};
pub use config::{ChannelModel, SystemConfig};
pub use error::{Error, Result};
pub use linalg::{CMat, CVec, Permutation, RMat};
pub use objective::TransceiverState;
