//! Fusion-center decoding for collaborative compressive spectrum sensing.
//!
//! Cognitive radios report a few random linear combinations of per-channel
//! received power. This crate simulates those reports ([`scenario`]) and
//! recovers channel occupancy from incomplete, noisy report sets either by
//! low-rank matrix completion followed by a reweighted sparse decode
//! ([`completion`]) or directly by iterative joint-sparse recovery
//! ([`jointsparse`]). [`harness`] runs Monte Carlo experiments over both.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the aliases
//! below fix the scalar to `f64`, which is what the simulation harness uses.

pub mod completion;
pub mod config;
pub mod error;
pub mod harness;
pub mod jointsparse;
pub mod linalg;
pub mod num;
pub mod scenario;

pub use error::{Error, Result};
pub use num::Real;

pub type Matrix = linalg::Mat<f64>;
pub type Matrix32 = linalg::Mat<f32>;
pub type Svd = linalg::SvdFactors<f64>;
pub type FilterBank = scenario::FilterBank<f64>;
pub type MeasurementSet = scenario::MeasurementSet<f64>;
pub type FpcaParams = completion::FpcaParams<f64>;
pub type CompletedMatrix = completion::CompletedMatrix<f64>;
pub type SolverParams = jointsparse::SolverParams<f64>;
pub type ChannelPowerMatrix = jointsparse::ChannelPowerMatrix<f64>;
pub type RecoveryOutcome = jointsparse::RecoveryOutcome<f64>;

pub use completion::{decode_occupancy, fpca_complete};
pub use harness::{compute_metrics, run_experiment, sampling_rate, DetectionOutcome};
pub use jointsparse::joint_recover;
pub use scenario::{NetworkScenario, OccupancyVector};
