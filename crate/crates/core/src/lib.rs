//! Simulation of continuous quantum measurement with real-time state estimation.
//!
//! A true state `ρ` is measured continuously; the observer integrates an
//! estimate `ρᵉ` driven only by the measured signal. The crate integrates the
//! coupled Ito equations, the discrete unsharp-measurement cycle they arise
//! from, and the collective equations for `N` copies, and ships the analysis
//! needed to check the convergence of `ρᵉ` to `ρ` on simulated ensembles.

pub mod analysis;
pub mod campaign;
pub mod cycle;
pub mod ensemble;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod output;
pub mod scenario;
pub mod sde;
pub mod verify;

pub use analysis::{EnsembleStats, Metric, TrajectoryRecord};
pub use error::{QestError, Result};
pub use linalg::{C64, ComplexMatrix, ComplexVector, DensityMatrix, Observable, PureState, StateMetrics, Tolerances};
pub use noise::NoiseStream;
pub use scenario::{ScenarioSpec, StateInit};
pub use sde::{Dynamics, IntegratorConfig, MeasurementChannel, StepState};
