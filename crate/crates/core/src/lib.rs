//! Simulator for quantum reservoir computing on a disordered spin network.
//!
//! The library covers the full pipeline: exact multi-qubit state evolution of
//! an input-driven transverse-field Ising reservoir, weak/projective
//! measurement with explicit outcome sampling or the exact ensemble
//! back-action map, the three read-out protocols (restarting, rewinding,
//! online), linear readout training, and memory/forecasting benchmark tasks
//! with experimental resource accounting.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (`f32`/`f64`); the `*64` aliases below are the working-precision types
//! used by the command-line driver.

pub mod error;
pub mod measurement;
pub mod protocols;
pub mod quantum;
pub mod reservoir;
pub mod rng;
pub mod scalar;
pub mod tasks;
pub mod validate;

pub use error::{Error, Result};
pub use scalar::Real;

pub use measurement::{EnsembleSize, ObservableOrder};
pub use protocols::{NoiseMode, ObservableSet, OrderSelect, Protocol};
pub use quantum::Axis;
pub use tasks::TaskKind;

// Working-precision aliases.
pub type DensityMatrix64 = quantum::DensityMatrix<f64>;
pub type QubitOperator64 = quantum::QubitOperator<f64>;
pub type UnitaryMatrix64 = quantum::UnitaryMatrix<f64>;
pub type InputSample64 = reservoir::InputSample<f64>;
pub type ReservoirSpec64 = reservoir::ReservoirSpec<f64>;
pub type MeasurementSpec64 = measurement::MeasurementSpec<f64>;
pub type BackActionMatrix64 = measurement::BackActionMatrix<f64>;
pub type EstimatorReport64 = measurement::EstimatorReport<f64>;
pub type ProtocolRun64 = protocols::ProtocolRun<f64>;
pub type ObservableSeries64 = protocols::ObservableSeries<f64>;
pub type ResourceParams64 = protocols::ResourceParams<f64>;
pub type Dataset64 = tasks::Dataset<f64>;
pub type ReadoutModel64 = tasks::ReadoutModel<f64>;
pub type TaskResult64 = tasks::TaskResult<f64>;

// Single-precision aliases; invariant tolerances widen accordingly.
pub type DensityMatrix32 = quantum::DensityMatrix<f32>;
pub type QubitOperator32 = quantum::QubitOperator<f32>;
pub type UnitaryMatrix32 = quantum::UnitaryMatrix<f32>;
pub type ReservoirSpec32 = reservoir::ReservoirSpec<f32>;
