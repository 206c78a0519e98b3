//! Optimal PoV execution scheduling under spread, instantaneous, transient
//! and permanent impact costs with mean-variance risk.
//!
//! The pipeline is: volume and spread profiles ([`profiles`]), a price-risk
//! kernel ([`dynamics`]), the impact operator and QP assembly ([`impact`]),
//! the box-and-equality QP solver ([`qpsolve`]) and coefficient calibration
//! from executed trades ([`calibrate`]). [`scenario`] ties them together for
//! the command-line front end.

pub mod calibrate;
pub mod dynamics;
pub mod error;
pub mod impact;
pub mod profiles;
pub mod qpsolve;
pub mod scenario;

pub use error::{PovError, Result};
pub use profiles::{SpreadProfile, TimeGrid, VolumeProfile};
pub use dynamics::{KernelKind, KernelMatrix, SdeModel, SdeSpec};
pub use impact::{CostCoefficients, ExecutionModel, ExecutionOrder, Schedule, Side};
pub use qpsolve::{QpProblem, QpSolution, SolveStatus, SolverSettings};
pub use calibrate::{CalibrationResult, Features, TradeRecord};
