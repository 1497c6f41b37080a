//! Pseudo numerical methods for the deterministic sampling ODE of diffusion models.
//!
//! The crate pairs the nonlinear transfer part [`transfer::phi`] with gradient
//! parts borrowed from classical solvers (Euler, Runge–Kutta, linear multistep)
//! and compares the resulting samplers with classical integrators applied
//! directly to the probability-flow ODE. Analytic noise predictors make every
//! run reproducible without a trained network.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod predictor;
pub mod schedule;
pub mod solvers;
pub mod state;
pub mod transfer;

pub use error::{Error, Result};
pub use predictor::{AnalyticToy, ConstantNoise, ExactOracle, NoisePredictor, PredictorSpec};
pub use schedule::{Schedule, ScheduleKind, TimeGrid};
pub use solvers::{sample, Method, SamplerSpec, Trajectory};
pub use state::StateVec;
