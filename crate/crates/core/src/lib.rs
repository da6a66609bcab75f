//! Simulation and verification tools for switching diffusions with
//! state-dependent regime switching.
//!
//! A switching diffusion is a pair `(X, α)` where `X` solves
//! `dX = b(X, α) dt + σ(X, α) dw` and `α` jumps from `i` to `j` at rate
//! `q_ij(X)`. The crate provides path simulation (single, coupled and
//! tangent), Monte Carlo estimators of continuous dependence and smoothness in
//! the initial data, a pathwise derivative estimator for `u(x, i)`, and two
//! worked examples: a non-Lipschitz counterexample and a Lotka–Volterra
//! system with regime switching.

pub mod counterexample;
pub mod error;
pub mod functional;
pub mod lotka;
pub mod mc;
pub mod model;
pub mod models;
pub mod noise;
pub mod observable;
pub mod paths;
pub mod sensitivity;

pub use error::{Error, Result};
pub use model::{HybridState, RegimeSpace, SwitchingModel};
pub use models::{ModelParams, ModelRegistry, ParamValue};
pub use noise::NoiseStream;
pub use paths::TimeGrid;
