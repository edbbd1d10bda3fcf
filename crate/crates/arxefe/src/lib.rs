//! Coupled autoregressive active-inference agents for adaptive control.
//!
//! Two scalar ARX agents identify a double mass-spring-damper online through
//! exact conjugate Bayesian filtering and pick controls by minimizing a
//! closed-form one-step expected free energy on a quantized control grid.
//! Coupling the agents means sharing their output buffers, so each agent's
//! predictions account for the other mass's motion.
//!
//! Layers, bottom up:
//!
//! - [`belief`]: Normal-Gamma filtering and the Student-t posterior predictive
//! - [`agent`]: memories, the EFE objective and grid-based control selection
//! - [`ensemble`]: coupled/uncoupled agent sets and the per-step protocol
//! - [`plant`]: the simulated double mass-spring-damper and its sensor
//! - [`experiment`]: trials, Monte Carlo repetition, comparison
//! - [`cli`]: argument parsing, config files and CSV/JSON emission

pub mod agent;
pub mod belief;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod plant;

pub use error::{Error, Result};
