//! Predictive state representations and system-dynamics matrices for
//! discrete-time, finite action/observation stochastic systems.
//!
//! The crate models systems as n-th order Markov models, POMDPs or linear
//! PSRs, builds truncated system-dynamics matrices from any of them,
//! measures their linear dimension, and derives linear PSRs either from a
//! POMDP's outcome vectors or from a matrix directly.

pub mod derive;
pub mod error;
pub mod examples;
pub mod linalg;
pub mod models;
pub mod sequence;
pub mod sysdyn;

pub use error::{Error, Result};
pub use models::{
    ActionSource, DynamicalModel, LinearPsrModel, MarkovModel, Model, PomdpModel, TAU_ZERO,
};
pub use sequence::{Alphabet, History, Sequence, Step, Test};
pub use linalg::RANK_TOL;
pub use sysdyn::SysDynMatrix;
