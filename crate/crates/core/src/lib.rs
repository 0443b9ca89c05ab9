//! Parameterized Bayesian networks written as decision-list CPD programs:
//! parsing, validation, Gibbs sampling and evidence-driven specialization.

pub mod dependency;
pub mod eval;
pub mod harness;
pub mod model;
pub mod parser;
pub mod sampler;
pub mod specialize;
pub mod state;
pub mod testing;
pub mod validate;

pub use eval::CpdProgram;
pub use model::{Model, RvId};
pub use state::{Evidence, StateKb};
