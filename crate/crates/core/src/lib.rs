//! Cost-aware Bayesian optimization of potential-based subgoal shaping for
//! distributions of sparse-reward MDPs.
//!
//! The crate is organized bottom-up:
//!
//! - [`envs`]: benchmark environment distributions and their instances.
//! - [`shaping`]: subgoal designs, potentials and the progress-augmented step.
//! - [`agent`]: tabular Q-learning, evaluation and the replicated observation.
//! - [`gp`]: the Gaussian-process surrogate over (design, training length).
//! - [`acquisition`]: the cost-normalized knowledge-gradient style decision rule.
//! - [`besd`]: the optimization loop, simulators and run logs.
//! - [`baselines`]: Q-learning, transfer, Hyperband, EI and LCB comparators.

pub mod acquisition;
pub mod agent;
pub mod baselines;
pub mod besd;

pub mod envs;
pub mod error;
pub mod gp;
pub mod sampling;
pub mod shaping;

pub use error::{Error, Result};

/// The random stream type used throughout.
pub type RandomStream = rand_chacha::ChaCha8Rng;
