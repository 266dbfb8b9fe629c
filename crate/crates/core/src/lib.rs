//! Contextual linear bandits with asymptotically optimal primal-dual exploration.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: small dense SPD systems with a maintained inverse.
//! - [`model`]: bandit instances, mean rewards, gaps and Gaussian KL terms.
//! - [`estimator`]: regularized least squares and confidence radii.
//! - [`lowerbound`]: closed-form GLRT, optimistic Lagrangian pieces and offline
//!   solvers for the asymptotic lower-bound programs.
//! - [`solid`]: the primal-dual agent (explore/exploit gating, exponentiated
//!   gradient on the exploration policy, projected multiplier updates).
//! - [`baselines`]: LinUCB, LinTS, greedy and uniform controls.
//! - [`envs`]: the two-context toy problem, random structured problems,
//!   context and reward sampling.
//! - [`harness`]: seeded replications, pseudo-regret traces, Student-t
//!   aggregation, config files and CSV output.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod lowerbound;
pub mod model;
pub mod solid;

pub use agent::{Agent, Decision};
pub use error::{Error, Result};
pub use estimator::EstimatorState;
pub use linalg::PdMatrix;
pub use lowerbound::Policy;
pub use model::{BanditInstance, Cell};
