//! The interface shared by every bandit algorithm.

use rand::RngCore;

use crate::error::Result;
use crate::model::BanditInstance;

/// What an agent did at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub arm: usize,
    /// The step was an exploration step (always `false` for index policies).
    pub explored: bool,
    /// Current phase index; `0` for agents without phases.
    pub phase: usize,
}

/// A sequential decision rule. The instance is passed for its features and
/// known bounds; agents never read `theta*` or `rho`.
pub trait Agent: Send {
    fn name(&self) -> &'static str;

    fn act(&mut self, inst: &BanditInstance, context: usize, rng: &mut dyn RngCore) -> Result<Decision>;

    fn learn(&mut self, inst: &BanditInstance, context: usize, arm: usize, reward: f64) -> Result<()>;
}
