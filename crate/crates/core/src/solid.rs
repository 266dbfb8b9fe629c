//! The primal-dual exploration agent.
//!
//! At each step the agent runs a GLRT on its estimate. When the estimate is
//! accurate it plays greedily; otherwise it samples an arm from its
//! exploration policy `ω` and takes one optimistic primal-dual step on the
//! Lagrangian `f(ω) + λ g(ω, z_k)`. Exploration steps are grouped into
//! phases of length `p_k` with normalization factors `z_k`.

use rand::{Rng, RngCore};

use crate::agent::{Agent, Decision};
use crate::error::{invalid, Result};
use crate::estimator::{
    default_nu, practical_radius_beta, practical_radius_gamma, theoretical_radius, EstimatorState,
    RadiusMode, RadiusParams,
};
use crate::lowerbound::{exploitation_test, pure_exploration_value, LagrangianEval, OptimisticModel, Policy};
use crate::model::{BanditInstance, Cell};

/// Multiplier cap used when the true parameter is unavailable.
pub const DEFAULT_LAMBDA_MAX: f64 = 1e4;

/// Phase schedule `(z_k, p_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// `z_k = z0 e^k`, `p_k = z_k e^{2k}`.
    #[default]
    ExpExp,
    /// `z_k = z0 (1+k)`, `p_k = z_k e^k`.
    LinExp,
    /// `z_k = z0 (1+k)`, `p_k = z_k (1+k)²`.
    LinPol,
    /// `z_k = z0 (1+k)`, `p_k = z_k (1+k)`.
    LinLin,
}

impl Schedule {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exp-exp" => Some(Self::ExpExp),
            "lin-exp" => Some(Self::LinExp),
            "lin-pol" => Some(Self::LinPol),
            "lin-lin" => Some(Self::LinLin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// `1 / sqrt(p_k)` in phase `k`.
    Theory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolidConfig {
    pub lambda_init: f64,
    pub lambda_max: f64,
    pub z0: f64,
    pub schedule: Schedule,
    pub step_omega: StepSize,
    pub step_lambda: StepSize,
    pub reset_on_phase: bool,
    pub normalize_grad: bool,
    pub radius_mode: RadiusMode,
    pub glrt_restrict_last_context: bool,
    /// Replaces the exploitation threshold; `f64::INFINITY` always explores.
    pub beta_override: Option<f64>,
}

impl Default for SolidConfig {
    /// The experimental configuration: fixed steps, normalized gradients, no
    /// reset, practical radii, GLRT on the current context.
    fn default() -> Self {
        Self {
            lambda_init: 0.0,
            lambda_max: DEFAULT_LAMBDA_MAX,
            z0: 1.0,
            schedule: Schedule::ExpExp,
            step_omega: StepSize::Fixed(1.0),
            step_lambda: StepSize::Fixed(0.5),
            reset_on_phase: false,
            normalize_grad: true,
            radius_mode: RadiusMode::Practical,
            glrt_restrict_last_context: true,
            beta_override: None,
        }
    }
}

impl SolidConfig {
    /// Settings for random problems with `n_arms` arms: `z0 = |A|`,
    /// `lambda_init = 50`.
    pub fn for_random(n_arms: usize) -> Self {
        Self {
            z0: n_arms as f64,
            lambda_init: 50.0,
            ..Self::default()
        }
    }

    /// The analysed variant: `1/sqrt(p_k)` steps, resets at phase changes,
    /// raw gradients, finite-time radii, GLRT over all contexts.
    pub fn theory() -> Self {
        Self {
            step_omega: StepSize::Theory,
            step_lambda: StepSize::Theory,
            reset_on_phase: true,
            normalize_grad: false,
            radius_mode: RadiusMode::Theoretical,
            glrt_restrict_last_context: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_init >= 0.0) || !(self.lambda_max >= self.lambda_init) || !self.lambda_max.is_finite() {
            return Err(invalid(format!(
                "need 0 <= lambda_init <= lambda_max < inf, got {} and {}",
                self.lambda_init, self.lambda_max
            )));
        }
        if !(self.z0 > 0.0) || !self.z0.is_finite() {
            return Err(invalid(format!("z0 must be positive, got {}", self.z0)));
        }
        if self.schedule == Schedule::ExpExp && self.step_omega == StepSize::Theory && self.z0 < 1.0 {
            return Err(invalid("the exponential schedule with theory steps needs z0 >= 1"));
        }
        for s in [self.step_omega, self.step_lambda] {
            if let StepSize::Fixed(a) = s {
                if !(a > 0.0) || !a.is_finite() {
                    return Err(invalid(format!("step sizes must be positive, got {a}")));
                }
            }
        }
        if let Some(b) = self.beta_override {
            if !(b >= 0.0) {
                return Err(invalid(format!("beta override must be nonnegative, got {b}")));
            }
        }
        Ok(())
    }

    /// `(z_k, p_k)` with `p_k` rounded up.
    pub fn schedule_values(&self, k: usize) -> (f64, u64) {
        let kf = k as f64;
        let (z, p) = match self.schedule {
            Schedule::ExpExp => (self.z0 * kf.exp(), self.z0 * (3.0 * kf).exp()),
            Schedule::LinExp => {
                let z = self.z0 * (1.0 + kf);
                (z, z * kf.exp())
            }
            Schedule::LinPol => {
                let z = self.z0 * (1.0 + kf);
                (z, z * (1.0 + kf) * (1.0 + kf))
            }
            Schedule::LinLin => {
                let z = self.z0 * (1.0 + kf);
                (z, z * (1.0 + kf))
            }
        };
        // saturating float-to-int cast; a phase of length >= 1
        (z, (p.ceil() as u64).max(1))
    }

    fn step(&self, s: StepSize, p_k: u64) -> f64 {
        match s {
            StepSize::Fixed(a) => a,
            StepSize::Theory => 1.0 / (p_k as f64).sqrt(),
        }
    }
}

/// `2 B L z_lower(theta*)`, the smallest multiplier cap covered by the
/// analysis. Needs the true parameter, so only simulators can call it.
pub fn oracle_lambda_max(inst: &BanditInstance) -> Result<f64> {
    let pe = pure_exploration_value(inst, 20_000, 1e-3)?;
    Ok(2.0 * inst.b_bound() * inst.l_bound() * pe.z_lower)
}

#[derive(Debug, Clone)]
pub struct Solid {
    config: SolidConfig,
    omega: Policy,
    lambda: f64,
    phase: usize,
    explore_count: u64,
    explore_in_phase: u64,
    estimator: EstimatorState,
    horizon: u64,
    last_explored: bool,
    // c_{n,1/n} under theoretical radii
    beta_theory: f64,
    radius: RadiusParams,
}

impl Solid {
    pub fn new(inst: &BanditInstance, config: SolidConfig, horizon: u64) -> Result<Self> {
        config.validate()?;
        if !(inst.sigma() > 0.0) {
            return Err(invalid("the agent needs a positive noise level"));
        }
        if horizon < 3 {
            return Err(invalid(format!("horizon must be at least 3, got {horizon}")));
        }
        let nu = default_nu(inst);
        let radius = RadiusParams::for_instance(inst, nu);
        let beta_theory = match config.radius_mode {
            RadiusMode::Theoretical => theoretical_radius(horizon, 1.0 / horizon as f64, radius)?,
            RadiusMode::Practical => 0.0,
        };
        Ok(Self {
            omega: Policy::uniform(inst.n_contexts(), inst.n_arms()),
            lambda: config.lambda_init,
            phase: 0,
            explore_count: 0,
            explore_in_phase: 0,
            estimator: EstimatorState::new(inst.dim(), inst.n_contexts(), nu)?,
            horizon,
            last_explored: false,
            beta_theory,
            radius,
            config,
        })
    }

    pub fn config(&self) -> &SolidConfig {
        &self.config
    }

    pub fn omega(&self) -> &Policy {
        &self.omega
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn explore_count(&self) -> u64 {
        self.explore_count
    }

    pub fn explore_in_phase(&self) -> u64 {
        self.explore_in_phase
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    pub fn last_explored(&self) -> bool {
        self.last_explored
    }

    /// Exploitation threshold for the next step.
    pub fn beta(&self) -> Result<f64> {
        if let Some(b) = self.config.beta_override {
            return Ok(b);
        }
        match self.config.radius_mode {
            RadiusMode::Practical => {
                practical_radius_beta(self.estimator.t().max(1), self.horizon, self.radius.d, self.radius.sigma)
            }
            RadiusMode::Theoretical => Ok(self.beta_theory),
        }
    }

    /// Optimism radius given the current exploration count.
    pub fn gamma(&self) -> Result<f64> {
        let s = self.explore_count.max(1);
        match self.config.radius_mode {
            RadiusMode::Practical => practical_radius_gamma(s, self.horizon, self.radius.d, self.radius.sigma),
            RadiusMode::Theoretical => {
                let s = s.max(2) as f64;
                theoretical_radius(self.horizon, 1.0 / (s * s), self.radius)
            }
        }
    }

    /// `true` when the GLRT certifies the current estimate. The very first
    /// step always explores.
    pub fn should_exploit(&self, inst: &BanditInstance, context: usize) -> Result<bool> {
        if self.estimator.t() == 0 {
            return Ok(false);
        }
        let beta = self.beta()?;
        if beta == f64::INFINITY {
            return Ok(false);
        }
        let restrict = self.config.glrt_restrict_last_context.then_some(context);
        exploitation_test(inst, self.estimator.theta_hat(), self.estimator.design(), beta, restrict)
    }

    /// Inverse-CDF draw from `ω(context, ·)` with a single uniform `u`.
    pub fn sample_arm(&self, context: usize, u: f64) -> usize {
        let row = self.omega.row(context);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // rounding left the row sum just under u: take the last arm with mass
        row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
    }

    /// Lagrangian and subgradient at the current iterate with the current
    /// optimistic model.
    pub fn lagrangian(&self, inst: &BanditInstance) -> Result<LagrangianEval> {
        let model = OptimisticModel::new(
            inst,
            self.estimator.rho_hat(),
            self.estimator.theta_hat().to_vec(),
            self.estimator.design(),
            self.gamma()?,
        )?;
        let (z, _) = self.config.schedule_values(self.phase);
        model.lagrangian(&self.omega, self.lambda, z, self.config.normalize_grad)
    }

    /// Exponentiated-gradient step on every row of `ω` and a clipped
    /// projected step on `λ`.
    pub fn primal_dual_update(&mut self, q: &[f64], g: f64) -> Result<()> {
        if q.len() != self.omega.table().len() {
            return Err(invalid("subgradient has wrong shape"));
        }
        let (_, p_k) = self.config.schedule_values(self.phase);
        let a_omega = self.config.step(self.config.step_omega, p_k);
        let a_lambda = self.config.step(self.config.step_lambda, p_k);
        let n_arms = self.omega.n_arms();
        for (row, qrow) in self.omega.rows_mut().zip(q.chunks_exact(n_arms)) {
            exponentiated_step(row, qrow, a_omega);
        }
        let next = self.lambda - a_lambda * g;
        self.lambda = if next > 0.0 { next.min(self.config.lambda_max) } else { 0.0 };
        Ok(())
    }

    /// Advances the phase when its exploration budget is used up.
    pub fn phase_check(&mut self) {
        let (_, p_k) = self.config.schedule_values(self.phase);
        if self.explore_in_phase >= p_k {
            self.phase += 1;
            self.explore_in_phase = 0;
            if self.config.reset_on_phase {
                self.omega = Policy::uniform(self.omega.n_contexts(), self.omega.n_arms());
                self.lambda = self.config.lambda_init;
            }
        }
    }
}

/// `w ← w e^{α q} / Σ w e^{α q}`, computed in log space so entries that
/// have underflowed to zero stay zero and the row never degenerates.
pub fn exponentiated_step(row: &mut [f64], q: &[f64], alpha: f64) {
    let top = row
        .iter()
        .zip(q)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, g)| w.ln() + alpha * g)
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return;
    }
    let mut total = 0.0;
    for (w, g) in row.iter_mut().zip(q) {
        *w = if *w > 0.0 { (w.ln() + alpha * g - top).exp() } else { 0.0 };
        total += *w;
    }
    row.iter_mut().for_each(|w| *w /= total);
}

impl Agent for Solid {
    fn name(&self) -> &'static str {
        "solid"
    }

    fn act(&mut self, inst: &BanditInstance, context: usize, rng: &mut dyn RngCore) -> Result<Decision> {
        if context >= inst.n_contexts() {
            return Err(invalid(format!("context {context} out of range")));
        }
        if self.should_exploit(inst, context)? {
            self.last_explored = false;
            let arm = inst.best_arm(self.estimator.theta_hat(), context).0;
            return Ok(Decision { arm, explored: false, phase: self.phase });
        }
        let arm = self.sample_arm(context, rng.random::<f64>());
        let phase = self.phase;
        self.last_explored = true;
        self.explore_count += 1;
        self.explore_in_phase += 1;
        let eval = self.lagrangian(inst)?;
        self.primal_dual_update(&eval.subgrad_omega, eval.g_value)?;
        self.phase_check();
        Ok(Decision { arm, explored: true, phase })
    }

    fn learn(&mut self, inst: &BanditInstance, context: usize, arm: usize, reward: f64) -> Result<()> {
        if context >= inst.n_contexts() || arm >= inst.n_arms() {
            return Err(invalid(format!("cell ({context}, {arm}) out of range")));
        }
        self.estimator.observe(context, inst.feature(Cell::new(context, arm)), reward)
    }
}
