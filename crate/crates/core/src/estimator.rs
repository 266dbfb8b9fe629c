//! Regularized least-squares estimation and confidence radii.

use rand::Rng;

use crate::envs;
use crate::error::{ensure_finite, invalid, Result};
use crate::linalg::PdMatrix;
use crate::model::{BanditInstance, Cell};

/// Which family of confidence radii an agent uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RadiusMode {
    /// `sigma² (log t + d log log n)` with all numerical constants dropped.
    #[default]
    Practical,
    /// The full finite-time radius `c_{n, delta}`.
    Theoretical,
}

/// Running regularized least-squares estimate of the reward parameter plus
/// the empirical context distribution.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    design: PdMatrix,
    u_vec: Vec<f64>,
    theta_hat: Vec<f64>,
    context_counts: Vec<u64>,
    t: u64,
    nu: f64,
}

impl EstimatorState {
    pub fn new(dim: usize, n_contexts: usize, nu: f64) -> Result<Self> {
        if n_contexts == 0 {
            return Err(invalid("need at least one context"));
        }
        Ok(Self {
            design: PdMatrix::scaled_identity(dim, nu)?,
            u_vec: vec![0.0; dim],
            theta_hat: vec![0.0; dim],
            context_counts: vec![0; n_contexts],
            t: 0,
            nu,
        })
    }

    /// Estimator for `inst` with the smallest admissible regularizer
    /// `nu = max(L², 1)`.
    pub fn for_instance(inst: &BanditInstance) -> Result<Self> {
        Self::new(inst.dim(), inst.n_contexts(), default_nu(inst))
    }

    pub fn design(&self) -> &PdMatrix {
        &self.design
    }

    pub fn u_vec(&self) -> &[f64] {
        &self.u_vec
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    /// Number of observations so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn context_counts(&self) -> &[u64] {
        &self.context_counts
    }

    /// Empirical context distribution; uniform before the first observation.
    pub fn rho_hat(&self) -> Vec<f64> {
        let k = self.context_counts.len();
        if self.t == 0 {
            return vec![1.0 / k as f64; k];
        }
        let t = self.t as f64;
        self.context_counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Adds one `(context, feature, reward)` observation.
    pub fn observe(&mut self, context: usize, feature: &[f64], reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(invalid(format!("reward must be finite, got {reward}")));
        }
        if context >= self.context_counts.len() {
            return Err(invalid(format!("context {context} out of range")));
        }
        ensure_finite(feature, "feature")?;
        self.design.rank_one_update(feature)?;
        for (u, f) in self.u_vec.iter_mut().zip(feature) {
            *u += reward * f;
        }
        self.theta_hat = self.design.inv_mul(&self.u_vec);
        self.context_counts[context] += 1;
        self.t += 1;
        Ok(())
    }

    /// `‖theta_hat - theta‖²` in the design-matrix norm.
    pub fn error_norm_sq(&self, theta: &[f64]) -> f64 {
        let diff: Vec<f64> = self.theta_hat.iter().zip(theta).map(|(a, b)| a - b).collect();
        self.design.mahalanobis_sq(&diff)
    }
}

pub fn default_nu(inst: &BanditInstance) -> f64 {
    (inst.l_bound() * inst.l_bound()).max(1.0)
}

fn check_horizon(n: u64) -> Result<()> {
    if n < 3 {
        Err(invalid(format!("horizon must be at least 3, got {n}")))
    } else {
        Ok(())
    }
}

fn practical(count: u64, n: u64, d: usize, sigma: f64) -> Result<f64> {
    check_horizon(n)?;
    if count == 0 {
        return Err(invalid("step count must be at least 1"));
    }
    let n = n as f64;
    Ok(sigma * sigma * ((count as f64).ln() + d as f64 * n.ln().ln()))
}

/// Exploitation threshold `beta_t = sigma² (log t + d log log n)`.
pub fn practical_radius_beta(t: u64, n: u64, d: usize, sigma: f64) -> Result<f64> {
    practical(t, n, d, sigma)
}

/// Optimism radius `gamma_t = sigma² (log S_t + d log log n)` where `S_t`
/// counts exploration steps.
pub fn practical_radius_gamma(explore_count: u64, n: u64, d: usize, sigma: f64) -> Result<f64> {
    practical(explore_count, n, d, sigma)
}

/// Parameters of the finite-time confidence radius.
#[derive(Debug, Clone, Copy)]
pub struct RadiusParams {
    pub d: usize,
    pub sigma: f64,
    pub b_bound: f64,
    pub l_bound: f64,
    pub nu: f64,
}

impl RadiusParams {
    pub fn for_instance(inst: &BanditInstance, nu: f64) -> Self {
        Self {
            d: inst.dim(),
            sigma: inst.sigma(),
            b_bound: inst.b_bound(),
            l_bound: inst.l_bound(),
            nu,
        }
    }
}

/// Squared radius `c_{n, delta}` such that, with probability at least
/// `1 - delta`, `‖theta_hat_t - theta*‖_{V_t} < sqrt(c_{n, delta})` for all
/// `t <= n`.
///
/// The covering constants are instantiated with `eps1 = 1 / log n`,
/// `v_min = eps1 / (2 sqrt d)`.
pub fn theoretical_radius(n: u64, delta: f64, p: RadiusParams) -> Result<f64> {
    check_horizon(n)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if p.d == 0 || !(p.sigma >= 0.0) || !(p.b_bound >= 0.0) || !(p.l_bound > 0.0) || !(p.nu > 0.0)
    {
        return Err(invalid("radius parameters out of domain"));
    }
    let nf = n as f64;
    let d = p.d as f64;
    let (sigma, b, l, nu) = (p.sigma, p.b_bound, p.l_bound, p.nu);
    let log_n = nf.ln();
    let gamma = 1.0 + 1.0 / log_n;
    let eps1 = 1.0 / log_n;
    let v_min = eps1 / (2.0 * d.sqrt());
    let growth = (nu + l * l * nf) / (d * nu);

    let chi = nu * nu * v_min * v_min
        / (16.0 * d * l * l * (nu + l * l * nf) * log_n.powi(4) * gamma.powi(4));
    let upsilon = d * (2.5 + 2.0 * log_n * d.sqrt()).ln()
        + d * (2.0
            + 4.0 * d * (4.0 * gamma * d * log_n * log_n * growth.sqrt()).ln() * log_n)
            .ln();

    let bias = b * nu.sqrt();
    let first =
        (2.0 * sigma * sigma * ((2.0 + 2.0 * nf * l * l / (d * nu)) / delta).ln() / (log_n * log_n))
            .sqrt();
    let second = (2.0 * sigma * sigma * gamma.powi(3)
        * (2.0 * (1.0 + (nf / chi).ln() * log_n) / delta).ln()
        + 2.0 * gamma.powi(3) * upsilon)
        .sqrt();
    let sqrt_kappa = bias + first + second;
    let sqrt_c = gamma / (1.0 - 1.0 / log_n) * sqrt_kappa;
    Ok(sqrt_c * sqrt_c)
}

/// Fraction of `runs` independent uniform-exploration trajectories of length
/// `n` in which `‖theta_hat_t - theta*‖_{V_t} <= sqrt(c_{n, delta})` holds at
/// every step.
pub fn confidence_coverage_check<R: Rng + ?Sized>(
    inst: &BanditInstance,
    n: u64,
    delta: f64,
    runs: usize,
    rng: &mut R,
) -> Result<f64> {
    if runs == 0 {
        return Err(invalid("need at least one run"));
    }
    let nu = default_nu(inst);
    let radius = theoretical_radius(n, delta, RadiusParams::for_instance(inst, nu))?;
    let mut covered = 0usize;
    for _ in 0..runs {
        let mut est = EstimatorState::new(inst.dim(), inst.n_contexts(), nu)?;
        let mut ok = true;
        for _ in 0..n {
            let x = envs::sample_context(inst, rng);
            let a = rng.random_range(0..inst.n_arms());
            let cell = Cell::new(x, a);
            let y = envs::reward(inst, cell, rng);
            est.observe(x, inst.feature(cell), y)?;
            if est.error_norm_sq(inst.theta_star()) > radius {
                ok = false;
                break;
            }
        }
        if ok {
            covered += 1;
        }
    }
    Ok(covered as f64 / runs as f64)
}
