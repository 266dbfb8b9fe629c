//! Simulation environments: the two-context toy problem, random structured
//! problems, and context/reward sampling.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::rank;
use crate::model::{BanditInstance, Cell};

/// Consecutive rejections after which random generation gives up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Toy,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Toy perturbation `xi`.
    pub xi: f64,
    /// Toy probability of the first context.
    pub rho1: f64,
    pub d: usize,
    pub n_contexts: usize,
    pub n_arms: usize,
    /// Probability that a generated entry is nonzero.
    pub sparsity: f64,
    pub sigma: f64,
    /// Fixed seed for the random instance. `None` draws a fresh instance per
    /// replication.
    pub instance_seed: Option<u64>,
}

impl EnvConfig {
    pub fn toy(xi: f64, rho1: f64, sigma: f64) -> Self {
        Self {
            kind: EnvKind::Toy,
            xi,
            rho1,
            sigma,
            ..Self::default()
        }
    }

    pub fn random(d: usize, n_contexts: usize, n_arms: usize, sigma: f64) -> Self {
        Self {
            kind: EnvKind::Random,
            d,
            n_contexts,
            n_arms,
            sigma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EnvKind::Toy => {
                if !(self.rho1 > 0.0 && self.rho1 < 1.0) {
                    return Err(invalid(format!("rho1 must lie in (0, 1), got {}", self.rho1)));
                }
                if !(self.xi > 0.0 && self.xi < 0.5) {
                    return Err(invalid(format!("xi must lie in (0, 0.5), got {}", self.xi)));
                }
            }
            EnvKind::Random => {
                if self.d == 0 || self.n_contexts == 0 || self.n_arms < 2 {
                    return Err(invalid("random env needs d >= 1, one context, two arms"));
                }
                if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
                    return Err(invalid(format!("sparsity must lie in (0, 1], got {}", self.sparsity)));
                }
            }
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma must be nonnegative"));
        }
        Ok(())
    }

    /// Short label used in output file names.
    pub fn label(&self) -> String {
        match self.kind {
            EnvKind::Toy => "toy".to_string(),
            EnvKind::Random => format!("random_d{}_x{}_a{}", self.d, self.n_contexts, self.n_arms),
        }
    }

    /// Builds the instance; `rng` is only consumed for random problems.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BanditInstance> {
        self.validate()?;
        match self.kind {
            EnvKind::Toy => toy_two_context(self.xi, self.rho1, self.sigma),
            EnvKind::Random => random_instance(self, rng),
        }
    }
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Toy,
            xi: 0.1,
            rho1: 0.5,
            d: 8,
            n_contexts: 4,
            n_arms: 4,
            sparsity: 0.5,
            sigma: 0.5,
            instance_seed: None,
        }
    }
}

/// Two contexts, three arms, `d = 3`, `theta* = [1, 0, 1]`. The optimal arm
/// features `[1, 0, 0]` and `[0, 0, 1]` leave the second coordinate
/// unidentified, so sub-optimal pulls are required to learn it.
pub fn toy_two_context(xi: f64, rho1: f64, sigma: f64) -> Result<BanditInstance> {
    if !(xi > 0.0 && xi < 0.5) {
        return Err(invalid(format!("xi must lie in (0, 0.5), got {xi}")));
    }
    if !(rho1 > 0.0 && rho1 < 1.0) {
        return Err(invalid(format!("rho1 must lie in (0, 1), got {rho1}")));
    }
    #[rustfmt::skip]
    let features = vec![
        1.0, 0.0, 0.0,
        0.0, 1.0, 0.0,
        1.0 - xi, 2.0 * xi, 0.0,
        0.0, 0.6, 0.8,
        0.0, 0.0, 1.0,
        0.0, xi / 10.0, 1.0 - xi,
    ];
    BanditInstance::new(2, 3, 3, features, vec![1.0, 0.0, 1.0], sigma, vec![rho1, 1.0 - rho1])
}

fn sparse_uniform<R: Rng + ?Sized>(rng: &mut R, sparsity: f64) -> f64 {
    if rng.random::<f64>() < sparsity {
        rng.random::<f64>()
    } else {
        0.0
    }
}

/// Rejection-samples a random structured problem whose optimal-arm features
/// do not span `R^d`. Contexts are equiprobable; `B` and `L` are the exact
/// norms of the generated parameter and features.
pub fn random_instance<R: Rng + ?Sized>(cfg: &EnvConfig, rng: &mut R) -> Result<BanditInstance> {
    let (d, nx, na) = (cfg.d, cfg.n_contexts, cfg.n_arms);
    if d == 0 || nx == 0 || na < 2 {
        return Err(invalid("random env needs d >= 1, one context, two arms"));
    }
    if d > nx * na {
        return Err(invalid("dimension exceeds the number of context-arm pairs"));
    }
    let rho = vec![1.0 / nx as f64; nx];
    for _ in 0..MAX_REJECTIONS {
        let features: Vec<f64> = (0..nx * na * d).map(|_| sparse_uniform(rng, cfg.sparsity)).collect();
        let theta: Vec<f64> = (0..d).map(|_| sparse_uniform(rng, cfg.sparsity)).collect();
        if theta.iter().all(|&v| v == 0.0) || features.iter().all(|&v| v == 0.0) {
            continue;
        }
        let inst = match BanditInstance::new(nx, na, d, features, theta, cfg.sigma, rho.clone()) {
            Ok(inst) => inst,
            Err(Error::DegenerateInstance(_)) => continue,
            Err(e) => return Err(e),
        };
        let optimal: Vec<Vec<f64>> = (0..nx)
            .map(|x| inst.feature(Cell::new(x, inst.optimal_arms()[x])).to_vec())
            .collect();
        if rank(&optimal, d, 1e-10) < d {
            return Ok(inst);
        }
    }
    Err(Error::Generation(format!(
        "{MAX_REJECTIONS} consecutive rejections for d={d}, |X|={nx}, |A|={na}"
    )))
}

/// Draws a context from `rho` by inverse CDF.
pub fn sample_context<R: Rng + ?Sized>(inst: &BanditInstance, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (x, &p) in inst.rho().iter().enumerate() {
        acc += p;
        if u < acc {
            return x;
        }
    }
    inst.n_contexts() - 1
}

/// Noisy reward `phi(x, a)ᵀ theta* + sigma * N(0, 1)`. With `sigma = 0` the
/// mean is returned exactly (the normal draw is still consumed so streams
/// stay aligned).
pub fn reward<R: Rng + ?Sized>(inst: &BanditInstance, cell: Cell, rng: &mut R) -> f64 {
    let noise: f64 = rng.sample(StandardNormal);
    let mean = inst.mean_reward(inst.theta_star(), cell);
    if inst.sigma() == 0.0 {
        mean
    } else {
        mean + inst.sigma() * noise
    }
}
