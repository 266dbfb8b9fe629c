//! Contextual linear bandit instances.
//!
//! An instance fixes a finite context set with distribution `rho`, a finite
//! arm set, a feature map `phi(x, a) ∈ R^d`, the true parameter `theta_star`
//! and the Gaussian noise level `sigma`. Mean rewards are `phi(x, a)ᵀ theta`.

use std::fmt::Write as _;

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::linalg::dot;

/// Smallest admissible gap between the best and second-best arm under
/// `theta_star` for the optimal arm to count as unique.
pub const UNIQUE_ARM_TOL: f64 = 1e-10;

/// A context-arm pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub context: usize,
    pub arm: usize,
}

impl Cell {
    pub fn new(context: usize, arm: usize) -> Self {
        Self { context, arm }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    n_contexts: usize,
    n_arms: usize,
    dim: usize,
    // row-major over (context, arm, coordinate)
    features: Vec<f64>,
    theta_star: Vec<f64>,
    sigma: f64,
    rho: Vec<f64>,
    b_bound: f64,
    l_bound: f64,
    optimal_arms: Vec<usize>,
}

impl BanditInstance {
    /// Builds and validates an instance, taking `B = ‖theta_star‖₂` and
    /// `L = max ‖phi(x, a)‖₂`.
    ///
    /// `features` is laid out context-major then arm-major, `dim` entries per
    /// cell. A zero `sigma` is accepted for noiseless simulations; everything
    /// that divides by the noise variance rejects it later.
    pub fn new(
        n_contexts: usize,
        n_arms: usize,
        dim: usize,
        features: Vec<f64>,
        theta_star: Vec<f64>,
        sigma: f64,
        rho: Vec<f64>,
    ) -> Result<Self> {
        let l = features
            .chunks(dim.max(1))
            .map(|f| dot(f, f).sqrt())
            .fold(0.0, f64::max);
        let b = dot(&theta_star, &theta_star).sqrt();
        Self::with_bounds(n_contexts, n_arms, dim, features, theta_star, sigma, rho, b, l)
    }

    /// Same as [`BanditInstance::new`] with caller-supplied norm bounds.
    #[allow(clippy::too_many_arguments)]
    pub fn with_bounds(
        n_contexts: usize,
        n_arms: usize,
        dim: usize,
        features: Vec<f64>,
        theta_star: Vec<f64>,
        sigma: f64,
        rho: Vec<f64>,
        b_bound: f64,
        l_bound: f64,
    ) -> Result<Self> {
        if n_contexts == 0 || dim == 0 {
            return Err(invalid("instance needs at least one context and one dimension"));
        }
        if n_arms < 2 {
            return Err(invalid("instance needs at least two arms"));
        }
        if features.len() != n_contexts * n_arms * dim {
            return Err(invalid(format!(
                "expected {} feature entries, got {}",
                n_contexts * n_arms * dim,
                features.len()
            )));
        }
        if theta_star.len() != dim {
            return Err(invalid("theta_star has wrong dimension"));
        }
        if rho.len() != n_contexts {
            return Err(invalid("rho has wrong length"));
        }
        ensure_finite(&features, "features")?;
        ensure_finite(&theta_star, "theta_star")?;
        ensure_finite(&rho, "rho")?;
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and nonnegative, got {sigma}")));
        }
        if rho.iter().any(|&p| !(p > 0.0)) {
            return Err(invalid("every context must have positive probability"));
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("rho sums to {total}, not 1")));
        }
        if !(b_bound > 0.0) || !(l_bound > 0.0) {
            return Err(invalid("norm bounds B and L must be positive"));
        }
        let slack = 1.0 + 1e-12;
        if features
            .chunks(dim)
            .any(|f| dot(f, f).sqrt() > l_bound * slack)
        {
            return Err(invalid("a feature vector exceeds the norm bound L"));
        }
        if dot(&theta_star, &theta_star).sqrt() > b_bound * slack {
            return Err(invalid("theta_star exceeds the norm bound B"));
        }

        let mut inst = Self {
            n_contexts,
            n_arms,
            dim,
            features,
            theta_star,
            sigma,
            rho,
            b_bound,
            l_bound,
            optimal_arms: Vec::new(),
        };
        let mut optimal = Vec::with_capacity(n_contexts);
        for x in 0..n_contexts {
            let means: Vec<f64> = (0..n_arms)
                .map(|a| inst.mean_reward(&inst.theta_star, Cell::new(x, a)))
                .collect();
            let (best, best_val) = argmax_lowest(&means);
            let runner_up = means
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != best)
                .map(|(_, &m)| m)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_val - runner_up <= UNIQUE_ARM_TOL {
                return Err(Error::DegenerateInstance(format!(
                    "context {x} has no unique optimal arm under theta_star"
                )));
            }
            optimal.push(best);
        }
        inst.optimal_arms = optimal;
        Ok(inst)
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.n_contexts * self.n_arms
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Parameter-norm bound `B`.
    pub fn b_bound(&self) -> f64 {
        self.b_bound
    }

    /// Feature-norm bound `L`.
    pub fn l_bound(&self) -> f64 {
        self.l_bound
    }

    #[inline]
    pub fn feature(&self, cell: Cell) -> &[f64] {
        let start = (cell.context * self.n_arms + cell.arm) * self.dim;
        &self.features[start..start + self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_contexts).flat_map(move |x| (0..self.n_arms).map(move |a| Cell::new(x, a)))
    }

    /// Optimal arm of every context under `theta_star`.
    pub fn optimal_arms(&self) -> &[usize] {
        &self.optimal_arms
    }

    /// Same instance with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::with_bounds(
            self.n_contexts,
            self.n_arms,
            self.dim,
            self.features.clone(),
            self.theta_star.clone(),
            sigma,
            self.rho.clone(),
            self.b_bound,
            self.l_bound,
        )
    }

    /// `phi(x, a)ᵀ theta`.
    #[inline]
    pub fn mean_reward(&self, theta: &[f64], cell: Cell) -> f64 {
        dot(self.feature(cell), theta)
    }

    /// Best arm in `context` under `theta` and its mean; ties go to the
    /// lowest arm index.
    pub fn best_arm(&self, theta: &[f64], context: usize) -> (usize, f64) {
        let mut best = 0;
        let mut best_val = self.mean_reward(theta, Cell::new(context, 0));
        for a in 1..self.n_arms {
            let m = self.mean_reward(theta, Cell::new(context, a));
            if m > best_val {
                best = a;
                best_val = m;
            }
        }
        (best, best_val)
    }

    /// `max_a mu(x, a) - mu(x, cell.arm)` under `theta`.
    pub fn gap(&self, theta: &[f64], cell: Cell) -> f64 {
        let (_, best) = self.best_arm(theta, cell.context);
        (best - self.mean_reward(theta, cell)).max(0.0)
    }

    /// Gap under the true parameter.
    pub fn true_gap(&self, cell: Cell) -> f64 {
        self.gap(&self.theta_star, cell)
    }

    /// Gaussian KL divergence between the reward distributions of `theta`
    /// and `theta_alt` at `cell`: `(mu - mu')² / (2 sigma²)`.
    pub fn kl_cell(&self, theta: &[f64], theta_alt: &[f64], cell: Cell) -> f64 {
        let diff = self.mean_reward(theta, cell) - self.mean_reward(theta_alt, cell);
        diff * diff / (2.0 * self.sigma * self.sigma)
    }

    /// Plain-text serialization. Every real is written with 17 significant
    /// digits so that parsing it back is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# contextual linear bandit instance\n");
        let _ = writeln!(out, "n_contexts = {}", self.n_contexts);
        let _ = writeln!(out, "n_arms = {}", self.n_arms);
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "sigma = {}", fmt_real(self.sigma));
        let _ = writeln!(out, "B = {}", fmt_real(self.b_bound));
        let _ = writeln!(out, "L = {}", fmt_real(self.l_bound));
        let _ = writeln!(out, "rho = {}", fmt_reals(&self.rho));
        let _ = writeln!(out, "theta_star = {}", fmt_reals(&self.theta_star));
        for cell in self.cells() {
            let _ = writeln!(
                out,
                "phi.{}.{} = {}",
                cell.context,
                cell.arm,
                fmt_reals(self.feature(cell))
            );
        }
        out
    }

    /// Inverse of [`BanditInstance::to_text`]. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut n_contexts = None;
        let mut n_arms = None;
        let mut dim = None;
        let mut sigma = None;
        let mut b = None;
        let mut l = None;
        let mut rho = None;
        let mut theta = None;
        let mut cells: Vec<(usize, usize, Vec<f64>, usize)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let int = |v: &str| v.parse::<usize>().map_err(|e| perr(format!("{key}: {e}")));
            let reals = |v: &str| -> Result<Vec<f64>> {
                v.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| perr(format!("{key}: {e}"))))
                    .collect()
            };
            let real = |v: &str| v.parse::<f64>().map_err(|e| perr(format!("{key}: {e}")));
            match key {
                "n_contexts" => n_contexts = Some(int(value)?),
                "n_arms" => n_arms = Some(int(value)?),
                "dim" => dim = Some(int(value)?),
                "sigma" => sigma = Some(real(value)?),
                "B" => b = Some(real(value)?),
                "L" => l = Some(real(value)?),
                "rho" => rho = Some(reals(value)?),
                "theta_star" => theta = Some(reals(value)?),
                k if k.starts_with("phi.") => {
                    let mut parts = k[4..].split('.');
                    let (Some(x), Some(a), None) = (parts.next(), parts.next(), parts.next())
                    else {
                        return Err(perr(format!("malformed feature key `{k}`")));
                    };
                    cells.push((int(x)?, int(a)?, reals(value)?, line_no));
                }
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Parse {
            line: 0,
            msg: format!("missing key `{k}`"),
        };
        let n_contexts = n_contexts.ok_or_else(|| missing("n_contexts"))?;
        let n_arms = n_arms.ok_or_else(|| missing("n_arms"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let mut features = vec![f64::NAN; n_contexts * n_arms * dim];
        let mut seen = vec![false; n_contexts * n_arms];
        for (x, a, f, line) in cells {
            if x >= n_contexts || a >= n_arms || f.len() != dim {
                return Err(Error::Parse {
                    line,
                    msg: format!("feature phi.{x}.{a} out of range or wrong length"),
                });
            }
            let k = x * n_arms + a;
            if seen[k] {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate feature phi.{x}.{a}"),
                });
            }
            seen[k] = true;
            features[k * dim..(k + 1) * dim].copy_from_slice(&f);
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(missing(&format!("phi.{}.{}", k / n_arms, k % n_arms)));
        }
        Self::with_bounds(
            n_contexts,
            n_arms,
            dim,
            features,
            theta.ok_or_else(|| missing("theta_star"))?,
            sigma.ok_or_else(|| missing("sigma"))?,
            rho.ok_or_else(|| missing("rho"))?,
            b.ok_or_else(|| missing("B"))?,
            l.ok_or_else(|| missing("L"))?,
        )
    }
}

/// Index and value of the maximum, lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// 17 significant digits in scientific notation.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_reals(vs: &[f64]) -> String {
    vs.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(" ")
}
