//! Information constraints of the asymptotic lower bound.
//!
//! With the alternative set taken as all of `R^d`, the infimum of a weighted
//! squared distance over parameters that change the optimal arm of some
//! context has a closed form: for a design `V` and a cell `(x, a)` that is
//! sub-optimal under `theta`,
//!
//! ```text
//! inf_{θ' : φ(x,a)ᵀθ' >= φ(x,a*)ᵀθ'} ‖θ − θ'‖²_V = Δ(x,a)² / ‖φ(x,a) − φ(x,a*)‖²_{V⁻¹}
//! ```
//!
//! and the minimizer is `θ + Δ / ‖u‖²_{V⁻¹} · V⁻¹ u` with `u` the feature
//! difference. Everything in this module reduces to evaluating that ratio
//! over cells.

mod offline;

pub use offline::{
    pure_exploration_restarts, pure_exploration_value, solve_p_offline, solve_pz_offline,
    LowerBoundSolution, PureExploration, PzSolution,
};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, quad_form, spd_inverse, PdMatrix};
use crate::model::{BanditInstance, Cell};

/// Relative ridge added to `V_eta` before inversion (scaled by `L²`).
pub const CONSTRAINT_RIDGE: f64 = 1e-9;

/// A per-context probability distribution over arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_contexts: usize,
    n_arms: usize,
    table: Vec<f64>,
}

impl Policy {
    /// Uniform over arms in every context.
    pub fn uniform(n_contexts: usize, n_arms: usize) -> Self {
        Self {
            n_contexts,
            n_arms,
            table: vec![1.0 / n_arms as f64; n_contexts * n_arms],
        }
    }

    /// Validates that every row is a probability vector (sums to one within
    /// `1e-12`).
    pub fn from_table(n_contexts: usize, n_arms: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n_contexts * n_arms || n_arms == 0 {
            return Err(invalid("policy table has wrong size"));
        }
        let p = Self { n_contexts, n_arms, table };
        if !p.is_valid(1e-12) {
            return Err(invalid("policy rows must be nonnegative and sum to one"));
        }
        Ok(p)
    }

    /// Normalizes every row of a nonnegative table.
    pub fn from_weights(n_contexts: usize, n_arms: usize, mut table: Vec<f64>) -> Result<Self> {
        if table.len() != n_contexts * n_arms || n_arms == 0 {
            return Err(invalid("policy table has wrong size"));
        }
        for row in table.chunks_mut(n_arms) {
            let s: f64 = row.iter().sum();
            if !(s > 0.0) || row.iter().any(|v| !(*v >= 0.0)) {
                return Err(invalid("policy weights must be nonnegative with positive row sums"));
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        Ok(Self { n_contexts, n_arms, table })
    }

    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> f64 {
        self.table[cell.context * self.n_arms + cell.arm]
    }

    pub fn row(&self, context: usize) -> &[f64] {
        &self.table[context * self.n_arms..(context + 1) * self.n_arms]
    }

    pub(crate) fn rows_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.table.chunks_exact_mut(self.n_arms)
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.table.chunks(self.n_arms).all(|row| {
            row.iter().all(|&v| v >= 0.0 && v.is_finite())
                && (row.iter().sum::<f64>() - 1.0).abs() <= tol
        })
    }
}

/// Closest alternative parameter under a given design.
#[derive(Debug, Clone, PartialEq)]
pub struct GlrtResult {
    /// `inf ‖theta − theta'‖²_V` over alternatives.
    pub value: f64,
    pub argmin_cell: Cell,
    /// The minimizing `theta'`; the arm of `argmin_cell` ties with the
    /// incumbent best arm of its context under it.
    pub closest_theta: Vec<f64>,
}

struct Closest {
    ratio: f64,
    cell: Cell,
    step: f64,
    inv_u: Vec<f64>,
}

/// Minimizes `Δ² / ‖u‖²_{inv}` over sub-optimal cells of `contexts`. Cells
/// whose feature difference vanishes are skipped. First minimizer wins ties.
fn closest_alternative(
    inst: &BanditInstance,
    theta: &[f64],
    best_arms: &[usize],
    inv: &[f64],
    contexts: impl Iterator<Item = usize>,
) -> Option<Closest> {
    let mut best: Option<(f64, Cell, f64, Vec<f64>, f64)> = None;
    let mut u = vec![0.0; inst.dim()];
    for x in contexts {
        let star = best_arms[x];
        let phi_star = inst.feature(Cell::new(x, star));
        let mu_star = dot(phi_star, theta);
        for a in (0..inst.n_arms()).filter(|&a| a != star) {
            let cell = Cell::new(x, a);
            let phi = inst.feature(cell);
            for ((ui, p), s) in u.iter_mut().zip(phi).zip(phi_star) {
                *ui = p - s;
            }
            if u.iter().all(|&v| v == 0.0) {
                continue;
            }
            let norm_sq = quad_form(inv, &u);
            if !(norm_sq > 0.0) {
                continue;
            }
            let gap = (mu_star - dot(phi, theta)).max(0.0);
            let ratio = gap * gap / norm_sq;
            if best.as_ref().is_none_or(|b| ratio < b.0) {
                best = Some((ratio, cell, gap, u.clone(), norm_sq));
            }
        }
    }
    best.map(|(ratio, cell, gap, u, norm_sq)| {
        let dim = u.len();
        let inv_u: Vec<f64> = inv.chunks_exact(dim).map(|row| dot(row, &u)).collect();
        Closest {
            ratio,
            cell,
            step: gap / norm_sq,
            inv_u,
        }
    })
}

fn best_arms(inst: &BanditInstance, theta: &[f64]) -> Vec<usize> {
    (0..inst.n_contexts()).map(|x| inst.best_arm(theta, x).0).collect()
}

fn shifted(theta: &[f64], step: f64, dir: &[f64]) -> Vec<f64> {
    theta.iter().zip(dir).map(|(t, d)| t + step * d).collect()
}

/// Closed-form `inf_{theta'} ‖theta − theta'‖²_{design}` over parameters whose
/// optimal arm differs from `theta`'s in some context (or only in
/// `restrict_context` when given).
pub fn glrt_infimum(
    inst: &BanditInstance,
    theta: &[f64],
    design: &PdMatrix,
    restrict_context: Option<usize>,
) -> Result<GlrtResult> {
    if theta.len() != inst.dim() || design.dim() != inst.dim() {
        return Err(invalid("dimension mismatch"));
    }
    let arms = best_arms(inst, theta);
    let closest = match restrict_context {
        Some(x) if x >= inst.n_contexts() => {
            return Err(invalid(format!("context {x} out of range")));
        }
        Some(x) => closest_alternative(inst, theta, &arms, design.inv(), std::iter::once(x)),
        None => closest_alternative(inst, theta, &arms, design.inv(), 0..inst.n_contexts()),
    };
    let c = closest.ok_or_else(|| {
        Error::DegenerateInstance("every alternative cell has a zero feature difference".into())
    })?;
    Ok(GlrtResult {
        value: c.ratio,
        argmin_cell: c.cell,
        closest_theta: shifted(theta, c.step, &c.inv_u),
    })
}

/// `true` when the estimate is accurate enough to exploit: the GLRT value
/// strictly exceeds `beta`.
pub fn exploitation_test(
    inst: &BanditInstance,
    theta: &[f64],
    design: &PdMatrix,
    beta: f64,
    restrict_context: Option<usize>,
) -> Result<bool> {
    if !(beta >= 0.0) {
        return Err(invalid(format!("beta must be nonnegative, got {beta}")));
    }
    Ok(glrt_infimum(inst, theta, design, restrict_context)?.value > beta)
}

/// The infimum term of the constraint at a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Information {
    /// `inf_{theta'} Σ rho ω d(theta, theta')`.
    pub value: f64,
    pub argmin_cell: Cell,
    pub closest_theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValue {
    /// `g(ω, z)`.
    pub value: f64,
    pub information: Information,
    /// The optimism term `(2BL/σ²) √γ Σ rho ω ‖φ‖_{V⁻¹}`.
    pub bonus: f64,
}

/// Lagrangian value and a subgradient at `(ω, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianEval {
    pub f_value: f64,
    pub g_value: f64,
    pub h_value: f64,
    /// Context-major `|X| x |A|` table.
    pub subgrad_omega: Vec<f64>,
    pub subgrad_lambda: f64,
    pub argmin_cell: Cell,
}

/// Optimistic estimate of the Lagrangian pieces at one step: a parameter
/// estimate, a context distribution, and the per-cell confidence widths
/// `‖φ(x,a)‖_{V⁻¹}` scaled by `sqrt(gamma)`.
#[derive(Debug, Clone)]
pub struct OptimisticModel<'a> {
    inst: &'a BanditInstance,
    rho: Vec<f64>,
    theta: Vec<f64>,
    best_arms: Vec<usize>,
    sqrt_gamma: f64,
    // ‖φ‖_{V⁻¹} per cell
    width: Vec<f64>,
    kl_scale: f64,
    bonus_scale: f64,
}

impl<'a> OptimisticModel<'a> {
    pub fn new(
        inst: &'a BanditInstance,
        rho: Vec<f64>,
        theta: Vec<f64>,
        design: &PdMatrix,
        gamma: f64,
    ) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("gamma must be finite and nonnegative, got {gamma}")));
        }
        if design.dim() != inst.dim() {
            return Err(invalid("design has wrong dimension"));
        }
        let width = inst
            .cells()
            .map(|c| design.quad_form_inv(inst.feature(c)).sqrt())
            .collect();
        Self::build(inst, rho, theta, gamma.sqrt(), width)
    }

    /// The noiseless model at the true parameter and context distribution
    /// with no optimism.
    pub fn oracle(inst: &'a BanditInstance) -> Result<Self> {
        Self::build(
            inst,
            inst.rho().to_vec(),
            inst.theta_star().to_vec(),
            0.0,
            vec![0.0; inst.n_cells()],
        )
    }

    fn build(
        inst: &'a BanditInstance,
        rho: Vec<f64>,
        theta: Vec<f64>,
        sqrt_gamma: f64,
        width: Vec<f64>,
    ) -> Result<Self> {
        let sigma = inst.sigma();
        if !(sigma > 0.0) {
            return Err(invalid("information constraints need a positive noise level"));
        }
        if rho.len() != inst.n_contexts() || theta.len() != inst.dim() {
            return Err(invalid("dimension mismatch"));
        }
        let s2 = sigma * sigma;
        Ok(Self {
            best_arms: best_arms(inst, &theta),
            inst,
            rho,
            theta,
            sqrt_gamma,
            width,
            kl_scale: 1.0 / (2.0 * s2),
            bonus_scale: 2.0 * inst.b_bound() * inst.l_bound() / s2,
        })
    }

    pub fn instance(&self) -> &BanditInstance {
        self.inst
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    fn check(&self, omega: &Policy) -> Result<()> {
        if omega.n_contexts() != self.inst.n_contexts() || omega.n_arms() != self.inst.n_arms() {
            return Err(invalid("policy shape does not match instance"));
        }
        Ok(())
    }

    #[inline]
    fn index(&self, cell: Cell) -> usize {
        cell.context * self.inst.n_arms() + cell.arm
    }

    /// `f(ω) = Σ_x rho(x) Σ_a ω(x,a) (mu(x,a) + sqrt(gamma) ‖φ(x,a)‖_{V⁻¹})`.
    pub fn objective_f(&self, omega: &Policy) -> Result<f64> {
        self.check(omega)?;
        Ok(self
            .inst
            .cells()
            .map(|c| {
                self.rho[c.context]
                    * omega.get(c)
                    * (self.inst.mean_reward(&self.theta, c)
                        + self.sqrt_gamma * self.width[self.index(c)])
            })
            .sum())
    }

    /// `V_eta = Σ rho(x) ω(x,a) φφᵀ + ridge·I`.
    pub fn allocation_design(&self, omega: &Policy) -> Vec<f64> {
        let d = self.inst.dim();
        let ridge = CONSTRAINT_RIDGE * self.inst.l_bound() * self.inst.l_bound();
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            v[i * d + i] = ridge;
        }
        for c in self.inst.cells() {
            let w = self.rho[c.context] * omega.get(c);
            if w == 0.0 {
                continue;
            }
            let phi = self.inst.feature(c);
            for i in 0..d {
                let wi = w * phi[i];
                for j in 0..d {
                    v[i * d + j] += wi * phi[j];
                }
            }
        }
        v
    }

    /// `inf_{theta'} Σ rho ω d(theta, theta')` and its minimizer.
    pub fn information(&self, omega: &Policy) -> Result<Information> {
        self.check(omega)?;
        let inv = spd_inverse(&self.allocation_design(omega), self.inst.dim())?;
        let c = closest_alternative(
            self.inst,
            &self.theta,
            &self.best_arms,
            &inv,
            0..self.inst.n_contexts(),
        )
        .ok_or_else(|| {
            Error::DegenerateInstance("every alternative cell has a zero feature difference".into())
        })?;
        Ok(Information {
            value: c.ratio * self.kl_scale,
            argmin_cell: c.cell,
            closest_theta: shifted(&self.theta, c.step, &c.inv_u),
        })
    }

    fn bonus(&self, omega: &Policy) -> f64 {
        if self.sqrt_gamma == 0.0 {
            return 0.0;
        }
        let weighted: f64 = self
            .inst
            .cells()
            .map(|c| self.rho[c.context] * omega.get(c) * self.width[self.index(c)])
            .sum();
        self.bonus_scale * self.sqrt_gamma * weighted
    }

    /// `g(ω, z)`: optimistic information minus `1/z`.
    pub fn constraint_g(&self, omega: &Policy, z: f64) -> Result<ConstraintValue> {
        if !(z > 0.0) {
            return Err(invalid(format!("z must be positive, got {z}")));
        }
        let information = self.information(omega)?;
        let bonus = self.bonus(omega);
        Ok(ConstraintValue {
            value: information.value + bonus - 1.0 / z,
            information,
            bonus,
        })
    }

    /// `h = f + λ g` and a subgradient in `ω` (Danskin: the KL term is
    /// differentiated at the minimizing alternative). With
    /// `normalize_per_context`, every nonzero context row of the subgradient
    /// is rescaled to unit Euclidean norm.
    pub fn lagrangian(
        &self,
        omega: &Policy,
        lambda: f64,
        z: f64,
        normalize_per_context: bool,
    ) -> Result<LagrangianEval> {
        if !(lambda >= 0.0) {
            return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
        }
        let f_value = self.objective_f(omega)?;
        let g = self.constraint_g(omega, z)?;
        let alt = &g.information.closest_theta;
        let mut q = Vec::with_capacity(self.inst.n_cells());
        for c in self.inst.cells() {
            let width = self.sqrt_gamma * self.width[self.index(c)];
            let mu = self.inst.mean_reward(&self.theta, c);
            let diff = mu - self.inst.mean_reward(alt, c);
            let kl = diff * diff * self.kl_scale;
            q.push(self.rho[c.context] * (mu + width + lambda * (kl + self.bonus_scale * width)));
        }
        if normalize_per_context {
            for row in q.chunks_mut(self.inst.n_arms()) {
                let norm = dot(row, row).sqrt();
                if norm > 0.0 {
                    row.iter_mut().for_each(|v| *v /= norm);
                }
            }
        }
        Ok(LagrangianEval {
            f_value,
            g_value: g.value,
            h_value: f_value + lambda * g.value,
            subgrad_omega: q,
            subgrad_lambda: g.value,
            argmin_cell: g.information.argmin_cell,
        })
    }
}
