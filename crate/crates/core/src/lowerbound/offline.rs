//! Offline solvers for the lower-bound programs on small instances.
//!
//! These are test oracles: they know `theta*` and `rho` and are allowed to
//! iterate for a long time. All of them reduce to maximizing a concave
//! function of the form `min_p s_p / (u_pᵀ V(w)⁻¹ u_p)` over a product of
//! simplices, where `V(w)` is linear in the weights `w`. The maximization is
//! done by entropic mirror ascent on Danskin supergradients, with the best
//! iterate kept as a lower bound and an upper bound obtained from the
//! averaged active pieces and a linearization over the simplices.

use std::ops::Range;

use rand::Rng;

use super::{OptimisticModel, Policy, CONSTRAINT_RIDGE};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, quad_form, spd_inverse};
use crate::model::{BanditInstance, Cell};

/// Iterations between upper-bound evaluations.
const CHECK_EVERY: usize = 200;

/// Descent steps on the mixture weights of the upper bound.
const MIX_ITERS: usize = 300;

struct Var {
    feature: Vec<f64>,
    weight: f64,
}

struct Piece {
    u: Vec<f64>,
    scale: f64,
}

/// `max_w min_p ⟨c, w⟩ + m scale_p / ‖u_p‖²_{V(w)⁻¹}` with
/// `V(w) = Σ_j weight_j w_j ψ_j ψ_jᵀ + ridge I` and `w` ranging over a
/// product of simplices (one per block).
struct MaxMin {
    dim: usize,
    vars: Vec<Var>,
    blocks: Vec<Range<usize>>,
    pieces: Vec<Piece>,
    ridge: f64,
    /// Linear term added to every piece (empty for none).
    linear: Vec<f64>,
    /// Multiplier on the rational part of every piece.
    mult: f64,
}

struct Snapshot {
    values: Vec<f64>,
    // V⁻¹ u_p per piece
    inv_u: Vec<Vec<f64>>,
    quad: Vec<f64>,
}

struct MaxMinOutcome {
    w: Vec<f64>,
    value: f64,
    upper: f64,
    iterations: usize,
}

impl MaxMin {
    fn snapshot(&self, w: &[f64]) -> Result<Snapshot> {
        let d = self.dim;
        let mut v = vec![0.0; d * d];
        for i in 0..d {
            v[i * d + i] = self.ridge;
        }
        for (var, &wj) in self.vars.iter().zip(w) {
            let c = var.weight * wj;
            if c == 0.0 {
                continue;
            }
            for i in 0..d {
                let ci = c * var.feature[i];
                for j in 0..d {
                    v[i * d + j] += ci * var.feature[j];
                }
            }
        }
        let inv = spd_inverse(&v, d)?;
        let lin = if self.linear.is_empty() { 0.0 } else { dot(&self.linear, w) };
        let mut values = Vec::with_capacity(self.pieces.len());
        let mut inv_u = Vec::with_capacity(self.pieces.len());
        let mut quad = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            let s: Vec<f64> = inv.chunks_exact(d).map(|row| dot(row, &p.u)).collect();
            let q = dot(&p.u, &s).max(f64::MIN_POSITIVE);
            values.push(lin + self.mult * p.scale / q);
            inv_u.push(s);
            quad.push(q);
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Ok(Snapshot { values, inv_u, quad })
    }

    /// Gradient of piece `p` in `w`.
    fn piece_grad(&self, snap: &Snapshot, p: usize, out: &mut [f64]) {
        let s = &snap.inv_u[p];
        let q = snap.quad[p];
        let scale = self.mult * self.pieces[p].scale / (q * q);
        for (j, (g, var)) in out.iter_mut().zip(&self.vars).enumerate() {
            let proj = dot(&var.feature, s);
            *g = scale * var.weight * proj * proj + self.linear.get(j).copied().unwrap_or(0.0);
        }
    }

    fn active(values: &[f64]) -> usize {
        let mut best = 0;
        for (i, &v) in values.iter().enumerate().skip(1) {
            if v < values[best] {
                best = i;
            }
        }
        best
    }

    /// Upper bound on the max via a mixture of pieces: for concave
    /// `Φ(w) = Σ_p mix_p G_p(w) >= min_p G_p(w)`, `max Φ <= Φ(w) + max_w'
    /// ⟨∇Φ(w), w' − w⟩`. The bound is convex and piecewise linear in `mix`;
    /// it is improved from `mix` by entropic descent with `w` fixed.
    fn upper_bound(&self, w: &[f64], mix: &[f64]) -> Result<f64> {
        let snap = self.snapshot(w)?;
        let n_pieces = self.pieces.len();
        let grads: Vec<Vec<f64>> = (0..n_pieces)
            .map(|p| {
                let mut g = vec![0.0; self.vars.len()];
                self.piece_grad(&snap, p, &mut g);
                g
            })
            .collect();
        let at_w: Vec<f64> = grads.iter().map(|g| dot(g, w)).collect();
        // bound and a subgradient in the mixture weights
        let eval = |m: &[f64], sub: &mut [f64]| -> f64 {
            let mut total = 0.0;
            sub.iter_mut().enumerate().for_each(|(p, s)| *s = snap.values[p] - at_w[p]);
            for (p, &mp) in m.iter().enumerate() {
                total += mp * (snap.values[p] - at_w[p]);
            }
            for block in &self.blocks {
                let mut top = f64::NEG_INFINITY;
                let mut arg = block.start;
                for j in block.clone() {
                    let v: f64 = m.iter().zip(&grads).map(|(mp, g)| mp * g[j]).sum();
                    if v > top {
                        top = v;
                        arg = j;
                    }
                }
                total += top;
                for (s, g) in sub.iter_mut().zip(&grads) {
                    *s += g[arg];
                }
            }
            total
        };
        let mut m = mix.to_vec();
        let mut sub = vec![0.0; n_pieces];
        let mut best = eval(&m, &mut sub);
        for k in 1..=MIX_ITERS {
            let scale = sub.iter().fold(0.0f64, |a, s| a.max(s.abs()));
            if !(scale > 0.0) {
                break;
            }
            let eta = 1.0 / (scale * (k as f64).sqrt());
            let low = sub.iter().copied().fold(f64::INFINITY, f64::min);
            let mut total = 0.0;
            for (mp, s) in m.iter_mut().zip(&sub) {
                *mp = (*mp).max(1e-300) * (-eta * (s - low)).exp();
                total += *mp;
            }
            m.iter_mut().for_each(|mp| *mp /= total);
            best = best.min(eval(&m, &mut sub));
        }
        Ok(best)
    }

    fn solve(&self, start: Vec<f64>, max_iters: usize, tol: f64) -> Result<MaxMinOutcome> {
        let n_vars = self.vars.len();
        let mut w = start;
        let mut best_w = w.clone();
        let mut best = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        let mut grad = vec![0.0; n_vars];
        let mut mix = vec![0.0; self.pieces.len()];
        let mut avg_w = vec![0.0; n_vars];
        let mut next_reset = 1;
        let mut iterations = 0;
        for k in 1..=max_iters.max(1) {
            iterations = k;
            if k == next_reset {
                mix.iter_mut().for_each(|m| *m = 0.0);
                avg_w.iter_mut().for_each(|m| *m = 0.0);
                next_reset *= 2;
            }
            let snap = self.snapshot(&w)?;
            let p = Self::active(&snap.values);
            let value = snap.values[p];
            if value > best {
                best = value;
                best_w.copy_from_slice(&w);
            }
            self.piece_grad(&snap, p, &mut grad);
            let norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let step = 1.0 / (k as f64).sqrt();
            mix[p] += step;
            for (a, wj) in avg_w.iter_mut().zip(&w) {
                *a += step * wj;
            }
            if norm > 0.0 {
                let eta = step / norm;
                for block in &self.blocks {
                    let top = grad[block.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in block.clone() {
                        w[j] *= (eta * (grad[j] - top)).exp();
                        total += w[j];
                    }
                    for j in block.clone() {
                        w[j] /= total;
                    }
                }
            }
            if k % CHECK_EVERY == 0 || k == max_iters {
                let total: f64 = mix.iter().sum();
                let m: Vec<f64> = mix.iter().map(|v| v / total).collect();
                upper = upper.min(self.upper_bound(&best_w, &m)?);
                let wsum: Vec<f64> = {
                    let mut a = avg_w.clone();
                    for block in &self.blocks {
                        let s: f64 = a[block.clone()].iter().sum();
                        a[block.clone()].iter_mut().for_each(|v| *v /= s);
                    }
                    a
                };
                let snap = self.snapshot(&wsum)?;
                let value = snap.values[Self::active(&snap.values)];
                if value > best {
                    best = value;
                    best_w.copy_from_slice(&wsum);
                }
                upper = upper.min(self.upper_bound(&wsum, &m)?);
                if upper - best <= tol * best.abs() {
                    break;
                }
            }
        }
        Ok(MaxMinOutcome {
            w: best_w,
            value: best,
            upper: upper.max(best),
            iterations,
        })
    }
}

fn feature_diff(inst: &BanditInstance, cell: Cell, star: usize) -> Vec<f64> {
    inst.feature(cell)
        .iter()
        .zip(inst.feature(Cell::new(cell.context, star)))
        .map(|(a, b)| a - b)
        .collect()
}

fn require_noise(inst: &BanditInstance) -> Result<f64> {
    let s = inst.sigma();
    if !(s > 0.0) {
        return Err(invalid("lower-bound programs need a positive noise level"));
    }
    Ok(s)
}

fn pure_exploration_problem(inst: &BanditInstance) -> Result<MaxMin> {
    let sigma = require_noise(inst)?;
    let na = inst.n_arms();
    let vars = inst
        .cells()
        .map(|c| Var {
            feature: inst.feature(c).to_vec(),
            weight: inst.rho()[c.context],
        })
        .collect();
    let blocks = (0..inst.n_contexts()).map(|x| x * na..(x + 1) * na).collect();
    let mut pieces = Vec::new();
    for c in inst.cells() {
        let star = inst.optimal_arms()[c.context];
        if c.arm == star {
            continue;
        }
        let u = feature_diff(inst, c, star);
        if u.iter().all(|&v| v == 0.0) {
            continue;
        }
        let gap = inst.true_gap(c);
        pieces.push(Piece {
            u,
            scale: gap * gap / (2.0 * sigma * sigma),
        });
    }
    if pieces.is_empty() {
        return Err(Error::DegenerateInstance("no informative alternative cell".into()));
    }
    Ok(MaxMin {
        dim: inst.dim(),
        vars,
        blocks,
        pieces,
        ridge: CONSTRAINT_RIDGE * inst.l_bound() * inst.l_bound(),
        linear: Vec::new(),
        mult: 1.0,
    })
}

/// Result of the best-arm-identification max-min problem.
#[derive(Debug, Clone)]
pub struct PureExploration {
    /// Feasibility threshold: the reciprocal of the optimal information rate.
    pub z_lower: f64,
    /// Maximizing exploration policy.
    pub omega: Policy,
    /// Certified bracket on the information rate `1 / z_lower`.
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub iterations: usize,
}

fn run_pure_exploration(
    inst: &BanditInstance,
    start: Policy,
    max_iters: usize,
    tol: f64,
) -> Result<PureExploration> {
    let problem = pure_exploration_problem(inst)?;
    let out = problem.solve(start.table().to_vec(), max_iters, tol)?;
    if !(out.value > 0.0) {
        return Err(Error::Numeric("pure-exploration rate did not become positive".into()));
    }
    Ok(PureExploration {
        z_lower: 1.0 / out.value,
        omega: Policy::from_weights(inst.n_contexts(), inst.n_arms(), out.w)?,
        rate_lower: out.value,
        rate_upper: out.upper,
        iterations: out.iterations,
    })
}

/// Smallest `z` for which the budget-constrained program is feasible,
/// computed as `1 / max_ω inf_{θ'} E_rho[Σ_a ω(x,a) d_{x,a}(θ*, θ')]`,
/// starting from the uniform policy.
pub fn pure_exploration_value(
    inst: &BanditInstance,
    max_iters: usize,
    tol: f64,
) -> Result<PureExploration> {
    run_pure_exploration(inst, Policy::uniform(inst.n_contexts(), inst.n_arms()), max_iters, tol)
}

/// Runs the pure-exploration solver from `restarts` random interior starting
/// policies and returns each outcome.
pub fn pure_exploration_restarts<R: Rng + ?Sized>(
    inst: &BanditInstance,
    max_iters: usize,
    tol: f64,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<PureExploration>> {
    (0..restarts)
        .map(|_| {
            let weights: Vec<f64> = (0..inst.n_cells())
                .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3)
                .collect();
            let start = Policy::from_weights(inst.n_contexts(), inst.n_arms(), weights)?;
            run_pure_exploration(inst, start, max_iters, tol)
        })
        .collect()
}

/// Solution of the unconstrained-budget lower-bound program.
#[derive(Debug, Clone)]
pub struct LowerBoundSolution {
    /// Optimal allocation. Optimal arms get `+inf`: pulling them costs
    /// nothing and never reduces information, so the infimum is approached
    /// with unbounded mass on them.
    pub eta_star: Vec<f64>,
    /// `v*(theta*)`.
    pub v_star: f64,
    pub z_lower: f64,
    /// `max_x Σ_{a ≠ a*} eta*(x,a) / rho(x)`.
    pub z_bar: f64,
    /// `Σ_{x, a ≠ a*} eta*(x,a)`.
    pub z_star: f64,
    /// Width of the certified bracket on `v_star`.
    pub kkt_residual: f64,
    n_arms: usize,
}

impl LowerBoundSolution {
    pub fn eta(&self, cell: Cell) -> f64 {
        self.eta_star[cell.context * self.n_arms + cell.arm]
    }

    /// `Σ eta Δ` over sub-optimal cells.
    pub fn objective(&self, inst: &BanditInstance) -> f64 {
        inst.cells()
            .filter(|c| c.arm != inst.optimal_arms()[c.context])
            .map(|c| self.eta(c) * inst.true_gap(c))
            .sum()
    }

    /// `inf_{θ'} Σ eta d(θ*, θ')` in the limit where the optimal arms carry
    /// unbounded mass.
    pub fn constraint_value(&self, inst: &BanditInstance) -> Result<f64> {
        constraint_with_unbounded_optimal(inst, |c| self.eta(c))
    }
}

/// Orthonormal basis of the orthogonal complement of the span of `rows`.
fn null_space_basis(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let push = |v: &[f64], basis: &mut Vec<Vec<f64>>| -> bool {
        let mut r = v.to_vec();
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for b in basis.iter() {
                let c = dot(&r, b);
                r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = dot(&r, &r).sqrt();
        if n > 1e-10 * dot(v, v).sqrt().max(1.0) {
            r.iter_mut().for_each(|x| *x /= n);
            basis.push(r);
            true
        } else {
            false
        }
    };
    for r in rows {
        push(r, &mut basis);
    }
    let spanned = basis.len();
    for i in 0..dim {
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        push(&e, &mut basis);
    }
    basis.split_off(spanned)
}

struct Reduced {
    basis: Vec<Vec<f64>>,
    // sub-optimal cells with a nonzero projection, and their projected features
    cells: Vec<Cell>,
    psi: Vec<Vec<f64>>,
}

fn reduce(inst: &BanditInstance) -> Reduced {
    let optimal: Vec<Vec<f64>> = (0..inst.n_contexts())
        .map(|x| inst.feature(Cell::new(x, inst.optimal_arms()[x])).to_vec())
        .collect();
    let basis = null_space_basis(&optimal, inst.dim());
    let mut cells = Vec::new();
    let mut psi = Vec::new();
    if !basis.is_empty() {
        for c in inst.cells() {
            if c.arm == inst.optimal_arms()[c.context] {
                continue;
            }
            let p: Vec<f64> = basis.iter().map(|b| dot(b, inst.feature(c))).collect();
            if dot(&p, &p).sqrt() > 1e-12 * inst.l_bound() {
                cells.push(c);
                psi.push(p);
            }
        }
    }
    Reduced { basis, cells, psi }
}

fn constraint_with_unbounded_optimal(
    inst: &BanditInstance,
    eta: impl Fn(Cell) -> f64,
) -> Result<f64> {
    let sigma = require_noise(inst)?;
    let red = reduce(inst);
    if red.cells.is_empty() {
        return Ok(f64::INFINITY);
    }
    let k = red.basis.len();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = CONSTRAINT_RIDGE * inst.l_bound() * inst.l_bound();
    }
    for (c, p) in red.cells.iter().zip(&red.psi) {
        let e = eta(*c);
        for i in 0..k {
            for j in 0..k {
                v[i * k + j] += e * p[i] * p[j];
            }
        }
    }
    let inv = spd_inverse(&v, k)?;
    Ok(red
        .cells
        .iter()
        .zip(&red.psi)
        .map(|(c, p)| {
            let gap = inst.true_gap(*c);
            gap * gap / (2.0 * sigma * sigma * quad_form(&inv, p))
        })
        .fold(f64::INFINITY, f64::min))
}

/// Solves `inf Σ eta Δ  s.t.  inf_{θ'} Σ eta d(θ*, θ') >= 1`.
///
/// Optimal arms are free, so they are sent to infinity; this projects the
/// problem onto the orthogonal complement of the optimal-arm features. The
/// information constraint is homogeneous of degree one in `eta`, so with
/// `eta = w / Δ` on sub-optimal cells and `w` on the simplex,
/// `v* = 1 / max_w G(w)` where `G` is the information rate.
pub fn solve_p_offline(inst: &BanditInstance, max_iters: usize, tol: f64) -> Result<LowerBoundSolution> {
    let sigma = require_noise(inst)?;
    let pe = pure_exploration_value(inst, max_iters, tol)?;
    let n_arms = inst.n_arms();
    let mut eta = vec![0.0; inst.n_cells()];
    for x in 0..inst.n_contexts() {
        eta[x * n_arms + inst.optimal_arms()[x]] = f64::INFINITY;
    }
    let red = reduce(inst);
    let finish = |eta: Vec<f64>, v_star: f64, kkt: f64| {
        let sub = |x: usize| -> f64 {
            (0..n_arms)
                .filter(|&a| a != inst.optimal_arms()[x])
                .map(|a| eta[x * n_arms + a])
                .sum()
        };
        let z_bar = (0..inst.n_contexts())
            .map(|x| sub(x) / inst.rho()[x])
            .fold(0.0, f64::max);
        let z_star = (0..inst.n_contexts()).map(sub).sum();
        LowerBoundSolution {
            eta_star: eta,
            v_star,
            z_lower: pe.z_lower,
            z_bar,
            z_star,
            kkt_residual: kkt,
            n_arms,
        }
    };
    if red.cells.is_empty() {
        // optimal-arm features (plus free directions) already identify θ*
        return Ok(finish(eta, 0.0, 0.0));
    }
    let gaps: Vec<f64> = red.cells.iter().map(|&c| inst.true_gap(c)).collect();
    let problem = MaxMin {
        dim: red.basis.len(),
        vars: red
            .psi
            .iter()
            .zip(&gaps)
            .map(|(p, g)| Var {
                feature: p.clone(),
                weight: 1.0 / g,
            })
            .collect(),
        #[allow(clippy::single_range_in_vec_init)]
        blocks: vec![0..red.cells.len()],
        pieces: red
            .psi
            .iter()
            .zip(&gaps)
            .map(|(p, g)| Piece {
                u: p.clone(),
                scale: g * g / (2.0 * sigma * sigma),
            })
            .collect(),
        ridge: CONSTRAINT_RIDGE * inst.l_bound() * inst.l_bound(),
        linear: Vec::new(),
        mult: 1.0,
    };
    let m = red.cells.len();
    let out = problem.solve(vec![1.0 / m as f64; m], max_iters, tol)?;
    if !(out.value > 0.0) {
        return Err(Error::Numeric("information rate did not become positive".into()));
    }
    for ((c, w), g) in red.cells.iter().zip(&out.w).zip(&gaps) {
        eta[c.context * n_arms + c.arm] = w / (g * out.value);
    }
    let v_star = 1.0 / out.value;
    let kkt = v_star - 1.0 / out.upper;
    Ok(finish(eta, v_star, kkt))
}

/// Outcome of the budget-constrained program at a fixed `z`.
#[derive(Debug, Clone)]
pub struct PzSolution {
    /// Best feasible policy found, or the most informative one when the
    /// program is infeasible.
    pub omega: Policy,
    /// `z (mu* − f(ω))`, `+inf` when infeasible.
    pub u_star: f64,
    /// Multiplier at which the primal solution was recovered.
    pub lambda: f64,
    pub feasible: bool,
    /// Constraint value `inf_{θ'} E_rho[Σ ω d] − 1/z` at the returned policy.
    pub constraint: f64,
    /// Certified bracket width on `u_star` (from the dual function).
    pub duality_gap: f64,
    pub iterations: usize,
}

/// Bisection steps on the multiplier.
const MULTIPLIER_BISECTIONS: usize = 60;

struct InnerSolution {
    omega: Vec<f64>,
    info: f64,
    dual: f64,
}

/// Solves `max_ω E_rho[Σ ω mu] s.t. inf_{θ'} E_rho[Σ ω d(θ*, θ')] >= 1/z`.
///
/// Feasibility is decided by the pure-exploration rate. For feasible `z` the
/// concave dual `D(λ) = max_ω f(ω) + λ (G(ω) − 1/z)` is minimized by
/// bisection on the sign of its derivative `G(ω_λ) − 1/z`, each inner
/// maximization being solved with certified bounds. The primal policy is the
/// best feasible point on the segment joining the two bracketing inner
/// solutions; since `G` is concave that segment contains a feasible point
/// whose objective is within the inner tolerance of `D`.
pub fn solve_pz_offline(inst: &BanditInstance, z: f64, max_iters: usize, tol: f64) -> Result<PzSolution> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(invalid(format!("z must be positive and finite, got {z}")));
    }
    let model = OptimisticModel::oracle(inst)?;
    let (nx, na) = (inst.n_contexts(), inst.n_arms());
    let mu_star: f64 = (0..nx)
        .map(|x| inst.rho()[x] * inst.best_arm(inst.theta_star(), x).1)
        .sum();
    let pe = pure_exploration_value(inst, max_iters, tol)?;
    let target = 1.0 / z;
    let mut iterations = pe.iterations;
    if pe.rate_lower < target - tol * target {
        return Ok(PzSolution {
            omega: pe.omega,
            u_star: f64::INFINITY,
            lambda: f64::INFINITY,
            feasible: false,
            constraint: pe.rate_lower - target,
            duality_gap: f64::INFINITY,
            iterations,
        });
    }

    let mut problem = pure_exploration_problem(inst)?;
    problem.linear = inst
        .cells()
        .map(|c| inst.rho()[c.context] * inst.mean_reward(inst.theta_star(), c))
        .collect();
    let info_of = |w: &[f64]| -> Result<f64> {
        Ok(model.information(&Policy::from_weights(nx, na, w.to_vec())?)?.value)
    };
    let mut inner = |lambda: f64, iterations: &mut usize| -> Result<InnerSolution> {
        problem.mult = lambda;
        let out = problem.solve(Policy::uniform(nx, na).table().to_vec(), max_iters, tol)?;
        *iterations += out.iterations;
        Ok(InnerSolution {
            info: info_of(&out.w)?,
            dual: out.upper - lambda * target,
            omega: out.w,
        })
    };

    // unconstrained maximizer: greedy on every context
    let mut lo = inner(0.0, &mut iterations)?;
    let mut lo_lambda = 0.0;
    let mut best_dual = lo.dual;
    let (hi, hi_lambda) = if lo.info >= target {
        (None, 0.0)
    } else {
        let mut lambda = (inst.b_bound() * inst.l_bound() * z).max(f64::MIN_POSITIVE);
        let mut hi = None;
        for _ in 0..200 {
            let s = inner(lambda, &mut iterations)?;
            best_dual = best_dual.min(s.dual);
            if s.info >= target {
                hi = Some(s);
                break;
            }
            lo = s;
            lo_lambda = lambda;
            lambda *= 2.0;
        }
        match hi {
            Some(h) => (Some(h), lambda),
            // the multiplier blew up: fall back on the pure-exploration policy
            None => (None, f64::INFINITY),
        }
    };

    let (mut hi, mut hi_lambda) = (hi, hi_lambda);
    if let Some(h) = hi.as_mut() {
        for _ in 0..MULTIPLIER_BISECTIONS {
            let mid = 0.5 * (lo_lambda + hi_lambda);
            if !(mid > lo_lambda && mid < hi_lambda) {
                break;
            }
            let s = inner(mid, &mut iterations)?;
            best_dual = best_dual.min(s.dual);
            if s.info >= target {
                *h = s;
                hi_lambda = mid;
            } else {
                lo = s;
                lo_lambda = mid;
            }
            if hi_lambda - lo_lambda <= tol * hi_lambda {
                break;
            }
        }
    }

    let feasible_end = match &hi {
        Some(h) => h.omega.clone(),
        None if lo.info >= target => lo.omega.clone(),
        None => pe.omega.table().to_vec(),
    };
    let omega = best_on_segment(&feasible_end, &lo.omega, target, tol, &info_of)?;
    let policy = Policy::from_weights(nx, na, omega)?;
    let f = model.objective_f(&policy)?;
    let info = model.information(&policy)?.value;
    let lambda = if lo.info >= target { 0.0 } else { hi_lambda };
    Ok(PzSolution {
        omega: policy,
        u_star: z * (mu_star - f),
        lambda,
        feasible: true,
        constraint: info - target,
        duality_gap: (z * (best_dual - f)).max(0.0),
        iterations,
    })
}

/// Largest `t` in `[0, 1]` such that `(1 − t) a + t b` stays feasible,
/// found by bisection on the true information; `a` is assumed feasible.
fn best_on_segment(
    a: &[f64],
    b: &[f64],
    target: f64,
    tol: f64,
    info_of: &impl Fn(&[f64]) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mix = |t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect() };
    if info_of(b)? >= target {
        return Ok(b.to_vec());
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if info_of(&mix(mid))? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * 1e-3 {
            break;
        }
    }
    Ok(mix(lo))
}
