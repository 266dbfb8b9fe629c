//! Comparison agents sharing the least-squares estimator: LinUCB, linear
//! Thompson sampling, greedy and uniform.

use rand::{Rng, RngCore};

use crate::agent::{Agent, Decision};
use crate::error::{invalid, Result};
use crate::estimator::{default_nu, EstimatorState};
use crate::model::{argmax_lowest, BanditInstance, Cell};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    LinUcb,
    LinTs,
    Greedy,
    Uniform,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LinUcb => "linucb",
            Self::LinTs => "lints",
            Self::Greedy => "greedy",
            Self::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Baseline {
    kind: BaselineKind,
    estimator: EstimatorState,
    delta: f64,
    v_scale: f64,
    sigma: f64,
    b_bound: f64,
}

impl Baseline {
    /// Baseline with `delta = 1/horizon` and `v_scale = 1`.
    pub fn new(inst: &BanditInstance, kind: BaselineKind, horizon: u64) -> Result<Self> {
        if horizon < 2 {
            return Err(invalid(format!("horizon must be at least 2, got {horizon}")));
        }
        Self::with_params(inst, kind, 1.0 / horizon as f64, 1.0)
    }

    pub fn with_params(inst: &BanditInstance, kind: BaselineKind, delta: f64, v_scale: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(v_scale >= 0.0) || !v_scale.is_finite() {
            return Err(invalid(format!("v_scale must be nonnegative, got {v_scale}")));
        }
        Ok(Self {
            kind,
            estimator: EstimatorState::new(inst.dim(), inst.n_contexts(), default_nu(inst))?,
            delta,
            v_scale,
            sigma: inst.sigma(),
            b_bound: inst.b_bound(),
        })
    }

    /// Overrides the norm bound used in the LinUCB radius.
    pub fn with_b_bound(mut self, b: f64) -> Self {
        self.b_bound = b;
        self
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    /// `sigma sqrt(2 log(det(V)^{1/2} det(nu I)^{-1/2} / delta)) + sqrt(nu) B`.
    pub fn ucb_radius(&self) -> f64 {
        let design = self.estimator.design();
        let nu = self.estimator.nu();
        let half_log_ratio = 0.5 * (design.log_det() - design.dim() as f64 * nu.ln());
        let inner = (half_log_ratio - self.delta.ln()).max(0.0);
        self.sigma * (2.0 * inner).sqrt() + nu.sqrt() * self.b_bound
    }

    /// Optimistic index of every arm in `context`.
    pub fn ucb_indices(&self, inst: &BanditInstance, context: usize) -> Vec<f64> {
        let r = self.ucb_radius();
        let theta = self.estimator.theta_hat();
        let design = self.estimator.design();
        (0..inst.n_arms())
            .map(|a| {
                let phi = inst.feature(Cell::new(context, a));
                inst.mean_reward(theta, Cell::new(context, a)) + r * design.quad_form_inv(phi).sqrt()
            })
            .collect()
    }

    fn greedy_arm(&self, inst: &BanditInstance, theta: &[f64], context: usize) -> usize {
        inst.best_arm(theta, context).0
    }
}

impl Agent for Baseline {
    fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn act(&mut self, inst: &BanditInstance, context: usize, rng: &mut dyn RngCore) -> Result<Decision> {
        if context >= inst.n_contexts() {
            return Err(invalid(format!("context {context} out of range")));
        }
        let (arm, explored) = match self.kind {
            BaselineKind::LinUcb => (argmax_lowest(&self.ucb_indices(inst, context)).0, false),
            BaselineKind::LinTs => {
                let draw = self.estimator.design().sample_gaussian(
                    self.estimator.theta_hat(),
                    self.v_scale * self.sigma,
                    rng,
                )?;
                (self.greedy_arm(inst, &draw, context), false)
            }
            BaselineKind::Greedy => (self.greedy_arm(inst, self.estimator.theta_hat(), context), false),
            BaselineKind::Uniform => (rng.random_range(0..inst.n_arms()), true),
        };
        Ok(Decision { arm, explored, phase: 0 })
    }

    fn learn(&mut self, inst: &BanditInstance, context: usize, arm: usize, reward: f64) -> Result<()> {
        if context >= inst.n_contexts() || arm >= inst.n_arms() {
            return Err(invalid(format!("cell ({context}, {arm}) out of range")));
        }
        self.estimator.observe(context, inst.feature(Cell::new(context, arm)), reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::toy_two_context;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> BanditInstance {
        toy_two_context(0.1, 0.5, 0.5).unwrap()
    }

    #[test]
    fn linucb_initial_choice() {
        let inst = toy();
        let mut agent = Baseline::new(&inst, BaselineKind::LinUcb, 1000).unwrap();
        let expected = 0.5 * (2.0 * 1000f64.ln()).sqrt() + inst.b_bound();
        assert_abs_diff_eq!(agent.ucb_radius(), expected, epsilon = 1e-12);
        let idx = agent.ucb_indices(&inst, 0);
        assert_abs_diff_eq!(idx[0], idx[1], epsilon = 1e-12);
        assert!(idx[2] < idx[0]);
        let d = agent.act(&inst, 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(d.arm, 0);
    }

    #[test]
    fn bonus_shrinks_with_pulls() {
        let inst = toy();
        let mut agent = Baseline::new(&inst, BaselineKind::LinUcb, 1000).unwrap();
        let phi = inst.feature(Cell::new(0, 0)).to_vec();
        let mut prev = agent.estimator().design().quad_form_inv(&phi);
        for _ in 0..100 {
            agent.learn(&inst, 0, 0, 1.0).unwrap();
            let now = agent.estimator().design().quad_form_inv(&phi);
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn degenerate_radius_is_greedy() {
        let inst = toy().with_sigma(0.0).unwrap();
        let mut ucb = Baseline::with_params(&inst, BaselineKind::LinUcb, 0.999, 1.0)
            .unwrap()
            .with_b_bound(0.0);
        let mut greedy = Baseline::new(&inst, BaselineKind::Greedy, 1000).unwrap();
        assert_eq!(ucb.ucb_radius(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut env = ChaCha8Rng::seed_from_u64(4);
        for c in inst.cells().collect::<Vec<_>>() {
            let r = inst.mean_reward(inst.theta_star(), c);
            ucb.learn(&inst, c.context, c.arm, r).unwrap();
            greedy.learn(&inst, c.context, c.arm, r).unwrap();
        }
        for _ in 0..500 {
            let x = crate::envs::sample_context(&inst, &mut env);
            let a = greedy.act(&inst, x, &mut rng).unwrap().arm;
            assert_eq!(ucb.act(&inst, x, &mut rng).unwrap().arm, a);
            let r = inst.mean_reward(inst.theta_star(), Cell::new(x, a));
            ucb.learn(&inst, x, a, r).unwrap();
            greedy.learn(&inst, x, a, r).unwrap();
        }
    }

    #[test]
    fn lints_without_inflation_is_greedy() {
        let inst = toy();
        let mut ts = Baseline::with_params(&inst, BaselineKind::LinTs, 0.01, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for c in inst.cells().collect::<Vec<_>>() {
            ts.learn(&inst, c.context, c.arm, 3.0 * c.arm as f64 - c.context as f64).unwrap();
        }
        for x in 0..2 {
            let greedy = inst.best_arm(ts.estimator().theta_hat(), x).0;
            assert_eq!(ts.act(&inst, x, &mut rng).unwrap().arm, greedy);
        }
    }

    #[test]
    fn lints_is_reproducible() {
        let inst = toy();
        let run = || {
            let mut ts = Baseline::new(&inst, BaselineKind::LinTs, 1000).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            (0..200)
                .map(|t| {
                    let x = t % 2;
                    let a = ts.act(&inst, x, &mut rng).unwrap().arm;
                    ts.learn(&inst, x, a, 0.5).unwrap();
                    a
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn lints_finds_best_arm_noiselessly() {
        let inst = BanditInstance::new(
            1,
            3,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.6, 0.6],
            vec![1.0, 0.5],
            0.2,
            vec![1.0],
        )
        .unwrap();
        let mut ts = Baseline::new(&inst, BaselineKind::LinTs, 5000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut best = 0;
        for t in 0..5000 {
            let a = ts.act(&inst, 0, &mut rng).unwrap().arm;
            if t >= 4000 && a == inst.optimal_arms()[0] {
                best += 1;
            }
            ts.learn(&inst, 0, a, inst.mean_reward(inst.theta_star(), Cell::new(0, a))).unwrap();
        }
        assert!(best >= 950, "best arm played {best} times");
    }

    #[test]
    fn learn_updates_estimator_only() {
        let inst = toy();
        let mut b = Baseline::new(&inst, BaselineKind::Greedy, 100).unwrap();
        for t in 0..10 {
            b.learn(&inst, 1, 2, 0.3).unwrap();
            assert_eq!(b.estimator().t(), t + 1);
            assert_eq!(b.kind(), BaselineKind::Greedy);
        }
        assert!(b.learn(&inst, 2, 0, 0.0).is_err());
        assert!(Baseline::with_params(&inst, BaselineKind::LinUcb, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn ucb_equivariant_under_arm_relabeling(
            seed in 0u64..1000,
            perm_seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let na = 4;
            let features: Vec<f64> = (0..na * 3).map(|_| rng.random::<f64>()).collect();
            let theta = vec![0.9, 0.4, 0.1];
            let inst = match BanditInstance::new(1, na, 3, features.clone(), theta.clone(), 1.0, vec![1.0]) {
                Ok(i) => i,
                Err(_) => return Ok(()),
            };
            let mut perm: Vec<usize> = (0..na).collect();
            let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..na).rev() {
                perm.swap(i, prng.random_range(0..=i));
            }
            let permuted: Vec<f64> = perm.iter().flat_map(|&a| features[a * 3..a * 3 + 3].to_vec()).collect();
            let pinst = BanditInstance::new(1, na, 3, permuted, theta, 1.0, vec![1.0]).unwrap();
            let mut a = Baseline::new(&inst, BaselineKind::LinUcb, 100).unwrap();
            let mut b = Baseline::new(&pinst, BaselineKind::LinUcb, 100).unwrap();
            for k in 0..5 {
                let arm = k % na;
                a.learn(&inst, 0, arm, 0.1 * k as f64).unwrap();
                let parm = perm.iter().position(|&p| p == arm).unwrap();
                b.learn(&pinst, 0, parm, 0.1 * k as f64).unwrap();
            }
            let ia = a.ucb_indices(&inst, 0);
            let ib = b.ucb_indices(&pinst, 0);
            for (j, &orig) in perm.iter().enumerate() {
                prop_assert!((ib[j] - ia[orig]).abs() <= 1e-10);
            }
        }
    }
}
