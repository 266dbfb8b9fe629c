//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solid_bandit::envs::{self, toy_two_context, EnvConfig};
use solid_bandit::estimator::confidence_coverage_check;
use solid_bandit::harness::{run_grid, ExperimentConfig, stream_rng, write_outputs, GridResult};
use solid_bandit::lowerbound::{
    glrt_infimum, pure_exploration_value, solve_p_offline, solve_pz_offline, OptimisticModel,
};
use solid_bandit::solid::{Solid, SolidConfig};
use solid_bandit::{Agent, BanditInstance, Cell, PdMatrix, Policy};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn random_instance(rng: &mut ChaCha8Rng) -> BanditInstance {
    loop {
        let d = rng.random_range(1..=3);
        let nx = rng.random_range(1..=2);
        let na = rng.random_range(2..=4);
        let features = (0..nx * na * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..nx).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let rho = w.iter().map(|v| v / total).collect();
        if let Ok(inst) = BanditInstance::new(nx, na, d, features, theta, 1.0, rho) {
            return inst;
        }
    }
}

fn random_design(d: usize, rng: &mut ChaCha8Rng) -> PdMatrix {
    let mut v = PdMatrix::scaled_identity(d, rng.random_range(0.5..2.0)).unwrap();
    for _ in 0..rng.random_range(0..10) {
        let phi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        v.rank_one_update(&phi).unwrap();
    }
    v
}

/// `min ‖θ − θ'‖²_V  s.t.  uᵀθ' = 0`, through the KKT system.
fn projection_oracle(v: &DMatrix<f64>, theta: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let d = theta.len();
    let mut kkt = DMatrix::zeros(d + 1, d + 1);
    kkt.view_mut((0, 0), (d, d)).copy_from(v);
    for i in 0..d {
        kkt[(i, d)] = u[i];
        kkt[(d, i)] = u[i];
    }
    let mut rhs = DVector::zeros(d + 1);
    rhs.rows_mut(0, d).copy_from(&(v * theta));
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    let diff = theta - sol.rows(0, d);
    (diff.transpose() * v * &diff)[(0, 0)]
}

/// Criteria 1 and 2 share their cases.
fn glrt_cases() -> (Outcome, Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_oracle, mut worst_tie, mut worst_value) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let d = inst.dim();
        let design = random_design(d, &mut rng);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = match glrt_infimum(&inst, &theta, &design, None) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let v = DMatrix::from_row_slice(d, d, design.mat());
        let th = DVector::from_column_slice(&theta);
        let mut oracle = f64::INFINITY;
        for x in 0..inst.n_contexts() {
            let (star, _) = inst.best_arm(&theta, x);
            for a in (0..inst.n_arms()).filter(|&a| a != star) {
                let u: Vec<f64> = inst
                    .feature(Cell::new(x, a))
                    .iter()
                    .zip(inst.feature(Cell::new(x, star)))
                    .map(|(p, q)| p - q)
                    .collect();
                if u.iter().all(|&e| e == 0.0) {
                    continue;
                }
                oracle = oracle.min(projection_oracle(&v, &th, &DVector::from_vec(u)));
            }
        }
        worst_oracle = worst_oracle.max((r.value - oracle).abs() / oracle.abs().max(1e-300));
        let cell = r.argmin_cell;
        let star = inst.best_arm(&theta, cell.context).0;
        let tie = inst.mean_reward(&r.closest_theta, cell)
            - inst.mean_reward(&r.closest_theta, Cell::new(cell.context, star));
        worst_tie = worst_tie.max(tie.abs());
        let diff: Vec<f64> = theta.iter().zip(&r.closest_theta).map(|(a, b)| a - b).collect();
        worst_value = worst_value.max((design.mahalanobis_sq(&diff) - r.value).abs());
    }
    (
        outcome(worst_oracle <= 1e-8, format!("max relative error {worst_oracle:.2e}")),
        outcome(
            worst_tie <= 1e-8 && worst_value <= 1e-8,
            format!("max tie gap {worst_tie:.2e}, max value mismatch {worst_value:.2e}"),
        ),
    )
}

fn subgradient_ratio_test() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut tested, mut worst) = (0usize, 0.0f64);
    let mut attempts = 0;
    while tested < 50 && attempts < 10_000 {
        attempts += 1;
        let inst = random_instance(&mut rng);
        let (nx, na, d) = (inst.n_contexts(), inst.n_arms(), inst.dim());
        let design = random_design(d, &mut rng);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let gamma = rng.random_range(0.0..2.0);
        let model = match OptimisticModel::new(&inst, inst.rho().to_vec(), theta, &design, gamma) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let weights: Vec<f64> = (0..nx * na).map(|_| rng.random_range(0.2..1.0)).collect();
        let omega = Policy::from_weights(nx, na, weights).unwrap();
        let lambda = rng.random_range(0.1..5.0);
        let z = rng.random_range(1.0..10.0);
        // a direction tangent to the product of simplices, and one in λ
        let mut dir: Vec<f64> = (0..nx * na).map(|_| rng.random_range(-1.0..1.0)).collect();
        for row in dir.chunks_mut(na) {
            let mean = row.iter().sum::<f64>() / na as f64;
            row.iter_mut().for_each(|v| *v -= mean);
        }
        let dl = rng.random_range(-1.0..1.0);
        let eval = match model.lagrangian(&omega, lambda, z, false) {
            Ok(e) => e,
            Err(_) => continue,
        };
        let h_at = |eps: f64| -> Option<(f64, Cell)> {
            let table: Vec<f64> = omega.table().iter().zip(&dir).map(|(w, v)| w + eps * v).collect();
            let p = Policy::from_table(nx, na, table).ok()?;
            let e = model.lagrangian(&p, lambda + eps * dl, z, false).ok()?;
            Some((e.h_value, e.argmin_cell))
        };
        let analytic: f64 =
            eval.subgrad_omega.iter().zip(&dir).map(|(q, v)| q * v).sum::<f64>() + dl * eval.subgrad_lambda;
        let mut unique = true;
        let mut err = 0.0f64;
        for eps in [1e-4, 1e-5] {
            let (Some((hp, cp)), Some((hm, cm))) = (h_at(eps), h_at(-eps)) else {
                unique = false;
                break;
            };
            if cp != eval.argmin_cell || cm != eval.argmin_cell {
                unique = false;
                break;
            }
            let fd = (hp - hm) / (2.0 * eps);
            err = err.max((fd - analytic).abs() / analytic.abs().max(1.0));
        }
        if !unique {
            continue;
        }
        tested += 1;
        worst = worst.max(err);
    }
    outcome(
        tested == 50 && worst <= 1e-4,
        format!("{tested} points, max relative directional error {worst:.2e}"),
    )
}

fn two_arm_threshold() -> Outcome {
    let inst =
        BanditInstance::new(1, 2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0], 1.0, vec![1.0]).unwrap();
    let pe = pure_exploration_value(&inst, 200_000, 1e-8).unwrap();
    let low = solve_pz_offline(&inst, 6.0, 200_000, 1e-8).unwrap();
    let high = solve_pz_offline(&inst, 16.0, 200_000, 1e-8).unwrap();
    outcome(
        (pe.z_lower - 8.0).abs() <= 0.05 && !low.feasible && high.feasible,
        format!(
            "z_lower = {:.6}, feasible(6) = {}, feasible(16) = {}",
            pe.z_lower, low.feasible, high.feasible
        ),
    )
}

fn envelope() -> Outcome {
    let inst = toy_two_context(0.1, 0.5, 0.5).unwrap();
    let sol = solve_p_offline(&inst, 200_000, 1e-9).unwrap();
    let (v_star, zl) = (sol.v_star, sol.z_lower);
    let bl = inst.b_bound() * inst.l_bound();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut u = Vec::new();
    for m in [2.0, 4.0, 8.0, 16.0] {
        let z = m * zl;
        let s = solve_pz_offline(&inst, z, 100_000, 1e-6).unwrap();
        let bound = v_star + 2.0 * z * bl * zl / (z - zl);
        ok &= s.feasible && s.u_star <= bound;
        parts.push(format!("u*({m}z) = {:.4} <= {:.2}", s.u_star, bound));
        u.push(s.u_star);
    }
    let converging = (u[3] - v_star).abs() <= (u[0] - v_star).abs();
    outcome(
        ok && converging,
        format!("v* = {v_star:.4}, z_lower = {zl:.4}; {}", parts.join(", ")),
    )
}

fn coverage() -> Outcome {
    let inst = toy_two_context(0.1, 0.5, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let c = confidence_coverage_check(&inst, 2000, 0.05, 200, &mut rng).unwrap();
    outcome(c >= 0.90, format!("coverage {c:.3}"))
}

/// Counts `(run, checkpoint)` pairs where some cell's exploration count
/// strays from its expected value by more than `sqrt(S/2 ln(S² |X||A|))`.
fn tracking_violations(restrict: bool) -> (usize, usize) {
    let inst = toy_two_context(0.1, 0.5, 0.5).unwrap();
    let (nx, na) = (inst.n_contexts(), inst.n_arms());
    let checkpoints = [1_000usize, 10_000];
    let (mut pairs, mut violations) = (0usize, 0usize);
    for seed in 0..50u64 {
        let config = SolidConfig { glrt_restrict_last_context: restrict, ..SolidConfig::default() };
        let mut agent = Solid::new(&inst, config, 10_000).unwrap();
        let mut env_rng = stream_rng(seed, 1);
        let mut agent_rng = stream_rng(seed, 2);
        let mut counts = vec![0.0; nx * na];
        let mut expected = vec![0.0; nx * na];
        let mut s = 0.0f64;
        for t in 1..=10_000usize {
            let x = envs::sample_context(&inst, &mut env_rng);
            let before = agent.omega().clone();
            let dec = agent.act(&inst, x, &mut agent_rng).unwrap();
            if dec.explored {
                s += 1.0;
                counts[x * na + dec.arm] += 1.0;
                for c in inst.cells() {
                    expected[c.context * na + c.arm] += inst.rho()[c.context] * before.get(c);
                }
            }
            let cell = Cell::new(x, dec.arm);
            agent.learn(&inst, x, dec.arm, envs::reward(&inst, cell, &mut env_rng)).unwrap();
            if checkpoints.contains(&t) {
                pairs += 1;
                let radius = if s > 0.0 { (s / 2.0 * (s * s * (nx * na) as f64).ln()).sqrt() } else { 0.0 };
                if counts.iter().zip(&expected).any(|(n, e)| (n - e).abs() > radius) {
                    violations += 1;
                }
            }
        }
    }
    (violations, pairs)
}

/// The bound assumes the explore decision does not look at the current
/// context, so it is checked with the test over all contexts; the
/// last-context variant is reported alongside.
fn tracking() -> Outcome {
    let (violations, pairs) = tracking_violations(false);
    let (restricted, _) = tracking_violations(true);
    outcome(
        violations as f64 <= 0.05 * pairs as f64,
        format!("{violations}/{pairs} violating pairs ({restricted}/{pairs} with the last-context test)"),
    )
}

fn grid(env: EnvConfig, n: u64, runs: usize, algos: &[&str]) -> GridResult {
    let config = ExperimentConfig {
        n,
        runs,
        seed: 0,
        algos: algos.iter().map(|s| s.to_string()).collect(),
        env,
        ..ExperimentConfig::default()
    };
    run_grid(&config, threads()).unwrap()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn regret_ordering() -> Outcome {
    let n = 50_000u64;
    let g = grid(EnvConfig::toy(0.1, 0.5, 0.5), n, 20, &["solid", "linucb", "lints"]);
    let start = (n / 10) as usize - 1;
    let finals: Vec<f64> = g.traces.iter().map(|t| mean(t.iter().map(|r| r.final_regret()))).collect();
    let slopes: Vec<f64> = g
        .traces
        .iter()
        .map(|t| mean(t.iter().map(|r| r.final_regret() - r.cumulative[start])))
        .collect();
    outcome(
        finals[0] < finals[1] && finals[0] < finals[2] && slopes[0] < slopes[1],
        format!(
            "final solid {:.1}, linucb {:.1}, lints {:.1}; last-decade increment solid {:.1}, linucb {:.1}",
            finals[0], finals[1], finals[2], slopes[0], slopes[1]
        ),
    )
}

fn unbalanced_contexts() -> Outcome {
    let g = grid(EnvConfig::toy(0.1, 0.99, 0.5), 50_000, 20, &["solid", "linucb", "lints"]);
    let wins = (0..20)
        .filter(|&i| {
            let s = g.traces[0][i].final_regret();
            s < g.traces[1][i].final_regret() && s < g.traces[2][i].final_regret()
        })
        .count();
    let finals: Vec<f64> = g.traces.iter().map(|t| mean(t.iter().map(|r| r.final_regret()))).collect();
    outcome(
        wins >= 15,
        format!(
            "solid wins {wins}/20 seeds; mean final solid {:.1}, linucb {:.1}, lints {:.1}",
            finals[0], finals[1], finals[2]
        ),
    )
}

fn arm_count() -> Outcome {
    let finals: Vec<f64> = [4usize, 16]
        .iter()
        .map(|&na| {
            let g = grid(EnvConfig::random(8, 4, na, 0.5), 20_000, 10, &["solid"]);
            mean(g.traces[0].iter().map(|r| r.final_regret()))
        })
        .collect();
    let ratio = finals[1] / finals[0];
    outcome(
        ratio <= 2.5,
        format!("mean final |A|=4: {:.1}, |A|=16: {:.1}, ratio {ratio:.2}", finals[0], finals[1]),
    )
}

fn simplex_fuzz() -> Outcome {
    let inst = toy_two_context(0.1, 0.5, 0.5).unwrap();
    let lambda_max = 25.0;
    let config = SolidConfig { lambda_max, ..SolidConfig::default() };
    let mut agent = Solid::new(&inst, config, 1_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let (mut worst_sum, mut negative, mut out_of_range) = (0.0f64, 0usize, 0usize);
    for _ in 0..1_000_000 {
        let scale = 10f64.powi(rng.random_range(-3..4));
        let q: Vec<f64> = (0..6).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let g = scale * rng.random_range(-1.0..1.0);
        agent.primal_dual_update(&q, g).unwrap();
        for x in 0..2 {
            let row = agent.omega().row(x);
            worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
            negative += row.iter().filter(|&&w| w.is_nan() || w < 0.0).count();
        }
        if !(agent.lambda() >= 0.0 && agent.lambda() <= lambda_max) {
            out_of_range += 1;
        }
    }
    outcome(
        worst_sum <= 1e-12 && negative == 0 && out_of_range == 0,
        format!("max row-sum error {worst_sum:.1e}, negative entries {negative}, lambda escapes {out_of_range}"),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for env in [EnvConfig::toy(0.1, 0.5, 0.5), EnvConfig::random(4, 2, 3, 0.5)] {
        let config = ExperimentConfig {
            n: 2_000,
            runs: 4,
            seed: 7,
            algos: ["solid", "linucb", "lints", "greedy", "uniform"].iter().map(|s| s.to_string()).collect(),
            env,
            ..ExperimentConfig::default()
        };
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        for (dir, t) in dirs.iter().zip([1usize, 1, 4]) {
            let g = run_grid(&config, t).unwrap();
            write_outputs(&config, &g, dir.path()).unwrap();
        }
        let trees: Vec<_> = dirs.iter().map(|d| read_tree(d.path())).collect();
        let same = trees[0] == trees[1] && trees[0] == trees[2];
        ok &= same && !trees[0].is_empty();
        details.push(format!("{}: {} files identical = {same}", config.env.label(), trees[0].len()));
    }
    outcome(ok, details.join("; "))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, start: Instant, o: Outcome| {
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!(
            "criterion {id:>2} {status} {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
    };
    let t = Instant::now();
    let (c1, c2) = glrt_cases();
    report(1, "glrt matches least-squares oracle", t, c1);
    report(2, "closest alternative lies on the boundary", t, c2);
    let t = Instant::now();
    report(3, "lagrangian subgradient", t, subgradient_ratio_test());
    let t = Instant::now();
    report(4, "two-arm feasibility threshold", t, two_arm_threshold());
    let t = Instant::now();
    report(5, "budget envelope on the toy problem", t, envelope());
    let t = Instant::now();
    report(6, "confidence coverage", t, coverage());
    let t = Instant::now();
    report(7, "tracking concentration", t, tracking());
    let t = Instant::now();
    report(8, "toy regret ordering", t, regret_ordering());
    let t = Instant::now();
    report(9, "unbalanced contexts", t, unbalanced_contexts());
    let t = Instant::now();
    report(10, "arm-count insensitivity", t, arm_count());
    let t = Instant::now();
    report(11, "simplex and clip invariants", t, simplex_fuzz());
    let t = Instant::now();
    report(12, "serial and parallel runs agree", t, determinism());
    println!("{} of 12 criteria passed", 12 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
