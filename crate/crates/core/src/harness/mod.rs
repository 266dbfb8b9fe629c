//! Seeded replications, pseudo-regret traces, Student-t aggregation and CSV
//! output.
//!
//! Replication `i` of an experiment with base seed `s` uses seed `s + i`.
//! From that seed three independent ChaCha streams are derived: one builds
//! the instance (random problems only), one draws contexts and rewards, and
//! one is handed to the agent. The environment stream consumes exactly one
//! uniform and one normal per step, so every algorithm sees the same context
//! sequence for a given seed.

mod cli;
mod config;

pub use cli::{cli_run, Cli};
pub use config::{ExperimentConfig, LambdaMax, SolidSettings, ALGORITHMS};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::Agent;
use crate::baselines::{Baseline, BaselineKind};
use crate::envs::{self, EnvConfig};
use crate::error::{invalid, Error, Result};
use crate::model::{fmt_real, BanditInstance, Cell};
use crate::solid::{oracle_lambda_max, Solid};

const INSTANCE_STREAM: u64 = 0;
const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;

/// Seeded generator on one of the per-replication streams.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pseudo-regret of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    pub per_step_regret: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub explored: Vec<bool>,
    pub phase: Vec<usize>,
}

impl RegretTrace {
    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// `step,cum_regret,explored,phase` with 1-based steps.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 40);
        out.push_str("step,cum_regret,explored,phase\n");
        for t in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                t + 1,
                fmt_real(self.cumulative[t]),
                u8::from(self.explored[t]),
                self.phase[t]
            );
        }
        out
    }
}

/// Runs `agent` for `n` steps on `inst`. Errors carry the seed and step.
pub fn simulate(
    inst: &BanditInstance,
    agent: &mut dyn Agent,
    n: u64,
    seed: u64,
    env_rng: &mut ChaCha8Rng,
    agent_rng: &mut ChaCha8Rng,
) -> Result<RegretTrace> {
    let n = n as usize;
    let mut trace = RegretTrace {
        seed,
        per_step_regret: Vec::with_capacity(n),
        cumulative: Vec::with_capacity(n),
        explored: Vec::with_capacity(n),
        phase: Vec::with_capacity(n),
    };
    let mut total = 0.0;
    for step in 0..n {
        let wrap = |e: Error| Error::Run { seed, step: step + 1, source: Box::new(e) };
        let x = envs::sample_context(inst, env_rng);
        let d = agent.act(inst, x, agent_rng).map_err(wrap)?;
        if d.arm >= inst.n_arms() {
            return Err(wrap(invalid(format!("agent returned arm {}", d.arm))));
        }
        let cell = Cell::new(x, d.arm);
        let y = envs::reward(inst, cell, env_rng);
        agent.learn(inst, x, d.arm, y).map_err(wrap)?;
        let r = inst.true_gap(cell);
        total += r;
        trace.per_step_regret.push(r);
        trace.cumulative.push(total);
        trace.explored.push(d.explored);
        trace.phase.push(d.phase);
    }
    Ok(trace)
}

/// Agent choice with its algorithm-specific settings.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentSpec {
    Solid(SolidSettings),
    LinUcb { delta: Option<f64> },
    LinTs { v_scale: f64 },
    Greedy,
    Uniform,
}

impl AgentSpec {
    /// Looks `name` up among [`ALGORITHMS`] with the settings of `config`.
    pub fn from_config(name: &str, config: &ExperimentConfig) -> Result<Self> {
        Ok(match name {
            "solid" => Self::Solid(config.solid.clone()),
            "linucb" => Self::LinUcb { delta: config.linucb_delta },
            "lints" => Self::LinTs { v_scale: config.lints_v_scale },
            "greedy" => Self::Greedy,
            "uniform" => Self::Uniform,
            other => return Err(Error::Config(format!("unknown algorithm `{other}`"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Solid(_) => "solid",
            Self::LinUcb { .. } => "linucb",
            Self::LinTs { .. } => "lints",
            Self::Greedy => "greedy",
            Self::Uniform => "uniform",
        }
    }

    pub fn build(&self, inst: &BanditInstance, env: &EnvConfig, n: u64) -> Result<Box<dyn Agent>> {
        Ok(match self {
            Self::Solid(settings) => {
                let mut config = settings.resolve(env);
                if settings.lambda_max == LambdaMax::Oracle {
                    config.lambda_max = oracle_lambda_max(inst)?.max(config.lambda_init);
                }
                Box::new(Solid::new(inst, config, n)?)
            }
            Self::LinUcb { delta } => {
                let delta = delta.unwrap_or(1.0 / n as f64);
                Box::new(Baseline::with_params(inst, BaselineKind::LinUcb, delta, 1.0)?)
            }
            Self::LinTs { v_scale } => {
                Box::new(Baseline::with_params(inst, BaselineKind::LinTs, 1.0 / n as f64, *v_scale)?)
            }
            Self::Greedy => Box::new(Baseline::new(inst, BaselineKind::Greedy, n)?),
            Self::Uniform => Box::new(Baseline::new(inst, BaselineKind::Uniform, n)?),
        })
    }
}

/// The instance used by replication `seed`.
pub fn build_instance(env: &EnvConfig, seed: u64) -> Result<BanditInstance> {
    let mut rng = stream_rng(env.instance_seed.unwrap_or(seed), INSTANCE_STREAM);
    env.build(&mut rng)
}

/// One replication: builds the instance and the agent, then simulates.
pub fn run_episode(spec: &AgentSpec, env: &EnvConfig, n: u64, seed: u64) -> Result<RegretTrace> {
    if n < 3 {
        return Err(invalid(format!("horizon must be at least 3, got {n}")));
    }
    let inst = build_instance(env, seed)?;
    let mut agent = spec
        .build(&inst, env, n)
        .map_err(|e| Error::Run { seed, step: 0, source: Box::new(e) })?;
    simulate(
        &inst,
        agent.as_mut(),
        n,
        seed,
        &mut stream_rng(seed, ENV_STREAM),
        &mut stream_rng(seed, AGENT_STREAM),
    )
}

/// Mean cumulative regret and Student-t half-widths at checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    /// 1-based step indices.
    pub checkpoints: Vec<usize>,
    pub mean: Vec<f64>,
    /// Empty when only one run is available.
    pub ci_half_width: Vec<f64>,
    pub n_runs: usize,
    pub confidence: f64,
}

impl AggregateResult {
    /// `step,mean,ci_half_width`; the last column is left empty without a
    /// half-width.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean,ci_half_width\n");
        for (i, (&s, &m)) in self.checkpoints.iter().zip(&self.mean).enumerate() {
            let hw = self.ci_half_width.get(i).map(|&h| fmt_real(h)).unwrap_or_default();
            let _ = writeln!(out, "{s},{},{hw}", fmt_real(m));
        }
        out
    }
}

/// About `count` log-spaced steps in `1..=n`, always ending at `n`.
pub fn log_checkpoints(n: usize, count: usize) -> Vec<usize> {
    if n == 0 || count == 0 {
        return Vec::new();
    }
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let frac = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
            ((n as f64).powf(frac).round() as usize).clamp(1, n)
        })
        .collect();
    out.push(n);
    out.sort_unstable();
    out.dedup();
    out
}

fn checkpoint_values(cumulative: &[&[f64]], checkpoints: &[usize]) -> Result<Vec<Vec<f64>>> {
    let len = cumulative.first().map(|c| c.len()).unwrap_or(0);
    if cumulative.iter().any(|c| c.len() != len) {
        return Err(invalid("traces have different lengths"));
    }
    if checkpoints.iter().any(|&s| s == 0 || s > len) {
        return Err(invalid("checkpoint outside the trace"));
    }
    Ok(checkpoints
        .iter()
        .map(|&s| cumulative.iter().map(|c| c[s - 1]).collect())
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-checkpoint mean and `t_{(1+conf)/2, m-1} s / sqrt(m)` over at least
/// two cumulative-regret curves.
pub fn aggregate(cumulative: &[&[f64]], checkpoints: &[usize], confidence: f64) -> Result<AggregateResult> {
    let m = cumulative.len();
    if m < 2 {
        return Err(invalid("need at least two traces for a confidence interval"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let values = checkpoint_values(cumulative, checkpoints)?;
    let t = StudentsT::new(0.0, 1.0, (m - 1) as f64)
        .map_err(|e| Error::Numeric(e.to_string()))?
        .inverse_cdf(0.5 * (1.0 + confidence));
    let mut means = Vec::with_capacity(values.len());
    let mut half = Vec::with_capacity(values.len());
    for v in &values {
        let mu = mean(v);
        let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1) as f64;
        means.push(mu);
        half.push(t * var.sqrt() / (m as f64).sqrt());
    }
    Ok(AggregateResult {
        checkpoints: checkpoints.to_vec(),
        mean: means,
        ci_half_width: half,
        n_runs: m,
        confidence,
    })
}

/// [`aggregate`], or plain means without half-widths for a single run.
pub fn summarize(cumulative: &[&[f64]], checkpoints: &[usize], confidence: f64) -> Result<AggregateResult> {
    if cumulative.len() == 1 {
        let values = checkpoint_values(cumulative, checkpoints)?;
        return Ok(AggregateResult {
            checkpoints: checkpoints.to_vec(),
            mean: values.iter().map(|v| v[0]).collect(),
            ci_half_width: Vec::new(),
            n_runs: 1,
            confidence,
        });
    }
    aggregate(cumulative, checkpoints, confidence)
}

/// Traces of every `(algorithm, replication)` pair, ordered by algorithm
/// then seed.
#[derive(Debug, Clone)]
pub struct GridResult {
    pub algos: Vec<String>,
    pub seeds: Vec<u64>,
    /// `traces[algo][run]`.
    pub traces: Vec<Vec<RegretTrace>>,
}

/// Runs every algorithm of `config` on `config.runs` replications,
/// distributing replications over `threads` workers. The result does not
/// depend on `threads`.
pub fn run_grid(config: &ExperimentConfig, threads: usize) -> Result<GridResult> {
    config.validate()?;
    let seeds: Vec<u64> = (0..config.runs as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let specs = config
        .algos
        .iter()
        .map(|a| AgentSpec::from_config(a, config))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|a| seeds.iter().map(move |&s| (a, s)))
        .collect();
    let run = |&(a, seed): &(usize, u64)| run_episode(&specs[a], &config.env, config.n, seed);
    let flat: Vec<RegretTrace> = if threads <= 1 {
        jobs.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect::<Result<_>>())?
    };
    let mut iter = flat.into_iter();
    let traces = specs
        .iter()
        .map(|_| iter.by_ref().take(seeds.len()).collect())
        .collect();
    Ok(GridResult {
        algos: config.algos.clone(),
        seeds,
        traces,
    })
}

/// Writes one trace CSV per `(algorithm, seed)`, one aggregate CSV per
/// algorithm and the instance files. Returns the written paths in order.
pub fn write_outputs(config: &ExperimentConfig, grid: &GridResult, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let label = config.env.label();
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    let instance_seeds: Vec<u64> = match config.env.instance_seed {
        Some(s) => vec![s],
        None if config.env.kind == envs::EnvKind::Toy => vec![grid.seeds[0]],
        None => grid.seeds.clone(),
    };
    for &s in &instance_seeds {
        let inst = build_instance(&config.env, s)?;
        let name = match (config.env.kind, config.env.instance_seed) {
            (envs::EnvKind::Toy, _) => format!("{label}.instance"),
            (_, Some(_)) => format!("{label}_instance{s}.instance"),
            (_, None) => format!("{label}_seed{s}.instance"),
        };
        write(name, format!("{}{}", provenance(&config.env, s), inst.to_text()))?;
    }
    let checkpoints = log_checkpoints(config.n as usize, config.checkpoints);
    for (algo, traces) in grid.algos.iter().zip(&grid.traces) {
        for t in traces {
            write(format!("{algo}_{label}_seed{}.csv", t.seed), t.to_csv())?;
        }
        let curves: Vec<&[f64]> = traces.iter().map(|t| t.cumulative.as_slice()).collect();
        let agg = summarize(&curves, &checkpoints, config.confidence)?;
        write(format!("{algo}_{label}_aggregate.csv"), agg.to_csv())?;
    }
    Ok(written)
}

fn provenance(env: &EnvConfig, seed: u64) -> String {
    match env.kind {
        envs::EnvKind::Toy => format!("# generator: toy xi={} rho1={} sigma={}\n", env.xi, env.rho1, env.sigma),
        envs::EnvKind::Random => format!(
            "# generator: random d={} n_contexts={} n_arms={} sparsity={} sigma={} seed={} stream={}\n",
            env.d, env.n_contexts, env.n_arms, env.sparsity, env.sigma, seed, INSTANCE_STREAM
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn student_t_example() {
        let c = [1.0, 2.0, 3.0];
        let curves: Vec<&[f64]> = c.iter().map(std::slice::from_ref).collect();
        let agg = aggregate(&curves, &[1], 0.95).unwrap();
        assert_abs_diff_eq!(agg.mean[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(agg.ci_half_width[0], 4.302652729911275 / 3f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(agg.ci_half_width[0], 2.4843, epsilon = 1e-3);
    }

    #[test]
    fn identical_traces_have_zero_width() {
        let c = vec![0.5, 1.0, 2.0];
        let curves: Vec<&[f64]> = vec![&c, &c, &c];
        let agg = aggregate(&curves, &[1, 2, 3], 0.95).unwrap();
        assert!(agg.ci_half_width.iter().all(|&h| h == 0.0));
        assert!(aggregate(&curves[..1], &[1], 0.95).is_err());
        let short = vec![0.5];
        assert!(aggregate(&[&c, &short], &[1], 0.95).is_err());
    }

    #[test]
    fn half_width_halves_with_four_copies() {
        let base: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 * 0.37).sin() + 2.0]).collect();
        let curves: Vec<&[f64]> = base.iter().map(|v| v.as_slice()).collect();
        let quad: Vec<&[f64]> = curves.iter().cycle().take(400).copied().collect();
        let a = aggregate(&curves, &[1], 0.95).unwrap();
        let b = aggregate(&quad, &[1], 0.95).unwrap();
        assert!(a.ci_half_width[0] > 0.0);
        // same spread, four times as many runs; the t quantile moves slightly
        let ratio = b.ci_half_width[0] / a.ci_half_width[0];
        assert!((ratio - 0.5).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn checkpoints_are_log_spaced() {
        let c = log_checkpoints(100_000, 100);
        assert_eq!(c.first(), Some(&1));
        assert_eq!(c.last(), Some(&100_000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert!(c.len() > 60 && c.len() <= 101);
        assert_eq!(log_checkpoints(5, 100), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn uniform_regret_matches_expectation() {
        let env = EnvConfig::toy(0.1, 0.5, 0.5);
        let trace = run_episode(&AgentSpec::Uniform, &env, 100_000, 3).unwrap();
        let per_step = trace.final_regret() / 100_000.0;
        let expected = 0.5 * (0.0 + 1.0 + 0.1) / 3.0 + 0.5 * (0.2 + 0.0 + 0.1) / 3.0;
        assert_abs_diff_eq!(expected, 0.2333333333333333, epsilon = 1e-12);
        assert!((per_step - expected).abs() <= 0.01, "{per_step}");
        let prefix: f64 = trace.per_step_regret.iter().sum();
        assert_abs_diff_eq!(prefix, trace.final_regret(), epsilon = 1e-9);
        assert!(trace.cumulative.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn warm_greedy_has_no_regret() {
        let inst = envs::toy_two_context(0.1, 0.5, 0.0).unwrap();
        let mut agent = Baseline::new(&inst, BaselineKind::Greedy, 1000).unwrap();
        for c in inst.cells().collect::<Vec<_>>() {
            for _ in 0..50 {
                agent.learn(&inst, c.context, c.arm, inst.mean_reward(inst.theta_star(), c)).unwrap();
            }
        }
        let trace = simulate(&inst, &mut agent, 1000, 0, &mut stream_rng(0, 1), &mut stream_rng(0, 2)).unwrap();
        assert_eq!(trace.final_regret(), 0.0);
    }

    #[test]
    fn episodes_are_reproducible() {
        let env = EnvConfig::toy(0.1, 0.5, 0.5);
        let spec = AgentSpec::Solid(SolidSettings::default());
        let a = run_episode(&spec, &env, 2000, 7).unwrap();
        let b = run_episode(&spec, &env, 2000, 7).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = run_episode(&spec, &env, 2000, 8).unwrap();
        assert_ne!(a.to_csv(), c.to_csv());
    }

    #[test]
    fn single_run_summary_leaves_width_empty() {
        let c = vec![1.0, 2.0];
        let agg = summarize(&[&c], &[1, 2], 0.95).unwrap();
        assert!(agg.ci_half_width.is_empty());
        assert_eq!(agg.to_csv().lines().nth(1).unwrap(), format!("1,{},", fmt_real(1.0)));
    }

    #[test]
    fn errors_carry_seed_and_step() {
        let env = EnvConfig::toy(0.1, 0.5, 0.5);
        let err = run_episode(&AgentSpec::Uniform, &env, 2, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let bad = EnvConfig { sigma: 0.0, ..env };
        let err = run_episode(&AgentSpec::Solid(SolidSettings::default()), &bad, 10, 4).unwrap_err();
        assert!(matches!(err, Error::Run { seed: 4, step: 0, .. }));
    }

    proptest::proptest! {
        #[test]
        fn aggregate_ignores_run_order(
            runs in proptest::collection::vec(proptest::collection::vec(0.0f64..100.0, 5), 2..8),
        ) {
            let curves: Vec<&[f64]> = runs.iter().map(|r| r.as_slice()).collect();
            let mut reversed = curves.clone();
            reversed.reverse();
            let cps = [1, 3, 5];
            let a = aggregate(&curves, &cps, 0.95).unwrap();
            let b = aggregate(&reversed, &cps, 0.95).unwrap();
            for i in 0..cps.len() {
                proptest::prop_assert!((a.mean[i] - b.mean[i]).abs() <= 1e-9);
                proptest::prop_assert!((a.ci_half_width[i] - b.ci_half_width[i]).abs() <= 1e-9);
                proptest::prop_assert!(a.ci_half_width[i] >= 0.0);
            }
        }

        #[test]
        fn checkpoints_increase_and_end_at_n(n in 1usize..100_000, count in 1usize..200) {
            let c = log_checkpoints(n, count);
            proptest::prop_assert_eq!(*c.last().unwrap(), n);
            proptest::prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
            proptest::prop_assert!(c[0] >= 1);
        }
    }
}
