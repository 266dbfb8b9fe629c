//! Flat `key = value` experiment files with dotted sections.
//!
//! ```text
//! # toy problem, three algorithms
//! experiment.n = 50000
//! experiment.runs = 20
//! experiment.algos = solid, linucb, lints
//! env.kind = toy
//! env.rho1 = 0.99
//! agent.solid.schedule = lin-exp
//! ```

use std::collections::HashSet;

use crate::envs::{EnvConfig, EnvKind};
use crate::error::{Error, Result};
use crate::estimator::RadiusMode;
use crate::solid::{Schedule, SolidConfig, StepSize, DEFAULT_LAMBDA_MAX};

/// Multiplier cap setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMax {
    /// `max(2 B L z_lower(theta*), lambda_init)`, computed per instance.
    Oracle,
    Fixed(f64),
}

/// SOLID settings as written in a config file; unset fields fall back to
/// environment-dependent defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidSettings {
    pub z0: Option<f64>,
    pub lambda_init: Option<f64>,
    pub lambda_max: LambdaMax,
    pub schedule: Schedule,
    pub step_omega: StepSize,
    pub step_lambda: StepSize,
    pub reset_on_phase: bool,
    pub normalize_grad: bool,
    pub radius_mode: RadiusMode,
    pub glrt_restrict_last_context: bool,
    pub beta_override: Option<f64>,
}

impl Default for SolidSettings {
    fn default() -> Self {
        let d = SolidConfig::default();
        Self {
            z0: None,
            lambda_init: None,
            lambda_max: LambdaMax::Oracle,
            schedule: d.schedule,
            step_omega: d.step_omega,
            step_lambda: d.step_lambda,
            reset_on_phase: d.reset_on_phase,
            normalize_grad: d.normalize_grad,
            radius_mode: d.radius_mode,
            glrt_restrict_last_context: d.glrt_restrict_last_context,
            beta_override: d.beta_override,
        }
    }
}

impl SolidSettings {
    /// Resolves the defaults for `env`: toy problems use `z0 = 1`,
    /// `lambda_init = 0`; random problems `z0 = |A|`, `lambda_init = 50`.
    /// The multiplier cap is left at its fixed value or at
    /// [`DEFAULT_LAMBDA_MAX`] for the oracle setting.
    pub fn resolve(&self, env: &EnvConfig) -> SolidConfig {
        let base = match env.kind {
            EnvKind::Toy => SolidConfig::default(),
            EnvKind::Random => SolidConfig::for_random(env.n_arms),
        };
        SolidConfig {
            z0: self.z0.unwrap_or(base.z0),
            lambda_init: self.lambda_init.unwrap_or(base.lambda_init),
            lambda_max: match self.lambda_max {
                LambdaMax::Fixed(v) => v,
                LambdaMax::Oracle => DEFAULT_LAMBDA_MAX,
            },
            schedule: self.schedule,
            step_omega: self.step_omega,
            step_lambda: self.step_lambda,
            reset_on_phase: self.reset_on_phase,
            normalize_grad: self.normalize_grad,
            radius_mode: self.radius_mode,
            glrt_restrict_last_context: self.glrt_restrict_last_context,
            beta_override: self.beta_override,
        }
    }
}

/// Algorithm names accepted by `experiment.algos` and `--algo`.
pub const ALGORITHMS: [&str; 5] = ["solid", "linucb", "lints", "greedy", "uniform"];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: u64,
    pub runs: usize,
    pub seed: u64,
    pub algos: Vec<String>,
    pub confidence: f64,
    pub checkpoints: usize,
    pub env: EnvConfig,
    pub solid: SolidSettings,
    /// `None` means `1/n`.
    pub linucb_delta: Option<f64>,
    pub lints_v_scale: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            runs: 10,
            seed: 0,
            algos: vec!["solid".into(), "linucb".into(), "lints".into()],
            confidence: 0.95,
            checkpoints: 100,
            env: EnvConfig::default(),
            solid: SolidSettings::default(),
            linucb_delta: None,
            lints_v_scale: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n < 3 {
            return cfg(format!("experiment.n must be at least 3, got {}", self.n));
        }
        if self.runs == 0 {
            return cfg("experiment.runs must be positive".into());
        }
        if self.algos.is_empty() {
            return cfg("experiment.algos is empty".into());
        }
        for a in &self.algos {
            if !ALGORITHMS.contains(&a.as_str()) {
                return cfg(format!("unknown algorithm `{a}`"));
            }
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return cfg(format!("experiment.confidence must lie in (0, 1), got {}", self.confidence));
        }
        if self.checkpoints == 0 {
            return cfg("experiment.checkpoints must be positive".into());
        }
        self.env.validate().map_err(|e| Error::Config(e.to_string()))?;
        let mut solid = self.solid.resolve(&self.env);
        if self.solid.lambda_max == LambdaMax::Oracle {
            // the oracle cap is raised to lambda_init when needed
            solid.lambda_max = solid.lambda_max.max(solid.lambda_init);
        }
        solid.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(d) = self.linucb_delta {
            if !(d > 0.0 && d < 1.0) {
                return cfg(format!("agent.linucb.delta must lie in (0, 1), got {d}"));
            }
        }
        if !(self.lints_v_scale >= 0.0) {
            return cfg("agent.lints.v_scale must be nonnegative".into());
        }
        Ok(())
    }

    /// Parses a config document on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(perr(format!("duplicate key `{key}`")));
            }
            let real = || value.parse::<f64>().map_err(|e| perr(format!("{key}: {e}")));
            let int = || value.parse::<u64>().map_err(|e| perr(format!("{key}: {e}")));
            let boolean = || value.parse::<bool>().map_err(|e| perr(format!("{key}: {e}")));
            let step = || -> Result<StepSize> {
                if value == "theory" {
                    Ok(StepSize::Theory)
                } else {
                    Ok(StepSize::Fixed(real()?))
                }
            };
            match key {
                "experiment.n" => c.n = int()?,
                "experiment.runs" => c.runs = int()? as usize,
                "experiment.seed" => c.seed = int()?,
                "experiment.algos" => {
                    c.algos = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
                }
                "experiment.confidence" => c.confidence = real()?,
                "experiment.checkpoints" => c.checkpoints = int()? as usize,
                "env.kind" => {
                    c.env.kind = match value {
                        "toy" => EnvKind::Toy,
                        "random" => EnvKind::Random,
                        other => return Err(perr(format!("unknown env.kind `{other}`"))),
                    }
                }
                "env.xi" => c.env.xi = real()?,
                "env.rho1" => c.env.rho1 = real()?,
                "env.d" => c.env.d = int()? as usize,
                "env.n_contexts" => c.env.n_contexts = int()? as usize,
                "env.n_arms" => c.env.n_arms = int()? as usize,
                "env.sparsity" => c.env.sparsity = real()?,
                "env.sigma" => c.env.sigma = real()?,
                "env.instance_seed" => c.env.instance_seed = Some(int()?),
                "agent.solid.z0" => c.solid.z0 = Some(real()?),
                "agent.solid.lambda_init" => c.solid.lambda_init = Some(real()?),
                "agent.solid.lambda_max" => {
                    c.solid.lambda_max = if value == "oracle" { LambdaMax::Oracle } else { LambdaMax::Fixed(real()?) }
                }
                "agent.solid.schedule" => {
                    c.solid.schedule =
                        Schedule::parse(value).ok_or_else(|| perr(format!("unknown schedule `{value}`")))?
                }
                "agent.solid.step_omega" => c.solid.step_omega = step()?,
                "agent.solid.step_lambda" => c.solid.step_lambda = step()?,
                "agent.solid.reset_on_phase" => c.solid.reset_on_phase = boolean()?,
                "agent.solid.normalize_grad" => c.solid.normalize_grad = boolean()?,
                "agent.solid.radius" => {
                    c.solid.radius_mode = match value {
                        "practical" => RadiusMode::Practical,
                        "theoretical" => RadiusMode::Theoretical,
                        other => return Err(perr(format!("unknown radius `{other}`"))),
                    }
                }
                "agent.solid.glrt_restrict_last_context" => c.solid.glrt_restrict_last_context = boolean()?,
                "agent.solid.beta_override" => {
                    c.solid.beta_override = Some(if value == "inf" { f64::INFINITY } else { real()? })
                }
                "agent.linucb.delta" => c.linucb_delta = Some(real()?),
                "agent.lints.v_scale" => c.lints_v_scale = real()?,
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "\
# comment
experiment.n = 500   # trailing
experiment.algos = solid, lints
env.kind = random
env.n_arms = 16
agent.solid.step_omega = theory
agent.solid.lambda_max = 60
agent.solid.schedule = lin-pol
agent.solid.beta_override = inf
";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.n, 500);
        assert_eq!(c.algos, vec!["solid", "lints"]);
        assert_eq!(c.env.kind, EnvKind::Random);
        assert_eq!(c.solid.step_omega, StepSize::Theory);
        assert_eq!(c.solid.lambda_max, LambdaMax::Fixed(60.0));
        assert_eq!(c.solid.schedule, Schedule::LinPol);
        assert_eq!(c.solid.beta_override, Some(f64::INFINITY));
        let s = c.solid.resolve(&c.env);
        assert_eq!((s.z0, s.lambda_init), (16.0, 50.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn toy_defaults() {
        let c = ExperimentConfig::default();
        let s = c.solid.resolve(&c.env);
        assert_eq!((s.z0, s.lambda_init), (1.0, 0.0));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = ExperimentConfig::parse("experiment.n = 5\nagent.solid.zz = 1\n").unwrap_err();
        assert!(err.to_string().contains("agent.solid.zz"));
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(ExperimentConfig::parse("env.xi = 0.1\nenv.xi = 0.2\n").is_err());
        assert!(ExperimentConfig::parse("env.xi 0.1\n").is_err());
        assert!(ExperimentConfig::parse("env.xi = abc\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let c = ExperimentConfig { algos: vec!["oam".into()], ..Default::default() };
        assert!(c.validate().is_err());
        let c = ExperimentConfig { n: 2, ..Default::default() };
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.env.rho1 = 1.0;
        assert!(c.validate().is_err());
    }
}
