//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::{run_grid, write_outputs, ExperimentConfig};
use crate::error::{Error, Result};

/// Environment variable that overrides `--parallel`.
pub const THREADS_ENV: &str = "SOLID_BANDIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "solid-bandit", about = "Regret experiments for contextual linear bandits")]
pub struct Cli {
    /// Experiment file (`key = value` lines); defaults apply without one.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Algorithm(s) to run, comma separated; overrides `experiment.algos`.
    #[arg(long)]
    pub algo: Option<String>,
    /// Horizon.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed; replication `i` uses `seed + i`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
}

impl Cli {
    /// Loads the config file and applies flag overrides.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::parse(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(a) = &self.algo {
            config.algos = a.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        }
        if let Some(n) = self.n {
            config.n = n;
        }
        if let Some(r) = self.runs {
            config.runs = r;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn threads(&self) -> Result<usize> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("{THREADS_ENV}={v}: {e}"))),
            Err(_) => Ok(self.parallel),
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::Parse { .. })
}

/// Parses `args` (including the program name), runs the grid and writes
/// the CSVs. Returns the process exit code: `0` on success, `2` for usage
/// or configuration errors, `1` for failures while running.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let prepared = cli.experiment().and_then(|c| Ok((c, cli.threads()?)));
    let (config, threads) = match prepared {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run_grid(&config, threads).and_then(|grid| write_outputs(&config, &grid, &cli.out)) {
        Ok(paths) => {
            println!("wrote {} files to {}", paths.len(), cli.out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                2
            } else {
                1
            }
        }
    }
}
