use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nscbf_cli::config::{parse_config, Overrides, ScenarioKind};
use nscbf_cli::run::{run, RunError};

/// Monte Carlo simulator for QP-filtered stochastic systems with
/// min/max-composed safe sets.
///
/// Exit codes: 0 success, 1 configuration error, 2 batch failure.
#[derive(Debug, Parser)]
#[command(name = "nscbf", version, about)]
struct Cli {
    /// TOML config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scenario to run.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,

    /// Number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<usize>,

    /// Integration step in seconds.
    #[arg(long)]
    dt: Option<f64>,

    /// Simulated horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,

    /// Master seed (env NSCBF_SEED is the lowest-precedence source).
    #[arg(long)]
    seed: Option<u64>,

    /// Almost-active threshold.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Enable or disable the safety filter.
    #[arg(long)]
    filter: Option<bool>,

    /// Diffusion level of the agents.
    #[arg(long)]
    sigma: Option<f64>,

    /// Agent count for the multi-swap scenario.
    #[arg(long)]
    n_agents: Option<usize>,

    /// Collision radius for the multi-swap scenario.
    #[arg(long)]
    collision_radius: Option<f64>,

    /// Proportional gain of the reference controller.
    #[arg(long)]
    kp: Option<f64>,

    /// Initial state, comma separated (single-boolean only).
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,

    /// Slack penalty weight; enables the soft-constraint fallback.
    #[arg(long)]
    slack_penalty: Option<f64>,

    /// Directory for CSVs, summary.json and plots.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version are not errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let file_text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(e) => {
                eprintln!("config error: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => None,
    };

    let overrides = Overrides {
        scenario: cli.scenario,
        trials: cli.trials,
        dt: cli.dt,
        horizon: cli.horizon,
        seed: cli.seed,
        epsilon: cli.epsilon,
        filter: cli.filter,
        sigma: cli.sigma,
        n_agents: cli.n_agents,
        collision_radius: cli.collision_radius,
        kp: cli.kp,
        x0: cli.x0,
        slack_penalty: cli.slack_penalty,
        output_dir: cli.output_dir,
    };
    let env_seed = std::env::var("NSCBF_SEED").ok();

    let config = match parse_config(file_text.as_deref(), env_seed.as_deref(), &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };

    match run(&config) {
        Ok(report) => {
            let s = &report.summary;
            println!(
                "{} trials: safety_rate {:.4}, {} failures; artifacts in {}",
                s.n_trials,
                s.safety_rate,
                s.failures.count,
                report.output_dir.display()
            );
            if s.failures.count == s.n_trials {
                eprintln!("batch failure: every trial failed");
                for f in s.failures.reasons.iter().take(5) {
                    eprintln!("  trial {}: {}", f.trial, f.message);
                }
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(RunError::Scenario(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("batch failure: {e}");
            ExitCode::from(2)
        }
    }
}
