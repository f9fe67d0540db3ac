//! Batch orchestration: builds the scenario, streams per-trial CSVs,
//! writes `summary.json` and renders the SVG plots.

use std::io;
use std::path::PathBuf;
use std::sync::Mutex;

use nalgebra::{DVector, Vector2};
use nscbf::dynamics::{euler_maruyama_step, step_count, NoiseSource, SeededGaussian};
use nscbf::filter::{ClassK, SafetyFilter};
use nscbf::montecarlo::{run_trials_with, MonteCarloSummary, RunOptions, TrialRecord};
use nscbf::scenario::{
    multi_agent_swap_with, single_agent_boolean_with, Scenario, SingleAgentParams, SwapParams,
};

use crate::config::{RunConfig, ScenarioKind};
use crate::output::{write_summary_json, write_trajectory_csv};
use crate::plot::{render_control_comparison, render_overview, ControlSignal, PathSample};

/// Trials plotted in the overview (the CSVs always cover all of them).
const OVERVIEW_MAX_TRIALS: usize = 100;
/// Every k-th sample goes into a plotted polyline.
const PLOT_DECIMATION: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Scenario construction rejected the configured parameters.
    #[error("scenario: {0}")]
    Scenario(#[from] nscbf::Error),

    #[error("io: {0}")]
    Io(#[from] io::Error),
}

pub struct RunReport {
    pub summary: MonteCarloSummary,
    pub output_dir: PathBuf,
}

pub fn build_scenario(config: &RunConfig) -> Result<Scenario, nscbf::Error> {
    match config.scenario {
        ScenarioKind::SingleBoolean => single_agent_boolean_with(&SingleAgentParams {
            sigma: config.sigma,
            x0: Vector2::new(config.x0[0], config.x0[1]),
            kp: config.kp,
            horizon: config.horizon,
        }),
        ScenarioKind::MultiSwap => multi_agent_swap_with(&SwapParams {
            n_agents: config.n_agents,
            collision_radius: config.collision_radius,
            sigma: config.sigma,
            kp: config.kp,
            horizon: config.horizon,
        }),
    }
}

pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    let scenario = build_scenario(config)?;

    let out = &config.output_dir;
    let traj_dir = out.join("trajectories");
    let plot_dir = out.join("plots");
    std::fs::create_dir_all(&traj_dir)?;
    std::fs::create_dir_all(&plot_dir)?;

    let opts = RunOptions {
        n_trials: config.trials,
        master_seed: config.seed,
        dt: config.dt,
        epsilon: config.epsilon,
        filter_enabled: config.filter,
        slack_penalty: config.slack_penalty,
        bounds: None,
    };

    // Single-agent overviews overlay many trials; the swap overview shows
    // the first trial with one color per agent.
    let plotted_trials = match config.scenario {
        ScenarioKind::SingleBoolean => OVERVIEW_MAX_TRIALS.min(config.trials),
        ScenarioKind::MultiSwap => 1,
    };
    let agents = match config.scenario {
        ScenarioKind::SingleBoolean => 1,
        ScenarioKind::MultiSwap => config.n_agents,
    };

    let io_error: Mutex<Option<io::Error>> = Mutex::new(None);
    let plot_paths: Mutex<Vec<PathSample>> = Mutex::new(Vec::new());
    let summary = run_trials_with(&scenario, &opts, |trial, record: &TrialRecord| {
        let path = traj_dir.join(format!("trial_{trial}.csv"));
        if let Err(e) = write_trajectory_csv(&path, &record.trajectory) {
            io_error.lock().unwrap().get_or_insert(e);
        }
        if trial < plotted_trials {
            let mut samples = plot_paths.lock().unwrap();
            for agent in 0..agents {
                let points = record
                    .trajectory
                    .states
                    .iter()
                    .step_by(PLOT_DECIMATION)
                    .map(|x| (x[2 * agent], x[2 * agent + 1]))
                    .collect();
                samples.push(PathSample { points, agent });
            }
        }
    })?;
    if let Some(e) = io_error.into_inner().unwrap() {
        return Err(RunError::Io(e));
    }

    write_summary_json(&out.join("summary.json"), config, &summary)?;

    render_overview(
        &plot_dir.join("overview.svg"),
        config.scenario,
        &scenario,
        &plot_paths.into_inner().unwrap(),
    )?;

    // Matched-seed comparison of the filtered control with and without
    // the almost-active set, on the first trial's noise stream.
    let signals = [0.0, 0.05]
        .into_iter()
        .map(|eps| control_signal(&scenario, config, eps))
        .collect::<Vec<_>>();
    render_control_comparison(&plot_dir.join("control.svg"), &signals)?;

    Ok(RunReport {
        summary,
        output_dir: out.clone(),
    })
}

/// Filtered closed loop recording agent 0's control components. Stops
/// early if the filter fails (it cannot re-enter from an unsafe state),
/// keeping the partial signal for plotting.
fn control_signal(scenario: &Scenario, config: &RunConfig, epsilon: f64) -> ControlSignal {
    let filter = SafetyFilter::new(
        scenario.model.clone(),
        scenario.tree.clone(),
        epsilon,
        ClassK::Identity,
    );
    let mut noise = SeededGaussian::with_stream(config.seed, 0);
    let mut buf = DVector::zeros(scenario.model.noise_dim());
    let steps = step_count(scenario.horizon, config.dt);

    let mut signal = ControlSignal {
        label: format!("epsilon = {epsilon}"),
        times: Vec::new(),
        ux: Vec::new(),
        uy: Vec::new(),
    };
    let mut x = scenario.x0.clone();
    for k in 0..steps {
        let t = k as f64 * config.dt;
        let u_ref = (scenario.reference)(t, &x);
        let Ok(u) = filter.filter_control(&x, &u_ref) else {
            break;
        };
        signal.times.push(t);
        signal.ux.push(u[0]);
        signal.uy.push(u[1]);
        noise.fill_standard_normal(&mut buf);
        match euler_maruyama_step(&scenario.model, &x, &u, config.dt, &buf) {
            Ok(next) => x = next,
            Err(_) => break,
        }
    }
    signal
}
