//! Run configuration: flat TOML key/value file, CLI flag overrides and
//! the `NSCBF_SEED` environment variable, merged in ascending precedence
//! (defaults < env < file < flags) and validated.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Single agent under the Boolean obstacle/coverage specification.
    SingleBoolean,
    /// Multi-agent antipodal swap on the unit circle.
    MultiSwap,
}

/// Fully resolved configuration; serialized verbatim into
/// `summary.json` so every run is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    pub trials: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub epsilon: f64,
    pub filter: bool,
    pub sigma: f64,
    pub n_agents: usize,
    pub collision_radius: f64,
    pub kp: f64,
    /// Initial state. Configurable for `single-boolean`; fixed to the
    /// unit-circle placement for `multi-swap`.
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack_penalty: Option<f64>,
    pub output_dir: PathBuf,
}

/// File schema: every key optional, unknown keys rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scenario: Option<ScenarioKind>,
    trials: Option<usize>,
    dt: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    filter: Option<bool>,
    sigma: Option<f64>,
    n_agents: Option<usize>,
    collision_radius: Option<f64>,
    kp: Option<f64>,
    x0: Option<Vec<f64>>,
    slack_penalty: Option<f64>,
    output_dir: Option<PathBuf>,
}

/// Flag-level overrides; mirrors every config key.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub trials: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub filter: Option<bool>,
    pub sigma: Option<f64>,
    pub n_agents: Option<usize>,
    pub collision_radius: Option<f64>,
    pub kp: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub slack_penalty: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// TOML syntax/type/unknown-key problems; the message carries the key
    /// name and line from the parser.
    #[error("config file: {0}")]
    File(String),

    #[error("NSCBF_SEED: {0}")]
    EnvSeed(String),

    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

/// Merges defaults, the environment seed, the config file text and flag
/// overrides, then validates ranges.
pub fn parse_config(
    file: Option<&str>,
    env_seed: Option<&str>,
    overrides: &Overrides,
) -> Result<RunConfig, ConfigError> {
    let file: FileConfig = match file {
        Some(text) => toml::from_str(text).map_err(|e| ConfigError::File(e.to_string()))?,
        None => FileConfig::default(),
    };

    let env_seed = match env_seed {
        Some(raw) => Some(
            raw.trim()
                .parse::<u64>()
                .map_err(|e| ConfigError::EnvSeed(format!("{raw:?}: {e}")))?,
        ),
        None => None,
    };

    let scenario = overrides
        .scenario
        .or(file.scenario)
        .unwrap_or(ScenarioKind::SingleBoolean);

    let kp_default = match scenario {
        ScenarioKind::SingleBoolean => 1.0,
        ScenarioKind::MultiSwap => 2.0,
    };
    let n_agents = overrides.n_agents.or(file.n_agents).unwrap_or(6);

    let x0 = match scenario {
        ScenarioKind::SingleBoolean => overrides
            .x0
            .clone()
            .or(file.x0)
            .unwrap_or_else(|| vec![-0.5, 0.0]),
        ScenarioKind::MultiSwap => {
            if overrides.x0.is_some() || file.x0.is_some() {
                return Err(invalid(
                    "x0",
                    "the multi-swap start is fixed to the unit-circle placement",
                ));
            }
            (0..n_agents)
                .flat_map(|k| {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 / n_agents as f64;
                    [theta.cos(), theta.sin()]
                })
                .collect()
        }
    };

    let config = RunConfig {
        scenario,
        trials: overrides.trials.or(file.trials).unwrap_or(500),
        dt: overrides.dt.or(file.dt).unwrap_or(1e-3),
        horizon: overrides.horizon.or(file.horizon).unwrap_or(10.0),
        seed: overrides.seed.or(file.seed).or(env_seed).unwrap_or(0),
        epsilon: overrides.epsilon.or(file.epsilon).unwrap_or(0.05),
        filter: overrides.filter.or(file.filter).unwrap_or(true),
        sigma: overrides.sigma.or(file.sigma).unwrap_or(0.025),
        n_agents,
        collision_radius: overrides
            .collision_radius
            .or(file.collision_radius)
            .unwrap_or(0.1),
        kp: overrides.kp.or(file.kp).unwrap_or(kp_default),
        x0,
        slack_penalty: overrides.slack_penalty.or(file.slack_penalty),
        output_dir: overrides
            .output_dir
            .clone()
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    validate(&config)?;
    Ok(config)
}

fn validate(c: &RunConfig) -> Result<(), ConfigError> {
    if c.trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if !(c.dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {}", c.dt)));
    }
    if !(c.horizon > c.dt) {
        return Err(invalid(
            "horizon",
            format!("must exceed dt, got {} vs dt {}", c.horizon, c.dt),
        ));
    }
    if !(c.epsilon >= 0.0) {
        return Err(invalid(
            "epsilon",
            format!("must be non-negative, got {}", c.epsilon),
        ));
    }
    if !(c.sigma > 0.0) {
        return Err(invalid(
            "sigma",
            format!("must be positive, got {}", c.sigma),
        ));
    }
    if !(c.kp > 0.0) {
        return Err(invalid("kp", format!("must be positive, got {}", c.kp)));
    }
    match c.scenario {
        ScenarioKind::SingleBoolean => {
            if c.x0.len() != 2 {
                return Err(invalid(
                    "x0",
                    format!("single-boolean expects 2 components, got {}", c.x0.len()),
                ));
            }
        }
        ScenarioKind::MultiSwap => {
            if c.n_agents < 2 {
                return Err(invalid(
                    "n_agents",
                    format!("must be at least 2, got {}", c.n_agents),
                ));
            }
            if !(c.collision_radius > 0.0) {
                return Err(invalid(
                    "collision_radius",
                    format!("must be positive, got {}", c.collision_radius),
                ));
            }
        }
    }
    if let Some(w) = c.slack_penalty {
        if !(w > 0.0) {
            return Err(invalid(
                "slack_penalty",
                format!("must be positive, got {w}"),
            ));
        }
    }
    Ok(())
}
