//! Command-line harness: config parsing, the simulate / solve / analytics /
//! compare / graph-gen pipelines, and their CSV outputs.

pub mod commands;
pub mod config;
pub mod table;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use netsir::analytics::AnalyticsError;
use netsir::{GraphError, SimError, SolverError};
use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("acceptance thresholds failed: {0}")]
    Threshold(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// Success.
pub const EXIT_OK: u8 = 0;
/// Runtime failure not caused by the inputs.
pub const EXIT_FAILURE: u8 = 1;
/// Invalid config, flags or parameters.
pub const EXIT_VALIDATION: u8 = 2;
/// `compare` finished but an acceptance threshold was missed.
pub const EXIT_THRESHOLD: u8 = 3;

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// The message without the variant prefix.
    pub fn detail(&self) -> String {
        match self {
            Self::Config(msg) | Self::Threshold(msg) => msg.clone(),
            other => other.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_VALIDATION,
            Self::Threshold(_) => EXIT_THRESHOLD,
            Self::Solver(
                SolverError::InvalidConfig(_)
                | SolverError::InvalidParams(_)
                | SolverError::Unsupported(..)
                | SolverError::Dist(_),
            ) => EXIT_VALIDATION,
            Self::Sim(SimError::InvalidParams(_)) => EXIT_VALIDATION,
            Self::Graph(GraphError::OddStubCount { .. } | GraphError::DegreeTooLarge { .. } | GraphError::Parse(_)) => {
                EXIT_VALIDATION
            }
            Self::Analytics(AnalyticsError::InvalidParameter(_)) => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "netsir", version, about = "SIR epidemics on random regular networks with general recovery times")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment config file (`section.key = value`); defaults apply without it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides simulation.base_seed (network.graph_seed for graph-gen).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides one config key; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Stochastic ensemble: mean and standard deviation per recovery law.
    Simulate,
    /// Deterministic trajectory per recovery law.
    Solve {
        /// pairwise, meanfield or special:<markovian|fixed|gamma|uniform|reference|markovian-meanfield|fixed-meanfield>.
        #[arg(long, default_value = "pairwise")]
        model: Model,
    },
    /// Reproduction numbers and final sizes.
    Analytics,
    /// Ensemble vs pairwise vs mean-field, with acceptance thresholds.
    Compare {
        /// Also write a gnuplot script for the aligned curves.
        #[arg(long)]
        gnuplot: bool,
    },
    /// Writes the random regular graph as an edge list.
    GraphGen,
}

/// Reference solvers for particular recovery laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Special {
    Markovian,
    Fixed,
    Gamma,
    Uniform,
    /// Picks the pairwise reference matching the law.
    Reference,
    MarkovianMeanfield,
    FixedMeanfield,
}

impl Special {
    const NAMES: [(Special, &'static str); 7] = [
        (Special::Markovian, "markovian"),
        (Special::Fixed, "fixed"),
        (Special::Gamma, "gamma"),
        (Special::Uniform, "uniform"),
        (Special::Reference, "reference"),
        (Special::MarkovianMeanfield, "markovian-meanfield"),
        (Special::FixedMeanfield, "fixed-meanfield"),
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES
            .iter()
            .find(|(s, _)| *s == self)
            .map(|(_, n)| *n)
            .expect("every case is named")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Pairwise,
    Meanfield,
    Special(Special),
}

impl Model {
    /// Tag used in output file names.
    pub fn file_tag(self) -> String {
        match self {
            Model::Pairwise => "pairwise".into(),
            Model::Meanfield => "meanfield".into(),
            Model::Special(s) => format!("special-{}", s.name()),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Pairwise => f.write_str("pairwise"),
            Model::Meanfield => f.write_str("meanfield"),
            Model::Special(s) => write!(f, "special:{}", s.name()),
        }
    }
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise" => return Ok(Model::Pairwise),
            "meanfield" => return Ok(Model::Meanfield),
            _ => {}
        }
        let name = s
            .strip_prefix("special:")
            .ok_or_else(|| format!("unknown model `{s}`; expected pairwise, meanfield or special:<name>"))?;
        Special::NAMES
            .iter()
            .find(|(_, n)| *n == name)
            .map(|(sp, _)| Model::Special(*sp))
            .ok_or_else(|| {
                let known: Vec<&str> = Special::NAMES.iter().map(|(_, n)| *n).collect();
                format!("unknown special case `{name}`; expected one of {}", known.join(", "))
            })
    }
}

/// Builds the effective config: defaults, then the file, then flag overrides.
pub fn resolve_config(common: &CommonArgs, command: &Command) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&common.set)?;
    if let Some(seed) = common.seed {
        match command {
            Command::GraphGen => cfg.graph_seed = seed,
            _ => cfg.base_seed = seed,
        }
    }
    if let Some(dir) = &common.out {
        cfg.out_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one invocation and returns the paths it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = resolve_config(&cli.common, &cli.command)?;
    commands::dispatch(&cfg, &cli.command)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for m in ["pairwise", "meanfield", "special:gamma", "special:fixed-meanfield"] {
            assert_eq!(m.parse::<Model>().unwrap().to_string(), m);
        }
        assert!("special:nope".parse::<Model>().is_err());
        assert!("ode".parse::<Model>().is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let common = CommonArgs {
            seed: Some(9),
            out: Some("elsewhere".into()),
            set: vec!["simulation.base_seed=5".into(), "epidemic.tau=0.5".into()],
            ..CommonArgs::default()
        };
        let cfg = resolve_config(&common, &Command::Simulate).unwrap();
        assert_eq!((cfg.base_seed, cfg.tau), (9, 0.5));
        assert_eq!(cfg.out_dir, PathBuf::from("elsewhere"));
        let cfg = resolve_config(&common, &Command::GraphGen).unwrap();
        assert_eq!((cfg.base_seed, cfg.graph_seed), (5, 9));
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_VALIDATION);
        assert_eq!(CliError::Threshold("x".into()).exit_code(), EXIT_THRESHOLD);
        let unsupported = SolverError::Unsupported("gamma".into(), "needs exponential".into());
        assert_eq!(CliError::from(unsupported).exit_code(), EXIT_VALIDATION);
        let step = SolverError::StepTooLarge { t: 1.0, h: 0.5 };
        assert_eq!(CliError::from(step).exit_code(), EXIT_FAILURE);
    }
}
