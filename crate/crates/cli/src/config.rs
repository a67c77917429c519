//! Flat `section.key = value` experiment configuration.
//!
//! One file per experiment. `#` starts a comment; blank lines are ignored.
//! Unknown and repeated keys are rejected. Command-line overrides are applied
//! after the file and before validation.

use std::path::{Path, PathBuf};

use netsir::volterra::{ModelParams, SolverConfig};
use netsir::{EpidemicParams, Meta, RecoveryDistribution};

use crate::CliError;

/// Every accepted key, in echo order.
pub const KEYS: [&str; 18] = [
    "network.N",
    "network.n",
    "network.graph_seed",
    "network.fresh_graph",
    "network.graph_file",
    "epidemic.tau",
    "epidemic.dist",
    "epidemic.I0",
    "simulation.runs",
    "simulation.base_seed",
    "simulation.dt_out",
    "simulation.per_run_files",
    "solver.h",
    "solver.t_end",
    "solver.corrector_iters",
    "output.dir",
    "output.prefix",
    "compare.enforce",
];

/// Separator of the `epidemic.dist` list.
pub const DIST_SEPARATOR: char = ';';

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub nodes: usize,
    pub degree: usize,
    pub graph_seed: u64,
    /// Draw a new graph for every ensemble member.
    pub fresh_graph: bool,
    /// Shared graph loaded from an edge list instead of being generated.
    pub graph_file: Option<PathBuf>,
    pub tau: f64,
    pub dists: Vec<RecoveryDistribution>,
    pub initial_infected: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub dt_out: f64,
    pub per_run_files: bool,
    pub h: f64,
    /// Horizon shared by the simulator and the solvers.
    pub t_end: f64,
    pub corrector_iters: usize,
    pub out_dir: PathBuf,
    pub prefix: String,
    /// Turn `compare` threshold failures into exit status 3.
    pub enforce: bool,
}

impl Default for ExperimentConfig {
    /// The baseline setting: N = 1000, n = 15, τ = 0.35 and the three recovery
    /// laws with mean 3/2.
    fn default() -> Self {
        Self {
            nodes: 1000,
            degree: 15,
            graph_seed: 1,
            fresh_graph: true,
            graph_file: None,
            tau: 0.35,
            dists: vec![
                RecoveryDistribution::exponential(2.0 / 3.0).expect("valid rate"),
                RecoveryDistribution::erlang(3, 2.0).expect("valid shape and rate"),
                RecoveryDistribution::uniform(1.0, 2.0).expect("valid bounds"),
            ],
            initial_infected: 5,
            runs: 100,
            base_seed: 42,
            dt_out: 0.1,
            per_run_files: false,
            h: 1e-2,
            t_end: 25.0,
            corrector_iters: 3,
            out_dir: PathBuf::from("out"),
            prefix: String::new(),
            enforce: true,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| invalid(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("{key}: expected true or false, got `{value}`"))),
    }
}

pub fn parse_dist_list(value: &str) -> Result<Vec<RecoveryDistribution>, CliError> {
    value
        .split(DIST_SEPARATOR)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<RecoveryDistribution>()
                .map_err(|e| invalid(format!("epidemic.dist: `{s}`: {e}")))
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults. Does not validate.
    pub fn parse_str(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected `key = value`, got `{line}`", idx + 1)))?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(invalid(format!("line {}: duplicate key `{key}`", idx + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| invalid(format!("line {}: {}", idx + 1, e.detail())))?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.detail())))
    }

    /// Applies `KEY=VALUE` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), CliError> {
        for item in overrides {
            let item = item.as_ref();
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got `{item}`")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "network.N" => self.nodes = parse_num(key, value)?,
            "network.n" => self.degree = parse_num(key, value)?,
            "network.graph_seed" => self.graph_seed = parse_num(key, value)?,
            "network.fresh_graph" => self.fresh_graph = parse_bool(key, value)?,
            "network.graph_file" => {
                self.graph_file = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "epidemic.tau" => self.tau = parse_num(key, value)?,
            "epidemic.dist" => self.dists = parse_dist_list(value)?,
            "epidemic.I0" => self.initial_infected = parse_num(key, value)?,
            "simulation.runs" => self.runs = parse_num(key, value)?,
            "simulation.base_seed" => self.base_seed = parse_num(key, value)?,
            "simulation.dt_out" => self.dt_out = parse_num(key, value)?,
            "simulation.per_run_files" => self.per_run_files = parse_bool(key, value)?,
            "solver.h" => self.h = parse_num(key, value)?,
            "solver.t_end" => self.t_end = parse_num(key, value)?,
            "solver.corrector_iters" => self.corrector_iters = parse_num(key, value)?,
            "output.dir" => self.out_dir = PathBuf::from(value),
            "output.prefix" => self.prefix = value.to_string(),
            "compare.enforce" => self.enforce = parse_bool(key, value)?,
            _ => return Err(invalid(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Value of `key` in config syntax; floats print in shortest round-trip
    /// form.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "network.N" => self.nodes.to_string(),
            "network.n" => self.degree.to_string(),
            "network.graph_seed" => self.graph_seed.to_string(),
            "network.fresh_graph" => self.fresh_graph.to_string(),
            "network.graph_file" => self
                .graph_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "epidemic.tau" => self.tau.to_string(),
            "epidemic.dist" => self
                .dists
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
            "epidemic.I0" => self.initial_infected.to_string(),
            "simulation.runs" => self.runs.to_string(),
            "simulation.base_seed" => self.base_seed.to_string(),
            "simulation.dt_out" => self.dt_out.to_string(),
            "simulation.per_run_files" => self.per_run_files.to_string(),
            "solver.h" => self.h.to_string(),
            "solver.t_end" => self.t_end.to_string(),
            "solver.corrector_iters" => self.corrector_iters.to_string(),
            "output.dir" => self.out_dir.display().to_string(),
            "output.prefix" => self.prefix.clone(),
            "compare.enforce" => self.enforce.to_string(),
            _ => return None,
        })
    }

    /// The whole config in file syntax.
    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Checks every precondition the pipelines rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.degree < 2 {
            return Err(invalid(format!("network.n must be >= 2, got {}", self.degree)));
        }
        if self.degree >= self.nodes {
            return Err(invalid(format!(
                "network.n = {} must be smaller than network.N = {}",
                self.degree, self.nodes
            )));
        }
        if !(self.nodes * self.degree).is_multiple_of(2) {
            return Err(invalid(format!(
                "network.N * network.n must be even, got {} * {}",
                self.nodes, self.degree
            )));
        }
        if self.initial_infected > self.nodes {
            return Err(invalid(format!(
                "epidemic.I0 = {} exceeds network.N = {}",
                self.initial_infected, self.nodes
            )));
        }
        if self.dists.is_empty() {
            return Err(invalid("epidemic.dist lists no recovery distribution"));
        }
        if self.runs == 0 {
            return Err(invalid("simulation.runs must be >= 1"));
        }
        if !(self.dt_out.is_finite() && self.dt_out > 0.0 && self.dt_out <= self.t_end) {
            return Err(invalid(format!(
                "simulation.dt_out must lie in (0, solver.t_end], got {}",
                self.dt_out
            )));
        }
        if self.prefix.contains(['/', '\\']) {
            return Err(invalid(format!("output.prefix `{}` must not contain a path separator", self.prefix)));
        }
        self.solver_config().steps()?;
        for dist in &self.dists {
            self.model_params(dist)?;
            self.epidemic_params(dist)?;
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut cfg = SolverConfig::new(self.h, self.t_end);
        cfg.corrector_iters = self.corrector_iters;
        cfg
    }

    pub fn model_params(&self, dist: &RecoveryDistribution) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(
            self.tau,
            *dist,
            self.degree as f64,
            self.nodes as f64,
            self.initial_infected as f64,
        )?)
    }

    pub fn epidemic_params(&self, dist: &RecoveryDistribution) -> Result<EpidemicParams, CliError> {
        Ok(EpidemicParams::new(self.tau, *dist, self.initial_infected, self.t_end)?)
    }

    /// Echo of the run for a `# meta:` line. `dist` narrows the list to the
    /// law a file was produced for. Output location is left out so that
    /// identical runs produce identical files.
    pub fn meta(&self, command: &str, dist: Option<&RecoveryDistribution>) -> Meta {
        let mut meta = Meta::new().with("command", command);
        for key in KEYS.into_iter().filter(|k| !k.starts_with("output.")) {
            let value = match (key, dist) {
                ("epidemic.dist", Some(d)) => d.to_string(),
                _ => self.get(key).unwrap_or_default(),
            };
            meta.push(key, value);
        }
        meta
    }

    /// Rebuilds the config echoed by [`meta`](Self::meta), with default
    /// output settings. Entries that are not config keys are skipped.
    pub fn from_meta(meta: &Meta) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (key, value) in &meta.entries {
            if KEYS.contains(&key.as_str()) {
                cfg.set(key, value)?;
            }
        }
        Ok(cfg)
    }
}

/// File-name tags for a distribution list: the family name, numbered when a
/// family occurs more than once.
pub fn dist_tags(dists: &[RecoveryDistribution]) -> Vec<String> {
    dists
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let repeated = dists.iter().filter(|o| o.family() == d.family()).count() > 1;
            if repeated {
                format!("{}{}", d.family(), k + 1)
            } else {
                d.family().to_string()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_equals_defaults() {
        let text = include_str!("../configs/baseline.conf");
        assert_eq!(ExperimentConfig::parse_str(text).unwrap(), ExperimentConfig::default());
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["epidemic.tau=0.1234567890123", "output.prefix=x_", "network.graph_file=g.txt"])
            .unwrap();
        assert_eq!(ExperimentConfig::parse_str(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let err = ExperimentConfig::parse_str("network.N = 10\nnetwork.colour = red\n").unwrap_err();
        assert!(err.to_string().contains("line 2") && err.to_string().contains("network.colour"));
        assert!(ExperimentConfig::parse_str("epidemic.tau = 1\nepidemic.tau = 2\n").is_err());
        assert!(ExperimentConfig::parse_str("just words\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = ExperimentConfig::parse_str("# header\n\nepidemic.tau = 0.5  # inline\n").unwrap();
        assert_eq!(cfg.tau, 0.5);
    }

    #[test]
    fn validation_catches_module_preconditions() {
        let bad = [
            "simulation.runs=0",
            "network.N=15",
            "network.N=999",
            "epidemic.I0=2000",
            "epidemic.dist=",
            "epidemic.tau=-1",
            "solver.h=0",
            "solver.corrector_iters=0",
            "simulation.dt_out=100",
            "output.prefix=a/b",
        ];
        for item in bad {
            let mut cfg = ExperimentConfig::default();
            cfg.apply_overrides(&[item]).unwrap();
            let err = cfg.validate().expect_err(item);
            assert_eq!(err.exit_code(), crate::EXIT_VALIDATION, "{item}: {err}");
        }
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_overrides(&["epidemic.dist=uniform:a=2,b=1"]).is_err());
        assert!(cfg.apply_overrides(&["no-equals-sign"]).is_err());
    }

    #[test]
    fn meta_reconstructs_the_run() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["simulation.base_seed=987654321", "epidemic.dist=gamma:shape=3,rate=2"])
            .unwrap();
        let meta = cfg.meta("simulate", Some(&cfg.dists[0]));
        let parsed = netsir::Trajectory::read_csv(format!("{}\nt,S,I,R,SI,SS\n", meta.line()).as_bytes())
            .unwrap()
            .1;
        assert_eq!(ExperimentConfig::from_meta(&parsed).unwrap(), cfg);
    }

    #[test]
    fn tags_disambiguate_repeated_families() {
        let dists = parse_dist_list("exp:rate=1; gamma:shape=2,rate=1; exp:rate=2").unwrap();
        assert_eq!(dist_tags(&dists), ["exp1", "gamma", "exp3"]);
    }
}
