//! Run configuration: command-line flags layered over an optional TOML file.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use urnbridge::{validate_measure, AMeasure, Atom};

/// A problem with the configuration, reported before any work starts.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(ConfigError(msg.into()).into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Montecarlo,
    Spectral,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandName {
    Simulate,
    Estimate,
    Test,
    Tabulate,
    Covcheck,
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandName::Simulate => "simulate",
            CommandName::Estimate => "estimate",
            CommandName::Test => "test",
            CommandName::Tabulate => "tabulate",
            CommandName::Covcheck => "covcheck",
        })
    }
}

/// Settings shared by every command. Each may also come from `--config`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Urn exponent θ in (0,1); for `test` selects the known-θ variant
    #[arg(long)]
    pub theta: Option<f64>,
    /// Stream length / number of balls
    #[arg(long)]
    pub n: Option<u64>,
    /// Monte Carlo replications
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master RNG seed
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Estimator measure: `example1` or repeated `atom=t:h`
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub measure: Vec<String>,
    /// Rescale atom jumps so the log-moment is exactly 1
    #[arg(long)]
    #[serde(default)]
    pub rescale_measure: bool,
    /// Uniform grid size for limit simulation
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Null-distribution backend
    #[arg(long, value_enum)]
    pub backend: Option<BackendChoice>,
    /// Input stream file (one token per line)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where `test` persists the null law it used
    #[arg(long)]
    pub artifact: Option<PathBuf>,
    /// Previously tabulated null law to reuse
    #[arg(long)]
    pub null: Option<PathBuf>,
    /// Where to write the token dictionary of a non-integer stream
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Explicit urn support size N (default: tail-safe truncation)
    #[arg(long)]
    pub support: Option<u64>,
    /// Tail-mass bound for the default truncation
    #[arg(long)]
    pub tail_mass: Option<f64>,
    /// Quadrature nodes per component for the spectral backend
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Eigenvalues kept by the spectral backend
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Time points for `covcheck`, comma-separated
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<f64>,
    /// Report format
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Settings {
    /// Flags in `self` win over values from `file`.
    pub fn over(self, file: Settings) -> Settings {
        Settings {
            theta: self.theta.or(file.theta),
            n: self.n.or(file.n),
            reps: self.reps.or(file.reps),
            seed: self.seed.or(file.seed),
            measure: if self.measure.is_empty() { file.measure } else { self.measure },
            rescale_measure: self.rescale_measure || file.rescale_measure,
            grid_size: self.grid_size.or(file.grid_size),
            backend: self.backend.or(file.backend),
            input: self.input.or(file.input),
            output: self.output.or(file.output),
            artifact: self.artifact.or(file.artifact),
            null: self.null.or(file.null),
            dictionary: self.dictionary.or(file.dictionary),
            support: self.support.or(file.support),
            tail_mass: self.tail_mass.or(file.tail_mass),
            nodes: self.nodes.or(file.nodes),
            kmax: self.kmax.or(file.kmax),
            grid: if self.grid.is_empty() { file.grid } else { self.grid },
            format: self.format.or(file.format),
        }
    }
}

pub fn load_file(path: &Path) -> anyhow::Result<Settings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())).into())
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_REPS: usize = 10_000;
pub const DEFAULT_GRID_SIZE: usize = 256;
pub const DEFAULT_TAIL_MASS: f64 = 1e-6;
pub const DEFAULT_NODES: usize = 256;
pub const DEFAULT_KMAX: usize = 64;

/// Fully resolved configuration; its JSON form is echoed into every output
/// and hashed into the config digest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandName,
    pub seed: u64,
    #[serde(flatten)]
    pub settings: Settings,
}

impl RunConfig {
    pub fn new(command: CommandName, mut settings: Settings) -> Self {
        let seed = settings.seed.unwrap_or(DEFAULT_SEED);
        settings.seed = None;
        Self { command, seed, settings }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::to_json`].
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_json().as_bytes());
        hex::encode(hash)[..16].to_owned()
    }

    pub fn format(&self) -> Format {
        self.settings.format.unwrap_or_default()
    }

    pub fn reps(&self) -> usize {
        self.settings.reps.unwrap_or(DEFAULT_REPS)
    }

    pub fn grid_size(&self) -> usize {
        self.settings.grid_size.unwrap_or(DEFAULT_GRID_SIZE)
    }

    pub fn nodes(&self) -> usize {
        self.settings.nodes.unwrap_or(DEFAULT_NODES)
    }

    pub fn kmax(&self) -> usize {
        self.settings.kmax.unwrap_or(DEFAULT_KMAX)
    }

    pub fn theta(&self) -> anyhow::Result<f64> {
        match self.settings.theta {
            Some(t) if t > 0.0 && t < 1.0 => Ok(t),
            Some(t) => config_error(format!("--theta must lie in (0,1), got {t}")),
            None => config_error(format!("{} needs --theta", self.command)),
        }
    }

    pub fn n(&self) -> anyhow::Result<u64> {
        match self.settings.n {
            Some(0) => config_error("--n must be at least 1"),
            Some(n) => Ok(n),
            None => config_error(format!("{} needs --n", self.command)),
        }
    }

    pub fn input(&self) -> anyhow::Result<&Path> {
        match &self.settings.input {
            Some(p) => Ok(p),
            None => config_error(format!("{} needs --input", self.command)),
        }
    }

    pub fn positive_reps(&self) -> anyhow::Result<usize> {
        match self.reps() {
            0 => config_error("--reps must be at least 1"),
            r => Ok(r),
        }
    }

    /// The configured measure, or `None` when no `--measure` was given.
    pub fn measure(&self) -> anyhow::Result<Option<AMeasure>> {
        parse_measure(&self.settings.measure, self.settings.rescale_measure)
    }

    /// Provenance lines embedded in every artifact.
    pub fn provenance(&self) -> Vec<String> {
        vec![
            format!("command={}", self.command),
            format!("seed={}", self.seed),
            format!("config_digest={}", self.digest()),
            format!("config={}", self.to_json()),
        ]
    }
}

/// Parses `example1`, `atom=t:h` and bare `t:h` entries into a measure.
pub fn parse_measure(entries: &[String], rescale: bool) -> anyhow::Result<Option<AMeasure>> {
    if entries.is_empty() {
        return Ok(None);
    }
    if entries.iter().any(|e| e.trim() == "example1") {
        if entries.len() > 1 {
            return config_error("`example1` cannot be combined with explicit atoms");
        }
        return Ok(Some(AMeasure::example1()));
    }
    let mut atoms = Vec::with_capacity(entries.len());
    for e in entries {
        let spec = e.trim();
        let spec = spec.strip_prefix("atom=").unwrap_or(spec);
        let atom: Atom = spec.parse().map_err(|err| ConfigError(format!("--measure {e}: {err}")))?;
        atoms.push(atom);
    }
    let built = if rescale { AMeasure::rescaled(&atoms) } else { validate_measure(&atoms) };
    built.map(Some).map_err(|err| ConfigError(format!("--measure: {err}")).into())
}
