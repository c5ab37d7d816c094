//! Run configuration: command-line flags layered over an optional
//! `key = value` file whose keys are the long flag names.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use nmfk_core::{LogMode, SelectionRule, SolveOptions};

use crate::error::{CliError, Result};
use crate::table::LoadOptions;

pub const DEFAULT_RESTARTS: usize = 1000;

/// Every setting as an optional flag; unset flags fall back to the config
/// file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Line-oriented `key = value` file; keys are the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Delimited table: header row, location id first, one column per attribute.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Fixed number of signatures (run only).
    #[arg(long)]
    pub k: Option<usize>,
    /// Random restarts per k [default: 1000].
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Minimum per-cluster silhouette for a k to qualify [default: 0.25].
    #[arg(long)]
    pub silhouette_threshold: Option<f64>,
    /// `auto`, `none`, or a comma-separated list of attribute names.
    #[arg(long)]
    pub log_transform: Option<String>,
    /// Single character, or `tab` [default: ,].
    #[arg(long)]
    pub delimiter: Option<String>,
    /// Cell text treated as missing, in addition to empty cells and NaN.
    #[arg(long, allow_hyphen_values = true)]
    pub missing: Option<String>,
    /// Worker threads [default: available parallelism].
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub relative_tolerance: Option<f64>,
    #[arg(long)]
    pub epsilon_guard: Option<f64>,
    #[arg(long)]
    pub loss_check_interval: Option<usize>,
}

const KEYS: &[&str] = &[
    "input",
    "output-dir",
    "k-min",
    "k-max",
    "k",
    "restarts",
    "seed",
    "silhouette-threshold",
    "log-transform",
    "delimiter",
    "missing",
    "threads",
    "max-iterations",
    "relative-tolerance",
    "epsilon-guard",
    "loss-check-interval",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Run,
    Geojson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub load: LoadOptions,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub k: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub silhouette_threshold: f64,
    pub log_mode: LogMode,
    pub threads: Option<usize>,
    pub solver: SolveOptions,
}

/// Parses `key = value` lines; `#` starts a comment line. Keys may use `-`
/// or `_`.
pub fn parse_config_file(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (index, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            |what: &str| CliError::Config(format!("{}:{}: {what}", path.display(), index + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad("expected key = value"))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(bad(&format!("unknown key {key:?}")));
        }
        if entries
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(bad(&format!("duplicate key {key:?}")));
        }
    }
    Ok(entries)
}

fn pick<T>(flag: &Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T: FromStr + Clone,
    T::Err: Display,
{
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    file.get(key)
        .map(|text| {
            text.parse::<T>()
                .map_err(|e| CliError::Config(format!("config key {key}: {text:?}: {e}")))
        })
        .transpose()
}

pub fn parse_delimiter(text: &str) -> Result<u8> {
    match text {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if text.len() == 1 && text.is_ascii() => Ok(text.as_bytes()[0]),
        _ => Err(CliError::Config(format!(
            "delimiter must be a single ASCII character or \"tab\", got {text:?}"
        ))),
    }
}

pub fn parse_log_mode(text: &str) -> Result<LogMode> {
    match text.trim() {
        "auto" => Ok(LogMode::Auto),
        "none" => Ok(LogMode::None),
        list => {
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            if names.iter().any(String::is_empty) {
                return Err(CliError::Config(format!("bad log-transform list {list:?}")));
            }
            Ok(LogMode::Attributes(names))
        }
    }
}

impl RunConfig {
    /// Merges flags over the config file and validates the result for
    /// `command`.
    pub fn resolve(flags: &Overrides, command: Command) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                parse_config_file(&text, path)?
            }
            None => BTreeMap::new(),
        };
        Self::from_parts(flags, &file, command)
    }

    pub fn from_parts(
        flags: &Overrides,
        file: &BTreeMap<String, String>,
        command: Command,
    ) -> Result<Self> {
        let config = |msg: &str| CliError::Config(msg.to_string());
        let input =
            pick(&flags.input, file, "input")?.ok_or_else(|| config("--input is required"))?;
        let output_dir = pick(&flags.output_dir, file, "output-dir")?
            .ok_or_else(|| config("--output-dir is required"))?;
        let delimiter = match pick::<String>(&flags.delimiter, file, "delimiter")? {
            Some(text) => parse_delimiter(&text)?,
            None => b',',
        };
        let missing = pick(&flags.missing, file, "missing")?;
        let log_mode = match pick::<String>(&flags.log_transform, file, "log-transform")? {
            Some(text) => parse_log_mode(&text)?,
            None => LogMode::Auto,
        };
        let defaults = SolveOptions::default();
        let solver = SolveOptions {
            max_iterations: pick(&flags.max_iterations, file, "max-iterations")?
                .unwrap_or(defaults.max_iterations),
            relative_tolerance: pick(&flags.relative_tolerance, file, "relative-tolerance")?
                .unwrap_or(defaults.relative_tolerance),
            epsilon_guard: pick(&flags.epsilon_guard, file, "epsilon-guard")?
                .unwrap_or(defaults.epsilon_guard),
            loss_check_interval: pick(&flags.loss_check_interval, file, "loss-check-interval")?
                .unwrap_or(defaults.loss_check_interval),
        };
        let cfg = Self {
            input,
            output_dir,
            load: LoadOptions { delimiter, missing },
            k_min: pick(&flags.k_min, file, "k-min")?,
            k_max: pick(&flags.k_max, file, "k-max")?,
            k: pick(&flags.k, file, "k")?,
            restarts: pick(&flags.restarts, file, "restarts")?.unwrap_or(DEFAULT_RESTARTS),
            seed: pick(&flags.seed, file, "seed")?.unwrap_or(0),
            silhouette_threshold: pick(&flags.silhouette_threshold, file, "silhouette-threshold")?
                .unwrap_or(SelectionRule::DEFAULT_THRESHOLD),
            log_mode,
            threads: pick(&flags.threads, file, "threads")?,
            solver,
        };
        cfg.validate(command)?;
        Ok(cfg)
    }

    fn validate(&self, command: Command) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        match command {
            Command::Sweep if self.k.is_some() => {
                return fail("--k applies to run; use --k-min/--k-max with sweep".into())
            }
            Command::Run if self.k.is_none() => return fail("run needs --k".into()),
            Command::Run if self.k_min.is_some() || self.k_max.is_some() => {
                return fail("--k-min/--k-max apply to sweep; run takes --k".into())
            }
            _ => {}
        }
        if self.restarts < 2 {
            return fail(format!("restarts = {}; need at least 2", self.restarts));
        }
        if !(-1.0..=1.0).contains(&self.silhouette_threshold) {
            return fail(format!(
                "silhouette threshold {} outside [-1, 1]",
                self.silhouette_threshold
            ));
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        if let (Some(lo), Some(hi)) = (self.k_min, self.k_max) {
            if hi < lo {
                return fail(format!("k-max {hi} is below k-min {lo}"));
            }
        }
        self.solver
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}
