//! The TOML configuration document.

use std::path::{Path, PathBuf};

use advnas_core::estimators::EstimatorKind;
use advnas_core::optim::OptimizerConfig;
use advnas_core::search::{RunConfig, SearchConfig, StrategyConfig, TaskConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult, OUT_DIR_ENV};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogFormat {
    /// One JSON value per line: iteration records, then a summary.
    Jsonl,
    /// Per-iteration records as CSV, next to the JSONL log.
    Csv,
}

fn default_formats() -> Vec<LogFormat> {
    vec![LogFormat::Jsonl]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$ADVNAS_OUT_DIR`, then `runs`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<LogFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: default_formats() }
    }
}

fn default_optimizer_w() -> OptimizerConfig {
    OptimizerConfig::sgd(0.025, 0.9)
}

fn default_optimizer_theta() -> OptimizerConfig {
    OptimizerConfig::adam(1e-3)
}

/// A complete experiment description. Unknown keys anywhere are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub task: TaskConfig,
    pub strategy: StrategyConfig,
    #[serde(default = "default_optimizer_w")]
    pub optimizer_w: OptimizerConfig,
    #[serde(default = "default_optimizer_theta")]
    pub optimizer_theta: OptimizerConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ConfigDocument {
    /// The toy recovery experiment with the approximate advantage.
    fn default() -> Self {
        Self::from_search(SearchConfig::toy(EstimatorKind::AdvantageApprox, 50_000))
    }
}

impl ConfigDocument {
    pub fn from_search(c: SearchConfig) -> Self {
        Self {
            task: c.task,
            strategy: c.strategy,
            optimizer_w: c.optimizer_w,
            optimizer_theta: c.optimizer_theta,
            run: c.run,
            output: OutputConfig::default(),
        }
    }

    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            task: self.task.clone(),
            strategy: self.strategy.clone(),
            optimizer_w: self.optimizer_w,
            optimizer_theta: self.optimizer_theta,
            run: self.run.clone(),
        }
    }

    /// Parses and validates. Errors carry the line and column.
    pub fn parse(text: &str) -> CliResult<Self> {
        let doc: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration documents always serialize")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.search().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats must not be empty".into()));
        }
        Ok(())
    }

    /// Output directory: explicit override, then the document, then the
    /// environment, then `runs`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output.directory.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Applies command-line overrides, then validates again.
    pub fn apply(&mut self, strategy: Option<EstimatorKind>, iterations: Option<u64>, seeds: Option<Vec<u64>>) -> CliResult<()> {
        if let Some(k) = strategy {
            self.strategy.kind = k;
        }
        if let Some(n) = iterations {
            self.run.iterations = n;
        }
        if let Some(s) = seeds {
            self.run.seeds = s;
        }
        self.validate()
    }
}

/// Every setting with its default value, as a loadable document.
pub fn defaults_reference() -> String {
    let doc = ConfigDocument::default();
    let mut out = String::from(
        "# Default configuration. Required keys: task.kind, strategy.kind,\n\
         # run.iterations, and optimizer_*.kind when that section is present.\n\
         # Everything else may be omitted; unknown keys are rejected.\n\
         #\n\
         # task.kind: \"toy\" or \"linear\". Linear tasks take `sizes`, `low`, `high`\n\
         #   or explicit `rewards` (one list per edge).\n\
         # strategy.kind: reinforce, advantage_exact, advantage_approx,\n\
         #   dense_softmax, gumbel_st.\n\
         # optimizer_*.kind: adam or sgd_momentum; schedule: constant or cosine.\n\
         # run.cadence: held-out loss every `cadence` iterations (1 or a divisor\n\
         #   of run.iterations). run.selection_mode: argmax or process_best.\n\
         # output.directory: defaults to $ADVNAS_OUT_DIR, then \"runs\".\n\
         # output.formats: any of \"jsonl\", \"csv\".\n\n",
    );
    out.push_str(&doc.to_toml());
    out
}
