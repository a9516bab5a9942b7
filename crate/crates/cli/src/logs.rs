//! Line-delimited run logs.
//!
//! A run log holds one `iteration` line per iteration followed by one
//! `summary` line. Every line is a self-contained JSON object. Wall-clock
//! time appears only under the summary's `meta` key, so two runs of the
//! same configuration agree byte for byte once `meta` is dropped.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use advnas_core::estimators::EstimatorKind;
use advnas_core::search::{CostSummary, RecordSink, RunRecord, RunSummary};
use advnas_core::Architecture;
use serde::{Deserialize, Serialize};

use crate::config::LogFormat;
use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLine {
    pub iteration: u64,
    pub sampled_arch: Architecture,
    pub reward: f64,
    pub entropy_mean: f64,
    pub argmax_arch: Architecture,
    pub process_best_reward: f64,
    pub lr_w: Option<f64>,
    pub lr_theta: f64,
    pub test_loss: Option<f64>,
}

impl From<&RunRecord> for IterationLine {
    fn from(r: &RunRecord) -> Self {
        Self {
            iteration: r.iteration,
            sampled_arch: r.sampled_arch.clone(),
            reward: r.reward,
            entropy_mean: r.entropy_mean,
            argmax_arch: r.argmax_arch.clone(),
            process_best_reward: r.process_best_reward,
            lr_w: r.lr_w,
            lr_theta: r.lr_theta,
            test_loss: r.test_loss,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub seed: u64,
    pub strategy: EstimatorKind,
    pub iterations: u64,
    /// Absent when the run aborted.
    pub final_arch: Option<Architecture>,
    pub final_test_loss: Option<f64>,
    pub final_entropy: Option<f64>,
    pub teacher: Option<Architecture>,
    /// Toy task only.
    pub iterations_to_recovery: Option<u64>,
    pub cost: Option<CostSummary>,
    /// Diagnostic of an aborted run.
    pub aborted: Option<String>,
    /// Not part of the deterministic payload.
    pub meta: Meta,
}

impl SummaryLine {
    pub fn completed(s: &RunSummary, wall_clock_seconds: f64) -> Self {
        Self {
            seed: s.seed,
            strategy: s.strategy,
            iterations: s.iterations,
            final_arch: Some(s.final_arch.clone()),
            final_test_loss: Some(s.final_test_loss),
            final_entropy: Some(s.final_entropy),
            teacher: s.teacher.clone(),
            iterations_to_recovery: s.iterations_to_recovery,
            cost: Some(s.cost),
            aborted: None,
            meta: Meta { wall_clock_seconds },
        }
    }

    pub fn aborted(seed: u64, strategy: EstimatorKind, iterations: u64, why: String, wall_clock_seconds: f64) -> Self {
        Self {
            seed,
            strategy,
            iterations,
            final_arch: None,
            final_test_loss: None,
            final_entropy: None,
            teacher: None,
            iterations_to_recovery: None,
            cost: None,
            aborted: Some(why),
            meta: Meta { wall_clock_seconds },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogLine {
    Iteration(IterationLine),
    Summary(SummaryLine),
}

impl LogLine {
    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log lines always serialize")
    }
}

/// Log file for one run: `<dir>/<strategy>/seed-<seed>.jsonl`.
pub fn run_log_path(dir: &Path, strategy: EstimatorKind, seed: u64) -> PathBuf {
    dir.join(strategy.name()).join(format!("seed-{seed}.jsonl"))
}

const CSV_HEADER: [&str; 9] = [
    "iteration",
    "reward",
    "entropy_mean",
    "argmax_arch",
    "process_best_reward",
    "lr_w",
    "lr_theta",
    "test_loss",
    "sampled_arch",
];

fn arch_field(a: &Architecture) -> String {
    a.choices().iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Streams a run's records to disk. IO errors are held until
/// [`RunLogWriter::finish`], since record sinks cannot fail.
pub struct RunLogWriter {
    path: PathBuf,
    jsonl: BufWriter<File>,
    csv: Option<csv::Writer<File>>,
    error: Option<CliError>,
}

impl RunLogWriter {
    pub fn create(path: PathBuf, formats: &[LogFormat]) -> CliResult<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        let jsonl = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
        let csv = if formats.contains(&LogFormat::Csv) {
            let p = path.with_extension("csv");
            let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io { path: p.clone(), source: e.into() })?;
            w.write_record(CSV_HEADER).map_err(|e| CliError::Io { path: p, source: e.into() })?;
            Some(w)
        } else {
            None
        };
        Ok(Self { path, jsonl, csv, error: None })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_line(&mut self, line: &LogLine) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.jsonl, "{}", line.to_json()) {
            self.error = Some(CliError::Io { path: self.path.clone(), source: e });
        }
    }

    pub fn finish(mut self, summary: &SummaryLine) -> CliResult<()> {
        self.write_line(&LogLine::Summary(summary.clone()));
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.jsonl.flush().map_err(CliError::io(&self.path))?;
        if let Some(mut w) = self.csv.take() {
            w.flush().map_err(CliError::io(self.path.with_extension("csv")))?;
        }
        Ok(())
    }
}

impl RecordSink for RunLogWriter {
    fn record(&mut self, record: &RunRecord) {
        let line = IterationLine::from(record);
        if let (Some(w), None) = (self.csv.as_mut(), self.error.as_ref()) {
            let row = [
                line.iteration.to_string(),
                line.reward.to_string(),
                line.entropy_mean.to_string(),
                arch_field(&line.argmax_arch),
                line.process_best_reward.to_string(),
                opt_field(line.lr_w),
                line.lr_theta.to_string(),
                opt_field(line.test_loss),
                arch_field(&line.sampled_arch),
            ];
            if let Err(e) = w.write_record(&row) {
                self.error = Some(CliError::Io { path: self.path.with_extension("csv"), source: e.into() });
            }
        }
        self.write_line(&LogLine::Iteration(line));
    }
}
