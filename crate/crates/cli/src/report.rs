//! `report`: per-strategy trajectory tables from a directory of run logs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::logs::LogLine;
use crate::run::Quartiles;
use crate::{CliError, CliResult};

pub const REPORT_HEADER: [&str; 9] = [
    "strategy",
    "iteration",
    "runs",
    "test_loss_p25",
    "test_loss_median",
    "test_loss_p75",
    "entropy_p25",
    "entropy_median",
    "entropy_p75",
];

/// A log line that could not be used.
#[derive(Clone, Debug, PartialEq)]
pub struct BadLine {
    pub path: PathBuf,
    /// 1-based.
    pub line: usize,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportOutcome {
    pub files: usize,
    pub strategies: Vec<String>,
    pub bad_lines: Vec<BadLine>,
    pub written: Vec<PathBuf>,
}

#[derive(Default)]
struct Column {
    runs: usize,
    losses: Vec<f64>,
    entropies: Vec<f64>,
}

fn log_files(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    for entry in std::fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_dir() {
            log_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "jsonl") && path.file_name().is_some_and(|n| n != "summaries.jsonl") {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads every run log under `logs` and writes `report.csv` plus one
/// `report_<strategy>.csv` per strategy into `out`. Unusable lines are
/// collected with their line numbers and skipped.
pub fn report(logs: &Path, out: &Path) -> CliResult<ReportOutcome> {
    let mut files = Vec::new();
    log_files(logs, &mut files)?;
    files.sort();
    let mut tables: BTreeMap<String, BTreeMap<u64, Column>> = BTreeMap::new();
    let mut bad_lines = Vec::new();
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let mut points = Vec::new();
        let mut strategy = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match LogLine::parse(line) {
                Ok(LogLine::Iteration(it)) => points.push((it.iteration, it.test_loss, it.entropy_mean)),
                Ok(LogLine::Summary(s)) => strategy = Some(s.strategy.name().to_string()),
                Err(error) => bad_lines.push(BadLine { path: path.clone(), line: n + 1, error }),
            }
        }
        // Logs without a summary fall back to their directory name.
        let strategy = strategy
            .or_else(|| path.parent().and_then(Path::file_name).map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "unknown".into());
        let table = tables.entry(strategy).or_default();
        for (iteration, loss, entropy) in points {
            let col = table.entry(iteration).or_default();
            col.runs += 1;
            col.losses.extend(loss);
            col.entropies.push(entropy);
        }
    }

    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let mut written = Vec::new();
    let mut all = Vec::new();
    for (strategy, table) in &tables {
        let rows: Vec<Vec<String>> = table.iter().map(|(it, col)| row(strategy, *it, col)).collect();
        let path = out.join(format!("report_{strategy}.csv"));
        write_table(&path, &rows)?;
        written.push(path);
        all.extend(rows);
    }
    let path = out.join("report.csv");
    write_table(&path, &all)?;
    written.push(path);
    Ok(ReportOutcome { files: files.len(), strategies: tables.into_keys().collect(), bad_lines, written })
}

fn row(strategy: &str, iteration: u64, col: &Column) -> Vec<String> {
    let mut r = vec![strategy.to_string(), iteration.to_string(), col.runs.to_string()];
    for q in [Quartiles::of(&col.losses), Quartiles::of(&col.entropies)] {
        match q {
            Some(q) => r.extend([q.p25.to_string(), q.median.to_string(), q.p75.to_string()]),
            None => r.extend([String::new(), String::new(), String::new()]),
        }
    }
    r
}

fn write_table(path: &Path, rows: &[Vec<String>]) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(REPORT_HEADER).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}
