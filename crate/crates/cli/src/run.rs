//! `search` and `sweep`: running seeds and aggregating their summaries.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use advnas_core::estimators::EstimatorKind;
use advnas_core::search::{nearest_rank, SearchRun};
use serde::Serialize;

use crate::config::ConfigDocument;
use crate::logs::{run_log_path, LogLine, RunLogWriter, SummaryLine};
use crate::{CliError, CliResult};

/// Runs one seed of `doc`, streaming its log. An aborted run still yields a
/// summary; only IO and configuration problems are errors.
pub fn run_one(doc: &ConfigDocument, seed: u64, out: &Path) -> CliResult<(SummaryLine, PathBuf)> {
    let search = doc.search();
    let kind = search.strategy.kind;
    let path = run_log_path(out, kind, seed);
    let mut log = RunLogWriter::create(path.clone(), &doc.output.formats)?;
    let start = Instant::now();
    let result = SearchRun::new(search.clone(), seed).and_then(|r| r.run(&mut log, None));
    let secs = start.elapsed().as_secs_f64();
    let summary = match result {
        Ok(o) => SummaryLine::completed(&o.summary, secs),
        Err(e) => SummaryLine::aborted(seed, kind, search.run.iterations, e.to_string(), secs),
    };
    log.finish(&summary)?;
    Ok((summary, path))
}

/// Runs every configured seed in order; fails if any run aborted.
pub fn search(doc: &ConfigDocument, out: &Path) -> CliResult<Vec<SummaryLine>> {
    let mut summaries = Vec::new();
    for &seed in &doc.run.seeds {
        let (s, _) = run_one(doc, seed, out)?;
        println!("{}", LogLine::Summary(s.clone()).to_json());
        summaries.push(s);
    }
    abort_error(&summaries).map_or(Ok(summaries), Err)
}

fn abort_error(summaries: &[SummaryLine]) -> Option<CliError> {
    let bad: Vec<String> = summaries
        .iter()
        .filter_map(|s| s.aborted.as_ref().map(|why| format!("{} seed {}: {why}", s.strategy, s.seed)))
        .collect();
    (!bad.is_empty()).then(|| CliError::Abort(bad.join("; ")))
}

/// Percentiles of one quantity across seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quartiles {
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
}

impl Quartiles {
    /// Nearest-rank quartiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            p25: nearest_rank(values, 25.0)?,
            median: nearest_rank(values, 50.0)?,
            p75: nearest_rank(values, 75.0)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub strategy: EstimatorKind,
    pub runs: usize,
    pub completed: usize,
    /// Runs whose argmax ended on the teacher (toy task only).
    pub recovered: usize,
    /// Some run of this strategy aborted; statistics cover the rest.
    pub partial: bool,
    pub test_loss: Option<Quartiles>,
    /// Unrecovered runs count as infinitely slow.
    pub recovery: Option<Quartiles>,
}

pub fn aggregate(strategies: &[EstimatorKind], summaries: &[SummaryLine]) -> Vec<AggregateRow> {
    strategies
        .iter()
        .map(|&k| {
            let mine: Vec<&SummaryLine> = summaries.iter().filter(|s| s.strategy == k).collect();
            let done: Vec<&&SummaryLine> = mine.iter().filter(|s| s.aborted.is_none()).collect();
            let losses: Vec<f64> = done.iter().filter_map(|s| s.final_test_loss).collect();
            let toy: Vec<&&&SummaryLine> = done.iter().filter(|s| s.teacher.is_some()).collect();
            let recovery: Vec<f64> =
                toy.iter().map(|s| s.iterations_to_recovery.map_or(f64::INFINITY, |i| i as f64)).collect();
            AggregateRow {
                strategy: k,
                runs: mine.len(),
                completed: done.len(),
                recovered: toy.iter().filter(|s| s.iterations_to_recovery.is_some()).count(),
                partial: done.len() < mine.len(),
                test_loss: Quartiles::of(&losses),
                recovery: Quartiles::of(&recovery),
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: [&str; 11] = [
    "strategy",
    "runs",
    "completed",
    "recovered",
    "partial",
    "test_loss_p25",
    "test_loss_median",
    "test_loss_p75",
    "recovery_p25",
    "recovery_median",
    "recovery_p75",
];

fn quartile_fields(q: Option<Quartiles>) -> [String; 3] {
    match q {
        Some(q) => [q.p25.to_string(), q.median.to_string(), q.p75.to_string()],
        None => Default::default(),
    }
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Io { path: path.to_path_buf(), source: e.into() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(AGGREGATE_HEADER).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.strategy.name().to_string(),
            r.runs.to_string(),
            r.completed.to_string(),
            r.recovered.to_string(),
            r.partial.to_string(),
        ];
        rec.extend(quartile_fields(r.test_loss));
        rec.extend(quartile_fields(r.recovery));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(CliError::io(path))
}

/// Every strategy on every seed, `parallel` runs at a time. Writes the
/// per-run logs, `summaries.jsonl` and `aggregate.csv` under `out`.
pub fn sweep(
    doc: &ConfigDocument,
    strategies: &[EstimatorKind],
    seeds: &[u64],
    parallel: usize,
    out: &Path,
) -> CliResult<Vec<AggregateRow>> {
    if seeds.is_empty() || strategies.is_empty() {
        return Err(CliError::Config("a sweep needs at least one seed and one strategy".into()));
    }
    let jobs: Vec<(EstimatorKind, u64)> = strategies.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let docs: Vec<ConfigDocument> = strategies
        .iter()
        .map(|&k| {
            let mut d = doc.clone();
            d.apply(Some(k), None, Some(seeds.to_vec()))?;
            Ok(d)
        })
        .collect::<CliResult<_>>()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<SummaryLine>>>> = Mutex::new(jobs.iter().map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..parallel.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(kind, seed)) = jobs.get(i) else { break };
                let d = &docs[strategies.iter().position(|&k| k == kind).expect("job strategy listed")];
                let r = run_one(d, seed, out).map(|(s, _)| s);
                if let Ok(s) = &r {
                    eprintln!("{kind} seed {seed}: recovery {:?}, {:.1}s", s.iterations_to_recovery, s.meta.wall_clock_seconds);
                }
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });
    let summaries = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<CliResult<Vec<_>>>()?;

    let spath = out.join("summaries.jsonl");
    let text: String = summaries.iter().map(|s| LogLine::Summary(s.clone()).to_json() + "\n").collect();
    std::fs::write(&spath, text).map_err(CliError::io(&spath))?;
    let rows = aggregate(strategies, &summaries);
    write_aggregate(&out.join("aggregate.csv"), &rows)?;
    abort_error(&summaries).map_or(Ok(rows), Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logs::Meta;
    use advnas_core::Architecture;

    fn summary(kind: EstimatorKind, seed: u64, loss: f64, recovery: Option<u64>) -> SummaryLine {
        SummaryLine {
            seed,
            strategy: kind,
            iterations: 100,
            final_arch: Some(Architecture::new(vec![0])),
            final_test_loss: Some(loss),
            final_entropy: Some(0.1),
            teacher: Some(Architecture::new(vec![0])),
            iterations_to_recovery: recovery,
            cost: None,
            aborted: None,
            meta: Meta::default(),
        }
    }

    #[test]
    fn single_seed_median_is_that_run() {
        let rows = aggregate(&[EstimatorKind::Reinforce], &[summary(EstimatorKind::Reinforce, 0, 0.5, Some(40))]);
        let r = &rows[0];
        assert_eq!(r.test_loss, Some(Quartiles { p25: 0.5, median: 0.5, p75: 0.5 }));
        assert_eq!(r.recovery.unwrap().median, 40.0);
        assert!(!r.partial);
    }

    #[test]
    fn unrecovered_runs_rank_last() {
        let k = EstimatorKind::AdvantageApprox;
        let s: Vec<SummaryLine> =
            [Some(10), None, Some(30), None].iter().enumerate().map(|(i, &r)| summary(k, i as u64, 0.0, r)).collect();
        let row = &aggregate(&[k], &s)[0];
        assert_eq!(row.recovered, 2);
        let q = row.recovery.unwrap();
        assert_eq!((q.p25, q.median, q.p75), (10.0, 30.0, f64::INFINITY));
    }

    #[test]
    fn aborted_runs_mark_partial() {
        let k = EstimatorKind::Reinforce;
        let mut bad = summary(k, 1, 0.0, None);
        bad.aborted = Some("non-finite reward".into());
        let row = &aggregate(&[k], &[summary(k, 0, 0.25, Some(3)), bad])[0];
        assert!(row.partial);
        assert_eq!((row.runs, row.completed), (2, 1));
        assert_eq!(row.test_loss.unwrap().median, 0.25);
    }
}
