use std::path::PathBuf;
use std::process::ExitCode;

use advnas::config::{defaults_reference, ConfigDocument};
use advnas::verify::{Suite, VerifyOptions};
use advnas::{report, run, verify, CliResult};
use advnas_core::estimators::EstimatorKind;
use clap::{Parser, Subcommand};

/// Sparse one-shot architecture search with per-edge advantages.
#[derive(Parser)]
#[command(name = "advnas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured seeds and write one log per run.
    Search {
        /// TOML configuration; the toy defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<EstimatorKind>,
        #[arg(long)]
        iterations: Option<u64>,
        /// Output directory [default: config, then $ADVNAS_OUT_DIR, then runs].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several strategies over several seeds and aggregate.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds or a half-open range such as 0..10
        /// [default: the configured seeds].
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<Seeds>,
        /// Comma-separated strategy names [default: the configured one].
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategies: Vec<EstimatorKind>,
        /// Runs executed at once.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact checks on random instances.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Number of instances [default: 100, 20, 20 or 50 by suite].
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Check a deliberately broken variant instead; it must fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Tabulate test loss and entropy quartiles per iteration from run logs.
    Report {
        /// Directory searched recursively for run logs.
        logs: PathBuf,
        /// Where the CSV tables go [default: the log directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every configuration key with its default value.
    Defaults,
}

#[derive(Clone, Debug)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |_| format!("invalid seed list {s:?}");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed list {s:?} is empty"));
    }
    Ok(Seeds(seeds))
}

fn parse_strategy(s: &str) -> Result<EstimatorKind, String> {
    s.parse().map_err(|e: advnas_core::Error| e.to_string())
}

fn load(config: Option<&PathBuf>) -> CliResult<ConfigDocument> {
    match config {
        Some(p) => ConfigDocument::load(p),
        None => Ok(ConfigDocument::default()),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Search { config, seed, strategy, iterations, out } => {
            let mut doc = load(config.as_ref())?;
            doc.apply(strategy, iterations, seed.map(|s| vec![s]))?;
            run::search(&doc, &doc.out_dir(out.as_deref())).map(drop)
        }
        Command::Sweep { config, seeds, strategies, parallel, iterations, out } => {
            let mut doc = load(config.as_ref())?;
            doc.apply(None, iterations, seeds.map(|s| s.0))?;
            let strategies = if strategies.is_empty() { vec![doc.strategy.kind] } else { strategies };
            let dir = doc.out_dir(out.as_deref());
            let result = run::sweep(&doc, &strategies, &doc.run.seeds.clone(), parallel, &dir);
            let agg = std::fs::read_to_string(dir.join("aggregate.csv")).unwrap_or_default();
            print!("{agg}");
            result.map(drop)
        }
        Command::Verify { suite, instances, seed, negative_control } => {
            let instances = instances.unwrap_or(suite.default_instances());
            verify::verify(&VerifyOptions { suite, instances, seed, negative_control }).map(drop)
        }
        Command::Report { logs, out } => {
            let out = out.unwrap_or_else(|| logs.clone());
            let r = report::report(&logs, &out)?;
            for b in &r.bad_lines {
                eprintln!("{}:{}: {}", b.path.display(), b.line, b.error);
            }
            for p in &r.written {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Defaults => {
            print!("{}", defaults_reference());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("advnas: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
