use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use simxfer::experiment::{emit_table, run_experiment, ExperimentReport, ExperimentSpec, RunMode};
use simxfer::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "simxfer", version, about = "Run sentence-similarity transfer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once with the first value of each grid list and score the test split.
    Run(RunArgs),
    /// Search the full hyperparameter grid and score the test split with the best cell.
    Grid(RunArgs),
    /// Score the test split by embedding cosine, without training.
    Eval(RunArgs),
    /// Combine report files into a result table.
    Table(TableArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; defaults to the spec's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid cells trained in parallel.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Print elapsed wall-clock time to stderr.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Report files written by run, grid or eval.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Also write the tab-separated table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_config_error() {
        EXIT_USAGE
    } else if err.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_NUMERIC
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: &RunArgs, mode: RunMode) -> Result<(), Error> {
    let mut spec = ExperimentSpec::load(&args.spec)
        .map_err(|e| match e {
            Error::Io { .. } => Error::Config(e.to_string()),
            other => other,
        })
        .map_err(|e| e.in_stage("reading spec"))?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    if let Some(dir) = std::env::var_os("SIMXFER_DATA_DIR") {
        spec = spec.with_data_dir(Path::new(&dir));
    }
    let report = run_experiment(&spec, mode, args.threads.max(1))?;
    let out = args.out.as_deref().or(spec.output.as_deref());
    write_output(out, &report.to_tsv()).map_err(|e| e.in_stage("writing report"))?;
    if let Some(path) = out {
        let score = report.test_score.map_or("NA".to_string(), |s| format!("{s:.4}"));
        eprintln!(
            "{} {} on {}: test {} {score} -> {}",
            report.encoder.as_str(),
            report.setting,
            report.dataset,
            report.metric,
            path.display()
        );
    }
    if args.timings {
        eprintln!("wall-clock seconds: {:.3}", report.wall_clock_seconds);
    }
    Ok(())
}

fn table(args: &TableArgs) -> Result<(), Error> {
    let reports = args
        .reports
        .iter()
        .map(ExperimentReport::load)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.in_stage("reading reports"))?;
    let table = emit_table(&reports)?;
    print!("{}", table.to_aligned());
    if let Some(path) = &args.out {
        write_output(Some(path), &table.to_tsv()).map_err(|e| e.in_stage("writing table"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, RunMode::Single),
        Command::Grid(a) => run(a, RunMode::Grid),
        Command::Eval(a) => run(a, RunMode::Evaluate),
        Command::Table(a) => table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
