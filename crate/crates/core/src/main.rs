use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use i2lqr::runlog::{self, RunLogError};
use i2lqr::runner::{self, RunError, RunOptions};
use i2lqr::scenario::{self, bundled, Scenario, ScenarioError};

const EXIT_INTERNAL: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_INCOMPLETE: u8 = 4;
const EXIT_REPLAY_MISMATCH: u8 = 5;

#[derive(Parser)]
#[command(name = "i2lqr", version, about = "History-driven iterative LQR benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write the run log and summary table.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        /// Output directory for run.log and summary.csv.
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Threads used for the per-cycle iLQR solves.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Log per-cycle controller diagnostics.
        #[arg(long)]
        verbose: bool,
        /// Override the scenario's iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Re-simulate a run log and check every logged state.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: String,
    },
}

enum Failure {
    Scenario(ScenarioError),
    Log(RunLogError),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Scenario(ScenarioError::Parse { .. }) | Failure::Log(RunLogError::Parse { .. }) => EXIT_PARSE,
            Failure::Scenario(ScenarioError::Io { .. }) | Failure::Log(RunLogError::Io(_)) => EXIT_INTERNAL,
            Failure::Scenario(_) | Failure::Log(_) => EXIT_VALIDATION,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Scenario(e) => e.to_string(),
            Failure::Log(e) => e.to_string(),
            Failure::Internal(m) => m.clone(),
        }
    }
}

fn resolve_scenario(arg: &str) -> Result<Scenario, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        return scenario::load_scenario(path).map_err(Failure::Scenario);
    }
    match bundled::source(arg) {
        Some(text) => Scenario::from_toml_str(text).map_err(Failure::Scenario),
        None => Err(Failure::Scenario(ScenarioError::Io {
            path: arg.to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario"),
        })),
    }
}

fn run(scenario_arg: &str, out: &Path, workers: usize, verbose: bool, iterations: Option<usize>) -> Result<u8, Failure> {
    let mut scenario = resolve_scenario(scenario_arg)?;
    if let Some(n) = iterations {
        scenario.num_iterations = n;
    }
    let io = |e: std::io::Error| Failure::Internal(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    let log_path = out.join("run.log");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io)?);
    runlog::write_header(&mut log, &scenario).map_err(io)?;

    let dt = scenario.model.dt;
    let mut write_err = None;
    let result = runner::run_task_with(&scenario, RunOptions { workers, verbose }, |it| {
        eprintln!(
            "iteration {:>3}: {:>4} steps{}",
            it.iteration,
            it.steps(),
            if it.completed { "" } else { " (incomplete)" }
        );
        if let Err(e) = runlog::write_iteration(&mut log, it, dt) {
            write_err.get_or_insert(e);
        }
    })
    .map_err(|e| match e {
        RunError::NoFeasibleInitialTrajectory { .. } => Failure::Scenario(ScenarioError::Invalid(e.to_string())),
        other => Failure::Internal(other.to_string()),
    })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    log.flush().map_err(io)?;
    drop(log);

    let parsed = runlog::read_run_log(BufReader::new(File::open(&log_path).map_err(io)?)).map_err(Failure::Log)?;
    let rows = runlog::summary_table(&parsed);
    let mut csv = BufWriter::new(File::create(out.join("summary.csv")).map_err(io)?);
    runlog::write_summary_csv(&mut csv, &rows).map_err(io)?;
    csv.flush().map_err(io)?;

    print!("{}", runlog::format_summary(&rows));
    println!("wall clock: {:.2} s", result.wall_clock.as_secs_f64());
    let audits_ok = result.iterations.iter().all(|it| it.collision_free && it.inputs_admissible && it.replay_exact);
    if !audits_ok {
        eprintln!("warning: at least one trajectory failed its audit");
    }
    Ok(if result.all_completed() { 0 } else { EXIT_INCOMPLETE })
}

fn replay(path: &Path) -> Result<u8, Failure> {
    let file = File::open(path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    let log = runlog::read_run_log(BufReader::new(file)).map_err(Failure::Log)?;
    let report = runlog::replay(&log);
    println!("replayed {} iterations, {} steps", report.iterations, report.steps);
    for m in &report.mismatches {
        println!(
            "mismatch: iteration {} t = {}: logged {:?}, recomputed {:?}",
            m.iteration, m.t, m.logged, m.recomputed
        );
    }
    for i in &report.inadmissible {
        println!("inadmissible input in iteration {i}");
    }
    Ok(if report.is_exact() { 0 } else { EXIT_REPLAY_MISMATCH })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, out, workers, verbose, iterations } => run(&scenario, &out, workers, verbose, iterations),
        Command::Replay { log } => replay(&log),
        Command::Validate { scenario } => resolve_scenario(&scenario).map(|s| {
            println!("{}: ok ({} obstacles, {} iterations)", s.name, s.obstacles.len(), s.num_iterations);
            0
        }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
