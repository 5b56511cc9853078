//! `har`: fit, tune and apply highly adaptive ridge models, and run the
//! simulation and benchmark studies.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (a one-line JSON error is
//! written to stderr), 2 on a usage error.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand};
use serde_json::json;

use settings::{accepted, with_defaults, RunConfig, Settings};

#[derive(Parser, Debug)]
#[command(name = "har", version, about = "Highly adaptive ridge regression")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "HAR_THREADS")]
    threads: Option<usize>,

    /// JSON file of settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Only report warnings and errors on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tune lambda by leave-one-out CV, fit, and save the model.
    Fit(Settings),
    /// Append model predictions to a CSV.
    Predict(Settings),
    /// Write the leave-one-out score of every tuning candidate.
    Tune(Settings),
    /// Fit every method to the 1-D demonstration data and write plot-ready curves.
    Simulate(Settings),
    /// Run the 10-D convergence study.
    Convergence(Settings),
    /// Benchmark methods on dataset files.
    Bench(Settings),
}

impl Command {
    fn parts(self) -> (&'static str, Settings) {
        match self {
            Command::Fit(s) => ("fit", s),
            Command::Predict(s) => ("predict", s),
            Command::Tune(s) => ("tune", s),
            Command::Simulate(s) => ("simulate", s),
            Command::Convergence(s) => ("convergence", s),
            Command::Bench(s) => ("bench", s),
        }
    }
}

fn required(subcommand: &str) -> &'static [&'static str] {
    match subcommand {
        "fit" | "tune" => &["data", "out"],
        "predict" => &["model", "data", "out"],
        "bench" => &["datasets", "out"],
        _ => &["out"],
    }
}

fn usage_error(kind: ErrorKind, msg: String) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn resolve(subcommand: &str, flags: Settings, config: Option<&PathBuf>) -> Settings {
    let foreign: Vec<&str> = flags
        .given()
        .into_iter()
        .filter(|f| !accepted(subcommand).contains(f))
        .collect();
    if !foreign.is_empty() {
        let names: Vec<String> = foreign.iter().map(|f| format!("--{}", f.replace('_', "-"))).collect();
        usage_error(
            ErrorKind::ArgumentConflict,
            format!("`{subcommand}` does not use {}", names.join(", ")),
        );
    }
    let file = match config {
        Some(path) => Settings::from_file(path)
            .unwrap_or_else(|e| usage_error(ErrorKind::InvalidValue, e))
            .restrict(accepted(subcommand)),
        None => Settings::default(),
    };
    let settings = with_defaults(subcommand, flags.or(&file));
    let given = settings.given();
    let missing: Vec<String> = required(subcommand)
        .iter()
        .filter(|f| !given.contains(f))
        .map(|f| format!("--{}", f.replace('_', "-")))
        .collect();
    if !missing.is_empty() {
        usage_error(
            ErrorKind::MissingRequiredArgument,
            format!("`{subcommand}` requires {}", missing.join(", ")),
        );
    }
    settings
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let (name, flags) = cli.command.parts();
    let run = RunConfig::new(name, resolve(name, flags, cli.config.as_ref()));
    let outcome = match name {
        "fit" => commands::fit(&run),
        "predict" => commands::predict(&run),
        "tune" => commands::tune_cmd(&run),
        "simulate" => commands::simulate(&run),
        "convergence" => commands::convergence(&run),
        "bench" => commands::bench(&run),
        _ => unreachable!("subcommand names are fixed"),
    };
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
