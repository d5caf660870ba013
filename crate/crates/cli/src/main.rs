mod commands;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;

use riskhedge::exec::{limit_threads, Exec};
use riskhedge::model::load_model;
use riskhedge::risk::DynamicRiskMeasure;
use riskhedge::Settings;

use commands::*;
use report::{digest, render, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Validate,
    CheckNa,
    Price,
    DualPrice,
    Ftap,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::CheckNa => "check-na",
            Command::Price => "price",
            Command::DualPrice => "dual-price",
            Command::Ftap => "ftap",
        }
    }
}

/// Risk-measure hedging prices and no-arbitrage diagnostics on scenario
/// trees. Writes a JSON report to stdout.
#[derive(Debug, Parser)]
#[command(name = "riskhedge", version)]
struct Cli {
    command: Command,
    model: PathBuf,
    /// Restrict check-na to the nodes at this time.
    #[arg(long)]
    time: Option<usize>,
    /// Also compute direct multi-period prices and compare (price).
    #[arg(long)]
    direct: bool,
    /// Write node prices to this CSV file (price).
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Sampled strategies and claims per check (ftap).
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Solve every LP over exact rationals.
    #[arg(long)]
    exact: bool,
}

fn configure_threads() -> Exec {
    match std::env::var("RISKHEDGE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(1) => Exec::Sequential,
        Some(n) if n > 1 => {
            limit_threads(n);
            Exec::Parallel
        }
        _ => Exec::Parallel,
    }
}

/// Ignores a closed stdout so that piping into `head` is not an error.
fn print_report(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = configure_threads();
    let settings = Settings { tol: cli.tol, exact: cli.exact, exec, ..Settings::default() };
    let tolerances = Tolerances { tol: cli.tol, exact: cli.exact };
    let command = cli.command.name();

    let bytes = match std::fs::read(&cli.model) {
        Ok(b) => b,
        Err(e) => {
            let msg = format!("cannot read {}: {e}", cli.model.display());
            eprintln!("riskhedge: {msg}");
            print_report(&render(command, "", invalid(&[msg]), tolerances));
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let model_digest = digest(&bytes);
    let emit = |payload, code: u8| {
        print_report(&render(command, &model_digest, payload, tolerances));
        ExitCode::from(code)
    };

    if !(cli.tol > 0.0 && cli.tol.is_finite()) {
        return emit(invalid(&["--tol must be positive".into()]), EXIT_VALIDATION);
    }
    let model = match load_model(&bytes) {
        Ok(m) => m,
        Err(riskhedge::Error::Validation(errors)) => return emit(invalid(&errors), EXIT_VALIDATION),
        Err(e) => return emit(invalid(&[e.to_string()]), EXIT_VALIDATION),
    };
    let problems = semantic_problems(&model, &settings);
    if !problems.is_empty() {
        return emit(invalid(&problems), EXIT_VALIDATION);
    }
    if cli.command == Command::Validate {
        let (payload, code) = validate(&model);
        return emit(payload, code);
    }

    let drm = DynamicRiskMeasure::build(&model.tree, &model.risk, settings).expect("checked above");
    let result = match cli.command {
        Command::Validate => unreachable!(),
        Command::CheckNa => check_na_cmd(&drm, cli.time),
        Command::Price => price_cmd(&model, &drm, cli.direct, cli.csv.as_deref()),
        Command::DualPrice => dual_price_cmd(&model, &drm),
        Command::Ftap => ftap_cmd(&drm, cli.samples),
    };
    match result {
        Ok((payload, code)) => emit(payload, code),
        Err(e) => {
            eprintln!("riskhedge: {e}");
            let code = exit_code(&e);
            let payload = if code == EXIT_VALIDATION {
                invalid(&[e.to_string()])
            } else {
                json!({ "error": e.to_string() })
            };
            emit(payload, code)
        }
    }
}
