use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qvn_cli::runner::{self, RunOptions};
use qvn_cli::scenario::Scenario;
use qvn_cli::{budget_report, demos, CliError};
use qvn_core::qpu::CompositionMode;
use qvn_core::resources::QUBIT_LIMIT;

#[derive(Parser)]
#[command(name = "qvn", version, about = "Run programs stored as quantum states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print its report.
    Run {
        file: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Run a built-in scenario.
    Demo {
        name: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Check every reference qubit budget against a fresh measurement.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct RunFlags {
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Default composition mode for compose steps that give none.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Postselect,
    Deterministic,
    Covariant,
}

impl From<Mode> for CompositionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Postselect => CompositionMode::Postselect,
            Mode::Deterministic => CompositionMode::Deterministic,
            Mode::Covariant => CompositionMode::Covariant,
        }
    }
}

fn execute(scenario: &Scenario, flags: &RunFlags) -> Result<(), CliError> {
    let opts = RunOptions {
        seed: flags.seed,
        trials: flags.trials,
        mode: flags.mode.map(Into::into),
    };
    let report = runner::run(scenario, opts)?;
    let json = report.to_json();
    match &flags.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    if report.aborted() {
        return Err(CliError::Abort(format!("scenario `{}` aborted", scenario.name)));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { file, flags } => {
            let text = std::fs::read_to_string(&file)?;
            execute(&Scenario::from_json(&text)?, &flags)
        }
        Command::ListScenarios => {
            for name in demos::names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Demo { name, flags } => execute(&demos::load(&name)?, &flags),
        Command::Verify { seed } => {
            let report = budget_report(seed)?;
            let mut ok = true;
            for v in &report.verdicts {
                let got = v.measured.map_or("-".to_owned(), |q| q.to_string());
                println!("{:<5} {:<36} expected {:>2} measured {:>2}", verdict(v.pass), v.scenario, v.expected, got);
                ok &= v.pass;
            }
            for (name, peak) in &report.demo_peaks {
                let pass = *peak < QUBIT_LIMIT;
                println!("{:<5} {:<36} peak {:>2} < {QUBIT_LIMIT}", verdict(pass), name, peak);
                ok &= pass;
            }
            if ok {
                Ok(())
            } else {
                Err(CliError::Protocol("budget check failed".into()))
            }
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QVN_LOG", "warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
