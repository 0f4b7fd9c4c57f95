//! Scenario runner for the quantum von Neumann machine.

pub mod demos;
pub mod report;
pub mod runner;
pub mod scenario;

use qvn_core::resources::{self, BudgetVerdict, REFERENCE_BUDGETS};
use qvn_core::{QvnError, RandomSource};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Malformed input; exit code 2.
    #[error("invalid scenario: {0}")]
    Validation(String),
    /// A key exchange or download gave up; exit code 3.
    #[error("protocol aborted: {0}")]
    Abort(String),
    /// Anything else raised while running; exit code 1.
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl From<QvnError> for CliError {
    fn from(e: QvnError) -> Self {
        CliError::Protocol(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Protocol(_) | CliError::Io(_) => 1,
        }
    }
}

/// Reference budgets measured on the core protocols, plus the peak of every
/// built-in scenario.
#[derive(Clone, Debug)]
pub struct BudgetReport {
    pub verdicts: Vec<BudgetVerdict>,
    pub demo_peaks: Vec<(String, usize)>,
}

pub fn budget_report(seed: u64) -> Result<BudgetReport, CliError> {
    let measured = resources::measure_budgets(&mut RandomSource::new(seed))?;
    let verdicts = resources::budget_check(&measured, &REFERENCE_BUDGETS);
    let mut demo_peaks = Vec::new();
    for name in demos::names() {
        let s = demos::load(name)?;
        let r = runner::run(&s, runner::RunOptions::default())?;
        demo_peaks.push((name.to_owned(), r.qubit_budget.peak));
    }
    Ok(BudgetReport { verdicts, demo_peaks })
}
