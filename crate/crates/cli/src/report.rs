//! Run reports. Everything except `wall_time_ms` is a function of the
//! scenario and seed.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One executed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub op: String,
    pub label: String,
    /// Measurement or protocol outcome, in words.
    pub outcome: String,
    /// Probability of the branch that fired, or of success.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    /// Readout distribution when the step measured something.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probabilities: Vec<f64>,
    /// Fidelity with the ideal result computed from classical descriptions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    /// Simultaneously live qubits while the step runs.
    pub qubits: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub steps: Vec<StepReport>,
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitBudget {
    pub peak: usize,
    /// Per-step maximum over trials.
    pub per_step: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub trials: Vec<TrialReport>,
    pub qubit_budget: QubitBudget,
    pub wall_time_ms: f64,
}

impl Report {
    /// Merges trials in index order.
    pub fn assemble(scenario: &str, seed: u64, mut trials: Vec<TrialReport>, wall_time_ms: f64) -> Self {
        trials.sort_by_key(|t| t.trial);
        let n = trials.iter().map(|t| t.steps.len()).max().unwrap_or(0);
        let per_step: Vec<usize> = (0..n)
            .map(|k| trials.iter().filter_map(|t| t.steps.get(k)).map(|s| s.qubits).max().unwrap_or(0))
            .collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            scenario: scenario.to_owned(),
            seed,
            qubit_budget: QubitBudget {
                peak: per_step.iter().copied().max().unwrap_or(0),
                per_step,
            },
            trials,
            wall_time_ms,
        }
    }

    pub fn aborted(&self) -> bool {
        self.trials.iter().any(|t| t.aborted)
    }

    /// Lowest fidelity reported by any step of any trial.
    pub fn min_fidelity(&self) -> Option<f64> {
        self.trials
            .iter()
            .flat_map(|t| &t.steps)
            .filter_map(|s| s.fidelity)
            .reduce(f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }
}
