//! Built-in scenarios, embedded from `scenarios/`. Sorted by name.

use crate::scenario::Scenario;
use crate::CliError;

pub const DEMOS: [(&str, &str); 13] = [
    ("compose-HT", include_str!("../scenarios/compose-HT.json")),
    ("compose-deterministic", include_str!("../scenarios/compose-deterministic.json")),
    ("control-unknown", include_str!("../scenarios/control-unknown.json")),
    ("control-unknown-2q", include_str!("../scenarios/control-unknown-2q.json")),
    ("download-bb84", include_str!("../scenarios/download-bb84.json")),
    ("download-eavesdropper", include_str!("../scenarios/download-eavesdropper.json")),
    ("download-ebit-qubit", include_str!("../scenarios/download-ebit-qubit.json")),
    ("download-ebit-two-qubit", include_str!("../scenarios/download-ebit-two-qubit.json")),
    ("download-qubits", include_str!("../scenarios/download-qubits.json")),
    ("lcu-demo", include_str!("../scenarios/lcu-demo.json")),
    ("superchannel-demo", include_str!("../scenarios/superchannel-demo.json")),
    ("switch-demo", include_str!("../scenarios/switch-demo.json")),
    ("verify-demo", include_str!("../scenarios/verify-demo.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    DEMOS.iter().map(|&(n, _)| n)
}

pub fn load(name: &str) -> Result<Scenario, CliError> {
    let (_, text) = DEMOS
        .iter()
        .find(|&&(n, _)| n == name)
        .ok_or_else(|| CliError::Validation(format!("no built-in scenario `{name}`")))?;
    Scenario::from_json(text)
}
