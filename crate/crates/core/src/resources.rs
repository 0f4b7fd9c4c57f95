//! Qubit accounting for the smallest useful machine.
//!
//! Every measured count comes from running the corresponding protocol and
//! reading the live-wire figure it reports; nothing here is hard-coded except
//! the reference table.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gates;
use crate::memory::ProgramSlot;
use crate::network::{self, ChannelModel};
use crate::qcu::{self, ChoiBlackBox, ControlSignal};
use crate::qpu::{self, Outcome};
use crate::random::{haar_random_unitary, RandomSource};
use crate::state::PureState;
use crate::superchannel::random_superchannel;

/// Every scenario must fit below this many simultaneous qubits.
pub const QUBIT_LIMIT: usize = 20;

/// Expected qubit counts, keyed by scenario.
pub const REFERENCE_BUDGETS: [(&str, usize); 9] = [
    ("store-qubit-gate", 2),
    ("store-cz", 4),
    ("compose-two-qubit-programs", 5),
    ("qubit-superchannel", 6),
    ("qubit-superchannel-reduced", 4),
    ("control-unknown-qubit-program", 5),
    ("control-unknown-two-qubit-program", 9),
    ("ebit-download-qubit-program", 9),
    ("ebit-download-two-qubit-program", 17),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub scenario: String,
    pub expected: usize,
    pub measured: Option<usize>,
    pub pass: bool,
}

/// Compares measured peaks with the reference table. Scenarios missing from
/// `measured` fail.
pub fn budget_check(measured: &[(String, usize)], expected: &[(&str, usize)]) -> Vec<BudgetVerdict> {
    expected
        .iter()
        .map(|&(name, want)| {
            let got = measured.iter().find(|(n, _)| n == name).map(|&(_, q)| q);
            BudgetVerdict {
                scenario: name.to_owned(),
                expected: want,
                measured: got,
                pass: got == Some(want),
            }
        })
        .collect()
}

/// Runs each reference scenario once and records its peak qubit count.
pub fn measure_budgets(rng: &mut RandomSource) -> Result<Vec<(String, usize)>> {
    let mut out = Vec::new();
    let mut push = |name: &str, q: usize| out.push((name.to_owned(), q));

    push("store-qubit-gate", ProgramSlot::new(gates::h(), "H").qubits());
    push("store-cz", ProgramSlot::new(gates::cz(), "CZ").qubits());

    let mut h = ProgramSlot::new(gates::h(), "H");
    let mut t = ProgramSlot::new(gates::t(), "T");
    let composed = qpu::compose_covariant(&mut h, &mut t, Outcome::Sample(rng))?;
    push("compose-two-qubit-programs", composed.qubits_used);

    push("qubit-superchannel", random_superchannel(2, 4, rng)?.choi_form_qubits());
    push("qubit-superchannel-reduced", random_superchannel(2, 2, rng)?.choi_form_qubits());

    for (name, d) in [
        ("control-unknown-qubit-program", 2),
        ("control-unknown-two-qubit-program", 4),
    ] {
        let u = haar_random_unitary(d, rng)?;
        let flag = qcu::flag_from_whitebox(&u, 0)?;
        let slot = ProgramSlot::new(u, "U");
        let bb = ChoiBlackBox::from_slot(&slot)?;
        let out = qcu::controlled_unknown(&bb, &flag, &ControlSignal::bit(true), &PureState::basis(&[d], 0))?;
        push(name, out.qubits_used);
    }

    for (name, u) in [
        ("ebit-download-qubit-program", gates::t()),
        ("ebit-download-two-qubit-program", gates::cz()),
    ] {
        let host = ProgramSlot::new(u, "U");
        let session = network::scheme4_send_via_ebits(&host, ChannelModel::Ideal, rng)?;
        push(name, session.record.peak_qubits);
    }
    Ok(out)
}
