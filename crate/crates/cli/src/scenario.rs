//! Scenario files: a host library, a list of steps, and run parameters.

use serde::{Deserialize, Serialize};

use qvn_core::gates;
use qvn_core::linalg::{self, MatrixPairs};
use qvn_core::network::ChannelModel;
use qvn_core::qpu::CompositionMode;
use qvn_core::{PureState, Unitary, C64};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A program given by gate name or explicit matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixPairs>,
}

impl ProgramSpec {
    pub fn gate(name: &str) -> Self {
        Self {
            gate: Some(name.to_owned()),
            matrix: None,
        }
    }

    pub fn unitary(&self) -> Result<Unitary, String> {
        match (&self.gate, &self.matrix) {
            (Some(g), None) => gates::by_name(g).ok_or_else(|| format!("unknown gate `{g}`")),
            (None, Some(m)) => {
                let m = linalg::matrix_from_pairs(m).map_err(|e| e.to_string())?;
                Unitary::new(m).map_err(|e| e.to_string())
            }
            _ => Err("give exactly one of `gate` and `matrix`".into()),
        }
    }
}

/// `"0"`, `"1"`, `"+"`, `"-"`, a basis index as a string, or amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Named(String),
    Amplitudes(Vec<[f64; 2]>),
}

impl StateSpec {
    pub fn named(s: &str) -> Self {
        StateSpec::Named(s.to_owned())
    }

    pub fn build(&self, d: usize) -> Result<PureState, String> {
        let psi = match self {
            StateSpec::Named(s) => match s.as_str() {
                "+" if d == 2 => PureState::plus(),
                "-" if d == 2 => PureState::minus(),
                k => {
                    let k: usize = k.parse().map_err(|_| format!("unknown state `{k}`"))?;
                    if k >= d {
                        return Err(format!("basis index {k} out of range for dimension {d}"));
                    }
                    PureState::basis(&[d], k)
                }
            },
            StateSpec::Amplitudes(a) => {
                let v = a.iter().map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>();
                PureState::normalized(v.into(), vec![a.len()]).map_err(|e| e.to_string())?
            }
        };
        if psi.dim() != d {
            return Err(format!("state has dimension {}, expected {d}", psi.dim()));
        }
        Ok(psi)
    }
}

/// A control given as a classical bit or qubit amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlSpec {
    Bit(bool),
    Qubit { alpha: [f64; 2], beta: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Step {
    /// Put a program into memory; `flag` picks an eigenvector for control.
    Store {
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gate: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<MatrixPairs>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        flag: Option<usize>,
    },
    /// Inject an input, keeping whichever branch fires.
    Write { label: String, input: StateSpec },
    /// Inject an input and read the accept branch along a Pauli axis.
    Read {
        label: String,
        input: StateSpec,
        #[serde(default = "default_axis")]
        axis: char,
    },
    Compose {
        earlier: String,
        later: String,
        into: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mode: Option<CompositionMode>,
    },
    Switch {
        previous: String,
        label: String,
        on: bool,
        into: String,
    },
    Control {
        label: String,
        control: ControlSpec,
        input: StateSpec,
    },
    Lcu {
        first: String,
        second: String,
        alpha: [f64; 2],
        beta: [f64; 2],
        input: StateSpec,
    },
    /// A random superchannel on a stored program.
    Superchannel {
        label: String,
        #[serde(default = "default_ancilla")]
        ancilla_dim: usize,
        input: StateSpec,
    },
    /// Fetch a host program by scheme 1–4.
    Download {
        label: String,
        scheme: u8,
        into: String,
    },
    /// Download samples of a host program and test them against `claimed`.
    Verify {
        label: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claimed: Option<ProgramSpec>,
        epsilon: f64,
        delta: f64,
    },
}

fn default_axis() -> char {
    'Z'
}

fn default_ancilla() -> usize {
    4
}

impl Step {
    pub fn op(&self) -> &'static str {
        match self {
            Step::Store { .. } => "store",
            Step::Write { .. } => "write",
            Step::Read { .. } => "read",
            Step::Compose { .. } => "compose",
            Step::Switch { .. } => "switch",
            Step::Control { .. } => "control",
            Step::Lcu { .. } => "lcu",
            Step::Superchannel { .. } => "superchannel",
            Step::Download { .. } => "download",
            Step::Verify { .. } => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixPairs>,
}

impl HostEntry {
    pub fn program(&self) -> ProgramSpec {
        ProgramSpec {
            gate: self.gate.clone(),
            matrix: self.matrix.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub channel: ChannelModel,
    /// Default composition mode for steps that give none.
    #[serde(default = "default_mode")]
    pub mode: CompositionMode,
    #[serde(default)]
    pub ebits: usize,
    #[serde(default)]
    pub host: Vec<HostEntry>,
    pub steps: Vec<Step>,
}

fn one() -> usize {
    1
}

fn default_mode() -> CompositionMode {
    CompositionMode::Deterministic
}

impl Scenario {
    /// Parses and validates; errors carry line/column or a field path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| {
            CliError::Validation(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        s.validate()?;
        Ok(s)
    }

    /// Checks labels and dimensions without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |path: String, msg: String| Err(CliError::Validation(format!("{path}: {msg}")));
        if self.schema_version != SCHEMA_VERSION {
            return fail(
                "schema_version".into(),
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        if self.trials == 0 {
            return fail("trials".into(), "must be at least 1".into());
        }
        if let Err(e) = self.channel.validate() {
            return fail("channel".into(), e.to_string());
        }
        let mut host: Vec<(String, usize)> = Vec::new();
        for (i, h) in self.host.iter().enumerate() {
            match h.program().unitary() {
                Ok(u) => host.push((h.label.clone(), u.dim())),
                Err(e) => return fail(format!("host[{i}]"), e),
            }
        }
        // label → (dimension, has flag); consumed programs stay listed
        let mut mem: Vec<(String, usize, bool)> = Vec::new();
        let find = |mem: &[(String, usize, bool)], l: &str| mem.iter().find(|m| m.0 == l).cloned();
        for (i, step) in self.steps.iter().enumerate() {
            let at = |field: &str| format!("steps[{i}].{field}");
            macro_rules! need {
                ($field:literal, $label:expr) => {
                    match find(&mem, $label) {
                        Some(m) => m,
                        None => return fail(at($field), format!("unknown label `{}`", $label)),
                    }
                };
            }
            macro_rules! fresh {
                ($field:literal, $label:expr) => {
                    if find(&mem, $label).is_some() {
                        return fail(at($field), format!("label `{}` already defined", $label));
                    }
                };
            }
            macro_rules! state {
                ($field:literal, $spec:expr, $d:expr) => {
                    if let Err(e) = $spec.build($d) {
                        return fail(at($field), e);
                    }
                };
            }
            match step {
                Step::Store { label, gate, matrix, flag } => {
                    fresh!("label", label);
                    let spec = ProgramSpec { gate: gate.clone(), matrix: matrix.clone() };
                    let u = match spec.unitary() {
                        Ok(u) => u,
                        Err(e) => return fail(at("gate"), e),
                    };
                    if let Some(k) = flag {
                        if *k >= u.dim() {
                            return fail(at("flag"), format!("eigenvector {k} out of range"));
                        }
                    }
                    mem.push((label.clone(), u.dim(), flag.is_some()));
                }
                Step::Write { label, input } => {
                    let m = need!("label", label);
                    state!("input", input, m.1);
                }
                Step::Read { label, input, axis } => {
                    let m = need!("label", label);
                    state!("input", input, m.1);
                    if m.1 != 2 || !matches!(axis, 'X' | 'Y' | 'Z') {
                        return fail(at("axis"), format!("axis `{axis}` needs a qubit program and one of X, Y, Z"));
                    }
                }
                Step::Compose { earlier, later, into, .. } => {
                    let e = need!("earlier", earlier);
                    let l = need!("later", later);
                    if e.1 != l.1 {
                        return fail(at("later"), format!("dimension {} does not chain with {}", l.1, e.1));
                    }
                    fresh!("into", into);
                    mem.push((into.clone(), e.1, false));
                }
                Step::Switch { previous, label, into, .. } => {
                    let p = need!("previous", previous);
                    let l = need!("label", label);
                    if p.1 != 2 || l.1 != 2 {
                        return fail(at("label"), "switchable composition takes qubit programs".into());
                    }
                    fresh!("into", into);
                    mem.push((into.clone(), 2, false));
                }
                Step::Control { label, control, input } => {
                    let m = need!("label", label);
                    if !m.2 {
                        return fail(at("label"), format!("program `{label}` has no flag"));
                    }
                    state!("input", input, m.1);
                    if let ControlSpec::Qubit { alpha, beta } = control {
                        let n = alpha[0].powi(2) + alpha[1].powi(2) + beta[0].powi(2) + beta[1].powi(2);
                        if (n - 1.0).abs() > 1e-9 {
                            return fail(at("control"), format!("control amplitudes have norm² {n}"));
                        }
                    }
                }
                Step::Lcu { first, second, input, .. } => {
                    let a = need!("first", first);
                    let b = need!("second", second);
                    if !a.2 || !b.2 {
                        return fail(at("first"), "both programs need flags".into());
                    }
                    if a.1 != b.1 {
                        return fail(at("second"), "programs act on different dimensions".into());
                    }
                    state!("input", input, a.1);
                }
                Step::Superchannel { label, ancilla_dim, input } => {
                    let m = need!("label", label);
                    if *ancilla_dim == 0 {
                        return fail(at("ancilla_dim"), "must be positive".into());
                    }
                    state!("input", input, m.1);
                }
                Step::Download { label, scheme, into } => {
                    let Some(h) = host.iter().find(|h| &h.0 == label) else {
                        return fail(at("label"), format!("host has no program `{label}`"));
                    };
                    if !(1..=4).contains(scheme) {
                        return fail(at("scheme"), format!("no scheme {scheme}"));
                    }
                    fresh!("into", into);
                    if *scheme >= 3 {
                        mem.push((into.clone(), h.1, false));
                    }
                }
                Step::Verify { label, claimed, epsilon, delta } => {
                    let Some(h) = host.iter().find(|h| &h.0 == label) else {
                        return fail(at("label"), format!("host has no program `{label}`"));
                    };
                    if let Some(c) = claimed {
                        match c.unitary() {
                            Ok(u) if u.dim() == h.1 => {}
                            Ok(_) => return fail(at("claimed"), "dimension differs from the host program".into()),
                            Err(e) => return fail(at("claimed"), e),
                        }
                    }
                    if let Err(e) = qvn_core::network::sample_count(*epsilon, *delta) {
                        return fail(at("epsilon"), e.to_string());
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(steps: &str) -> Result<Scenario, CliError> {
        Scenario::from_json(&format!(
            r#"{{"schema_version": 1, "name": "t", "host": [{{"label": "H", "gate": "H"}}], "steps": {steps}}}"#
        ))
    }

    #[test]
    fn accepts_a_chain() {
        let s = parse(
            r#"[{"op": "store", "label": "H", "gate": "H"},
                {"op": "store", "label": "T", "gate": "T"},
                {"op": "compose", "earlier": "H", "later": "T", "into": "TH", "mode": "covariant"},
                {"op": "read", "label": "TH", "input": "0", "axis": "X"}]"#,
        )
        .unwrap();
        assert_eq!(s.steps.len(), 4);
        assert_eq!(s.trials, 1);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let e = parse(r#"[{"op": "compose", "earlier": "A", "later": "B", "into": "C"}]"#).unwrap_err();
        assert!(e.to_string().contains("steps[0].earlier"), "{e}");
        let e = parse(
            r#"[{"op": "store", "label": "H", "gate": "H"},
                {"op": "store", "label": "C", "gate": "CZ"},
                {"op": "compose", "earlier": "H", "later": "C", "into": "X"}]"#,
        )
        .unwrap_err();
        assert!(e.to_string().contains("steps[2].later"), "{e}");
        let e = parse(r#"[{"op": "store", "label": "H", "gate": "H"}, {"op": "control", "label": "H", "control": true, "input": "0"}]"#).unwrap_err();
        assert!(e.to_string().contains("no flag"), "{e}");
        let e = Scenario::from_json("{\n  \"name\": 3\n}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn states() {
        assert_eq!(StateSpec::named("1").build(2).unwrap().amplitudes()[1].re, 1.0);
        assert!(StateSpec::named("+").build(4).is_err());
        assert!(StateSpec::Amplitudes(vec![[1.0, 0.0], [1.0, 0.0]]).build(2).is_ok());
    }
}
