//! Executes scenarios. Each trial owns a fresh memory unit and an rng
//! stream forked from the run seed by trial index.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use qvn_core::duality::{apply_via_choi, choi_of_unitary};
use qvn_core::memory::{self, InjectOutcome, WhiteBox};
use qvn_core::network::{self, GateSequence, SealedTape, Session, VerificationPlan};
use qvn_core::qcu::{self, ControlSignal};
use qvn_core::qpu::{self, CompositionMode, CompositionResult, Outcome};
use qvn_core::state::{fidelity_mixed, fidelity_pure_mixed};
use qvn_core::superchannel::{self, random_superchannel};
use qvn_core::{
    linalg, DensityOperator, KrausChannel, MemoryUnit, ProgramSlot, Pvm, PureState, QvnError, RandomSource,
    Unitary, C64,
};

use crate::report::{Report, StepReport, TrialReport};
use crate::scenario::{ControlSpec, ProgramSpec, Scenario, Step};
use crate::CliError;

/// Command-line overrides.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub mode: Option<CompositionMode>,
}

pub fn run(scenario: &Scenario, opts: RunOptions) -> Result<Report, CliError> {
    scenario.validate()?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let trials = opts.trials.unwrap_or(scenario.trials).max(1);
    let start = Instant::now();
    let results: Vec<Result<TrialReport, CliError>> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, opts.mode, seed, t))
        .collect();
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Report::assemble(&scenario.name, seed, trials, ms))
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    mode: CompositionMode,
    memory: MemoryUnit,
    host: BTreeMap<String, (ProgramSpec, Unitary)>,
    tapes: BTreeMap<String, SealedTape>,
    rng: RandomSource,
}

fn run_trial(scenario: &Scenario, mode: Option<CompositionMode>, seed: u64, trial: usize) -> Result<TrialReport, CliError> {
    let mut host = BTreeMap::new();
    for h in &scenario.host {
        let spec = h.program();
        let u = spec.unitary().map_err(CliError::Validation)?;
        host.insert(h.label.clone(), (spec, u));
    }
    let mut ctx = Ctx {
        scenario,
        mode: mode.unwrap_or(scenario.mode),
        memory: MemoryUnit::new(scenario.ebits),
        host,
        tapes: BTreeMap::new(),
        rng: RandomSource::new(seed).fork(trial as u64),
    };
    let mut steps = Vec::new();
    let mut aborted = false;
    for (index, step) in scenario.steps.iter().enumerate() {
        let mut r = ctx.step(step).map_err(|e| match e {
            CliError::Protocol(m) => CliError::Protocol(format!("steps[{index}] ({}): {m}", step.op())),
            other => other,
        })?;
        r.index = index;
        log::info!("trial {trial} step {index} {}: {} on {} qubits", r.op, r.outcome, r.qubits);
        let stop = r.outcome == "abort";
        steps.push(r);
        if stop {
            aborted = true;
            break;
        }
    }
    Ok(TrialReport {
        trial,
        seed,
        steps,
        aborted,
    })
}

fn unitary_of(slot: &ProgramSlot) -> Option<Unitary> {
    slot.whitebox().and_then(WhiteBox::as_unitary).cloned()
}

fn product(later: &Unitary, earlier: &Unitary) -> Result<Unitary, QvnError> {
    Unitary::new(later.matrix() * earlier.matrix())
}

fn step_report(op: &str, label: &str, outcome: impl Into<String>, qubits: usize) -> StepReport {
    StepReport {
        index: 0,
        op: op.to_owned(),
        label: label.to_owned(),
        outcome: outcome.into(),
        probability: None,
        probabilities: Vec::new(),
        fidelity: None,
        qubits,
        notes: Vec::new(),
    }
}

fn sample(probs: &[f64], rng: &mut RandomSource) -> usize {
    let u = rng.uniform() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Smallest fidelity of the outputs on basis inputs with `U|k⟩`.
fn basis_fidelity(outputs: &[DensityOperator], u: &Unitary) -> Result<f64, QvnError> {
    let mut worst: f64 = 1.0;
    for (k, out) in outputs.iter().enumerate() {
        let ideal = PureState::basis(&[u.dim()], k).evolved(u, &[0])?;
        worst = worst.min(fidelity_pure_mixed(&ideal, out)?);
    }
    Ok(worst)
}

fn c64(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

impl Ctx<'_> {
    fn live(&self) -> usize {
        self.memory.qubits_in_use()
    }

    fn step(&mut self, step: &Step) -> Result<StepReport, CliError> {
        match step {
            Step::Store { label, gate, matrix, flag } => {
                let spec = ProgramSpec {
                    gate: gate.clone(),
                    matrix: matrix.clone(),
                };
                let u = spec.unitary().map_err(CliError::Validation)?;
                let mut slot = ProgramSlot::new(u.clone(), label.as_str());
                if let Some(k) = flag {
                    slot = slot.with_flag(qcu::flag_from_whitebox(&u, *k)?);
                }
                self.memory.insert(slot)?;
                Ok(step_report("store", label, "stored", self.live()))
            }
            Step::Write { label, input } => {
                let live = self.live();
                let slot = self.memory.get_mut(label)?;
                let u = unitary_of(slot);
                let d = slot.tail_dim();
                let psi = input.build(d).map_err(CliError::Validation)?;
                let branches = memory::write_inject(slot, &psi)?;
                let probs: Vec<f64> = branches.iter().map(|b| b.probability).collect();
                let b = &branches[sample(&probs, &mut self.rng)];
                let head = b.head.as_ref().expect("sampled branch is possible");
                let mut r = step_report("write", label, format!("{:?}", b.outcome).to_lowercase(), live);
                r.probability = Some(b.probability);
                if let Some(u) = u {
                    let out = psi.clone().evolved(&u, &[0])?;
                    r.fidelity = Some(match b.outcome {
                        InjectOutcome::Accept => fidelity_pure_mixed(&out, head)?,
                        InjectOutcome::Complement => {
                            let p = out.density();
                            let m = (linalg::identity(d) - p.matrix()) / linalg::cr((d - 1) as f64);
                            fidelity_mixed(&DensityOperator::new(m, vec![d])?, head)?
                        }
                    });
                }
                Ok(r)
            }
            Step::Read { label, input, axis } => {
                let live = self.live();
                let slot = self.memory.get_mut(label)?;
                let u = unitary_of(slot);
                let psi = input.build(slot.tail_dim()).map_err(CliError::Validation)?;
                let pvm = Pvm::pauli_basis(*axis)?;
                let (p, probs) = memory::inject_and_read(slot, &psi, &pvm)?;
                let mut r = step_report("read", label, "read", live);
                r.probability = Some(p);
                if let Some(u) = u {
                    let ideal = memory::read_out(&psi.clone().evolved(&u, &[0])?.density(), &pvm)?;
                    let bc: f64 = ideal.iter().zip(&probs).map(|(a, b)| (a * b).max(0.0).sqrt()).sum();
                    r.fidelity = Some(bc * bc);
                }
                r.probabilities = probs;
                Ok(r)
            }
            Step::Compose { earlier, later, into, mode } => self.compose(earlier, later, into, mode.unwrap_or(self.mode)),
            Step::Switch { previous, label, on, into } => {
                let before = self.live();
                let mut prev = self.memory.take(previous)?;
                let p = unitary_of(&prev);
                let prog = self.memory.get(label)?;
                let u = unitary_of(prog);
                let uninvolved = before - prev.qubits() - prog.qubits();
                let prev_choi = prev.consume()?;
                self.memory.insert(prev)?;
                let mut g = qpu::switch_attach(&mut self.memory, label, prev_choi)?;
                let qubits = uninvolved + g.qubits();
                let res = qpu::switch_select(&mut g, *on, None, &mut self.rng)?;
                let outcome = format!("{} path, bell {}", if *on { "on" } else { "off" }, res.outcome);
                let ideal = match (p, u) {
                    (Some(p), Some(u)) if *on => Some(product(&u, &p)?),
                    (Some(p), _) if !*on => Some(p),
                    _ => None,
                };
                self.finish_composition(res, ideal, "switch", label, into, outcome, qubits)
            }
            Step::Control { label, control, input } => {
                let before = self.live();
                let slot = self.memory.get_mut(label)?;
                let u = unitary_of(slot);
                let d = slot.tail_dim();
                let uninvolved = before - slot.qubits();
                let psi = input.build(d).map_err(CliError::Validation)?;
                let signal = match control {
                    ControlSpec::Bit(b) => ControlSignal::bit(*b),
                    ControlSpec::Qubit { alpha, beta } => ControlSignal::qubit(c64(*alpha), c64(*beta))?,
                };
                let out = qcu::control_slot(slot, &signal, &psi)?;
                let mut r = step_report("control", label, "applied", uninvolved + out.qubits_used);
                r.notes.push(format!("flag purity {:.12}", out.flag_purity));
                if let Some(u) = u {
                    let (a, b) = match signal.kind() {
                        qcu::ControlKind::ClassicalBit(bit) => {
                            if bit {
                                (C64::new(0.0, 0.0), C64::new(1.0, 0.0))
                            } else {
                                (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
                            }
                        }
                        qcu::ControlKind::Qubit { alpha, beta } => (alpha, beta),
                    };
                    let upsi = psi.clone().evolved(&u, &[0])?;
                    let mut v = linalg::kron_vec(&PureState::zero().amplitudes().map(|z| z * a), psi.amplitudes());
                    v += linalg::kron_vec(&PureState::one().amplitudes().map(|z| z * b), upsi.amplitudes());
                    let ideal = PureState::new(v, vec![2, d])?;
                    r.fidelity = Some(qvn_core::fidelity(&ideal, &out.state)?);
                }
                Ok(r)
            }
            Step::Lcu { first, second, alpha, beta, input } => {
                let before = self.live();
                let mut a = self.memory.take(first)?;
                let mut b = self.memory.take(second)?;
                let uninvolved = before - a.qubits() - b.qubits();
                let (al, be) = (c64(*alpha), c64(*beta));
                let n = (al.norm_sqr() + be.norm_sqr()).sqrt();
                let signal = ControlSignal::qubit(al / n, be / n)?;
                let psi = input.build(a.tail_dim()).map_err(CliError::Validation)?;
                let out = qcu::lcu_two(&a, &b, &signal, &psi);
                let ideal = match (unitary_of(&a), unitary_of(&b)) {
                    (Some(u1), Some(u2)) => Some(
                        (u1.matrix() * linalg::cr(1.0) * (al / n) + u2.matrix() * (be / n)) * psi.amplitudes(),
                    ),
                    _ => None,
                };
                a.consume()?;
                b.consume()?;
                self.memory.insert(a)?;
                self.memory.insert(b)?;
                let out = out?;
                let probs: Vec<f64> = out.branches.iter().map(|b| b.probability).collect();
                let k = sample(&probs, &mut self.rng);
                let label = format!("{first}+{second}");
                let outcome = if out.branches[k].success { "success" } else { "failure" };
                let mut r = step_report("lcu", &label, outcome, uninvolved + out.qubits_used);
                r.probability = Some(out.success().probability);
                r.notes.push(out.convention.to_owned());
                if let (Some(v), Some(s)) = (ideal, &out.success().state) {
                    let ideal = PureState::normalized(v, vec![psi.dim()])?;
                    r.fidelity = Some(qvn_core::fidelity(&ideal, s)?);
                }
                Ok(r)
            }
            Step::Superchannel { label, ancilla_dim, input } => {
                let before = self.live();
                let slot = self.memory.get_mut(label)?;
                let u = unitary_of(slot);
                let d = slot.tail_dim();
                let uninvolved = before - slot.qubits();
                let psi = input.build(d).map_err(CliError::Validation)?;
                let s = random_superchannel(d, *ancilla_dim, &mut self.rng)?;
                let rho = psi.density();
                let out = superchannel::apply_to_slot(&s, slot, &rho)?;
                let mut r = step_report("superchannel", label, "applied", uninvolved + s.choi_form_qubits());
                if let Some(u) = u {
                    let circuit = superchannel::apply_to_channel(&s, &KrausChannel::from_unitary(&u), &rho)?;
                    r.fidelity = Some(fidelity_mixed(&circuit, &out)?);
                }
                r.notes.push(format!("ancilla dimension {ancilla_dim}"));
                Ok(r)
            }
            Step::Download { label, scheme, into } => self.download(label, *scheme, into),
            Step::Verify { label, claimed, epsilon, delta } => {
                let (_, u) = self.host[label].clone();
                let expected = match claimed {
                    Some(c) => c.unitary().map_err(CliError::Validation)?,
                    None => u.clone(),
                };
                let plan = VerificationPlan::new(*epsilon, *delta)?;
                let mut samples = Vec::with_capacity(plan.n_samples);
                let mut peak = 0;
                for _ in 0..plan.n_samples {
                    let mut src = ProgramSlot::new(u.clone(), label.as_str());
                    let s = network::scheme3_send_qubits(&mut src, self.scenario.channel, &mut self.rng)?;
                    peak = peak.max(s.record.peak_qubits);
                    samples.push(s.delivered.expect("scheme 3 always delivers"));
                }
                let rep = network::verify_program(&mut samples, &expected, &plan, &mut self.rng)?;
                // samples are tested as they arrive, one at a time
                let mut r = step_report("verify", label, if rep.accepted { "accept" } else { "reject" }, self.live() + peak);
                r.notes.push(format!(
                    "{} samples, {} failures, fidelity bound {:.6}",
                    rep.samples_used, rep.failures, rep.fidelity_bound
                ));
                Ok(r)
            }
        }
    }

    fn compose(&mut self, earlier: &str, later: &str, into: &str, mode: CompositionMode) -> Result<StepReport, CliError> {
        let before = self.live();
        let mut e = self.memory.take(earlier)?;
        let mut l = self.memory.take(later)?;
        let uninvolved = before - e.qubits() - l.qubits();
        let ideal = match (unitary_of(&e), unitary_of(&l)) {
            (Some(u), Some(v)) => Some(product(&v, &u)?),
            _ => None,
        };
        let res = match mode {
            CompositionMode::Postselect => qpu::compose_postselect(&mut e, &mut l, Outcome::Sample(&mut self.rng)),
            CompositionMode::Deterministic => qpu::compose_deterministic(&mut e, &mut l, Outcome::Sample(&mut self.rng)),
            CompositionMode::Covariant => qpu::compose_covariant(&mut e, &mut l, Outcome::Sample(&mut self.rng)),
            CompositionMode::Switch => Err(QvnError::InvalidParameter("use a switch step for switchable composition".into())),
        };
        self.memory.insert(e)?;
        self.memory.insert(l)?;
        let res = res?;
        let qubits = uninvolved + res.qubits_used;
        let outcome = format!(
            "bell {}{}",
            res.outcome,
            if res.corrected || res.outcome == 0 { "" } else { " uncorrected" }
        );
        let label = format!("{earlier}>{later}");
        self.finish_composition(res, ideal, "compose", &label, into, outcome, qubits)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_composition(
        &mut self,
        res: CompositionResult,
        ideal: Option<Unitary>,
        op: &str,
        label: &str,
        into: &str,
        outcome: String,
        qubits: usize,
    ) -> Result<StepReport, CliError> {
        let mut r = step_report(op, label, outcome, qubits);
        r.probability = Some(res.probability);
        if let Some(u) = ideal {
            r.fidelity = Some(res.choi.fidelity(&choi_of_unitary(&u)?)?);
        }
        r.notes.push(format!("{} classical bits", res.ancilla_bits_used));
        self.memory.insert(res.into_slot(into))?;
        Ok(r)
    }

    fn download(&mut self, label: &str, scheme: u8, into: &str) -> Result<StepReport, CliError> {
        let (spec, u) = self.host[label].clone();
        let channel = self.scenario.channel;
        let live = self.live();
        let finish = |record: &network::TranscriptRecord, fidelity: Option<f64>| {
            let outcome = match record.outcome {
                network::SessionOutcome::Success => "delivered",
                network::SessionOutcome::Abort => "abort",
            };
            let mut r = step_report("download", label, outcome, live + record.peak_qubits);
            r.fidelity = fidelity;
            r.notes.push(format!(
                "scheme {}: {} program qubits, {} bits, {} ebits, {} key photons, qber {:.6}, {} retries",
                record.scheme,
                record.qubits_transmitted,
                record.bits_transmitted,
                record.ebits_consumed,
                record.key_photons,
                record.qber,
                record.retries
            ));
            r
        };
        match scheme {
            1 | 2 => {
                let n = linalg::qubits_for(u.dim());
                let seq = match &spec.gate {
                    Some(g) => GateSequence::new(n).push(g, &(0..n).collect::<Vec<_>>())?,
                    None => GateSequence::from_unitary(&u)?,
                };
                let s = if scheme == 1 {
                    network::scheme1_send_bits(&seq, channel, &mut self.rng)?
                } else {
                    network::scheme2_send_bits(&seq, channel, &mut self.rng)?
                };
                let Session { delivered, record } = s;
                let fid = match &delivered {
                    Some(tape) => {
                        let outs = (0..u.dim())
                            .map(|k| tape.execute(&PureState::basis(&[u.dim()], k)).map(|s| s.density()))
                            .collect::<Result<Vec<_>, _>>()?;
                        Some(basis_fidelity(&outs, &u)?)
                    }
                    None => None,
                };
                if let Some(tape) = delivered {
                    self.tapes.insert(into.to_owned(), tape);
                }
                Ok(finish(&record, fid))
            }
            _ => {
                let mut src = ProgramSlot::new(u.clone(), into);
                let s = if scheme == 3 {
                    network::scheme3_send_qubits(&mut src, channel, &mut self.rng)?
                } else {
                    network::scheme4_send_via_ebits(&src, channel, &mut self.rng)?
                };
                let Session { delivered, record } = s;
                let fid = match &delivered {
                    Some(slot) => {
                        let outs = (0..u.dim())
                            .map(|k| apply_via_choi(slot.choi(), &PureState::basis(&[u.dim()], k).density()))
                            .collect::<Result<Vec<_>, _>>()?;
                        Some(basis_fidelity(&outs, &u)?)
                    }
                    None => None,
                };
                let r = finish(&record, fid);
                if let Some(slot) = delivered {
                    self.memory.insert(slot)?;
                }
                Ok(r)
            }
        }
    }
}
