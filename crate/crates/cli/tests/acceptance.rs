//! Acceptance gate. Every criterion recomputes its expected values with
//! plain linear algebra written here, then compares against the library.
//! Prints one PASS/FAIL line per criterion and exits non-zero on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use qvn_cli::demos;
use qvn_cli::runner::{self, RunOptions};
use qvn_core::duality::{apply_via_choi, choi_of_channel, choi_of_unitary, kraus_from_choi};
use qvn_core::linalg::{self, cr, CMatrix, CVector};
use qvn_core::memory::{inject_branches, InjectOutcome};
use qvn_core::network::{self, ChannelModel, GateSequence, VerificationPlan};
use qvn_core::qcu::{self, ChoiBlackBox, ControlSignal};
use qvn_core::qpu::{self, affine_form, Outcome};
use qvn_core::random::{haar_random_unitary, random_channel, random_density, random_state};
use qvn_core::resources::{budget_check, measure_budgets, QUBIT_LIMIT, REFERENCE_BUDGETS};
use qvn_core::superchannel::{self, random_superchannel, Superchannel};
use qvn_core::{
    gates, ChoiState, DensityOperator, KrausChannel, MemoryUnit, ProgramSlot, PureState, RandomSource, Unitary,
    C64,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn conj(u: &CMatrix, rho: &CMatrix) -> CMatrix {
    u * rho * u.adjoint()
}

/// `|⟨a|b⟩|²` for unnormalised-safe vectors of equal length.
fn overlap(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr() / (a.norm_squared() * b.norm_squared())
}

/// Vectorised `|U⟩⟩ = (U ⊗ 1) Σₖ |k⟩|k⟩ / √d`, head first.
fn choi_vector(u: &CMatrix) -> CVector {
    let d = u.nrows();
    let mut v = CVector::zeros(d * d);
    for a in 0..d {
        for b in 0..d {
            v[a * d + b] = u[(a, b)] / cr((d as f64).sqrt());
        }
    }
    v
}

fn choi_fidelity(w: &ChoiState, u: &CMatrix) -> f64 {
    let v = choi_vector(u);
    v.dotc(&(w.operator().matrix() * &v)).re
}

fn kraus_apply(ops: &[CMatrix], rho: &CMatrix) -> CMatrix {
    ops.iter().map(|k| k * rho * k.adjoint()).fold(CMatrix::zeros(ops[0].nrows(), ops[0].nrows()), |a, b| a + b)
}

/// Traces the second factor of a `d ⊗ da` operator.
fn trace_second(m: &CMatrix, d: usize, da: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| (0..da).map(|a| m[(i * da + a, j * da + a)]).sum())
}

fn readout_identity() -> Verdict {
    let t = Instant::now();
    let mut rng = RandomSource::new(1001);
    let mut worst: f64 = 0.0;
    for d in [2, 4, 8] {
        for _ in 0..100 {
            let u = haar_random_unitary(d, &mut rng).map_err(e)?;
            let psi = random_state(&[d], &mut rng);
            let rho = psi.density();
            let via = apply_via_choi(&choi_of_unitary(&u).map_err(e)?, &rho).map_err(e)?;
            worst = worst.max((via.matrix() - conj(u.matrix(), rho.matrix())).norm());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(worst < 1e-9, || format!("max deviation {worst:.2e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("max deviation {worst:.2e} over 300 pairs in {secs:.2} s"))
}

fn duality_round_trip() -> Verdict {
    let mut rng = RandomSource::new(1002);
    let (mut fixed, mut action): (f64, f64) = (0.0, 0.0);
    for k in 0..50 {
        let d = 2 + k % 7;
        let rank = 1 + k % 4;
        let ch = random_channel(d, d, rank, &mut rng).map_err(e)?;
        let w = choi_of_channel(&ch);
        let back = kraus_from_choi(&w).map_err(e)?;
        fixed = fixed.max((choi_of_channel(&back).operator().matrix() - w.operator().matrix()).norm());
        for i in 0..d {
            for j in 0..d {
                let mut eij = CMatrix::zeros(d, d);
                eij[(i, j)] = cr(1.0);
                action = action.max((back.apply_matrix(&eij) - kraus_apply(ch.ops(), &eij)).norm());
            }
        }
    }
    ensure(fixed < 1e-8 && action < 1e-8, || format!("fixed point {fixed:.2e}, action {action:.2e}"))?;
    Ok(format!("fixed point {fixed:.2e}, action on matrix units {action:.2e}"))
}

fn write_read_law() -> Verdict {
    let mut rng = RandomSource::new(1003);
    let (mut accept, mut complement): (f64, f64) = (0.0, 0.0);
    for d in [2, 4] {
        for _ in 0..50 {
            let u = haar_random_unitary(d, &mut rng).map_err(e)?;
            let psi = random_state(&[d], &mut rng);
            let basis = haar_random_unitary(d, &mut rng).map_err(e)?;
            let branches = inject_branches(&choi_of_unitary(&u).map_err(e)?, &psi).map_err(e)?;
            let acc = branches.iter().find(|b| b.outcome == InjectOutcome::Accept).ok_or("no accept branch")?;
            let cmp = branches.iter().find(|b| b.outcome == InjectOutcome::Complement).ok_or("no complement branch")?;
            let upsi = u.matrix() * psi.amplitudes();
            for i in 0..d {
                let phi = CVector::from_iterator(d, basis.matrix().column(i).iter().copied());
                let p = phi.dotc(&upsi).norm_sqr();
                let st = PureState::new(phi, vec![d]).map_err(e)?;
                let q = acc.head.as_ref().unwrap().expectation(&st).map_err(e)?;
                accept = accept.max((q - p).abs());
                if d == 2 {
                    let q2 = cmp.head.as_ref().unwrap().expectation(&st).map_err(e)?;
                    complement = complement.max((q2 - (1.0 - p)).abs());
                }
            }
        }
    }
    ensure(accept < 1e-10 && complement < 1e-10, || format!("accept {accept:.2e}, complement {complement:.2e}"))?;
    Ok(format!("accept {accept:.2e}, qubit complement {complement:.2e}"))
}

fn composition() -> Verdict {
    let mut rng = RandomSource::new(1004);
    let mut worst: f64 = 1.0;
    let mut post_p: f64 = 0.0;
    for _ in 0..100 {
        let u = haar_random_unitary(2, &mut rng).map_err(e)?;
        let v = haar_random_unitary(2, &mut rng).map_err(e)?;
        let vu = v.matrix() * u.matrix();
        for i in 0..4 {
            let mut a = ProgramSlot::new(u.clone(), "U");
            let mut b = ProgramSlot::new(v.clone(), "V");
            let r = qpu::compose_deterministic(&mut a, &mut b, Outcome::Forced(i)).map_err(e)?;
            worst = worst.min(choi_fidelity(&r.choi, &vu));
        }
        for class in 0..2 {
            let mut a = ProgramSlot::new(u.clone(), "U");
            let mut b = ProgramSlot::new(v.clone(), "V");
            let r = qpu::compose_covariant(&mut a, &mut b, Outcome::Forced(class)).map_err(e)?;
            worst = worst.min(choi_fidelity(&r.choi, &vu));
        }
        let mut a = ProgramSlot::new(u.clone(), "U");
        let mut b = ProgramSlot::new(v.clone(), "V");
        let r = qpu::compose_postselect(&mut a, &mut b, Outcome::Forced(0)).map_err(e)?;
        post_p = post_p.max((r.probability - 0.25).abs());
        worst = worst.min(choi_fidelity(&r.choi, &vu));
    }
    ensure(worst >= 1.0 - 1e-9, || format!("fidelity {worst}"))?;
    ensure(post_p < 1e-12, || format!("postselect probability off by {post_p:.2e}"))?;

    // five programs, bracketed both ways, Choi states only after the first step
    let us: Vec<Unitary> = (0..5).map(|_| haar_random_unitary(2, &mut rng)).collect::<Result<_, _>>().map_err(e)?;
    let fresh = |k: usize| ProgramSlot::new(us[k].clone(), format!("U{k}"));
    let blind = |w: ChoiState| ProgramSlot::from_choi(w, "c");
    let mut left = fresh(0);
    for (k, o) in (1..5).zip([1, 2, 3, 1]) {
        left = blind(qpu::compose_deterministic(&mut left, &mut fresh(k), Outcome::Forced(o)).map_err(e)?.choi);
    }
    let mut right = fresh(4);
    for (k, o) in (0..4).rev().zip([2, 3, 1, 2]) {
        right = blind(qpu::compose_deterministic(&mut fresh(k), &mut right, Outcome::Forced(o)).map_err(e)?.choi);
    }
    let assoc = (left.choi().operator().matrix() - right.choi().operator().matrix()).norm();
    let total = us.iter().fold(linalg::identity(2), |acc, u| u.matrix() * acc);
    let chain = 1.0 - choi_fidelity(left.choi(), &total);
    ensure(assoc < 1e-8 && chain < 1e-8, || format!("associativity {assoc:.2e}, chain infidelity {chain:.2e}"))?;
    Ok(format!("min fidelity {worst:.12}, postselect |p-1/4| {post_p:.1e}, associativity {assoc:.2e}"))
}

fn affine_forms() -> Verdict {
    let r = affine_form(&gates::h()).map_err(e)?.matrix;
    // (x, y, z) ↦ (z, −y, x)
    let want = [[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]];
    let h_dev = (0..9).map(|k| (r[(k / 3, k % 3)] - want[k / 3][k % 3]).abs()).fold(0.0, f64::max);
    ensure(h_dev < 1e-12, || format!("R(H) = {r}"))?;
    let mut rng = RandomSource::new(1005);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u = haar_random_unitary(2, &mut rng).map_err(e)?;
        let v = haar_random_unitary(2, &mut rng).map_err(e)?;
        let uv = Unitary::new(u.matrix() * v.matrix()).map_err(e)?;
        let lhs = affine_form(&uv).map_err(e)?.matrix;
        let rhs = affine_form(&u).map_err(e)?.matrix * affine_form(&v).map_err(e)?.matrix;
        worst = worst.max((lhs - rhs).norm());
    }
    ensure(worst < 1e-9, || format!("homomorphism defect {worst:.2e}"))?;
    Ok(format!("R(H) swaps X and Z, homomorphism defect {worst:.2e}"))
}

fn switch_semantics() -> Verdict {
    let mut rng = RandomSource::new(1006);
    let (mut on_f, mut off_f): (f64, f64) = (1.0, 1.0);
    let mut classes = [false; 2];
    for _ in 0..50 {
        let u = haar_random_unitary(2, &mut rng).map_err(e)?;
        let v = haar_random_unitary(2, &mut rng).map_err(e)?;
        let vu = v.matrix() * u.matrix();
        for i in 0..4 {
            for (on, j) in [(true, 0), (true, 1), (true, 2), (true, 3), (false, 0)] {
                if !on && j != 0 {
                    continue;
                }
                let mut mem = MemoryUnit::new(1);
                mem.insert(ProgramSlot::new(v.clone(), "V")).map_err(e)?;
                let mut g = qpu::switch_attach(&mut mem, "V", choi_of_unitary(&u).map_err(e)?).map_err(e)?;
                let forced = if on { vec![i, j] } else { vec![i] };
                let r = qpu::switch_select(&mut g, on, Some(&forced), &mut rng).map_err(e)?;
                classes[usize::from(i != 0)] = true;
                if on {
                    on_f = on_f.min(choi_fidelity(&r.choi, &vu));
                } else {
                    off_f = off_f.min(choi_fidelity(&r.choi, u.matrix()));
                }
            }
        }
    }
    ensure(classes == [true; 2], || "a byproduct class was not exercised".into())?;
    ensure(on_f >= 1.0 - 1e-9 && off_f >= 1.0 - 1e-9, || format!("on {on_f}, off {off_f}"))?;
    Ok(format!("on {on_f:.12}, off {off_f:.12}"))
}

fn controlled_unknown_gate() -> Verdict {
    let mut rng = RandomSource::new(1007);
    let (mut worst, mut purity): (f64, f64) = (1.0, 1.0);
    for _ in 0..100 {
        let u = haar_random_unitary(2, &mut rng).map_err(e)?;
        let slot = ProgramSlot::new(u.clone(), "U");
        let bb = ChoiBlackBox::from_slot(&slot).map_err(e)?;
        let c = random_state(&[2], &mut rng);
        let psi = random_state(&[2], &mut rng);
        let (a, b) = (c.amplitudes()[0], c.amplitudes()[1]);
        // Λ(U)(c ⊗ ψ) = a|0⟩ψ + b|1⟩Uψ
        let upsi = u.matrix() * psi.amplitudes();
        let mut ideal = CVector::zeros(4);
        for k in 0..2 {
            ideal[k] = a * psi.amplitudes()[k];
            ideal[2 + k] = b * upsi[k];
        }
        for which in 0..2 {
            let flag = qcu::flag_from_whitebox(&u, which).map_err(e)?;
            let signal = ControlSignal::qubit(a, b).map_err(e)?;
            let out = qcu::controlled_unknown(&bb, &flag, &signal, &psi).map_err(e)?;
            worst = worst.min(overlap(&ideal, out.state.amplitudes()));
            purity = purity.min(out.flag_purity);
        }
    }
    ensure(worst >= 1.0 - 1e-9 && purity >= 1.0 - 1e-9, || format!("fidelity {worst}, flag purity {purity}"))?;
    Ok(format!("min fidelity {worst:.12}, flag purity {purity:.12}"))
}

fn lcu() -> Verdict {
    let mut rng = RandomSource::new(1008);
    let (mut state_dev, mut p_dev): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let u1 = haar_random_unitary(2, &mut rng).map_err(e)?;
        let u2 = haar_random_unitary(2, &mut rng).map_err(e)?;
        let c = random_state(&[2], &mut rng);
        let (al, be) = (c.amplitudes()[0], c.amplitudes()[1]);
        let psi = random_state(&[2], &mut rng);
        let s1 = ProgramSlot::new(u1.clone(), "U1").with_flag(qcu::flag_from_whitebox(&u1, 0).map_err(e)?);
        let s2 = ProgramSlot::new(u2.clone(), "U2").with_flag(qcu::flag_from_whitebox(&u2, 1).map_err(e)?);
        let out = qcu::lcu_two(&s1, &s2, &ControlSignal::qubit(al, be).map_err(e)?, &psi).map_err(e)?;

        // enumerate the control outcome on α|0⟩U₁ψ + β|1⟩U₂ψ
        let a = u1.matrix() * psi.amplitudes() * al;
        let b = u2.matrix() * psi.amplitudes() * be;
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let plus = (&a + &b) * s;
        let p_oracle = plus.norm_squared();
        let succ = out.success();
        p_dev = p_dev.max((succ.probability - p_oracle).abs());
        let got = succ.state.as_ref().ok_or("success branch missing")?;
        state_dev = state_dev.max(1.0 - overlap(&plus, got.amplitudes()));
    }
    ensure(state_dev < 1e-9 && p_dev < 1e-10, || format!("state {state_dev:.2e}, probability {p_dev:.2e}"))?;
    Ok(format!("state infidelity {state_dev:.2e}, probability {p_dev:.2e}"))
}

/// `ρ ⊗ |0⟩⟨0|` through pre, `E ⊗ 1`, post for each tooth, ancilla traced.
fn comb_oracle(teeth: &[(Unitary, Unitary, KrausChannel)], rho: &CMatrix, da: usize) -> CMatrix {
    let d = rho.nrows();
    let mut zero = CMatrix::zeros(da, da);
    zero[(0, 0)] = cr(1.0);
    let mut m = linalg::kron(rho, &zero);
    for (pre, post, ch) in teeth {
        m = conj(pre.matrix(), &m);
        let lifted: Vec<CMatrix> = ch.ops().iter().map(|k| linalg::kron(k, &linalg::identity(da))).collect();
        m = kraus_apply(&lifted, &m);
        m = conj(post.matrix(), &m);
    }
    trace_second(&m, d, da)
}

fn superchannels() -> Verdict {
    let mut rng = RandomSource::new(1009);
    let mut forms: f64 = 0.0;
    let mut cptp = true;
    for k in 0..100 {
        let da = [1, 2, 4][k % 3];
        let s = random_superchannel(2, da, &mut rng).map_err(e)?;
        let ch = random_channel(2, 2, 1 + k % 4, &mut rng).map_err(e)?;
        let rho = random_density(&[2], &mut rng);
        let a = superchannel::apply_to_channel(&s, &ch, &rho).map_err(e)?;
        let b = superchannel::apply_to_choi(&s, &choi_of_channel(&ch), &rho).map_err(e)?;
        forms = forms.max((a.matrix() - b.matrix()).norm());
        cptp &= superchannel::is_cptp_preserving(&s, &ch, 1e-9).map_err(e)?;
    }
    ensure(forms < 1e-9, || format!("circuit vs Choi {forms:.2e}"))?;
    ensure(cptp, || "an output was not CPTP".into())?;

    let mut comb: f64 = 0.0;
    for _ in 0..20 {
        let da = 2;
        let mut teeth = Vec::new();
        let mut scs = Vec::new();
        let mut slots = Vec::new();
        for t in 0..2 {
            let pre = haar_random_unitary(2 * da, &mut rng).map_err(e)?;
            let post = haar_random_unitary(2 * da, &mut rng).map_err(e)?;
            let ch = random_channel(2, 2, 2, &mut rng).map_err(e)?;
            scs.push(Superchannel::standard(pre.clone(), post.clone(), 2, da).map_err(e)?);
            slots.push(ProgramSlot::from_choi(choi_of_channel(&ch), format!("E{t}")));
            teeth.push((pre, post, ch));
        }
        let rho = random_density(&[2], &mut rng);
        let refs: Vec<&ProgramSlot> = slots.iter().collect();
        let out = superchannel::comb_compose(&scs, &refs, &rho).map_err(e)?;
        comb = comb.max((out.output.matrix() - comb_oracle(&teeth, rho.matrix(), da)).norm());
    }
    ensure(comb < 1e-8, || format!("comb {comb:.2e}"))?;
    Ok(format!("forms {forms:.2e}, CPTP preserved, two-tooth comb {comb:.2e}"))
}

/// `min_k |⟨Uk|out_k⟩|²` from basis outputs.
fn behavioral(outs: &[DensityOperator], u: &Unitary) -> f64 {
    outs.iter()
        .enumerate()
        .map(|(k, o)| {
            let v = u.matrix().column(k).into_owned();
            v.dotc(&(o.matrix() * &v)).re
        })
        .fold(1.0, f64::min)
}

fn network_criterion() -> Verdict {
    let mut rng = RandomSource::new(1010);
    let mut worst: f64 = 1.0;
    for u in [gates::h(), gates::t(), gates::cz()] {
        let d = u.dim();
        let n = linalg::qubits_for(d);
        let seq = GateSequence::from_unitary(&u).map_err(e)?;
        for scheme in [1, 2] {
            let s = if scheme == 1 {
                network::scheme1_send_bits(&seq, ChannelModel::Ideal, &mut rng)
            } else {
                network::scheme2_send_bits(&seq, ChannelModel::Ideal, &mut rng)
            }
            .map_err(e)?;
            let tape = s.delivered.ok_or(format!("scheme {scheme} aborted"))?;
            ensure(tape.qubits() == n, || "tape width".into())?;
            let outs = (0..d)
                .map(|k| tape.execute(&PureState::basis(&[d], k)).map(|p| p.density()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            worst = worst.min(behavioral(&outs, &u));
        }
        for scheme in [3, 4] {
            let mut host = ProgramSlot::new(u.clone(), "host");
            let s = if scheme == 3 {
                network::scheme3_send_qubits(&mut host, ChannelModel::Ideal, &mut rng)
            } else {
                network::scheme4_send_via_ebits(&host, ChannelModel::Ideal, &mut rng)
            }
            .map_err(e)?;
            let slot = s.delivered.ok_or(format!("scheme {scheme} failed"))?;
            let outs = (0..d)
                .map(|k| apply_via_choi(slot.choi(), &PureState::basis(&[d], k).density()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            worst = worst.min(behavioral(&outs, &u));
        }
    }
    ensure(worst >= 1.0 - 1e-9, || format!("behavioral fidelity {worst}"))?;

    let kx = network::bb84_exchange(100_000, ChannelModel::eavesdropper(1.0).map_err(e)?, &mut rng).map_err(e)?;
    let sigma = (0.25 * 0.75 / kx.tested as f64).sqrt();
    let z = (kx.qber - 0.25).abs() / sigma;
    ensure(z <= 3.0, || format!("qber {} is {z:.2} sigma from 0.25", kx.qber))?;
    ensure(kx.aborted, || "full intercept-resend did not abort".into())?;

    let n = network::sample_count(0.1, 0.05).map_err(e)?;
    ensure(n == 30, || format!("sample_count(0.1, 0.05) = {n}"))?;

    let plan = VerificationPlan::new(0.1, 0.05).map_err(e)?;
    let (mut accepted, mut rejected) = (0, 0);
    let reps = 200;
    for rep in 0..reps {
        let mut r = RandomSource::new(50_000).fork(rep);
        for (actual, honest) in [(gates::h(), true), (gates::z(), false)] {
            let mut samples = (0..plan.n_samples)
                .map(|_| {
                    let mut host = ProgramSlot::new(actual.clone(), "H");
                    network::scheme3_send_qubits(&mut host, ChannelModel::Ideal, &mut r)
                        .map(|s| s.delivered.expect("ideal scheme 3 delivers"))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(e)?;
            let rep = network::verify_program(&mut samples, &gates::h(), &plan, &mut r).map_err(e)?;
            match (honest, rep.accepted) {
                (true, true) => accepted += 1,
                (false, false) => rejected += 1,
                _ => {}
            }
        }
    }
    let (ca, cr_) = (accepted as f64 / reps as f64, rejected as f64 / reps as f64);
    ensure(ca >= 0.95 && cr_ >= 0.95, || format!("accepted {ca:.3}, rejected {cr_:.3}"))?;
    Ok(format!(
        "behavioral {worst:.12}, qber {:.4} ({z:.2} sigma), N = {n}, accept {ca:.3}, reject {cr_:.3}",
        kx.qber
    ))
}

fn budgets() -> Verdict {
    let t = Instant::now();
    let measured = measure_budgets(&mut RandomSource::new(1011)).map_err(e)?;
    let verdicts = budget_check(&measured, &REFERENCE_BUDGETS);
    let bad: Vec<String> = verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| format!("{} expected {} got {:?}", v.scenario, v.expected, v.measured))
        .collect();
    ensure(bad.is_empty(), || bad.join("; "))?;
    let mut peak_max = 0;
    for name in demos::names() {
        let r = runner::run(&demos::load(name).map_err(e)?, RunOptions::default()).map_err(e)?;
        let peak = r.qubit_budget.peak;
        ensure(peak < QUBIT_LIMIT, || format!("demo {name} peaks at {peak}"))?;
        peak_max = peak_max.max(peak);
    }
    Ok(format!(
        "{} budgets exact, largest demo peak {peak_max} < {QUBIT_LIMIT}, {:.2} s",
        verdicts.len(),
        t.elapsed().as_secs_f64()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("readout identity", readout_identity),
        ("duality round trip", duality_round_trip),
        ("write/read law", write_read_law),
        ("composition", composition),
        ("affine forms", affine_forms),
        ("switch semantics", switch_semantics),
        ("controlled unknown gate", controlled_unknown_gate),
        ("linear combination of unitaries", lcu),
        ("superchannels", superchannels),
        ("network", network_criterion),
        ("resource budgets", budgets),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed in {:.2} s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
