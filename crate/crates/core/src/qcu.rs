//! Quantum control unit.
//!
//! Control of an unknown gate needs a known eigenpair `(λ, |λ⟩)`, the flag.
//! The gadget on wires `control ⊗ data ⊗ flag` is
//!
//! ```text
//! CSWAP(control; data, flag) · U(flag) · CSWAP(control; data, flag)
//! ```
//!
//! which maps `|c⟩|ψ⟩|λ⟩` to `(λ|0⟩⟨0| ⊗ 1 + |1⟩⟨1| ⊗ U)|c⟩|ψ⟩ ⊗ |λ⟩`.
//! The stray `λ` on the off branch is removed by `diag(λ⁻¹, 1)` on the control.
//! The flag is returned untouched, so control and flag never entangle.

use serde::{Deserialize, Serialize};

use crate::duality::ChoiState;
use crate::error::{QvnError, Result};
use crate::gates;
use crate::linalg::{self, cr, CMatrix, CVector, C64};
use crate::measurement::{measure_pvm, Branch};
use crate::memory::ProgramSlot;
use crate::operator::{Pvm, Unitary};
use crate::state::{self, PureState};

/// Residual above which a flag is rejected.
pub const FLAG_TOL: f64 = 1e-6;

/// A known eigenpair of an otherwise unknown program.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlagSpec {
    pub eigenvalue: C64,
    pub eigenstate: PureState,
}

impl FlagSpec {
    pub fn new(eigenvalue: C64, eigenstate: PureState) -> Result<Self> {
        if (eigenvalue.norm() - 1.0).abs() > 1e-9 {
            return Err(QvnError::InvalidParameter(format!(
                "flag eigenvalue {eigenvalue} is not unit modulus"
            )));
        }
        Ok(Self {
            eigenvalue,
            eigenstate,
        })
    }

    /// `‖U|λ⟩ − λ|λ⟩‖`, probing the box once.
    pub fn residual(&self, u: &dyn BlackBox) -> Result<f64> {
        let mut s = self.eigenstate.clone();
        u.apply_on(&mut s, 0)?;
        Ok((s.amplitudes() - self.eigenstate.amplitudes() * self.eigenvalue).norm())
    }

    pub fn verify(&self, u: &dyn BlackBox) -> Result<()> {
        let residual = self.residual(u)?;
        if residual > FLAG_TOL {
            return Err(QvnError::BadFlag { residual });
        }
        Ok(())
    }
}

/// Access to a program only through its action.
pub trait BlackBox {
    fn dim(&self) -> usize;
    /// Applies the program to subsystem `target` of `state`.
    fn apply_on(&self, state: &mut PureState, target: usize) -> Result<()>;
    /// Qubits used to hold the program itself.
    fn storage_qubits(&self) -> usize {
        0
    }
}

/// A unitary whose matrix is sealed behind [`BlackBox`].
pub struct OpaqueUnitary(Unitary);

impl OpaqueUnitary {
    pub fn new(u: Unitary) -> Self {
        Self(u)
    }
}

impl BlackBox for OpaqueUnitary {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_on(&self, state: &mut PureState, target: usize) -> Result<()> {
        state.apply_raw(self.0.matrix(), &[target])
    }
}

/// A stored unitary program `|U⟩` used as a gate by teleporting the target
/// into its tail and keeping the trivial Bell outcome.
pub struct ChoiBlackBox {
    program: PureState,
}

impl ChoiBlackBox {
    pub fn new(choi: &ChoiState) -> Result<Self> {
        let program = choi
            .pure_state()
            .cloned()
            .ok_or_else(|| QvnError::InvalidState("program state must be pure".into()))?;
        if choi.head_dim() != choi.tail_dim() {
            return Err(QvnError::InvalidState("program must be square".into()));
        }
        Ok(Self { program })
    }

    pub fn from_slot(slot: &ProgramSlot) -> Result<Self> {
        slot.ensure_fresh()?;
        Self::new(slot.choi())
    }
}

impl BlackBox for ChoiBlackBox {
    fn dim(&self) -> usize {
        self.program.dims()[0]
    }

    fn apply_on(&self, state: &mut PureState, target: usize) -> Result<()> {
        let d = self.dim();
        if state.dims().get(target) != Some(&d) {
            return Err(QvnError::DimensionMismatch {
                expected: d,
                found: state.dims().get(target).copied().unwrap_or(0),
            });
        }
        let n = state.num_subsystems();
        // wires: state..., head, tail
        let joint = state.tensor(&self.program);
        let omega = state::ebit(d);
        let (_, rest) = joint.project_out(&[target, n + 1], omega.amplitudes())?;
        let rest = rest.ok_or_else(|| QvnError::InvalidState("teleportation branch vanished".into()))?;
        // rest has the state's other wires followed by the head; move head to `target`
        let mut order: Vec<usize> = (0..n - 1).collect();
        order.insert(target, n - 1);
        *state = rest.permuted(&order)?;
        Ok(())
    }

    fn storage_qubits(&self) -> usize {
        2 * linalg::qubits_for(self.dim())
    }
}

/// Where a control signal came from. Only deterministic inputs exist: a
/// measurement outcome can never become a control signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    DeterministicInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ControlKind {
    ClassicalBit(bool),
    Qubit { alpha: C64, beta: C64 },
}

/// A control signal supplied as input.
///
/// Fields are private and there is no conversion from measurement branches:
///
/// ```compile_fail
/// use qvn_core::qcu::{ControlKind, ControlSignal, Provenance};
/// let s = ControlSignal { kind: ControlKind::ClassicalBit(true), provenance: Provenance::DeterministicInput };
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    kind: ControlKind,
    provenance: Provenance,
}

impl ControlSignal {
    pub fn bit(b: bool) -> Self {
        Self {
            kind: ControlKind::ClassicalBit(b),
            provenance: Provenance::DeterministicInput,
        }
    }

    pub fn qubit(alpha: C64, beta: C64) -> Result<Self> {
        let n = alpha.norm_sqr() + beta.norm_sqr();
        if (n - 1.0).abs() > linalg::TOL {
            return Err(QvnError::InvalidParameter(format!("|α|²+|β|² = {n}")));
        }
        Ok(Self {
            kind: ControlKind::Qubit { alpha, beta },
            provenance: Provenance::DeterministicInput,
        })
    }

    pub fn kind(&self) -> ControlKind {
        self.kind
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn state(&self) -> PureState {
        match self.kind {
            ControlKind::ClassicalBit(false) => PureState::zero(),
            ControlKind::ClassicalBit(true) => PureState::one(),
            ControlKind::Qubit { alpha, beta } => PureState::from_parts(
                CVector::from_vec(vec![alpha, beta]),
                vec![2],
            ),
        }
    }
}

/// Result of a controlled execution.
#[derive(Clone, Debug)]
pub struct ControlledOutput {
    /// State on `control ⊗ data`.
    pub state: PureState,
    /// Purity of the flag marginal before it was split off.
    pub flag_purity: f64,
    /// Fidelity of the flag marginal with `|λ⟩`.
    pub flag_fidelity: f64,
    /// Control, data, flag and program-storage qubits.
    pub qubits_used: usize,
}

/// Runs the CSWAP sandwich on `control ⊗ data ⊗ flag` (wires 0, 1, 2).
fn sandwich(u: &dyn BlackBox, flag: &FlagSpec, control: PureState, data: &PureState) -> Result<PureState> {
    let d = u.dim();
    if data.dim() != d || flag.eigenstate.dim() != d {
        return Err(QvnError::DimensionMismatch {
            expected: d,
            found: data.dim(),
        });
    }
    let data = PureState::from_parts(data.amplitudes().clone(), vec![d]);
    let fl = PureState::from_parts(flag.eigenstate.amplitudes().clone(), vec![d]);
    let mut s = control.tensor(&data).tensor(&fl);
    let cs = gates::cswap(d);
    s.apply_unitary(&cs, &[0, 1, 2])?;
    u.apply_on(&mut s, 2)?;
    s.apply_unitary(&cs, &[0, 1, 2])?;
    Ok(s)
}

fn split_flag(s: &PureState, flag: &FlagSpec, phase_fix: Option<C64>, qubits_used: usize) -> Result<ControlledOutput> {
    let marginal = s.reduced(&[2])?;
    let flag_purity = marginal.purity();
    let fl = PureState::from_parts(flag.eigenstate.amplitudes().clone(), vec![flag.eigenstate.dim()]);
    let flag_fidelity = marginal.expectation(&fl)?;
    let (_, rest) = s.project_out(&[2], fl.amplitudes())?;
    let mut rest = rest.ok_or_else(|| QvnError::InvalidState("flag branch vanished".into()))?;
    if let Some(l) = phase_fix {
        let fix = CMatrix::from_row_slice(2, 2, &[l.inv(), cr(0.0), cr(0.0), cr(1.0)]);
        rest.apply_raw(&fix, &[0])?;
    }
    Ok(ControlledOutput {
        state: rest,
        flag_purity,
        flag_fidelity,
        qubits_used,
    })
}

fn qubits_for_control(u: &dyn BlackBox) -> usize {
    1 + 2 * linalg::qubits_for(u.dim()) + u.storage_qubits()
}

/// `Λ(U) = |0⟩⟨0| ⊗ 1 + |1⟩⟨1| ⊗ U` applied to `control ⊗ data`, touching `u`
/// only through [`BlackBox::apply_on`].
pub fn controlled_unknown(
    u: &dyn BlackBox,
    flag: &FlagSpec,
    control: &ControlSignal,
    data: &PureState,
) -> Result<ControlledOutput> {
    flag.verify(u)?;
    let s = sandwich(u, flag, control.state(), data)?;
    split_flag(&s, flag, Some(flag.eigenvalue), qubits_for_control(u))
}

/// Runs [`controlled_unknown`] on a stored program with its attached flag.
/// The program is consumed.
pub fn control_slot(slot: &mut ProgramSlot, control: &ControlSignal, data: &PureState) -> Result<ControlledOutput> {
    let flag = slot
        .flag()
        .cloned()
        .ok_or_else(|| QvnError::MissingFlag(slot.label().to_owned()))?;
    let bb = ChoiBlackBox::from_slot(slot)?;
    let out = controlled_unknown(&bb, &flag, control, data)?;
    slot.consume()?;
    Ok(out)
}

/// The sandwich without eigenvalue compensation: `Λ(λ⁻¹U)` up to the global
/// phase `λ`. This is the part fixed by the flag alone; it is unchanged when
/// `U` and `λ` pick up the same phase.
pub fn flag_normalized_control(
    u: &dyn BlackBox,
    flag: &FlagSpec,
    control: &ControlSignal,
    data: &PureState,
) -> Result<ControlledOutput> {
    flag.verify(u)?;
    let s = sandwich(u, flag, control.state(), data)?;
    split_flag(&s, flag, None, qubits_for_control(u))
}

/// One branch of the two-term combination.
#[derive(Clone, Debug)]
pub struct LcuBranch {
    /// True for the `+` outcome on the control.
    pub success: bool,
    pub probability: f64,
    /// Data state; `None` when the branch is impossible.
    pub state: Option<PureState>,
}

/// Both outcomes of the control measurement plus bookkeeping.
#[derive(Clone, Debug)]
pub struct LcuOutput {
    pub branches: Vec<LcuBranch>,
    pub qubits_used: usize,
    /// Control measured in the X basis, success on `+`.
    pub convention: &'static str,
}

impl LcuOutput {
    pub fn success(&self) -> &LcuBranch {
        &self.branches[0]
    }
}

/// Prepares `α|0⟩ + β|1⟩`, applies `U₁` on `|0⟩` and `U₂` on `|1⟩` with
/// flag-controlled gadgets, then measures the control in the X basis.
/// The `+` branch carries `(αU₁ + βU₂)|ψ⟩` with probability `‖αU₁ψ + βU₂ψ‖²/2`.
pub fn lcu_two(
    slot1: &ProgramSlot,
    slot2: &ProgramSlot,
    signal: &ControlSignal,
    psi: &PureState,
) -> Result<LcuOutput> {
    let f1 = slot1
        .flag()
        .ok_or_else(|| QvnError::MissingFlag(slot1.label().to_owned()))?;
    let f2 = slot2
        .flag()
        .ok_or_else(|| QvnError::MissingFlag(slot2.label().to_owned()))?;
    let b1 = ChoiBlackBox::from_slot(slot1)?;
    let b2 = ChoiBlackBox::from_slot(slot2)?;
    lcu_with(&b1, f1, &b2, f2, signal, psi)
}

/// [`lcu_two`] on arbitrary black boxes.
pub fn lcu_with(
    u1: &dyn BlackBox,
    f1: &FlagSpec,
    u2: &dyn BlackBox,
    f2: &FlagSpec,
    signal: &ControlSignal,
    psi: &PureState,
) -> Result<LcuOutput> {
    if u1.dim() != u2.dim() {
        return Err(QvnError::DimensionMismatch {
            expected: u1.dim(),
            found: u2.dim(),
        });
    }
    f1.verify(u1)?;
    f2.verify(u2)?;
    let x = gates::x();
    // U₁ fires on control |0⟩: flip, control, flip back
    let flipped = signal.state().evolved(&x, &[0])?;
    let s = sandwich(u1, f1, flipped, psi)?;
    let out = split_flag(&s, f1, Some(f1.eigenvalue), 0)?.state.evolved(&x, &[0])?;
    // second gadget takes the joint control⊗data state
    let d = u2.dim();
    let fl = PureState::from_parts(f2.eigenstate.amplitudes().clone(), vec![d]);
    let mut s = PureState::from_parts(out.amplitudes().clone(), vec![2, d]).tensor(&fl);
    let cs = gates::cswap(d);
    s.apply_unitary(&cs, &[0, 1, 2])?;
    u2.apply_on(&mut s, 2)?;
    s.apply_unitary(&cs, &[0, 1, 2])?;
    let joint = split_flag(&s, f2, Some(f2.eigenvalue), 0)?.state;

    let branches: Vec<Branch<PureState>> = measure_pvm(&joint, &Pvm::pauli_basis('X')?, &[0])?;
    let qubits_used = 1 + linalg::qubits_for(d) * 3 + u1.storage_qubits() + u2.storage_qubits();
    Ok(LcuOutput {
        branches: branches
            .into_iter()
            .enumerate()
            .map(|(i, b)| LcuBranch {
                success: i == 0,
                probability: b.probability,
                state: b.state.map(|st| drop_control(&st, i)),
            })
            .collect(),
        qubits_used,
        convention: "control in X basis, success on +",
    })
}

fn drop_control(st: &PureState, outcome: usize) -> PureState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let bra = if outcome == 0 {
        CVector::from_vec(vec![cr(s), cr(s)])
    } else {
        CVector::from_vec(vec![cr(s), cr(-s)])
    };
    st.project_out(&[0], &bra)
        .ok()
        .and_then(|(_, r)| r)
        .expect("post-measurement control is the measured basis state")
}

/// Entanglement across a control/data cut.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Disentanglement {
    pub disentangled: bool,
    /// `1 − tr ρ_control²`.
    pub measure: f64,
}

/// Purity test of the control marginal; the wires must partition the state.
pub fn disentangle_check(state: &PureState, control_wires: &[usize], data_wires: &[usize]) -> Result<Disentanglement> {
    let n = state.num_subsystems();
    let mut all: Vec<usize> = control_wires.iter().chain(data_wires).copied().collect();
    all.sort_unstable();
    if all != (0..n).collect::<Vec<_>>() {
        return Err(QvnError::InvalidParameter(
            "control and data wires must partition the state".into(),
        ));
    }
    let purity = state.reduced(control_wires)?.purity();
    Ok(Disentanglement {
        disentangled: purity >= 1.0 - 1e-8,
        measure: (1.0 - purity).max(0.0),
    })
}

/// Flag from the `which`-th Schur vector of a known unitary; used to build
/// test inputs and host-side metadata, never by the gadgets.
pub fn flag_from_whitebox(u: &Unitary, which: usize) -> Result<FlagSpec> {
    let d = u.dim();
    if which >= d {
        return Err(QvnError::InvalidParameter(format!("eigenvector index {which}")));
    }
    // a unitary is normal, so its Schur vectors are eigenvectors
    let (q, _) = u.matrix().clone().schur().unpack();
    let v = PureState::from_parts(q.column(which).into_owned(), vec![d]);
    let lambda = v.inner(&u.apply(&v)?)?;
    FlagSpec::new(lambda / cr(lambda.norm()), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::random::{haar_random_unitary, random_state, RandomSource};
    use crate::state::{bell_state, fidelity};
    use approx::assert_abs_diff_eq;

    fn lambda_u(u: &Unitary) -> CMatrix {
        let d = u.dim();
        let mut m = CMatrix::identity(2 * d, 2 * d);
        m.view_mut((d, d), (d, d)).copy_from(u.matrix());
        m
    }

    fn close_up_to_phase(a: &PureState, b: &PureState, tol: f64) -> bool {
        1.0 - fidelity(a, b).unwrap() < tol
    }

    #[test]
    fn z_on_plus() {
        let z = gates::z();
        let flag = FlagSpec::new(cr(1.0), PureState::zero()).unwrap();
        let out = controlled_unknown(&OpaqueUnitary::new(z), &flag, &ControlSignal::bit(true), &PureState::plus()).unwrap();
        let expect = PureState::one().tensor(&PureState::minus());
        assert!(close_up_to_phase(&out.state, &expect, 1e-14));
        assert_eq!(out.qubits_used, 3);
    }

    #[test]
    fn control_off_leaves_data() {
        let mut rng = RandomSource::new(2);
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let flag = flag_from_whitebox(&u, 0).unwrap();
        let psi = random_state(&[2], &mut rng);
        let out = controlled_unknown(&OpaqueUnitary::new(u), &flag, &ControlSignal::bit(false), &psi).unwrap();
        assert!(close_up_to_phase(&out.state, &PureState::zero().tensor(&psi), 1e-12));
        assert!(out.flag_purity > 1.0 - 1e-12);
    }

    #[test]
    fn matches_lambda_u_for_random_gates() {
        let mut rng = RandomSource::new(7);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = ControlSignal::qubit(cr(s), cr(s)).unwrap();
        for _ in 0..20 {
            let u = haar_random_unitary(2, &mut rng).unwrap();
            let psi = random_state(&[2], &mut rng);
            let oracle = PureState::from_parts(lambda_u(&u) * plus.state().tensor(&psi).amplitudes(), vec![2, 2]);
            for which in 0..2 {
                let flag = flag_from_whitebox(&u, which).unwrap();
                let out = controlled_unknown(&OpaqueUnitary::new(u.clone()), &flag, &plus, &psi).unwrap();
                assert!(close_up_to_phase(&out.state, &oracle, 1e-12));
                assert!(out.flag_purity > 1.0 - 1e-12);
                assert!(out.flag_fidelity > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn stored_program_as_black_box() {
        let mut rng = RandomSource::new(70);
        let u = haar_random_unitary(4, &mut rng).unwrap();
        let slot = ProgramSlot::new(u.clone(), "U");
        let bb = ChoiBlackBox::from_slot(&slot).unwrap();
        let psi = random_state(&[3, 4], &mut rng);
        let mut s = psi.clone();
        bb.apply_on(&mut s, 1).unwrap();
        let direct = psi.evolved(&u, &[1]).unwrap();
        assert!(close_up_to_phase(&s, &direct, 1e-12));
        let flag = flag_from_whitebox(&u, 2).unwrap();
        let out = controlled_unknown(&bb, &flag, &ControlSignal::bit(true), &random_state(&[4], &mut rng)).unwrap();
        assert_eq!(out.qubits_used, 9);
    }

    #[test]
    fn control_slot_consumes_and_needs_flag() {
        let mut bare = ProgramSlot::new(gates::x(), "X");
        assert!(matches!(
            control_slot(&mut bare, &ControlSignal::bit(true), &PureState::zero()),
            Err(QvnError::MissingFlag(_))
        ));
        let flag = flag_from_whitebox(&gates::x(), 0).unwrap();
        let mut slot = ProgramSlot::new(gates::x(), "X").with_flag(flag);
        let out = control_slot(&mut slot, &ControlSignal::bit(true), &PureState::zero()).unwrap();
        let expect = PureState::one().tensor(&PureState::one());
        assert!(close_up_to_phase(&out.state, &expect, 1e-12));
        assert!(slot.is_consumed());
    }

    #[test]
    fn bad_flag_rejected() {
        let flag = FlagSpec::new(cr(1.0), PureState::plus()).unwrap();
        let err = controlled_unknown(&OpaqueUnitary::new(gates::z()), &flag, &ControlSignal::bit(true), &PureState::zero());
        assert!(matches!(err, Err(QvnError::BadFlag { .. })));
    }

    #[test]
    fn joint_rephasing_leaves_flag_normalized_output_unchanged() {
        let mut rng = RandomSource::new(12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sig = ControlSignal::qubit(cr(s), c(0.0, s)).unwrap();
        let u = haar_random_unitary(2, &mut rng).unwrap();
        let psi = random_state(&[2], &mut rng);
        let flag = flag_from_whitebox(&u, 0).unwrap();
        let phi = 1.234;
        let up = u.with_phase(phi);
        let flag_p = FlagSpec::new(flag.eigenvalue * c(phi.cos(), phi.sin()), flag.eigenstate.clone()).unwrap();
        let a = flag_normalized_control(&OpaqueUnitary::new(u.clone()), &flag, &sig, &psi).unwrap();
        let b = flag_normalized_control(&OpaqueUnitary::new(up.clone()), &flag_p, &sig, &psi).unwrap();
        assert!(close_up_to_phase(&a.state, &b.state, 1e-12));
        // the compensated output tracks the physical gate
        let full = controlled_unknown(&OpaqueUnitary::new(up.clone()), &flag_p, &sig, &psi).unwrap();
        let oracle = PureState::from_parts(lambda_u(&up) * sig.state().tensor(&psi).amplitudes(), vec![2, 2]);
        assert!(close_up_to_phase(&full.state, &oracle, 1e-12));
    }

    fn flagged(u: Unitary, which: usize, label: &str) -> ProgramSlot {
        let f = flag_from_whitebox(&u, which).unwrap();
        ProgramSlot::new(u, label).with_flag(f)
    }

    #[test]
    fn lcu_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sig = ControlSignal::qubit(cr(s), cr(s)).unwrap();
        let psi = PureState::zero();

        let out = lcu_two(&flagged(gates::identity(2), 0, "a"), &flagged(gates::identity(2), 0, "b"), &sig, &psi).unwrap();
        assert_abs_diff_eq!(out.success().probability, 1.0, epsilon = 1e-12);
        assert!(close_up_to_phase(out.success().state.as_ref().unwrap(), &psi, 1e-12));

        let out = lcu_two(&flagged(gates::identity(2), 0, "a"), &flagged(gates::z(), 0, "b"), &sig, &psi).unwrap();
        assert!(close_up_to_phase(out.success().state.as_ref().unwrap(), &PureState::zero(), 1e-12));

        let out = lcu_two(&flagged(gates::x(), 0, "a"), &flagged(gates::z(), 0, "b"), &sig, &psi).unwrap();
        assert!(close_up_to_phase(out.success().state.as_ref().unwrap(), &PureState::plus(), 1e-12));

        let bare = ProgramSlot::new(gates::x(), "x");
        assert!(matches!(
            lcu_two(&bare, &flagged(gates::z(), 0, "b"), &sig, &psi),
            Err(QvnError::MissingFlag(_))
        ));
    }

    #[test]
    fn disentanglement_examples() {
        let prod = PureState::zero().tensor(&PureState::plus());
        let r = disentangle_check(&prod, &[0], &[1]).unwrap();
        assert!(r.disentangled);
        assert_abs_diff_eq!(r.measure, 0.0, epsilon = 1e-14);
        let r = disentangle_check(&bell_state(2).unwrap(), &[0], &[1]).unwrap();
        assert!(!r.disentangled);
        assert_abs_diff_eq!(r.measure, 0.5, epsilon = 1e-14);

        let flag = FlagSpec::new(cr(1.0), PureState::plus()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let out = controlled_unknown(
            &OpaqueUnitary::new(gates::x()),
            &flag,
            &ControlSignal::qubit(cr(s), cr(s)).unwrap(),
            &PureState::zero(),
        )
        .unwrap();
        assert!(!disentangle_check(&out.state, &[0], &[1]).unwrap().disentangled);
        assert!(disentangle_check(&out.state, &[0], &[0]).is_err());
    }
}
