//! The quantum memory unit.
//!
//! Programs are stored as Choi states. Writing injects an input at the tail by
//! the binary measurement `{|ψ*⟩⟨ψ*|, 1 − |ψ*⟩⟨ψ*|}`; the conjugate is forced by
//! the `|ω⟩` index pairing. The accept branch leaves `ℰ(|ψ⟩⟨ψ|)` on the head
//! with probability `1/d`; the complement branch leaves `ℰ(1 − |ψ⟩⟨ψ|)/(d − 1)`.
//!
//! A slot is consumed by any injection or composition and must be refreshed
//! before reuse. Slots without a classical description cannot be copied.

use serde::{Deserialize, Serialize};

use crate::duality::{self, ChoiState};
use crate::error::{QvnError, Result};
use crate::gates;
use crate::linalg::{self, cr, CMatrix, MatrixPairs};
use crate::measurement::{measure_pvm, Branch};
use crate::operator::{KrausChannel, Pvm, Unitary};
use crate::qcu::FlagSpec;
use crate::state::{DensityOperator, PureState};

/// Classical description `[U]` of a stored program.
#[derive(Clone, Debug)]
pub enum WhiteBox {
    Unitary(Unitary),
    Channel(KrausChannel),
}

impl WhiteBox {
    pub fn choi(&self) -> ChoiState {
        match self {
            WhiteBox::Unitary(u) => duality::choi_of_channel(&KrausChannel::from_unitary(u)),
            WhiteBox::Channel(k) => duality::choi_of_channel(k),
        }
    }

    pub fn as_unitary(&self) -> Option<&Unitary> {
        match self {
            WhiteBox::Unitary(u) => Some(u),
            WhiteBox::Channel(_) => None,
        }
    }
}

/// What a caller can hand to [`MemoryUnit::store_program`].
#[derive(Clone, Debug)]
pub enum ProgramDesc {
    Unitary(Unitary),
    Channel(KrausChannel),
    Choi(ChoiState),
}

impl From<Unitary> for ProgramDesc {
    fn from(u: Unitary) -> Self {
        ProgramDesc::Unitary(u)
    }
}

impl From<KrausChannel> for ProgramDesc {
    fn from(k: KrausChannel) -> Self {
        ProgramDesc::Channel(k)
    }
}

impl From<ChoiState> for ProgramDesc {
    fn from(w: ChoiState) -> Self {
        ProgramDesc::Choi(w)
    }
}

/// A stored program. Deliberately not `Clone`: see [`ProgramSlot::try_clone`].
#[derive(Debug)]
pub struct ProgramSlot {
    label: String,
    choi: ChoiState,
    whitebox: Option<WhiteBox>,
    flag: Option<FlagSpec>,
    consumed: bool,
}

impl ProgramSlot {
    pub fn new(desc: impl Into<ProgramDesc>, label: impl Into<String>) -> Self {
        let (choi, whitebox) = match desc.into() {
            ProgramDesc::Unitary(u) => {
                let wb = WhiteBox::Unitary(u);
                (wb.choi(), Some(wb))
            }
            ProgramDesc::Channel(k) => {
                let wb = WhiteBox::Channel(k);
                (wb.choi(), Some(wb))
            }
            ProgramDesc::Choi(w) => (w, None),
        };
        Self {
            label: label.into(),
            choi,
            whitebox,
            flag: None,
            consumed: false,
        }
    }

    /// A slot holding only the quantum encoding, e.g. after a download.
    pub fn from_choi(choi: ChoiState, label: impl Into<String>) -> Self {
        Self::new(ProgramDesc::Choi(choi), label)
    }

    pub fn with_flag(mut self, flag: FlagSpec) -> Self {
        self.flag = Some(flag);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn choi(&self) -> &ChoiState {
        &self.choi
    }

    pub fn whitebox(&self) -> Option<&WhiteBox> {
        self.whitebox.as_ref()
    }

    pub fn flag(&self) -> Option<&FlagSpec> {
        self.flag.as_ref()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    pub fn head_dim(&self) -> usize {
        self.choi.head_dim()
    }

    pub fn tail_dim(&self) -> usize {
        self.choi.tail_dim()
    }

    /// Qubits holding the program: head plus tail registers.
    pub fn qubits(&self) -> usize {
        linalg::qubits_for(self.head_dim()) + linalg::qubits_for(self.tail_dim())
    }

    pub(crate) fn ensure_fresh(&self) -> Result<()> {
        if self.consumed {
            return Err(QvnError::ProgramConsumed(self.label.clone()));
        }
        Ok(())
    }

    /// Marks the slot used and hands out the state it held.
    pub fn consume(&mut self) -> Result<ChoiState> {
        self.ensure_fresh()?;
        self.consumed = true;
        Ok(self.choi.clone())
    }

    /// Copies the slot. Only white-box programs can be copied; the copy is
    /// rebuilt from the classical description, never from the quantum state.
    pub fn try_clone(&self) -> Result<ProgramSlot> {
        let wb = self
            .whitebox
            .clone()
            .ok_or_else(|| QvnError::CloneForbidden(self.label.clone()))?;
        Ok(ProgramSlot {
            label: self.label.clone(),
            choi: wb.choi(),
            whitebox: Some(wb),
            flag: self.flag.clone(),
            consumed: false,
        })
    }

    /// Restores a consumed slot from its white box or from `source`.
    pub fn refresh(&mut self, source: Option<&dyn ProgramSource>) -> Result<()> {
        if !self.consumed {
            return Ok(());
        }
        self.choi = match (&self.whitebox, source) {
            (Some(wb), _) => wb.choi(),
            (None, Some(src)) => src.fetch(&self.label)?,
            (None, None) => return Err(QvnError::RefreshUnavailable(self.label.clone())),
        };
        self.consumed = false;
        Ok(())
    }
}

/// Somewhere a consumed black-box program can be downloaded again.
pub trait ProgramSource {
    fn fetch(&self, label: &str) -> Result<ChoiState>;
}

/// The memory unit: labelled slots plus a pool of ebits.
#[derive(Debug, Default)]
pub struct MemoryUnit {
    slots: Vec<ProgramSlot>,
    ebit_pool: usize,
}

impl MemoryUnit {
    pub fn new(ebit_pool: usize) -> Self {
        Self {
            slots: Vec::new(),
            ebit_pool,
        }
    }

    pub fn store_program(&mut self, desc: impl Into<ProgramDesc>, label: &str) -> Result<&ProgramSlot> {
        self.insert(ProgramSlot::new(desc, label))
    }

    pub fn insert(&mut self, slot: ProgramSlot) -> Result<&ProgramSlot> {
        if self.slots.iter().any(|s| s.label == slot.label) {
            return Err(QvnError::DuplicateLabel(slot.label));
        }
        log::debug!("stored `{}` on {} qubits", slot.label, slot.qubits());
        self.slots.push(slot);
        Ok(self.slots.last().expect("just pushed"))
    }

    pub fn get(&self, label: &str) -> Result<&ProgramSlot> {
        self.slots
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| QvnError::UnknownLabel(label.to_owned()))
    }

    pub fn get_mut(&mut self, label: &str) -> Result<&mut ProgramSlot> {
        self.slots
            .iter_mut()
            .find(|s| s.label == label)
            .ok_or_else(|| QvnError::UnknownLabel(label.to_owned()))
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.label.as_str())
    }

    pub fn slots(&self) -> &[ProgramSlot] {
        &self.slots
    }

    /// Qubits held by programs that have not been consumed yet.
    pub fn qubits_in_use(&self) -> usize {
        self.slots.iter().filter(|s| !s.consumed).map(ProgramSlot::qubits).sum()
    }

    /// Removes a slot from the memory and hands it to the caller.
    pub fn take(&mut self, label: &str) -> Result<ProgramSlot> {
        let i = self
            .slots
            .iter()
            .position(|s| s.label == label)
            .ok_or_else(|| QvnError::UnknownLabel(label.to_owned()))?;
        Ok(self.slots.remove(i))
    }

    pub fn ebit_pool(&self) -> usize {
        self.ebit_pool
    }

    pub fn add_ebits(&mut self, n: usize) {
        self.ebit_pool += n;
    }

    pub fn take_ebit(&mut self) -> Result<()> {
        self.ebit_pool = self.ebit_pool.checked_sub(1).ok_or(QvnError::EbitPoolEmpty)?;
        Ok(())
    }

    pub fn refresh(&mut self, label: &str, source: Option<&dyn ProgramSource>) -> Result<()> {
        self.get_mut(label)?.refresh(source)
    }

    /// Adds every program of a JSON library (see [`load_library`]).
    pub fn load_library(&mut self, json: &str) -> Result<usize> {
        let entries = load_library(json)?;
        let n = entries.len();
        for u in entries {
            let label = u.label().unwrap_or_default().to_owned();
            self.store_program(u, &label)?;
        }
        Ok(n)
    }
}

/// Library entry on disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub label: String,
    pub matrix: MatrixPairs,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

/// Parses `[{label, matrix, dims}]` into labelled unitaries.
pub fn load_library(json: &str) -> Result<Vec<Unitary>> {
    let entries: Vec<LibraryEntry> = serde_json::from_str(json)?;
    entries
        .into_iter()
        .map(|e| {
            let m = linalg::matrix_from_pairs(&e.matrix)?;
            let dims = e.dims.unwrap_or_else(|| vec![m.nrows()]);
            Ok(Unitary::with_dims(m, dims)?.labelled(e.label))
        })
        .collect()
}

/// Outcome of the binary injection measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InjectOutcome {
    /// `|ψ*⟩⟨ψ*|` fired: the head carries `ℰ(ψ)`.
    Accept,
    /// The complement fired.
    Complement,
}

/// One branch of a write.
#[derive(Clone, Debug)]
pub struct InjectionBranch {
    pub outcome: InjectOutcome,
    pub probability: f64,
    /// Head state; `None` for an impossible branch.
    pub head: Option<DensityOperator>,
    /// Pure head state when the branch leaves one (unitary program, accept branch).
    pub head_pure: Option<PureState>,
}

fn check_input(slot: &ProgramSlot, psi: &PureState) -> Result<()> {
    if psi.dim() != slot.tail_dim() {
        return Err(QvnError::DimensionMismatch {
            expected: slot.tail_dim(),
            found: psi.dim(),
        });
    }
    Ok(())
}

/// Injection branches of a Choi state without touching any slot.
pub fn inject_branches(choi: &ChoiState, psi: &PureState) -> Result<Vec<InjectionBranch>> {
    let pvm = Pvm::binary(&psi.conj());
    let outcomes = [InjectOutcome::Accept, InjectOutcome::Complement];
    if let Some(w) = choi.pure_state() {
        let branches = measure_pvm(w, &pvm, &[1])?;
        return branches
            .into_iter()
            .zip(outcomes)
            .map(|(b, outcome)| {
                let head = b.state.as_ref().map(|s| s.reduced(&[0])).transpose()?;
                let head_pure = match (outcome, &b.state) {
                    (InjectOutcome::Accept, Some(_)) => {
                        w.project_out(&[1], psi.conj().amplitudes())?.1
                    }
                    _ => None,
                };
                Ok(InjectionBranch {
                    outcome,
                    probability: b.probability,
                    head,
                    head_pure,
                })
            })
            .collect();
    }
    let branches: Vec<Branch<DensityOperator>> = measure_pvm(choi.operator(), &pvm, &[1])?;
    branches
        .into_iter()
        .zip(outcomes)
        .map(|(b, outcome)| {
            Ok(InjectionBranch {
                outcome,
                probability: b.probability,
                head: b.state.map(|s| s.partial_trace(&[0])).transpose()?,
                head_pure: None,
            })
        })
        .collect()
}

/// Injects `psi` at the tail of `slot`, consuming it. Both branches are returned.
pub fn write_inject(slot: &mut ProgramSlot, psi: &PureState) -> Result<Vec<InjectionBranch>> {
    slot.ensure_fresh()?;
    check_input(slot, psi)?;
    let choi = slot.consume()?;
    inject_branches(&choi, psi)
}

/// `pᵢ = ⟨ψᵢ|ρ|ψᵢ⟩` for each projector.
pub fn read_out(head: &DensityOperator, pvm: &Pvm) -> Result<Vec<f64>> {
    if head.dim() != pvm.dim() {
        return Err(QvnError::DimensionMismatch {
            expected: head.dim(),
            found: pvm.dim(),
        });
    }
    Ok(pvm
        .projectors()
        .iter()
        .map(|p| linalg::trace(&(p * head.matrix())).re)
        .collect())
}

/// Slack allowed when checking a recovered probability.
pub const RECOVERY_TOL: f64 = 1e-9;

/// Recovers the accept-branch probability `pᵢ` from a measured `qᵢ`.
/// The complement branch gives `qᵢ = (1 − pᵢ)/(d − 1)`.
pub fn recover_probability(outcome: InjectOutcome, q: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) || d < 2 {
        return Err(QvnError::InvalidParameter(format!("q = {q}, d = {d}")));
    }
    let p = match outcome {
        InjectOutcome::Accept => q,
        InjectOutcome::Complement if d == 2 => 1.0 - q,
        InjectOutcome::Complement => 1.0 - (d as f64 - 1.0) * q,
    };
    if !(-RECOVERY_TOL..=1.0 + RECOVERY_TOL).contains(&p) {
        return Err(QvnError::InconsistentProbability(p));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Circuit realisation of the injection measurement with a parity ancilla.
#[derive(Clone, Debug)]
pub struct ParityGadget {
    /// Program qubits plus the ancilla.
    pub qubits_total: usize,
    /// Number of controls on the parity gate (1 is a CNOT, 2 a Toffoli).
    pub parity_controls: usize,
    /// False when the tail is a single qubit, which can be measured directly.
    pub ancilla_required: bool,
    pub branches: Vec<InjectionBranch>,
}

/// Unitary `W` with `W|0⟩ = v`.
pub(crate) fn basis_rotation(v: &PureState) -> CMatrix {
    let d = v.dim();
    let mut m = linalg::identity(d);
    m.set_column(0, v.amplitudes());
    let qr = m.qr();
    let mut q = qr.q();
    let r00 = qr.r()[(0, 0)];
    let ph = r00 / cr(r00.norm());
    for i in 0..d {
        q[(i, 0)] *= ph;
    }
    q
}

/// Runs the injection as an explicit circuit: rotate `|ψ*⟩` to `|0…0⟩`, flip
/// the tail, copy its all-ones parity onto an ancilla with a multi-controlled
/// NOT, undo, and measure the ancilla. Does not consume the slot.
pub fn parity_injection_gadget(slot: &ProgramSlot, psi: &PureState) -> Result<ParityGadget> {
    check_input(slot, psi)?;
    let (d_out, d_in) = (slot.head_dim(), slot.tail_dim());
    let (n_out, n_in) = (linalg::qubits_for(d_out), linalg::qubits_for(d_in));
    if 1 << n_out != d_out || 1 << n_in != d_in {
        return Err(QvnError::InvalidParameter(
            "parity gadget needs qubit registers".into(),
        ));
    }
    let n = n_out + n_in;
    let tail: Vec<usize> = (n_out..n).collect();
    let anc = n;
    let w = basis_rotation(&psi.conj());
    let mut circuit: Vec<(CMatrix, Vec<usize>)> = vec![(w.adjoint(), tail.clone())];
    for &t in &tail {
        circuit.push((gates::x().matrix().clone(), vec![t]));
    }
    let mut parity_wires = tail.clone();
    parity_wires.push(anc);
    circuit.push((gates::mcx(n_in).matrix().clone(), parity_wires));
    for &t in &tail {
        circuit.push((gates::x().matrix().clone(), vec![t]));
    }
    circuit.push((w.clone(), tail.clone()));

    let mut dims = vec![2; n];
    dims.push(2);
    let ancilla_pvm = Pvm::computational(2);
    // ancilla reads 1 on accept
    let order = [1usize, 0];
    let outcomes = [InjectOutcome::Accept, InjectOutcome::Complement];
    let head_wires: Vec<usize> = (0..n_out).collect();

    let branches = if let Some(pure) = slot.choi().pure_state() {
        let mut s = PureState::from_parts(pure.amplitudes().clone(), vec![2; n]).tensor(&PureState::zero());
        for (op, wires) in &circuit {
            s.apply_raw(op, wires)?;
        }
        let bs = measure_pvm(&s, &ancilla_pvm, &[anc])?;
        order
            .iter()
            .zip(outcomes)
            .map(|(&k, outcome)| {
                let b = &bs[k];
                let head = b
                    .state
                    .as_ref()
                    .map(|st| regroup(st.reduced(&head_wires)?, d_out))
                    .transpose()?;
                Ok(InjectionBranch {
                    outcome,
                    probability: b.probability,
                    head,
                    head_pure: None,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let rho = DensityOperator::from_parts(slot.choi().operator().matrix().clone(), vec![2; n])
            .tensor(&PureState::zero().density());
        let mut m = rho.matrix().clone();
        let layout = linalg::Layout::new(&dims);
        for (op, wires) in &circuit {
            m = linalg::conjugate_local(&m, &layout, op, wires);
        }
        let rho = DensityOperator::from_parts(m, dims.clone());
        let bs = measure_pvm(&rho, &ancilla_pvm, &[anc])?;
        order
            .iter()
            .zip(outcomes)
            .map(|(&k, outcome)| {
                let b = &bs[k];
                let head = b
                    .state
                    .as_ref()
                    .map(|st| regroup(st.partial_trace(&head_wires)?, d_out))
                    .transpose()?;
                Ok(InjectionBranch {
                    outcome,
                    probability: b.probability,
                    head,
                    head_pure: None,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(ParityGadget {
        qubits_total: n + 1,
        parity_controls: n_in,
        ancilla_required: n_in > 1,
        branches,
    })
}

fn regroup(rho: DensityOperator, d: usize) -> Result<DensityOperator> {
    Ok(DensityOperator::from_parts(rho.matrix().clone(), vec![d]))
}

/// Convenience: a slot's accept-branch output for `psi`, read out in `pvm`.
pub fn inject_and_read(slot: &mut ProgramSlot, psi: &PureState, pvm: &Pvm) -> Result<(f64, Vec<f64>)> {
    let branches = write_inject(slot, psi)?;
    let accept = &branches[0];
    let head = accept
        .head
        .as_ref()
        .ok_or_else(|| QvnError::InvalidState("accept branch impossible".into()))?;
    Ok((accept.probability, read_out(head, pvm)?))
}
