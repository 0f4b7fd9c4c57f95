//! Program composition.
//!
//! Two stored programs `|U⟩` (earlier, wires `h₁ t₁`) and `|V⟩` (later, wires
//! `h₂ t₂`) are joined by a Bell measurement on `(h₁, t₂)` in the basis
//! `|βᵢ⟩ = (σᵢ ⊗ 1)|ω⟩`. Outcome `i` occurs with probability `1/d²` and leaves
//! `|V σᵢ† U⟩` on `(h₂, t₁)`. With `V` known, the correction `V σᵢ V†` on `h₂`
//! restores `|VU⟩`; with only `U` known, `(U† σᵢ U)ᵗ` on `t₁` does the same.
//!
//! Covariant composition measures only whether the outcome is trivial. The
//! nontrivial class is fixed coherently by `Σᵢ |βᵢ⟩⟨βᵢ| ⊗ V σᵢ V†`, whose
//! blocks are read off the affine form of `V`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::duality::{self, ChoiState};
use crate::error::{QvnError, Result};
use crate::gates;
use crate::linalg::{self, cr, CMatrix, CVector, Layout};
use crate::memory::{self, MemoryUnit, ProgramSlot, WhiteBox};
use crate::operator::{Pvm, Unitary};
use crate::random::RandomSource;
use crate::state::{DensityOperator, PureState};

/// `(σᵢ ⊗ 1)|ω⟩` with `σᵢ` from [`gates::byproducts`].
pub fn bell_vector(d: usize, i: usize) -> CVector {
    let s = gates::byproducts(d)[i].matrix().clone();
    let norm = cr(1.0 / (d as f64).sqrt());
    CVector::from_fn(d * d, |k, _| s[(k / d, k % d)] * norm)
}

/// Bell-basis PVM on two `d`-dimensional wires.
pub fn bell_basis_pvm(d: usize) -> Pvm {
    let vs: Vec<CVector> = (0..d * d).map(|i| bell_vector(d, i)).collect();
    Pvm::from_basis(&vs).expect("Bell vectors are orthonormal")
}

#[derive(Clone, Debug)]
pub struct BellOutcome {
    pub index: usize,
    pub byproduct: Unitary,
}

impl BellOutcome {
    pub fn new(d: usize, index: usize) -> Self {
        Self {
            index,
            byproduct: gates::byproducts(d).swap_remove(index),
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.index == 0
    }
}

/// All Bell branches on wires `(a, b)`: probability and remaining state.
pub fn bell_branches(state: &PureState, a: usize, b: usize) -> Result<Vec<(BellOutcome, f64, Option<PureState>)>> {
    let dims = state.dims();
    let (da, db) = (
        *dims.get(a).ok_or(QvnError::SubsystemOutOfRange { index: a, count: dims.len() })?,
        *dims.get(b).ok_or(QvnError::SubsystemOutOfRange { index: b, count: dims.len() })?,
    );
    if da != db {
        return Err(QvnError::DimensionMismatch { expected: da, found: db });
    }
    (0..da * da)
        .map(|i| {
            let (p, rest) = state.project_out(&[a, b], &bell_vector(da, i))?;
            Ok((BellOutcome::new(da, i), p, rest))
        })
        .collect()
}

/// Bell measurement on wires `(a, b)`; returns the outcome and the state on the other wires.
pub fn bell_measure(state: &PureState, a: usize, b: usize, rng: &mut RandomSource) -> Result<(BellOutcome, PureState)> {
    let branches = bell_branches(state, a, b)?;
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = None;
    for (o, p, s) in branches {
        if let Some(s) = s {
            acc += p;
            if u < acc {
                return Ok((o, s));
            }
            last = Some((o, s));
        }
    }
    last.ok_or_else(|| QvnError::InvalidState("no possible Bell outcome".into()))
}

/// Result of composing two programs.
#[derive(Clone, Debug)]
pub struct CompositionResult {
    pub choi: ChoiState,
    pub outcome: usize,
    pub byproduct: Unitary,
    pub probability: f64,
    pub corrected: bool,
    /// Classical outcome bits sent for correction.
    pub ancilla_bits_used: usize,
    pub qubits_used: usize,
    /// Classical description of the composite, when both parts had one.
    pub whitebox: Option<Unitary>,
}

impl CompositionResult {
    /// Stores the composite as a fresh slot.
    pub fn into_slot(self, label: impl Into<String>) -> ProgramSlot {
        match self.whitebox {
            Some(u) if self.corrected => ProgramSlot::new(u, label),
            _ => ProgramSlot::from_choi(self.choi, label),
        }
    }
}

/// How the Bell outcome is chosen.
#[derive(Debug)]
pub enum Outcome<'a> {
    Sample(&'a mut RandomSource),
    Forced(usize),
}

/// Bell-projects `(h₁, t₂)` of `earlier ⊗ later` on outcome `i`. Returns the
/// branch probability and the normalised Choi state on `(h₂, t₁)`.
pub fn project_pair(earlier: &ChoiState, later: &ChoiState, i: usize) -> Result<(f64, Option<ChoiState>)> {
    let d = earlier.head_dim();
    if later.tail_dim() != d {
        return Err(QvnError::DimensionMismatch {
            expected: d,
            found: later.tail_dim(),
        });
    }
    let bra = bell_vector(d, i);
    if let (Some(e), Some(l)) = (earlier.pure_state(), later.pure_state()) {
        let joint = e.tensor(l);
        let (p, rest) = joint.project_out(&[0, 3], &bra)?;
        // rest is (t₁, h₂)
        return Ok((p, rest.map(|r| r.permuted(&[1, 0])).transpose()?.map(pure_choi)));
    }
    let joint = earlier.operator().tensor(later.operator());
    let layout = joint.layout();
    let proj = linalg::outer(&bra, &bra);
    let m = linalg::conjugate_local(joint.matrix(), &layout, &proj, &[0, 3]);
    let reduced = linalg::partial_trace_matrix(&m, &layout, &[2, 1]);
    let p = linalg::trace(&reduced).re;
    if p < crate::measurement::ZERO_BRANCH {
        return Ok((p, None));
    }
    let dims = vec![later.head_dim(), earlier.tail_dim()];
    let w = ChoiState::from_operator_unchecked(DensityOperator::from_parts(reduced / cr(p), dims));
    Ok((p, Some(w.purified())))
}

fn pure_choi(p: PureState) -> ChoiState {
    ChoiState::from_pure_unchecked(p)
}

fn pick(earlier: &ChoiState, later: &ChoiState, outcome: Outcome<'_>) -> Result<(usize, f64, ChoiState)> {
    let d = earlier.head_dim();
    match outcome {
        Outcome::Forced(i) => {
            if i >= d * d {
                return Err(QvnError::InvalidParameter(format!("Bell outcome {i} out of range")));
            }
            let (p, w) = project_pair(earlier, later, i)?;
            let w = w.ok_or_else(|| QvnError::InvalidState(format!("Bell outcome {i} impossible")))?;
            Ok((i, p, w))
        }
        Outcome::Sample(rng) => {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut last = None;
            for i in 0..d * d {
                let (p, w) = project_pair(earlier, later, i)?;
                if let Some(w) = w {
                    acc += p;
                    if u < acc {
                        return Ok((i, p, w));
                    }
                    last = Some((i, p, w));
                }
            }
            last.ok_or_else(|| QvnError::InvalidState("no possible Bell outcome".into()))
        }
    }
}

fn outcome_bits(d: usize) -> usize {
    2 * linalg::qubits_for(d)
}

fn composite_whitebox(earlier: Option<&WhiteBox>, later: Option<&WhiteBox>) -> Option<Unitary> {
    let u = earlier?.as_unitary()?;
    let v = later?.as_unitary()?;
    u.then(v).ok()
}

fn take_pair(earlier: &mut ProgramSlot, later: &mut ProgramSlot) -> Result<(ChoiState, ChoiState)> {
    earlier.ensure_fresh()?;
    later.ensure_fresh()?;
    if earlier.head_dim() != later.tail_dim() {
        return Err(QvnError::DimensionMismatch {
            expected: earlier.head_dim(),
            found: later.tail_dim(),
        });
    }
    Ok((earlier.consume()?, later.consume()?))
}

/// Composition keeping whatever Bell outcome occurs; only outcome 0 yields `|VU⟩`.
pub fn compose_postselect(earlier: &mut ProgramSlot, later: &mut ProgramSlot, outcome: Outcome<'_>) -> Result<CompositionResult> {
    let wb = composite_whitebox(earlier.whitebox(), later.whitebox());
    let (e, l) = take_pair(earlier, later)?;
    compose_postselect_states(&e, &l, outcome).map(|mut r| {
        r.whitebox = wb;
        r
    })
}

pub fn compose_postselect_states(e: &ChoiState, l: &ChoiState, outcome: Outcome<'_>) -> Result<CompositionResult> {
    let d = e.head_dim();
    let (i, p, w) = pick(e, l, outcome)?;
    Ok(CompositionResult {
        choi: w,
        outcome: i,
        byproduct: BellOutcome::new(d, i).byproduct,
        probability: p,
        corrected: i == 0,
        ancilla_bits_used: outcome_bits(d),
        qubits_used: linalg::qubits_for(e.head_dim())
            + linalg::qubits_for(e.tail_dim())
            + linalg::qubits_for(l.head_dim())
            + linalg::qubits_for(l.tail_dim()),
        whitebox: None,
    })
}

/// Correction for outcome `i`, acting on the head (`later` known) or tail (`earlier` known).
fn correction(d: usize, i: usize, earlier: Option<&Unitary>, later: Option<&Unitary>) -> Option<(Option<CMatrix>, Option<CMatrix>)> {
    let s = gates::byproducts(d)[i].matrix().clone();
    if let Some(v) = later {
        let v = v.matrix();
        return Some((Some(v * &s * v.adjoint()), None));
    }
    let u = earlier?.matrix();
    Some((None, Some((u.adjoint() * &s * u).transpose())))
}

/// Composition that corrects every Bell outcome through a known program.
pub fn compose_deterministic(earlier: &mut ProgramSlot, later: &mut ProgramSlot, outcome: Outcome<'_>) -> Result<CompositionResult> {
    let eu = earlier.whitebox().and_then(WhiteBox::as_unitary).cloned();
    let lu = later.whitebox().and_then(WhiteBox::as_unitary).cloned();
    if eu.is_none() && lu.is_none() {
        return Err(QvnError::NoWhitebox(format!(
            "composing `{}` then `{}`",
            earlier.label(),
            later.label()
        )));
    }
    let wb = composite_whitebox(earlier.whitebox(), later.whitebox());
    let (e, l) = take_pair(earlier, later)?;
    let mut r = compose_deterministic_states(&e, &l, eu.as_ref(), lu.as_ref(), outcome)?;
    r.whitebox = wb;
    Ok(r)
}

pub fn compose_deterministic_states(
    e: &ChoiState,
    l: &ChoiState,
    earlier: Option<&Unitary>,
    later: Option<&Unitary>,
    outcome: Outcome<'_>,
) -> Result<CompositionResult> {
    let mut r = compose_postselect_states(e, l, outcome)?;
    let d = e.head_dim();
    let (head, tail) = correction(d, r.outcome, earlier, later)
        .ok_or_else(|| QvnError::NoWhitebox("deterministic composition".into()))?;
    r.choi = r.choi.conjugated(head.as_ref(), tail.as_ref());
    r.corrected = true;
    Ok(r)
}

/// Real orthogonal matrix `R` with `U σ_b U† = Σ_a R_ab σ_a` over `(X, Y, Z)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineForm {
    pub matrix: DMatrix<f64>,
    pub source: Unitary,
}

impl AffineForm {
    pub fn orthogonality_defect(&self) -> f64 {
        (&self.matrix * self.matrix.transpose() - DMatrix::<f64>::identity(3, 3)).norm()
    }

    /// `U σ_b U†` rebuilt from column `b` (0 = X, 1 = Y, 2 = Z).
    pub fn conjugated_pauli(&self, b: usize) -> CMatrix {
        let p = gates::paulis();
        (0..3).fold(CMatrix::zeros(2, 2), |acc, a| acc + p[a + 1].matrix() * cr(self.matrix[(a, b)]))
    }
}

/// `R_ab = tr(σ_a U σ_b U†)/2` for a qubit unitary.
pub fn affine_form(u: &Unitary) -> Result<AffineForm> {
    if u.dim() != 2 {
        return Err(QvnError::DimensionMismatch { expected: 2, found: u.dim() });
    }
    let p = gates::paulis();
    let m = u.matrix();
    let r = DMatrix::from_fn(3, 3, |a, b| {
        (p[a + 1].matrix() * m * p[b + 1].matrix() * m.adjoint()).trace().re / 2.0
    });
    Ok(AffineForm {
        matrix: r,
        source: u.clone(),
    })
}

/// Adjoint action on the Weyl basis for any `d`: `tr(σ_a† U σ_b U†)/d`.
pub fn adjoint_form(u: &Unitary) -> CMatrix {
    let d = u.dim();
    let w = gates::byproducts(d);
    let m = u.matrix();
    let n = d * d;
    CMatrix::from_fn(n, n, |a, b| {
        (w[a].matrix().adjoint() * m * w[b].matrix() * m.adjoint()).trace() / cr(d as f64)
    })
}

/// Binary-outcome composition for qubit programs with a known later program.
///
/// Runs on `h₁ t₁ h₂ t₂ a`: rotate `(h₁, t₂)` from the Bell basis to the
/// computational one, flag `|β₀⟩` onto the ancilla with a Toffoli, measure the
/// ancilla, and on the nontrivial class apply the Bell-index-controlled
/// correction built from the affine form.
pub fn compose_covariant(earlier: &mut ProgramSlot, later: &mut ProgramSlot, class: Outcome<'_>) -> Result<CompositionResult> {
    let lu = later
        .whitebox()
        .and_then(WhiteBox::as_unitary)
        .cloned()
        .ok_or_else(|| QvnError::NoWhitebox(format!("covariant composition with `{}`", later.label())))?;
    if earlier.head_dim() != 2 || later.tail_dim() != 2 {
        // qudits fall back to full correction
        return compose_deterministic(earlier, later, class);
    }
    let wb = composite_whitebox(earlier.whitebox(), later.whitebox());
    let (e, l) = take_pair(earlier, later)?;
    let mut r = compose_covariant_states(&e, &l, &lu, class)?;
    r.whitebox = wb;
    Ok(r)
}

pub fn compose_covariant_states(e: &ChoiState, l: &ChoiState, later: &Unitary, class: Outcome<'_>) -> Result<CompositionResult> {
    let form = affine_form(later)?;
    let (de, dl) = (e.tail_dim(), l.head_dim());
    let dims = vec![2, de, dl, 2, 2];
    let layout = Layout::new(&dims);
    let rho = e.operator().tensor(l.operator()).tensor(&PureState::zero().density());
    let mut m = rho.matrix().clone();

    // Bell basis → computational basis on (h₁, t₂)
    let basis = CMatrix::from_fn(4, 4, |r, col| bell_vector(2, col)[r]);
    m = linalg::conjugate_local(&m, &layout, &basis.adjoint(), &[0, 3]);
    let x = gates::x();
    let flip_both = linalg::kron(x.matrix(), x.matrix());
    m = linalg::conjugate_local(&m, &layout, &flip_both, &[0, 3]);
    m = linalg::conjugate_local(&m, &layout, gates::toffoli().matrix(), &[0, 3, 4]);
    m = linalg::conjugate_local(&m, &layout, &flip_both, &[0, 3]);

    let anc = Pvm::computational(2);
    let branches = crate::measurement::measure_pvm(&DensityOperator::from_parts(m, dims.clone()), &anc, &[4])?;
    // ancilla 1 ⇔ trivial class
    let p_trivial = branches[1].probability;
    let trivial = match class {
        Outcome::Forced(k) => k == 0,
        Outcome::Sample(rng) => rng.uniform() < p_trivial,
    };
    let branch = &branches[if trivial { 1 } else { 0 }];
    let post = branch
        .state
        .as_ref()
        .ok_or_else(|| QvnError::InvalidState("covariant branch impossible".into()))?;
    let mut m = post.matrix().clone();
    if !trivial {
        // Σᵢ |i⟩⟨i| ⊗ V σᵢ V† on (h₁ t₂ | h₂), index i = 2·h₁ + t₂
        let mut ctrl = CMatrix::zeros(8, 8);
        ctrl.view_mut((0, 0), (2, 2)).copy_from(&linalg::identity(2));
        for i in 1..4 {
            ctrl.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&form.conjugated_pauli(i - 1));
        }
        m = linalg::conjugate_local(&m, &layout, &ctrl, &[0, 3, 2]);
    }
    let reduced = linalg::partial_trace_matrix(&m, &layout, &[2, 1]);
    let w = ChoiState::from_operator_unchecked(DensityOperator::from_parts(reduced, vec![dl, de])).purified();
    Ok(CompositionResult {
        choi: w,
        outcome: if trivial { 0 } else { 1 },
        byproduct: if trivial { gates::identity(2) } else { later.clone() },
        probability: branch.probability,
        corrected: true,
        ancilla_bits_used: 1,
        qubits_used: 5,
        whitebox: None,
    })
}

/// Wire numbering used by the switch gadget: 1 previous head, 2 program tail,
/// 3 program head, 4 and 5 the attached ebit.
pub const ON_PATH: [u8; 5] = [1, 2, 3, 4, 5];
pub const OFF_PATH: [u8; 3] = [1, 4, 5];

/// A program pre-composed with the previous one, not yet committed.
#[derive(Debug)]
pub struct SwitchGadget {
    label: String,
    previous: ChoiState,
    program: ChoiState,
    whitebox: Option<Unitary>,
    /// Controlled-Z placements between numbered wires, as drawn for the gadget.
    pub cz_pattern: Vec<(u8, u8)>,
    pub on_path: Vec<u8>,
    pub off_path: Vec<u8>,
    selected: bool,
}

impl SwitchGadget {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_selected(&self) -> bool {
        self.selected
    }

    /// Qubits live in the gadget: previous program, stored program, ebit.
    pub fn qubits(&self) -> usize {
        2 * linalg::qubits_for(self.previous.head_dim()) + 4
    }
}

/// Consumes `label` from memory and an ebit from the pool, and pre-composes
/// them with `previous`. Nothing on the path wires is measured yet.
pub fn switch_attach(memory: &mut MemoryUnit, label: &str, previous: ChoiState) -> Result<SwitchGadget> {
    let slot = memory.get(label)?;
    slot.ensure_fresh()?;
    if slot.head_dim() != 2 || slot.tail_dim() != 2 || previous.head_dim() != 2 {
        return Err(QvnError::InvalidParameter("switch gadget takes qubit programs".into()));
    }
    memory.take_ebit()?;
    let slot = memory.get_mut(label)?;
    let whitebox = slot.whitebox().and_then(WhiteBox::as_unitary).cloned();
    let program = slot.consume()?;
    Ok(SwitchGadget {
        label: label.to_owned(),
        previous,
        program,
        whitebox,
        cz_pattern: vec![(1, 2), (3, 4), (1, 4)],
        on_path: ON_PATH.to_vec(),
        off_path: OFF_PATH.to_vec(),
        selected: false,
    })
}

/// Commits the gadget to one path. `outcomes` forces the Bell results
/// (two for ON, one for OFF); otherwise they are sampled.
pub fn switch_select(gadget: &mut SwitchGadget, on: bool, outcomes: Option<&[usize]>, rng: &mut RandomSource) -> Result<CompositionResult> {
    if gadget.selected {
        return Err(QvnError::AlreadySelected);
    }
    gadget.selected = true;
    let ebit = duality::choi_of_unitary(&gates::identity(2))?;
    let qubits_used = gadget.qubits();
    if on {
        // 1→2: previous into program, 3→4: program into ebit
        let first = compose_postselect_states(&gadget.previous, &gadget.program, outcome_at(outcomes, 0, rng))?;
        let second = compose_postselect_states(&first.choi, &ebit, outcome_at(outcomes, 1, rng))?;
        let (i, j) = (first.outcome, second.outcome);
        let s_i = gates::byproducts(2)[i].matrix().clone();
        let s_j = gates::byproducts(2)[j].matrix().clone();
        let (fix, corrected) = match &gadget.whitebox {
            Some(u) => (u.matrix() * &s_i * u.matrix().adjoint() * &s_j, true),
            None => (s_j, i == 0),
        };
        Ok(CompositionResult {
            choi: second.choi.conjugated(Some(&fix), None),
            outcome: 4 * i + j,
            byproduct: gates::byproducts(2)[i].clone(),
            probability: first.probability * second.probability,
            corrected,
            ancilla_bits_used: 4,
            qubits_used,
            whitebox: None,
        })
    } else {
        // 1→4: previous straight into the ebit
        let only = compose_postselect_states(&gadget.previous, &ebit, outcome_at(outcomes, 0, rng))?;
        let s_k = gates::byproducts(2)[only.outcome].matrix().clone();
        Ok(CompositionResult {
            choi: only.choi.conjugated(Some(&s_k), None),
            outcome: only.outcome,
            byproduct: gates::byproducts(2)[only.outcome].clone(),
            probability: only.probability,
            corrected: true,
            ancilla_bits_used: 2,
            qubits_used,
            whitebox: None,
        })
    }
}

fn outcome_at<'a>(outcomes: Option<&[usize]>, k: usize, rng: &'a mut RandomSource) -> Outcome<'a> {
    match outcomes.and_then(|o| o.get(k)) {
        Some(&i) => Outcome::Forced(i),
        None => Outcome::Sample(rng),
    }
}

/// Best word over `{H, T}` of length at most `max_depth` (matrix-product order).
pub fn approximate_rotation(target: &Unitary, max_depth: usize) -> Result<(String, f64)> {
    if target.dim() != 2 {
        return Err(QvnError::DimensionMismatch { expected: 2, found: target.dim() });
    }
    if max_depth > 20 {
        return Err(QvnError::InvalidParameter(format!("depth {max_depth} exceeds 20")));
    }
    let h = gates::h().matrix().clone();
    let t = gates::t().matrix().clone();
    let dist = |m: &CMatrix| target.phase_distance(&Unitary::from_parts(m.clone(), vec![2], None));
    let mut best = (String::new(), dist(&linalg::identity(2)));
    let mut queue: VecDeque<(String, CMatrix, usize)> = VecDeque::new();
    queue.push_back((String::new(), linalg::identity(2), 0));
    while let Some((word, m, t_run)) = queue.pop_front() {
        if word.len() == max_depth {
            continue;
        }
        for (g, gm) in [('H', &h), ('T', &t)] {
            // H·H = 1 and T⁸ = 1 collapse, so those words are skipped
            if g == 'H' && word.ends_with('H') {
                continue;
            }
            let run = if g == 'T' { t_run + 1 } else { 0 };
            if run >= 8 {
                continue;
            }
            let mut w = word.clone();
            w.push(g);
            let nm = &m * gm;
            let dd = dist(&nm);
            if dd < best.1 - 1e-12 {
                best = (w.clone(), dd);
            }
            queue.push_back((w, nm, run));
        }
    }
    Ok(best)
}

/// Composition strategy for [`run_program_sequence`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionMode {
    Postselect,
    Deterministic,
    Covariant,
    Switch,
}

/// One transcript line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub step: usize,
    pub operation: String,
    pub outcome: Option<usize>,
    pub correction: Option<String>,
    pub qubits_in_use: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceRun {
    pub probabilities: Vec<f64>,
    pub transcript: Vec<TranscriptEvent>,
    pub peak_qubits: usize,
    /// Probability of the accept branch at injection.
    pub accept_probability: f64,
}

/// Composes the labelled programs (first label acts first), injects `psi`
/// and reads out the accept branch.
pub fn run_program_sequence(
    memory: &mut MemoryUnit,
    labels: &[&str],
    psi: &PureState,
    readout: &Pvm,
    mode: CompositionMode,
    rng: &mut RandomSource,
) -> Result<SequenceRun> {
    let mut rec = Recorder::default();
    let Some((&first, rest)) = labels.split_first() else {
        let probabilities = memory::read_out(&psi.density(), readout)?;
        rec.push("readout", None, None, linalg::qubits_for(psi.dim()));
        return Ok(rec.finish(probabilities, 1.0));
    };

    let mut acc = memory.get_mut(first)?.try_clone_or_take()?;
    rec.push(&format!("load {first}"), None, None, acc.qubits());
    for (k, &label) in rest.iter().enumerate() {
        let name = format!("compose {label}");
        if mode == CompositionMode::Switch {
            let previous = acc.consume()?;
            let mut g = switch_attach(memory, label, previous)?;
            let r = switch_select(&mut g, true, None, rng)?;
            rec.push(&name, Some(r.outcome), r.corrected.then(|| "byproduct".to_owned()), g.qubits());
            acc = ProgramSlot::from_choi(r.choi, format!("acc{k}"));
            continue;
        }
        let slot = memory.get_mut(label)?;
        let r = match mode {
            CompositionMode::Postselect => compose_postselect(&mut acc, slot, Outcome::Sample(&mut *rng))?,
            CompositionMode::Deterministic => compose_deterministic(&mut acc, slot, Outcome::Sample(&mut *rng))?,
            CompositionMode::Covariant => compose_covariant(&mut acc, slot, Outcome::Sample(&mut *rng))?,
            CompositionMode::Switch => unreachable!(),
        };
        let correction = (r.corrected && r.outcome != 0).then(|| {
            r.byproduct.label().map_or_else(|| format!("#{}", r.outcome), str::to_owned)
        });
        rec.push(&name, Some(r.outcome), correction, r.qubits_used);
        acc = r.into_slot(format!("acc{k}"));
    }
    let branches = memory::write_inject(&mut acc, psi)?;
    let accept = &branches[0];
    rec.push("inject", Some(0), None, acc.qubits());
    let head = accept
        .head
        .as_ref()
        .ok_or_else(|| QvnError::InvalidState("accept branch impossible".into()))?;
    let probabilities = memory::read_out(head, readout)?;
    rec.push("readout", None, None, acc.qubits());
    Ok(rec.finish(probabilities, accept.probability))
}

#[derive(Default)]
struct Recorder {
    transcript: Vec<TranscriptEvent>,
    peak: usize,
}

impl Recorder {
    fn push(&mut self, op: &str, outcome: Option<usize>, correction: Option<String>, qubits_in_use: usize) {
        self.peak = self.peak.max(qubits_in_use);
        self.transcript.push(TranscriptEvent {
            step: self.transcript.len(),
            operation: op.to_owned(),
            outcome,
            correction,
            qubits_in_use,
        });
    }

    fn finish(self, probabilities: Vec<f64>, accept_probability: f64) -> SequenceRun {
        SequenceRun {
            probabilities,
            transcript: self.transcript,
            peak_qubits: self.peak,
            accept_probability,
        }
    }
}

impl ProgramSlot {
    /// Takes the slot's program into a fresh working slot, consuming the original.
    fn try_clone_or_take(&mut self) -> Result<ProgramSlot> {
        let wb = self.whitebox().cloned();
        let label = self.label().to_owned();
        let choi = self.consume()?;
        Ok(match wb {
            Some(WhiteBox::Unitary(u)) => ProgramSlot::new(u, label),
            Some(WhiteBox::Channel(k)) => ProgramSlot::new(k, label),
            None => ProgramSlot::from_choi(choi, label),
        })
    }
}
