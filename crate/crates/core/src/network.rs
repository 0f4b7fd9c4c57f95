//! Simulated quantum network between a program host and a user.
//!
//! Four download schemes: bits over BB84 (1), bits over an ebit-based key (2),
//! program qubits sent directly (3), and program qubits prepared remotely by
//! projecting one half of shared ebits (4). Photons are ordinary qubits.
//! Noise acts independently on every transmitted qubit.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::duality::ChoiState;
use crate::error::{QvnError, Result};
use crate::gates;
use crate::linalg::{self, cr, CMatrix, CVector, Layout, MatrixPairs};
use crate::measurement::{measure_pvm, sample_branch};
use crate::memory::{self, InjectOutcome, ProgramSlot, ProgramSource};
use crate::operator::{KrausChannel, Pvm, Unitary};
use crate::qpu;
use crate::random::RandomSource;
use crate::state::{self, DensityOperator, PureState};

/// Default QBER above which a key exchange aborts.
pub const QBER_ABORT_THRESHOLD: f64 = 0.11;
/// Default cap on remote-preparation attempts in scheme 4.
pub const MAX_RETRIES: usize = 64;

/// Noise on every flying qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum ChannelModel {
    #[default]
    Ideal,
    /// `ρ → (1−p)ρ + p·1/2`.
    Depolarizing { p: f64 },
    /// Intercept-resend on a fraction `f` of qubits, random Z or X basis.
    Eavesdropper { f: f64 },
}


impl ChannelModel {
    pub fn depolarizing(p: f64) -> Result<Self> {
        let m = ChannelModel::Depolarizing { p };
        m.validate()?;
        Ok(m)
    }

    pub fn eavesdropper(f: f64) -> Result<Self> {
        let m = ChannelModel::Eavesdropper { f };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let x = match *self {
            ChannelModel::Ideal => return Ok(()),
            ChannelModel::Depolarizing { p } => p,
            ChannelModel::Eavesdropper { f } => f,
        };
        if !(0.0..=1.0).contains(&x) {
            return Err(QvnError::InvalidParameter(format!("channel parameter {x} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn is_ideal(&self) -> bool {
        match *self {
            ChannelModel::Ideal => true,
            ChannelModel::Depolarizing { p } => p == 0.0,
            ChannelModel::Eavesdropper { f } => f == 0.0,
        }
    }

    /// Averaged single-qubit channel.
    pub fn kraus(&self) -> KrausChannel {
        match *self {
            ChannelModel::Ideal => KrausChannel::identity(2),
            ChannelModel::Depolarizing { p } => {
                KrausChannel::depolarizing(p).expect("validated probability")
            }
            ChannelModel::Eavesdropper { f } => {
                let mut ops = vec![linalg::identity(2) * cr((1.0 - f).sqrt())];
                let w = cr((f / 2.0).sqrt());
                for axis in ['Z', 'X'] {
                    for p in Pvm::pauli_basis(axis).expect("valid axis").projectors() {
                        ops.push(p * w);
                    }
                }
                KrausChannel::new(ops).expect("intercept-resend is trace preserving")
            }
        }
    }

    /// One sampled use of the channel on qubit `wire` of a pure state.
    pub fn transmit(&self, psi: &mut PureState, wire: usize, rng: &mut RandomSource) -> Result<()> {
        match *self {
            ChannelModel::Ideal => Ok(()),
            ChannelModel::Depolarizing { p } => {
                if rng.bernoulli(p) {
                    let k = rng.index(4);
                    psi.apply_raw(gates::paulis()[k].matrix(), &[wire])?;
                }
                Ok(())
            }
            ChannelModel::Eavesdropper { f } => {
                if rng.bernoulli(f) {
                    let axis = if rng.bit() { 'X' } else { 'Z' };
                    let branches = measure_pvm(&*psi, &Pvm::pauli_basis(axis)?, &[wire])?;
                    // Eve resends the eigenstate she observed
                    *psi = sample_branch(&branches, rng)?.1;
                }
                Ok(())
            }
        }
    }

    /// Applies the averaged channel to each listed qubit of a density matrix.
    pub fn apply_to_qubits(&self, m: &CMatrix, dims: &[usize], wires: &[usize]) -> CMatrix {
        if self.is_ideal() {
            return m.clone();
        }
        let k = self.kraus();
        let layout = Layout::new(dims);
        let mut out = m.clone();
        for &w in wires {
            let mut acc = CMatrix::zeros(out.nrows(), out.ncols());
            for op in k.ops() {
                acc += linalg::conjugate_local(&out, &layout, op, &[w]);
            }
            out = acc;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DownloadScheme {
    QubitsToBits = 1,
    EbitsToBits = 2,
    QubitsToQubits = 3,
    EbitsToQubits = 4,
}

impl DownloadScheme {
    pub fn from_id(id: u8) -> Result<Self> {
        Ok(match id {
            1 => DownloadScheme::QubitsToBits,
            2 => DownloadScheme::EbitsToBits,
            3 => DownloadScheme::QubitsToQubits,
            4 => DownloadScheme::EbitsToQubits,
            _ => return Err(QvnError::InvalidParameter(format!("no download scheme {id}"))),
        })
    }

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionOutcome {
    Success,
    Abort,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub scheme: u8,
    /// Qubits carrying the program itself.
    pub qubits_transmitted: usize,
    pub bits_transmitted: usize,
    pub ebits_consumed: usize,
    /// Photons spent on key distribution.
    pub key_photons: usize,
    pub qber: f64,
    pub outcome: SessionOutcome,
    pub retries: usize,
    pub peak_qubits: usize,
}

impl TranscriptRecord {
    fn new(scheme: DownloadScheme) -> Self {
        Self {
            scheme: scheme.id(),
            qubits_transmitted: 0,
            bits_transmitted: 0,
            ebits_consumed: 0,
            key_photons: 0,
            qber: 0.0,
            outcome: SessionOutcome::Success,
            retries: 0,
            peak_qubits: 0,
        }
    }
}

/// What arrives at the user, if anything, and how.
#[derive(Debug)]
pub struct Session<T> {
    pub delivered: Option<T>,
    pub record: TranscriptRecord,
}

// ---------------------------------------------------------------- key exchange

#[derive(Clone, Debug)]
pub struct KeyExchange {
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub sifted: usize,
    pub tested: usize,
    pub errors: usize,
    pub qber: f64,
    pub aborted: bool,
}

impl KeyExchange {
    /// Mismatches left in the key after the test bits are removed.
    pub fn residual_mismatches(&self) -> usize {
        self.alice_key.iter().zip(&self.bob_key).filter(|(a, b)| a != b).count()
    }
}

fn basis_state(axis: char, bit: bool) -> PureState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = match (axis, bit) {
        ('Z', false) => [cr(1.0), cr(0.0)],
        ('Z', true) => [cr(0.0), cr(1.0)],
        (_, false) => [cr(s), cr(s)],
        (_, true) => [cr(s), cr(-s)],
    };
    PureState::from_parts(CVector::from_vec(v.to_vec()), vec![2])
}

fn measure_bit<R>(psi: &PureState, wire: usize, axis: char, rng: &mut RandomSource, then: impl FnOnce(PureState) -> R) -> Result<(bool, R)> {
    let branches = measure_pvm(psi, &Pvm::pauli_basis(axis)?, &[wire])?;
    let (i, post) = sample_branch(&branches, rng)?;
    Ok((i == 1, then(post)))
}

fn sift_and_test(
    raw: Vec<(bool, bool, bool)>,
    threshold: f64,
    rng: &mut RandomSource,
) -> KeyExchange {
    // (bases agree, alice bit, bob bit)
    let sifted: Vec<(bool, bool)> = raw.into_iter().filter(|r| r.0).map(|r| (r.1, r.2)).collect();
    let (mut tested, mut errors) = (0, 0);
    let (mut alice_key, mut bob_key) = (Vec::new(), Vec::new());
    for &(a, b) in &sifted {
        if rng.bit() {
            tested += 1;
            errors += usize::from(a != b);
        } else {
            alice_key.push(a);
            bob_key.push(b);
        }
    }
    let qber = if tested == 0 { 0.0 } else { errors as f64 / tested as f64 };
    KeyExchange {
        alice_key,
        bob_key,
        sifted: sifted.len(),
        tested,
        errors,
        qber,
        aborted: qber > threshold,
    }
}

fn check_raw(n_raw: usize) -> Result<()> {
    if n_raw < 100 {
        return Err(QvnError::InvalidParameter(format!("{n_raw} raw photons; at least 100 needed")));
    }
    Ok(())
}

/// Prepare-and-measure key exchange with random Z/X bases. Half of the
/// sifted bits are sacrificed to estimate the QBER.
pub fn bb84_exchange(n_raw: usize, channel: ChannelModel, rng: &mut RandomSource) -> Result<KeyExchange> {
    bb84_exchange_with(n_raw, channel, QBER_ABORT_THRESHOLD, rng)
}

pub fn bb84_exchange_with(n_raw: usize, channel: ChannelModel, threshold: f64, rng: &mut RandomSource) -> Result<KeyExchange> {
    check_raw(n_raw)?;
    channel.validate()?;
    let mut raw = Vec::with_capacity(n_raw);
    for _ in 0..n_raw {
        let (a_bit, a_axis) = (rng.bit(), if rng.bit() { 'X' } else { 'Z' });
        let mut photon = basis_state(a_axis, a_bit);
        channel.transmit(&mut photon, 0, rng)?;
        let b_axis = if rng.bit() { 'X' } else { 'Z' };
        let (b_bit, ()) = measure_bit(&photon, 0, b_axis, rng, |_| ())?;
        raw.push((a_axis == b_axis, a_bit, b_bit));
    }
    Ok(sift_and_test(raw, threshold, rng))
}

/// Entanglement-based exchange: a source emits `|Φ⁺⟩`, the second half
/// crosses the channel, both parties measure in random Z/X bases.
pub fn ebit_key_exchange(n_raw: usize, channel: ChannelModel, threshold: f64, rng: &mut RandomSource) -> Result<KeyExchange> {
    check_raw(n_raw)?;
    channel.validate()?;
    let pair = state::ebit(2);
    let mut raw = Vec::with_capacity(n_raw);
    for _ in 0..n_raw {
        let mut s = pair.clone();
        channel.transmit(&mut s, 1, rng)?;
        let a_axis = if rng.bit() { 'X' } else { 'Z' };
        let b_axis = if rng.bit() { 'X' } else { 'Z' };
        let (a_bit, post) = measure_bit(&s, 0, a_axis, rng, |p| p)?;
        let (b_bit, ()) = measure_bit(&post, 1, b_axis, rng, |_| ())?;
        raw.push((a_axis == b_axis, a_bit, b_bit));
    }
    Ok(sift_and_test(raw, threshold, rng))
}

// ------------------------------------------------------------ schemes 1 and 2

/// One instruction of a classical gate sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOp {
    pub gate: String,
    pub targets: Vec<usize>,
    /// Explicit matrix for gates without a name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixPairs>,
}

/// The bit-string description `[U]`: gates on qubit wires, first op first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSequence {
    pub qubits: usize,
    pub ops: Vec<GateOp>,
}

impl GateSequence {
    pub fn new(qubits: usize) -> Self {
        Self { qubits, ops: Vec::new() }
    }

    pub fn push(mut self, gate: &str, targets: &[usize]) -> Result<Self> {
        let g = gates::by_name(gate)
            .ok_or_else(|| QvnError::InvalidParameter(format!("unknown gate {gate}")))?;
        self.check(&g, targets)?;
        self.ops.push(GateOp {
            gate: gate.to_owned(),
            targets: targets.to_vec(),
            matrix: None,
        });
        Ok(self)
    }

    /// A single explicit-matrix instruction on all wires.
    pub fn from_unitary(u: &Unitary) -> Result<Self> {
        let n = linalg::qubits_for(u.dim());
        if 1 << n != u.dim() {
            return Err(QvnError::InvalidParameter("gate sequences act on qubits".into()));
        }
        Ok(Self {
            qubits: n,
            ops: vec![GateOp {
                gate: u.label().unwrap_or("U").to_owned(),
                targets: (0..n).collect(),
                matrix: Some(linalg::matrix_to_pairs(u.matrix())),
            }],
        })
    }

    fn check(&self, g: &Unitary, targets: &[usize]) -> Result<()> {
        let layout = Layout::new(&vec![2; self.qubits]);
        layout.check_targets(targets)?;
        if g.dim() != 1 << targets.len() {
            return Err(QvnError::DimensionMismatch {
                expected: 1 << targets.len(),
                found: g.dim(),
            });
        }
        Ok(())
    }

    fn op_matrix(op: &GateOp) -> Result<CMatrix> {
        match &op.matrix {
            Some(pairs) => linalg::matrix_from_pairs(pairs),
            None => gates::by_name(&op.gate)
                .map(|g| g.matrix().clone())
                .ok_or_else(|| QvnError::InvalidParameter(format!("unknown gate {}", op.gate))),
        }
    }

    /// Product of the sequence, later gates on the left.
    pub fn unitary(&self) -> Result<Unitary> {
        let layout = Layout::new(&vec![2; self.qubits]);
        let mut acc = linalg::identity(1 << self.qubits);
        for op in &self.ops {
            let m = Self::op_matrix(op)?;
            layout.check_targets(&op.targets)?;
            acc = linalg::embed(&m, &layout, &op.targets) * acc;
        }
        Unitary::new(acc)
    }

    fn to_bits(&self) -> Result<Vec<bool>> {
        let bytes = serde_json::to_vec(self)?;
        Ok(bytes
            .iter()
            .flat_map(|b| (0..8).rev().map(move |k| (b >> k) & 1 == 1))
            .collect())
    }

    fn from_bits(bits: &[bool]) -> Result<Self> {
        let bytes: Vec<u8> = bits
            .chunks(8)
            .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
            .collect();
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Encrypted instructions plus the key that unlocks them. The user can run
/// the tape but has no accessor for the plaintext.
#[derive(Debug)]
pub struct SealedTape {
    cipher: Vec<bool>,
    key: Vec<bool>,
    qubits: usize,
}

impl SealedTape {
    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn len_bits(&self) -> usize {
        self.cipher.len()
    }

    /// Replays the hidden gate sequence on `psi`.
    pub fn execute(&self, psi: &PureState) -> Result<PureState> {
        let plain: Vec<bool> = self.cipher.iter().zip(&self.key).map(|(c, k)| c ^ k).collect();
        let seq = GateSequence::from_bits(&plain)?;
        if psi.dim() != 1 << seq.qubits {
            return Err(QvnError::DimensionMismatch {
                expected: 1 << seq.qubits,
                found: psi.dim(),
            });
        }
        let mut s = PureState::from_parts(psi.amplitudes().clone(), vec![2; seq.qubits]);
        for op in &seq.ops {
            s.apply_raw(&GateSequence::op_matrix(op)?, &op.targets)?;
        }
        Ok(PureState::from_parts(s.amplitudes().clone(), psi.dims().to_vec()))
    }
}

fn send_bits(
    scheme: DownloadScheme,
    seq: &GateSequence,
    channel: ChannelModel,
    rng: &mut RandomSource,
) -> Result<Session<SealedTape>> {
    let message = seq.to_bits()?;
    let mut record = TranscriptRecord::new(scheme);
    let mut n_raw = (4 * message.len() + 256).max(100);
    loop {
        let kx = match scheme {
            DownloadScheme::QubitsToBits => bb84_exchange(n_raw, channel, rng)?,
            _ => ebit_key_exchange(n_raw, channel, QBER_ABORT_THRESHOLD, rng)?,
        };
        record.key_photons += n_raw;
        if scheme == DownloadScheme::EbitsToBits {
            record.ebits_consumed += kx.sifted;
        }
        record.qber = kx.qber;
        record.peak_qubits = if scheme == DownloadScheme::QubitsToBits { 1 } else { 2 };
        if kx.aborted {
            record.outcome = SessionOutcome::Abort;
            return Ok(Session { delivered: None, record });
        }
        if kx.alice_key.len() < message.len() {
            n_raw *= 2;
            record.retries += 1;
            continue;
        }
        if kx.residual_mismatches() > 0 {
            log::debug!("reconciling {} key mismatches", kx.residual_mismatches());
        }
        // information reconciliation is assumed: both sides hold Alice's key
        let key: Vec<bool> = kx.alice_key[..message.len()].to_vec();
        let cipher: Vec<bool> = message.iter().zip(&key).map(|(m, k)| m ^ k).collect();
        record.bits_transmitted = cipher.len();
        return Ok(Session {
            delivered: Some(SealedTape {
                cipher,
                key,
                qubits: seq.qubits,
            }),
            record,
        });
    }
}

/// Scheme 1: one-time-pad the gate sequence with a BB84 key.
pub fn scheme1_send_bits(whitebox: &GateSequence, channel: ChannelModel, rng: &mut RandomSource) -> Result<Session<SealedTape>> {
    send_bits(DownloadScheme::QubitsToBits, whitebox, channel, rng)
}

/// Scheme 2: as scheme 1 with the key drawn from measured Bell pairs.
pub fn scheme2_send_bits(whitebox: &GateSequence, channel: ChannelModel, rng: &mut RandomSource) -> Result<Session<SealedTape>> {
    send_bits(DownloadScheme::EbitsToBits, whitebox, channel, rng)
}

// ------------------------------------------------------------ schemes 3 and 4

/// Teleports qubit `wire` of `m` through a fresh ebit, Bell-measuring it with
/// one half and correcting the other, which takes the wire's place.
pub fn teleport_qubit(m: &CMatrix, dims: &[usize], wire: usize, rng: &mut RandomSource) -> Result<(CMatrix, usize)> {
    let n = dims.len();
    if dims[wire] != 2 {
        return Err(QvnError::InvalidParameter("teleport_qubit moves qubit wires".into()));
    }
    let mut big_dims = dims.to_vec();
    big_dims.extend([2, 2]);
    let rho = DensityOperator::from_parts(linalg::kron(m, state::ebit(2).density().matrix()), big_dims);
    let branches = measure_pvm(&rho, &qpu::bell_basis_pvm(2), &[wire, n])?;
    let (i, post) = sample_branch(&branches, rng)?;
    // the surviving half holds σᵢ†|φ⟩
    let fixed = post.conjugated(gates::byproducts(2)[i].matrix(), &[n + 1])?;
    let keep: Vec<usize> = (0..n).filter(|&k| k != wire).chain([n + 1]).collect();
    let reduced = fixed.partial_trace(&keep)?;
    // reduced order: others..., new; put new back at `wire`
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.insert(wire, n - 1);
    let restored = reduced.permuted(&order)?;
    Ok((restored.matrix().clone(), i))
}

fn qubit_register(d: usize) -> Result<usize> {
    let n = linalg::qubits_for(d);
    if 1 << n != d {
        return Err(QvnError::InvalidParameter(format!("dimension {d} is not a qubit register")));
    }
    Ok(n)
}

fn land(label: &str, m: CMatrix, d_out: usize, d_in: usize) -> ProgramSlot {
    let choi = ChoiState::from_operator_unchecked(DensityOperator::from_parts(m, vec![d_out, d_in])).purified();
    ProgramSlot::from_choi(choi, label)
}

fn choi_for_transfer(host: &mut ProgramSlot) -> Result<ChoiState> {
    match host.whitebox() {
        // prepared afresh from the classical description
        Some(wb) => {
            host.ensure_fresh()?;
            Ok(wb.choi())
        }
        None => host.consume(),
    }
}

/// Scheme 3: the host sends `|U⟩` on photons; the user teleports each photon
/// into a memory qubit.
pub fn scheme3_send_qubits(host: &mut ProgramSlot, channel: ChannelModel, rng: &mut RandomSource) -> Result<Session<ProgramSlot>> {
    channel.validate()?;
    let (d_out, d_in) = (host.head_dim(), host.tail_dim());
    let n = qubit_register(d_out)? + qubit_register(d_in)?;
    let choi = choi_for_transfer(host)?;
    let dims = vec![2; n];
    let wires: Vec<usize> = (0..n).collect();
    let mut m = channel.apply_to_qubits(choi.operator().matrix(), &dims, &wires);
    for w in 0..n {
        m = teleport_qubit(&m, &dims, w, rng)?.0;
    }
    let mut record = TranscriptRecord::new(DownloadScheme::QubitsToQubits);
    record.qubits_transmitted = n;
    record.ebits_consumed = n;
    record.peak_qubits = 3 * n;
    Ok(Session {
        delivered: Some(land(host.label(), m, d_out, d_in)),
        record,
    })
}

/// Scheme 4: shared ebits, the host applies `Vᵗ` to its halves and projects
/// onto `|0…0⟩` by the injection measurement, which leaves `V|0…0⟩ = |U⟩` on
/// the user's halves. Rejected attempts are retried on fresh ebits.
pub fn scheme4_send_via_ebits(host: &ProgramSlot, channel: ChannelModel, rng: &mut RandomSource) -> Result<Session<ProgramSlot>> {
    scheme4_with_retries(host, channel, MAX_RETRIES, rng)
}

pub fn scheme4_with_retries(host: &ProgramSlot, channel: ChannelModel, max_retries: usize, rng: &mut RandomSource) -> Result<Session<ProgramSlot>> {
    channel.validate()?;
    let (d_out, d_in) = (host.head_dim(), host.tail_dim());
    let q = qubit_register(d_out)? + qubit_register(d_in)?;
    let target = host
        .whitebox()
        .map(|wb| wb.choi())
        .and_then(|c| c.pure_state().cloned())
        .ok_or_else(|| QvnError::NoWhitebox(format!("remote preparation of `{}`", host.label())))?;
    let v = memory::basis_rotation(&target);
    let big = 1usize << q;
    let mut record = TranscriptRecord::new(DownloadScheme::EbitsToQubits);
    record.peak_qubits = scheme4_qubits(q);
    let pvm = Pvm::binary(&PureState::basis(&[big], 0));
    // host halves at wire 0, user qubits at wires 1..=q
    let mut dims = vec![big];
    dims.extend(vec![2; q]);
    let user_wires: Vec<usize> = (1..=q).collect();
    for attempt in 0..max_retries.max(1) {
        record.retries = attempt;
        record.ebits_consumed += q;
        record.qubits_transmitted += q;
        record.bits_transmitted += 1;
        let shared = state::ebit(big).density();
        let m = channel.apply_to_qubits(shared.matrix(), &dims, &user_wires);
        let m = linalg::conjugate_local(&m, &Layout::new(&dims), &v.transpose(), &[0]);
        let rho = DensityOperator::from_parts(m, dims.clone());
        let branches = measure_pvm(&rho, &pvm, &[0])?;
        let (i, post) = sample_branch(&branches, rng)?;
        if i != 0 {
            continue;
        }
        let mut m = post.partial_trace(&user_wires)?.matrix().clone();
        let udims = vec![2; q];
        for w in 0..q {
            m = teleport_qubit(&m, &udims, w, rng)?.0;
        }
        record.ebits_consumed += q;
        return Ok(Session {
            delivered: Some(land(host.label(), m, d_out, d_in)),
            record,
        });
    }
    record.retries = max_retries;
    record.outcome = SessionOutcome::Abort;
    Ok(Session { delivered: None, record })
}

/// Peak qubits of a scheme-4 download of a program on `program_qubits`
/// qubits: host halves, user halves, teleportation pairs, one ancilla.
pub fn scheme4_qubits(program_qubits: usize) -> usize {
    4 * program_qubits + 1
}

// ------------------------------------------------------------- host and checks

/// A host publishing programs by label, re-downloaded by scheme 3.
pub struct Host {
    library: HashMap<String, Unitary>,
    channel: ChannelModel,
    rng: RefCell<RandomSource>,
}

impl Host {
    pub fn new(channel: ChannelModel, rng: RandomSource) -> Self {
        Self {
            library: HashMap::new(),
            channel,
            rng: RefCell::new(rng),
        }
    }

    pub fn publish(&mut self, label: &str, u: Unitary) {
        self.library.insert(label.to_owned(), u);
    }

    pub fn published(&self, label: &str) -> Option<&Unitary> {
        self.library.get(label)
    }
}

impl ProgramSource for Host {
    fn fetch(&self, label: &str) -> Result<ChoiState> {
        let u = self
            .library
            .get(label)
            .ok_or_else(|| QvnError::UnknownLabel(label.to_owned()))?;
        let mut slot = ProgramSlot::new(u.clone(), label);
        let session = scheme3_send_qubits(&mut slot, self.channel, &mut self.rng.borrow_mut())?;
        let mut got = session
            .delivered
            .ok_or_else(|| QvnError::Abort(format!("download of `{label}`")))?;
        got.consume()
    }
}

/// Largest deviation between the statistics of `outputs[k]` (output on
/// `|k⟩`) and those of `U|k⟩`, over all Pauli product bases.
pub fn behavioral_deviation(outputs: &[DensityOperator], u: &Unitary) -> Result<f64> {
    let n = qubit_register(u.dim())?;
    if outputs.len() != u.dim() {
        return Err(QvnError::DimensionMismatch {
            expected: u.dim(),
            found: outputs.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for code in 0..3usize.pow(n as u32) {
        let axes: Vec<char> = (0..n).map(|k| ['X', 'Y', 'Z'][(code / 3usize.pow(k as u32)) % 3]).collect();
        let pvm = Pvm::pauli_product(&axes)?;
        for (k, out) in outputs.iter().enumerate() {
            let expect = u.matrix().column(k).into_owned();
            let ideal = linalg::outer(&expect, &expect);
            for p in pvm.projectors() {
                let a = linalg::trace(&(p * out.matrix())).re;
                let b = linalg::trace(&(p * &ideal)).re;
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// Outputs of a stored program on every computational basis input, read
/// through the Choi state without consuming the slot.
pub fn basis_outputs(slot: &ProgramSlot) -> Result<Vec<DensityOperator>> {
    (0..slot.tail_dim())
        .map(|k| {
            let rho = PureState::basis(&[slot.tail_dim()], k).density();
            crate::duality::apply_via_choi(slot.choi(), &rho)
        })
        .collect()
}

/// `N = ⌈ln(1/δ)/ε⌉`, values within `1e-9` of an integer snapped to it.
pub fn sample_count(epsilon: f64, delta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(QvnError::InvalidParameter(format!(
            "need 0 < ε, δ < 1, got ε = {epsilon}, δ = {delta}"
        )));
    }
    let x = (1.0 / delta).ln() / epsilon;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * r.max(1.0) { r } else { x.ceil() };
    Ok((n as usize).max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationPlan {
    pub epsilon: f64,
    pub delta: f64,
    pub n_samples: usize,
}

impl VerificationPlan {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            epsilon,
            delta,
            n_samples: sample_count(epsilon, delta)?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub accepted: bool,
    pub samples_used: usize,
    pub failures: usize,
    /// With confidence `1 − δ`: lower bound on the pass probability if
    /// accepted, empirical pass rate otherwise.
    pub fidelity_bound: f64,
}

/// Spends one sample per test: inject a random basis state `|k⟩`, measure
/// the head against the published `U|k⟩`. A faithful program never fails.
/// Accepts iff no test fails, so a program failing with probability above
/// `ε` passes with probability at most `(1−ε)^N ≤ δ`.
pub fn verify_program(
    samples: &mut [ProgramSlot],
    expected: &Unitary,
    plan: &VerificationPlan,
    rng: &mut RandomSource,
) -> Result<VerificationReport> {
    if samples.len() < plan.n_samples {
        return Err(QvnError::InsufficientSamples {
            required: plan.n_samples,
            provided: samples.len(),
        });
    }
    let d = expected.dim();
    let mut failures = 0;
    for slot in samples.iter_mut().take(plan.n_samples) {
        let k = rng.index(d);
        let psi = PureState::basis(&[d], k);
        let branches = memory::write_inject(slot, &psi)?;
        let probs: Vec<f64> = branches.iter().map(|b| b.probability).collect();
        let i = sample_index(&probs, rng);
        let branch = &branches[i];
        let head = branch.head.as_ref().expect("sampled branch is possible");
        let target = expected.matrix().column(k).into_owned();
        let p_target = linalg::trace(&(linalg::outer(&target, &target) * head.matrix())).re.clamp(0.0, 1.0);
        // accept branch should land on U|k⟩, the complement should avoid it
        let p_fail = match branch.outcome {
            InjectOutcome::Accept => 1.0 - p_target,
            InjectOutcome::Complement => p_target,
        };
        if rng.bernoulli(p_fail) {
            failures += 1;
        }
    }
    let n = plan.n_samples;
    let accepted = failures == 0;
    let fidelity_bound = if accepted {
        1.0 - (1.0 / plan.delta).ln() / n as f64
    } else {
        1.0 - failures as f64 / n as f64
    };
    Ok(VerificationReport {
        accepted,
        samples_used: n,
        failures,
        fidelity_bound,
    })
}

fn sample_index(probs: &[f64], rng: &mut RandomSource) -> usize {
    let u = rng.uniform() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc && *p > 0.0 {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_density;

    #[test]
    fn intercept_resend_enumeration() {
        // 8 equally likely (basis, bit, Eve basis) cases with matching bases
        let mut err: f64 = 0.0;
        for a_x in [false, true] {
            for bit in [false, true] {
                for e_x in [false, true] {
                    let p = if a_x == e_x { 0.0 } else { 0.5 };
                    let _ = bit;
                    err += p / 8.0;
                }
            }
        }
        assert!((err - 0.25).abs() < 1e-15);
        let mut rng = RandomSource::new(1);
        let kx = bb84_exchange(100_000, ChannelModel::eavesdropper(1.0).unwrap(), &mut rng).unwrap();
        let sigma = (0.25 * 0.75 / kx.tested as f64).sqrt();
        assert!((kx.qber - 0.25).abs() < 3.0 * sigma, "qber {}", kx.qber);
        assert!(kx.aborted);
    }

    #[test]
    fn ideal_and_depolarized_keys() {
        let mut rng = RandomSource::new(2);
        let kx = bb84_exchange(2000, ChannelModel::Ideal, &mut rng).unwrap();
        assert_eq!(kx.qber, 0.0);
        assert!(!kx.aborted);
        assert_eq!(kx.alice_key, kx.bob_key);
        let frac = kx.sifted as f64 / 2000.0;
        assert!((frac - 0.5).abs() < 0.05);
        let p = 0.1;
        let kx = bb84_exchange(40_000, ChannelModel::depolarizing(p).unwrap(), &mut rng).unwrap();
        let sigma = (p / 2.0 * (1.0 - p / 2.0) / kx.tested as f64).sqrt();
        assert!((kx.qber - p / 2.0).abs() < 3.0 * sigma);
        assert!(bb84_exchange(99, ChannelModel::Ideal, &mut rng).is_err());
    }

    #[test]
    fn ebit_keys_behave_like_bb84() {
        let mut rng = RandomSource::new(3);
        let kx = ebit_key_exchange(2000, ChannelModel::Ideal, QBER_ABORT_THRESHOLD, &mut rng).unwrap();
        assert_eq!(kx.qber, 0.0);
        assert_eq!(kx.alice_key, kx.bob_key);
        let kx = ebit_key_exchange(20_000, ChannelModel::eavesdropper(1.0).unwrap(), QBER_ABORT_THRESHOLD, &mut rng).unwrap();
        let sigma = (0.25 * 0.75 / kx.tested as f64).sqrt();
        assert!((kx.qber - 0.25).abs() < 3.0 * sigma);
    }

    #[test]
    fn averaged_channels_are_unital_and_match_sampling() {
        for ch in [ChannelModel::depolarizing(0.3).unwrap(), ChannelModel::eavesdropper(0.7).unwrap()] {
            let k = ch.kraus();
            assert!((k.apply_matrix(&linalg::identity(2)) - linalg::identity(2)).norm() < 1e-14);
            // error rate on |0⟩ measured in Z: depolarizing p/2, Eve f/4
            let out = k.apply_matrix(&basis_state('Z', false).density().matrix().clone());
            let err = out[(1, 1)].re;
            let expect = match ch {
                ChannelModel::Depolarizing { p } => p / 2.0,
                ChannelModel::Eavesdropper { f } => f / 4.0,
                ChannelModel::Ideal => 0.0,
            };
            assert!((err - expect).abs() < 1e-14);
        }
        assert!(ChannelModel::depolarizing(1.5).is_err());
    }

    #[test]
    fn tapes_replay_the_sequence() {
        let mut rng = RandomSource::new(4);
        let seq = GateSequence::new(2)
            .push("H", &[0])
            .unwrap()
            .push("T", &[0])
            .unwrap()
            .push("CZ", &[0, 1])
            .unwrap();
        let th = gates::t().matrix() * gates::h().matrix();
        let oracle = gates::cz().matrix() * linalg::kron(&th, &linalg::identity(2));
        for s in [scheme1_send_bits, scheme2_send_bits] {
            let session = s(&seq, ChannelModel::Ideal, &mut rng).unwrap();
            let tape = session.delivered.unwrap();
            assert_eq!(session.record.qubits_transmitted, 0);
            assert!(session.record.bits_transmitted > 0);
            for k in 0..4 {
                let out = tape.execute(&PureState::basis(&[4], k)).unwrap();
                let expect = oracle.column(k).into_owned();
                assert!((out.amplitudes() - expect).norm() < 1e-15);
            }
        }
        let session = scheme2_send_bits(&seq, ChannelModel::Ideal, &mut rng).unwrap();
        assert!(session.record.ebits_consumed > 0);
    }

    #[test]
    fn eve_aborts_bit_schemes() {
        let mut rng = RandomSource::new(5);
        let seq = GateSequence::new(1).push("H", &[0]).unwrap();
        let eve = ChannelModel::eavesdropper(1.0).unwrap();
        for s in [scheme1_send_bits, scheme2_send_bits] {
            let session = s(&seq, eve, &mut rng).unwrap();
            assert!(session.delivered.is_none());
            assert_eq!(session.record.outcome, SessionOutcome::Abort);
        }
    }

    #[test]
    fn teleport_qubit_is_identity() {
        let mut rng = RandomSource::new(6);
        let rho = random_density(&[2, 2, 2], &mut rng);
        for w in 0..3 {
            for _ in 0..4 {
                let (m, _) = teleport_qubit(rho.matrix(), &[2, 2, 2], w, &mut rng).unwrap();
                assert!((m - rho.matrix()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scheme3_fidelity() {
        let mut rng = RandomSource::new(7);
        let mut host = ProgramSlot::new(gates::h(), "H");
        let ideal = scheme3_send_qubits(&mut host, ChannelModel::Ideal, &mut rng).unwrap();
        let got = ideal.delivered.unwrap();
        assert!(got.choi().fidelity(host.choi()).unwrap() > 1.0 - 1e-9);
        assert!(got.try_clone().is_err());
        assert_eq!((ideal.record.qubits_transmitted, ideal.record.ebits_consumed), (2, 2));
        let mut last = 1.0;
        for p in [0.05, 0.1, 0.2] {
            let s = scheme3_send_qubits(&mut host, ChannelModel::depolarizing(p).unwrap(), &mut rng).unwrap();
            let f = s.delivered.unwrap().choi().fidelity(host.choi()).unwrap();
            assert!(f < last - 1e-6);
            last = f;
        }
        // oracle: only matching Pauli pairs on both halves leave |ω⟩ invariant
        let p: f64 = 0.2;
        let oracle = (1.0 - 3.0 * p / 4.0).powi(2) + 3.0 * (p / 4.0).powi(2);
        assert!((last - oracle).abs() < 1e-9);
    }

    #[test]
    fn scheme4_prepares_program() {
        let mut rng = RandomSource::new(8);
        let host = ProgramSlot::new(gates::t(), "T");
        let s = scheme4_send_via_ebits(&host, ChannelModel::Ideal, &mut rng).unwrap();
        let got = s.delivered.unwrap();
        assert!(got.choi().fidelity(host.choi()).unwrap() > 1.0 - 1e-9);
        assert_eq!(s.record.peak_qubits, 9);
        assert_eq!(scheme4_qubits(2), 9);
        assert_eq!(scheme4_qubits(4), 17);
        let s = scheme4_with_retries(&host, ChannelModel::Ideal, 0, &mut RandomSource::new(1)).unwrap();
        assert!(s.record.retries <= 1);
        let blind = ProgramSlot::from_choi(host.choi().clone(), "blind");
        assert!(scheme4_send_via_ebits(&blind, ChannelModel::Ideal, &mut rng).is_err());
    }

    #[test]
    fn host_refreshes_consumed_slots() {
        let mut host = Host::new(ChannelModel::Ideal, RandomSource::new(9));
        host.publish("H", gates::h());
        let mut slot = ProgramSlot::from_choi(crate::duality::choi_of_unitary(&gates::h()).unwrap(), "H");
        let _ = slot.consume().unwrap();
        slot.refresh(Some(&host)).unwrap();
        let f = slot.choi().fidelity(&crate::duality::choi_of_unitary(&gates::h()).unwrap()).unwrap();
        assert!(f > 1.0 - 1e-9);
    }

    #[test]
    fn sample_counts() {
        assert_eq!(sample_count(0.1, 0.05).unwrap(), 30);
        assert_eq!(sample_count(0.5, 0.5).unwrap(), 2);
        assert_eq!(sample_count(1.0 - 1e-12, (-1.0f64).exp()).unwrap(), 1);
        assert!(sample_count(0.0, 0.5).is_err());
        assert!(sample_count(0.5, 1.0).is_err());
    }

    #[test]
    fn verification_separates_programs() {
        let plan = VerificationPlan::new(0.1, 0.05).unwrap();
        let mut rng = RandomSource::new(10);
        let mut good: Vec<ProgramSlot> = (0..30).map(|_| ProgramSlot::new(gates::h(), "H")).collect();
        let r = verify_program(&mut good, &gates::h(), &plan, &mut rng).unwrap();
        assert!(r.accepted && r.failures == 0);
        let mut bad: Vec<ProgramSlot> = (0..30).map(|_| ProgramSlot::new(gates::z(), "H")).collect();
        let r = verify_program(&mut bad, &gates::h(), &plan, &mut rng).unwrap();
        assert!(!r.accepted);
        let mut few: Vec<ProgramSlot> = (0..3).map(|_| ProgramSlot::new(gates::h(), "H")).collect();
        assert!(matches!(
            verify_program(&mut few, &gates::h(), &plan, &mut rng),
            Err(QvnError::InsufficientSamples { required: 30, provided: 3 })
        ));
    }

    #[test]
    fn behavioral_deviation_detects_wrong_gate() {
        let h = ProgramSlot::new(gates::h(), "H");
        assert!(behavioral_deviation(&basis_outputs(&h).unwrap(), &gates::h()).unwrap() < 1e-12);
        assert!(behavioral_deviation(&basis_outputs(&h).unwrap(), &gates::z()).unwrap() > 0.4);
    }
}
