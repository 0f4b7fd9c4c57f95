//! Superchannels: maps from channels to channels.
//!
//! Circuit form: `Ŝ(ℰ)(ρ) = tr_a 𝒱 (ℰ ⊗ 1) 𝒰 (ρ ⊗ |0⟩⟨0|)`, with `𝒰` on
//! `input ⊗ ancilla` and `𝒱` on `inner output ⊗ ancilla`.
//!
//! Choi form: wires `h t a a′` carry `ω_ℰ ⊗ ω`, with `ω` an ebit on the
//! ancilla and its partner. Then
//!
//! ```text
//! Ŝ(ℰ)(ρ) = d·d_a · tr_{Ā}[(𝒱_{ha} ⊗ Ũ_{a′t})(ω_ℰ ⊗ ω)(𝒱 ⊗ Ũ)† (1 ⊗ ρᵗ ⊗ 1 ⊗ |0⟩⟨0|)]
//! ```
//!
//! where `Ũ = SWAP · 𝒰ᵗ · SWAP` and the trace runs over everything except the
//! kept output wire. The factor `d·d_a` undoes the two `|ω⟩` normalisations.

use serde::{Deserialize, Serialize};

use crate::duality::{self, ChoiState};
use crate::error::{QvnError, Result};
use crate::linalg::{self, cr, CMatrix, Layout, MatrixPairs};
use crate::memory::ProgramSlot;
use crate::operator::{KrausChannel, Unitary};
use crate::random::{haar_unitary_on, RandomSource};
use crate::state::{self, DensityOperator};

#[derive(Clone, Debug)]
pub struct Superchannel {
    pre: Unitary,
    post: Unitary,
    input_dim: usize,
    ancilla_dim: usize,
    /// Subsystem split of the post-unitary's output.
    post_dims: Vec<usize>,
    /// Output subsystems discarded at the end.
    traced_wires: Vec<usize>,
}

impl Superchannel {
    /// `pre` acts on `input ⊗ ancilla`; `post` on `inner output ⊗ ancilla`,
    /// split into `post_dims` of which `traced_wires` are discarded.
    pub fn new(
        pre: Unitary,
        post: Unitary,
        input_dim: usize,
        ancilla_dim: usize,
        post_dims: Vec<usize>,
        traced_wires: Vec<usize>,
    ) -> Result<Self> {
        if pre.dim() != input_dim * ancilla_dim {
            return Err(QvnError::DimensionMismatch {
                expected: input_dim * ancilla_dim,
                found: pre.dim(),
            });
        }
        if !post.dim().is_multiple_of(ancilla_dim) || post_dims.iter().product::<usize>() != post.dim() {
            return Err(QvnError::DimensionMismatch {
                expected: post.dim(),
                found: post_dims.iter().product(),
            });
        }
        let layout = Layout::new(&post_dims);
        layout.check_targets(&traced_wires)?;
        if layout.complement(&traced_wires).len() != 1 {
            return Err(QvnError::InvalidParameter(
                "exactly one output wire must be kept".into(),
            ));
        }
        Ok(Self {
            pre: Unitary::from_parts(pre.matrix().clone(), vec![input_dim, ancilla_dim], pre.label()),
            post,
            input_dim,
            ancilla_dim,
            post_dims,
            traced_wires,
        })
    }

    /// `𝒰`, `𝒱` on `d ⊗ d_a` with the ancilla traced out.
    pub fn standard(pre: Unitary, post: Unitary, d: usize, d_a: usize) -> Result<Self> {
        Self::new(pre, post, d, d_a, vec![d, d_a], vec![1])
    }

    pub fn identity(d: usize) -> Self {
        let id = crate::gates::identity(d);
        Self::standard(id.clone(), id, d, 1).expect("identity superchannel is valid")
    }

    pub fn pre(&self) -> &Unitary {
        &self.pre
    }

    pub fn post(&self) -> &Unitary {
        &self.post
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    /// Output dimension the inner channel must have.
    pub fn inner_output_dim(&self) -> usize {
        self.post.dim() / self.ancilla_dim
    }

    fn kept_wire(&self) -> usize {
        Layout::new(&self.post_dims).complement(&self.traced_wires)[0]
    }

    pub fn output_dim(&self) -> usize {
        self.post_dims[self.kept_wire()]
    }

    /// Qubits for the Choi-form realisation: the program plus the ancilla ebit.
    pub fn choi_form_qubits(&self) -> usize {
        linalg::qubits_for(self.inner_output_dim())
            + linalg::qubits_for(self.input_dim)
            + 2 * linalg::qubits_for(self.ancilla_dim)
    }

    fn check_channel(&self, d_in: usize, d_out: usize) -> Result<()> {
        if d_in != self.input_dim {
            return Err(QvnError::DimensionMismatch {
                expected: self.input_dim,
                found: d_in,
            });
        }
        if d_out != self.inner_output_dim() {
            return Err(QvnError::DimensionMismatch {
                expected: self.inner_output_dim(),
                found: d_out,
            });
        }
        Ok(())
    }

    fn finish(&self, m: &CMatrix) -> CMatrix {
        linalg::partial_trace_matrix(m, &Layout::new(&self.post_dims), &[self.kept_wire()])
    }

    /// Circuit form on an arbitrary (not necessarily positive) input matrix.
    pub(crate) fn circuit_matrix(&self, e: &KrausChannel, x: &CMatrix) -> CMatrix {
        let da = self.ancilla_dim;
        let mut zero = CMatrix::zeros(da, da);
        zero[(0, 0)] = cr(1.0);
        let m = linalg::kron(x, &zero);
        let m = self.pre.matrix() * m * self.pre.matrix().adjoint();
        let d_mid = self.inner_output_dim();
        let mut acc = CMatrix::zeros(d_mid * da, d_mid * da);
        for k in e.ops() {
            let lifted = linalg::kron(k, &linalg::identity(da));
            acc += &lifted * &m * lifted.adjoint();
        }
        let m = self.post.matrix() * acc * self.post.matrix().adjoint();
        self.finish(&m)
    }

    /// Choi form on an arbitrary input matrix.
    pub(crate) fn choi_matrix(&self, omega_e: &CMatrix, omega_a: &CMatrix, x: &CMatrix) -> CMatrix {
        let (d, da, d_mid) = (self.input_dim, self.ancilla_dim, self.inner_output_dim());
        // wires h t a a′
        let dims = [d_mid, d, da, da];
        let layout = Layout::new(&dims);
        let joint = linalg::kron(omega_e, omega_a);
        let tilde = build_tilde_u(&self.pre);
        let m = linalg::conjugate_local(&joint, &layout, self.post.matrix(), &[0, 2]);
        let m = linalg::conjugate_local(&m, &layout, tilde.matrix(), &[3, 1]);
        let mut zero = CMatrix::zeros(da, da);
        zero[(0, 0)] = cr(1.0);
        let feed = linalg::kron(
            &linalg::kron(&linalg::identity(d_mid), &x.transpose()),
            &linalg::kron(&linalg::identity(da), &zero),
        );
        let reduced = linalg::partial_trace_matrix(&(m * feed), &layout, &[0, 2]);
        self.finish(&(reduced * cr((d * da) as f64)))
    }
}

/// `Ŝ(ℰ)(ρ)` in circuit form.
pub fn apply_to_channel(s: &Superchannel, e: &KrausChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    s.check_channel(e.d_in(), e.d_out())?;
    if rho.dim() != s.input_dim {
        return Err(QvnError::DimensionMismatch {
            expected: s.input_dim,
            found: rho.dim(),
        });
    }
    Ok(DensityOperator::from_parts(
        s.circuit_matrix(e, rho.matrix()),
        vec![s.output_dim()],
    ))
}

/// `Ŝ(ℰ)(ρ)` in Choi form, from the program's Choi state and an ancilla ebit.
pub fn apply_to_choi(s: &Superchannel, w: &ChoiState, rho: &DensityOperator) -> Result<DensityOperator> {
    let omega = state::ebit(s.ancilla_dim).density();
    apply_to_choi_with_resource(s, w, &omega, rho)
}

/// [`apply_to_choi`] on a stored program, which is consumed.
pub fn apply_to_slot(s: &Superchannel, slot: &mut ProgramSlot, rho: &DensityOperator) -> Result<DensityOperator> {
    slot.ensure_fresh()?;
    let out = apply_to_choi(s, slot.choi(), rho)?;
    slot.consume()?;
    Ok(out)
}

/// As [`apply_to_choi`] with a caller-supplied state in place of the ebit.
pub fn apply_to_choi_with_resource(
    s: &Superchannel,
    w: &ChoiState,
    resource: &DensityOperator,
    rho: &DensityOperator,
) -> Result<DensityOperator> {
    s.check_channel(w.tail_dim(), w.head_dim())?;
    if rho.dim() != s.input_dim {
        return Err(QvnError::DimensionMismatch {
            expected: s.input_dim,
            found: rho.dim(),
        });
    }
    if resource.dim() != s.ancilla_dim * s.ancilla_dim {
        return Err(QvnError::DimensionMismatch {
            expected: s.ancilla_dim * s.ancilla_dim,
            found: resource.dim(),
        });
    }
    Ok(DensityOperator::from_parts(
        s.choi_matrix(w.operator().matrix(), resource.matrix(), rho.matrix()),
        vec![s.output_dim()],
    ))
}

/// `Ũ = SWAP · 𝒰ᵗ · SWAP` for a unitary on two declared subsystems.
pub fn build_tilde_u(u: &Unitary) -> Unitary {
    let dims = u.dims();
    let (d1, d2) = if dims.len() == 2 { (dims[0], dims[1]) } else { (u.dim(), 1) };
    let sw = linalg::swap_matrix(d1, d2);
    // SWAP(d1,d2) maps d1⊗d2 → d2⊗d1; its adjoint maps back
    let m = &sw * u.matrix().transpose() * sw.adjoint();
    Unitary::from_parts(m, vec![d2, d1], Some("tilde"))
}

/// Choi state of `Ŝ(ℰ)`, obtained by probing matrix units.
pub fn output_choi(s: &Superchannel, e: &KrausChannel) -> Result<DensityOperator> {
    s.check_channel(e.d_in(), e.d_out())?;
    let d = s.input_dim;
    let dout = s.output_dim();
    let mut m = CMatrix::zeros(dout * d, dout * d);
    for i in 0..d {
        for j in 0..d {
            let mut eij = CMatrix::zeros(d, d);
            eij[(i, j)] = cr(1.0);
            let out = s.circuit_matrix(e, &eij);
            m += linalg::kron(&out, &eij) / cr(d as f64);
        }
    }
    Ok(DensityOperator::from_parts(m, vec![dout, d]))
}

/// Positivity and marginal of the output channel's Choi state.
pub fn is_cptp_preserving(s: &Superchannel, e: &KrausChannel, tol: f64) -> Result<bool> {
    let w = output_choi(s, e)?;
    let min_eig = crate::spectral::eigenvalues_hermitian(w.matrix())
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let herm = linalg::hermiticity_defect(w.matrix());
    let d = s.input_dim;
    let tail = w.partial_trace(&[1])?;
    let marginal = (tail.matrix() - linalg::identity(d) / cr(d as f64)).norm();
    Ok(min_eig > -tol && herm < tol && marginal < tol)
}

/// Haar-random pre and post unitaries on `input ⊗ ancilla`.
pub fn random_superchannel(input_dim: usize, ancilla_dim: usize, rng: &mut RandomSource) -> Result<Superchannel> {
    if input_dim == 0 || ancilla_dim == 0 {
        return Err(QvnError::InvalidParameter("dimensions must be positive".into()));
    }
    let dims = [input_dim, ancilla_dim];
    let pre = haar_unitary_on(&dims, rng);
    let post = haar_unitary_on(&dims, rng);
    Superchannel::standard(pre, post, input_dim, ancilla_dim)
}

/// JSON form of a superchannel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuperchannelSpec {
    pub pre: MatrixPairs,
    pub post: MatrixPairs,
    pub ancilla_dim: usize,
    #[serde(default)]
    pub post_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub traced_wires: Option<Vec<usize>>,
}

impl SuperchannelSpec {
    pub fn build(&self) -> Result<Superchannel> {
        let pre = Unitary::new(linalg::matrix_from_pairs(&self.pre)?)?;
        let post = Unitary::new(linalg::matrix_from_pairs(&self.post)?)?;
        let da = self.ancilla_dim.max(1);
        if pre.dim() % da != 0 {
            return Err(QvnError::DimensionMismatch {
                expected: da,
                found: pre.dim(),
            });
        }
        let d = pre.dim() / da;
        let post_dims = self
            .post_dims
            .clone()
            .unwrap_or_else(|| vec![post.dim() / da, da]);
        let traced = self.traced_wires.clone().unwrap_or_else(|| vec![1]);
        Superchannel::new(pre, post, d, da, post_dims, traced)
    }
}

pub fn superchannel_from_json(json: &str) -> Result<Superchannel> {
    serde_json::from_str::<SuperchannelSpec>(json)?.build()
}

/// One step of a comb run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CombEvent {
    pub tooth: usize,
    pub program: String,
    pub live_dims: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct CombOutput {
    pub output: DensityOperator,
    pub transcript: Vec<CombEvent>,
}

/// A comb: every superchannel shares one ancilla that is carried from tooth
/// to tooth and traced at the end. Each tooth applies its pre-unitary, the
/// stored program through its Choi state, then its post-unitary.
pub fn comb_compose(superchannels: &[Superchannel], slots: &[&ProgramSlot], rho: &DensityOperator) -> Result<CombOutput> {
    if superchannels.len() != slots.len() || superchannels.is_empty() {
        return Err(QvnError::InvalidParameter(format!(
            "{} superchannels for {} programs",
            superchannels.len(),
            slots.len()
        )));
    }
    let da = superchannels[0].ancilla_dim;
    let mut d = rho.dim();
    let mut zero = CMatrix::zeros(da, da);
    zero[(0, 0)] = cr(1.0);
    let mut m = linalg::kron(rho.matrix(), &zero);
    let mut transcript = Vec::new();
    for (k, (s, slot)) in superchannels.iter().zip(slots).enumerate() {
        slot.ensure_fresh()?;
        if s.ancilla_dim != da || s.input_dim != d {
            return Err(QvnError::DimensionMismatch {
                expected: d,
                found: s.input_dim,
            });
        }
        if s.post_dims != [s.inner_output_dim(), da] || s.traced_wires != [1] {
            return Err(QvnError::InvalidParameter(
                "comb teeth must keep the system wire and pass the ancilla on".into(),
            ));
        }
        s.check_channel(slot.tail_dim(), slot.head_dim())?;
        m = s.pre.matrix() * m * s.pre.matrix().adjoint();
        let (next, dims) = duality::apply_via_choi_on(slot.choi(), &m, &[d, da], 0)?;
        d = dims[0];
        m = s.post.matrix() * next * s.post.matrix().adjoint();
        transcript.push(CombEvent {
            tooth: k,
            program: slot.label().to_owned(),
            live_dims: vec![d, da],
        });
    }
    let out = linalg::partial_trace_matrix(&m, &Layout::new(&[d, da]), &[0]);
    Ok(CombOutput {
        output: DensityOperator::from_parts(out, vec![d]),
        transcript,
    })
}
