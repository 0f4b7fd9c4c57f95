//! Channel-state duality.
//!
//! A channel `ℰ: d_in → d_out` is stored as its Choi state
//! `ω_ℰ = (ℰ ⊗ 1)(|ω⟩⟨ω|)` with trace-one normalisation. Subsystem 0 is the
//! head (output), subsystem 1 the tail (input). The channel is recovered by
//! `ℰ(ρ) = d_in · tr_tail[ω_ℰ (1 ⊗ ρᵗ)]`.
//!
//! Kraus operators are read out of eigenvectors by the reshape
//! `K[a, b] = √(d_in·λ) · v[a·d_in + b]`, i.e. the head index selects the row.

use serde::{Deserialize, Serialize};

use crate::error::{QvnError, Result};
use crate::linalg::{self, cr, CMatrix, CVector, Layout, EIG_TOL};
use crate::operator::{KrausChannel, Unitary};
use crate::spectral;
use crate::state::{self, DensityOperator, PureState};

/// Tolerance on the tail marginal `tr_head ω = 1/d_in`.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Dual state of a channel; the memory unit's storage format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChoiState {
    operator: DensityOperator,
    pure: Option<PureState>,
}

impl ChoiState {
    /// Validates a Choi operator on `[d_out, d_in]`.
    pub fn from_operator(operator: DensityOperator) -> Result<Self> {
        if operator.dims().len() != 2 {
            return Err(QvnError::InvalidState(
                "Choi state needs exactly head and tail subsystems".into(),
            ));
        }
        check_marginal(operator.matrix(), operator.dims()[0], operator.dims()[1])?;
        Ok(Self {
            operator,
            pure: None,
        })
    }

    /// Validates a pure Choi state `|U⟩` on `[d_out, d_in]`.
    pub fn from_pure(psi: PureState) -> Result<Self> {
        if psi.dims().len() != 2 {
            return Err(QvnError::InvalidState(
                "Choi state needs exactly head and tail subsystems".into(),
            ));
        }
        let rho = psi.density();
        check_marginal(rho.matrix(), psi.dims()[0], psi.dims()[1])?;
        Ok(Self {
            operator: rho,
            pure: Some(psi),
        })
    }

    pub(crate) fn from_pure_unchecked(psi: PureState) -> Self {
        Self {
            operator: psi.density(),
            pure: Some(psi),
        }
    }

    pub(crate) fn from_operator_unchecked(operator: DensityOperator) -> Self {
        Self {
            operator,
            pure: None,
        }
    }

    pub fn operator(&self) -> &DensityOperator {
        &self.operator
    }

    /// `|U⟩` when the state is known to be pure.
    pub fn pure_state(&self) -> Option<&PureState> {
        self.pure.as_ref()
    }

    pub fn purity_hint(&self) -> bool {
        self.pure.is_some()
    }

    pub fn head_dim(&self) -> usize {
        self.operator.dims()[0]
    }

    pub fn tail_dim(&self) -> usize {
        self.operator.dims()[1]
    }

    /// Numerical rank (eigenvalues above `1e-8`).
    pub fn rank(&self) -> usize {
        spectral::eigenvalues_hermitian(self.operator.matrix())
            .into_iter()
            .filter(|&l| l > EIG_TOL)
            .count()
    }

    /// `(A ⊗ B) ω (A ⊗ B)†` with `A` on the head and `B` on the tail.
    pub(crate) fn conjugated(&self, head: Option<&CMatrix>, tail: Option<&CMatrix>) -> ChoiState {
        let dims = self.operator.dims().to_vec();
        let layout = Layout::new(&dims);
        if let Some(p) = &self.pure {
            let mut amps = p.amplitudes().clone();
            if let Some(a) = head {
                linalg::apply_local(amps.as_mut_slice(), &layout, a, &[0]);
            }
            if let Some(b) = tail {
                linalg::apply_local(amps.as_mut_slice(), &layout, b, &[1]);
            }
            return ChoiState::from_pure_unchecked(PureState::from_parts(amps, dims));
        }
        let mut m = self.operator.matrix().clone();
        if let Some(a) = head {
            m = linalg::conjugate_local(&m, &layout, a, &[0]);
        }
        if let Some(b) = tail {
            m = linalg::conjugate_local(&m, &layout, b, &[1]);
        }
        ChoiState::from_operator_unchecked(DensityOperator::from_parts(m, dims))
    }

    /// Pure representative when the operator has rank one numerically.
    pub(crate) fn purified(self) -> ChoiState {
        if self.pure.is_some() || self.operator.purity() < 1.0 - 1e-9 {
            return self;
        }
        let dims = self.operator.dims().to_vec();
        match spectral::spectral_decompose(self.operator.matrix(), &dims) {
            Ok(pairs) => {
                let v = pairs[0].vector.amplitudes().clone();
                ChoiState::from_pure_unchecked(PureState::from_parts(v, dims))
            }
            Err(_) => self,
        }
    }

    /// Fidelity between two Choi states (pure, mixed, or one of each).
    pub fn fidelity(&self, other: &ChoiState) -> Result<f64> {
        match (&self.pure, &other.pure) {
            (Some(a), Some(b)) => state::fidelity(a, b),
            (Some(a), None) => state::fidelity_pure_mixed(a, &other.operator),
            (None, Some(b)) => state::fidelity_pure_mixed(b, &self.operator),
            (None, None) => state::fidelity_mixed(&self.operator, &other.operator),
        }
    }
}

fn check_marginal(m: &CMatrix, d_out: usize, d_in: usize) -> Result<()> {
    let tail = linalg::partial_trace_matrix(m, &Layout::new(&[d_out, d_in]), &[1]);
    let target = linalg::identity(d_in) / cr(d_in as f64);
    let defect = (tail - target).norm();
    if defect > MARGINAL_TOL {
        return Err(QvnError::NotTracePreserving(defect));
    }
    Ok(())
}

/// Row-major flattening of a `d_out × d_in` operator, scaled into `(K ⊗ 1)|ω⟩`.
fn vectorize(k: &CMatrix) -> CVector {
    let (d_out, d_in) = k.shape();
    let s = cr(1.0 / (d_in as f64).sqrt());
    CVector::from_fn(d_out * d_in, |i, _| k[(i / d_in, i % d_in)] * s)
}

fn unvectorize(v: &CVector, d_out: usize, d_in: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(d_out, d_in, |a, b| v[a * d_in + b] * cr(scale))
}

/// `ω_ℰ = (ℰ ⊗ 1)(|ω⟩⟨ω|)`.
pub fn choi_of_channel(e: &KrausChannel) -> ChoiState {
    let dims = vec![e.d_out(), e.d_in()];
    if e.rank() == 1 {
        let v = vectorize(&e.ops()[0]);
        return ChoiState::from_pure_unchecked(PureState::from_parts(v, dims));
    }
    let n = e.d_out() * e.d_in();
    let m = e.ops().iter().fold(CMatrix::zeros(n, n), |acc, k| {
        let v = vectorize(k);
        acc + linalg::outer(&v, &v)
    });
    ChoiState::from_operator_unchecked(DensityOperator::from_parts(m, dims))
}

/// `|U⟩ = (U ⊗ 1)|ω⟩`.
pub fn choi_of_unitary(u: &Unitary) -> Result<ChoiState> {
    let defect = linalg::unitarity_defect(u.matrix());
    if defect > linalg::TOL {
        return Err(QvnError::NotUnitary(defect));
    }
    let d = u.dim();
    Ok(ChoiState::from_pure_unchecked(PureState::from_parts(
        vectorize(u.matrix()),
        vec![d, d],
    )))
}

/// Kraus operators from the eigen-decomposition of the Choi state.
pub fn kraus_from_choi(w: &ChoiState) -> Result<KrausChannel> {
    let (d_out, d_in) = (w.head_dim(), w.tail_dim());
    check_marginal(w.operator().matrix(), d_out, d_in)?;
    let scale_in = d_in as f64;
    if let Some(p) = &w.pure {
        return KrausChannel::with_tolerance(
            vec![unvectorize(p.amplitudes(), d_out, d_in, scale_in.sqrt())],
            EIG_TOL,
        );
    }
    let pairs = spectral::spectral_decompose(w.operator().matrix(), w.operator().dims())?;
    let ops: Vec<CMatrix> = pairs
        .iter()
        .filter(|p| p.value > EIG_TOL)
        .map(|p| unvectorize(p.vector.amplitudes(), d_out, d_in, (scale_in * p.value).sqrt()))
        .collect();
    KrausChannel::with_tolerance(ops, EIG_TOL)
}

/// `ℰ(ρ) = d_in · tr_tail[ω_ℰ (1 ⊗ ρᵗ)]`.
pub fn apply_via_choi(w: &ChoiState, rho: &DensityOperator) -> Result<DensityOperator> {
    if rho.dim() != w.tail_dim() {
        return Err(QvnError::DimensionMismatch {
            expected: w.tail_dim(),
            found: rho.dim(),
        });
    }
    let out = readout_matrix(w.operator().matrix(), w.head_dim(), w.tail_dim(), rho.matrix());
    let dims = if w.head_dim() == rho.dim() {
        rho.dims().to_vec()
    } else {
        vec![w.head_dim()]
    };
    Ok(DensityOperator::from_parts(out, dims))
}

/// Readout identity on raw matrices (linear in `x`, which need not be a state).
pub(crate) fn readout_matrix(omega: &CMatrix, d_out: usize, d_in: usize, x: &CMatrix) -> CMatrix {
    let lifted = linalg::kron(&linalg::identity(d_out), &x.transpose());
    let prod = omega * lifted;
    linalg::partial_trace_matrix(&prod, &Layout::new(&[d_out, d_in]), &[0]) * cr(d_in as f64)
}

/// `(ℰ ⊗ id)(X)` with `ℰ` given by its Choi state, acting on subsystem `target` of `x`.
/// Returns the new matrix; the target subsystem's dimension becomes `d_out`.
pub fn apply_via_choi_on(
    w: &ChoiState,
    x: &CMatrix,
    dims: &[usize],
    target: usize,
) -> Result<(CMatrix, Vec<usize>)> {
    let layout = Layout::new(dims);
    layout.check_targets(&[target])?;
    if dims[target] != w.tail_dim() {
        return Err(QvnError::DimensionMismatch {
            expected: w.tail_dim(),
            found: dims[target],
        });
    }
    let (d_out, d_in) = (w.head_dim(), w.tail_dim());
    // move target to the front
    let mut order = vec![target];
    order.extend(layout.complement(&[target]));
    let (xp, pdims) = linalg::permute_matrix(x, &layout, &order);
    let rest: usize = pdims[1..].iter().product();
    let xg = linalg::partial_transpose(&xp, &Layout::new(&pdims), &[0]);
    let big = linalg::kron(w.operator().matrix(), &linalg::identity(rest))
        * linalg::kron(&linalg::identity(d_out), &xg);
    let mut bdims = vec![d_out, d_in];
    bdims.extend_from_slice(&pdims[1..]);
    let keep: Vec<usize> = std::iter::once(0).chain(2..bdims.len()).collect();
    let reduced = linalg::partial_trace_matrix(&big, &Layout::new(&bdims), &keep) * cr(d_in as f64);
    // restore original ordering with the head in the target slot
    let mut out_dims_perm = vec![d_out];
    out_dims_perm.extend_from_slice(&pdims[1..]);
    let mut inverse = vec![0; order.len()];
    for (new_pos, &old) in order.iter().enumerate() {
        inverse[old] = new_pos;
    }
    let (restored, out_dims) =
        linalg::permute_matrix(&reduced, &Layout::new(&out_dims_perm), &inverse);
    Ok((restored, out_dims))
}
