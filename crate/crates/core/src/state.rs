//! Pure states and density operators.

use serde::{Deserialize, Serialize};

use crate::error::{QvnError, Result};
use crate::linalg::{
    self, cr, reduced_from_pure, C64, CMatrix, CVector, Layout, TOL,
};
use crate::spectral;

/// Normalised amplitude vector over a composite space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    amps: CVector,
    dims: Vec<usize>,
}

impl PureState {
    pub fn new(amps: CVector, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, amps.len())?;
        let n = amps.norm_squared();
        if (n - 1.0).abs() > TOL {
            return Err(QvnError::InvalidState(format!(
                "squared norm {n} differs from 1"
            )));
        }
        Ok(Self { amps, dims })
    }

    /// Normalises `amps`; fails on the zero vector.
    pub fn normalized(amps: CVector, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, amps.len())?;
        let n = amps.norm();
        if n < 1e-300 {
            return Err(QvnError::InvalidState("zero vector".into()));
        }
        Ok(Self { amps: amps / cr(n), dims })
    }

    pub(crate) fn from_parts(amps: CVector, dims: Vec<usize>) -> Self {
        Self { amps, dims }
    }

    pub fn basis(dims: &[usize], index: usize) -> Self {
        let d: usize = dims.iter().product();
        Self {
            amps: linalg::basis_vector(d, index),
            dims: dims.to_vec(),
        }
    }

    /// Qubit state from two amplitudes.
    pub fn qubit(a: C64, b: C64) -> Result<Self> {
        Self::new(CVector::from_vec(vec![a, b]), vec![2])
    }

    pub fn zero() -> Self {
        Self::basis(&[2], 0)
    }

    pub fn one() -> Self {
        Self::basis(&[2], 1)
    }

    pub fn plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_parts(CVector::from_vec(vec![cr(s), cr(s)]), vec![2])
    }

    pub fn minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_parts(CVector::from_vec(vec![cr(s), cr(-s)]), vec![2])
    }

    /// `n`-qubit all-zero state.
    pub fn zeros(n: usize) -> Self {
        Self::basis(&vec![2; n], 0)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        self.amps.as_mut_slice()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amps.dotc(&other.amps))
    }

    pub fn conj(&self) -> Self {
        Self::from_parts(self.amps.map(|z| z.conj()), self.dims.clone())
    }

    pub fn tensor(&self, other: &PureState) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::from_parts(linalg::kron_vec(&self.amps, &other.amps), dims)
    }

    /// Applies an operator to the listed subsystems. Non-unitary operators
    /// leave the state unnormalised; use [`PureState::apply_unitary`] for gates.
    pub(crate) fn apply_raw(&mut self, op: &CMatrix, targets: &[usize]) -> Result<()> {
        let layout = self.layout();
        layout.check_targets(targets)?;
        let d = layout.sub_dim(targets);
        if op.nrows() != d || op.ncols() != d {
            return Err(QvnError::DimensionMismatch {
                expected: d,
                found: op.nrows(),
            });
        }
        linalg::apply_local(self.amps.as_mut_slice(), &layout, op, targets);
        Ok(())
    }

    pub fn apply_unitary(&mut self, u: &crate::operator::Unitary, targets: &[usize]) -> Result<()> {
        self.apply_raw(u.matrix(), targets)
    }

    /// Builder form of [`PureState::apply_unitary`].
    pub fn evolved(mut self, u: &crate::operator::Unitary, targets: &[usize]) -> Result<Self> {
        self.apply_unitary(u, targets)?;
        Ok(self)
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            matrix: linalg::outer(&self.amps, &self.amps),
            dims: self.dims.clone(),
        }
    }

    /// Reduced density operator on `keep`.
    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOperator> {
        if keep.is_empty() {
            return Err(QvnError::EmptyKeep);
        }
        let layout = self.layout();
        layout.check_targets(keep)?;
        let m = reduced_from_pure(self.amps.as_slice(), &layout, keep);
        Ok(DensityOperator {
            matrix: m,
            dims: keep.iter().map(|&k| self.dims[k]).collect(),
        })
    }

    /// Contracts `bra` against `targets`. Returns the probability of that
    /// projection and the renormalised remainder (None when the probability vanishes).
    pub fn project_out(&self, targets: &[usize], bra: &CVector) -> Result<(f64, Option<PureState>)> {
        let layout = self.layout();
        layout.check_targets(targets)?;
        let d = layout.sub_dim(targets);
        if bra.len() != d {
            return Err(QvnError::DimensionMismatch {
                expected: d,
                found: bra.len(),
            });
        }
        let rest = linalg::contract_bra(self.amps.as_slice(), &layout, bra, targets);
        let dims: Vec<usize> = layout.complement(targets).iter().map(|&k| self.dims[k]).collect();
        let p = rest.norm_squared();
        if p < 1e-14 {
            return Ok((p, None));
        }
        Ok((p, Some(Self::from_parts(rest / cr(p.sqrt()), dims))))
    }

    /// Reorders subsystems: new subsystem `k` is old subsystem `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let layout = self.layout();
        if order.len() != self.dims.len() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dims.len(),
                found: order.len(),
            });
        }
        layout.check_targets(order)?;
        let (amps, dims) = linalg::permute_vector(self.amps.as_slice(), &layout, order);
        Ok(Self::from_parts(amps, dims))
    }

    /// Multiplies by a global phase.
    pub fn with_phase(&self, phase: C64) -> Self {
        Self::from_parts(&self.amps * phase, self.dims.clone())
    }

    pub fn norm_defect(&self) -> f64 {
        (self.amps.norm_squared() - 1.0).abs()
    }
}

/// Positive semi-definite, unit-trace operator over a composite space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOperator {
    matrix: CMatrix,
    dims: Vec<usize>,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix, dims: Vec<usize>) -> Result<Self> {
        check_dims(&dims, matrix.nrows())?;
        let h = linalg::hermiticity_defect(&matrix);
        if h > TOL {
            return Err(QvnError::NotHermitian(h));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > TOL || tr.im.abs() > TOL {
            return Err(QvnError::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = spectral::eigenvalues_hermitian(&matrix)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < -TOL {
            return Err(QvnError::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { matrix, dims })
    }

    pub(crate) fn from_parts(matrix: CMatrix, dims: Vec<usize>) -> Self {
        Self { matrix, dims }
    }

    pub fn maximally_mixed(dims: &[usize]) -> Self {
        let d: usize = dims.iter().product();
        Self {
            matrix: linalg::identity(d) / cr(d as f64),
            dims: dims.to_vec(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.dims)
    }

    pub fn tensor(&self, other: &DensityOperator) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self {
            matrix: linalg::kron(&self.matrix, &other.matrix),
            dims,
        }
    }

    /// Reduced operator on the subsystems in `keep` (in that order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(QvnError::EmptyKeep);
        }
        let layout = self.layout();
        layout.check_targets(keep)?;
        Ok(Self {
            matrix: linalg::partial_trace_matrix(&self.matrix, &layout, keep),
            dims: keep.iter().map(|&k| self.dims[k]).collect(),
        })
    }

    /// `O ρ O†` on the listed subsystems.
    pub fn conjugated(&self, op: &CMatrix, targets: &[usize]) -> Result<Self> {
        let layout = self.layout();
        layout.check_targets(targets)?;
        let d = layout.sub_dim(targets);
        if op.ncols() != d || op.nrows() != d {
            return Err(QvnError::DimensionMismatch {
                expected: d,
                found: op.ncols(),
            });
        }
        Ok(Self {
            matrix: linalg::conjugate_local(&self.matrix, &layout, op, targets),
            dims: self.dims.clone(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            dims: self.dims.clone(),
        }
    }

    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let layout = self.layout();
        if order.len() != self.dims.len() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dims.len(),
                found: order.len(),
            });
        }
        layout.check_targets(order)?;
        let (m, dims) = linalg::permute_matrix(&self.matrix, &layout, order);
        Ok(Self { matrix: m, dims })
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    /// Distance to another operator in Frobenius norm.
    pub fn distance(&self, other: &DensityOperator) -> f64 {
        linalg::frobenius_distance(&self.matrix, &other.matrix)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(psi.amplitudes().dotc(&(&self.matrix * psi.amplitudes())).re)
    }
}

/// A quantum object of any of the three kinds that support tensor products.
#[derive(Clone, Debug)]
pub enum QuantumObject {
    Pure(PureState),
    Mixed(DensityOperator),
    Operator(crate::operator::Unitary),
}

impl QuantumObject {
    fn kind(&self) -> &'static str {
        match self {
            QuantumObject::Pure(_) => "pure state",
            QuantumObject::Mixed(_) => "density operator",
            QuantumObject::Operator(_) => "operator",
        }
    }
}

/// Kronecker product with subsystem dimensions concatenated.
pub fn tensor_product(a: &QuantumObject, b: &QuantumObject) -> Result<QuantumObject> {
    match (a, b) {
        (QuantumObject::Pure(x), QuantumObject::Pure(y)) => Ok(QuantumObject::Pure(x.tensor(y))),
        (QuantumObject::Mixed(x), QuantumObject::Mixed(y)) => Ok(QuantumObject::Mixed(x.tensor(y))),
        (QuantumObject::Operator(x), QuantumObject::Operator(y)) => {
            Ok(QuantumObject::Operator(x.tensor(y)))
        }
        _ => Err(QvnError::KindMismatch(format!(
            "cannot tensor a {} with a {}",
            a.kind(),
            b.kind()
        ))),
    }
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().min(1.0))
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
pub fn fidelity_mixed(a: &DensityOperator, b: &DensityOperator) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(QvnError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let s = spectral::psd_sqrt(a.matrix());
    let inner = &s * b.matrix() * &s;
    let inner = (&inner + inner.adjoint()) * cr(0.5);
    let root_trace: f64 = spectral::eigenvalues_hermitian(&inner)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    Ok((root_trace * root_trace).clamp(0.0, 1.0))
}

/// `⟨ψ|ρ|ψ⟩`, the fidelity between a mixed and a pure state.
pub fn fidelity_pure_mixed(psi: &PureState, rho: &DensityOperator) -> Result<f64> {
    Ok(rho.expectation(psi)?.clamp(0.0, 1.0))
}

/// Maximally entangled state `(1/√d) Σ |i,i⟩`.
pub fn bell_state(d: usize) -> Result<PureState> {
    if d < 2 {
        return Err(QvnError::InvalidParameter(format!("ebit dimension {d} < 2")));
    }
    Ok(ebit(d))
}

/// Like [`bell_state`] but also accepts the trivial dimension 1.
pub(crate) fn ebit(d: usize) -> PureState {
    let mut v = CVector::zeros(d * d);
    let a = cr(1.0 / (d as f64).sqrt());
    for i in 0..d {
        v[i * d + i] = a;
    }
    PureState::from_parts(v, vec![d, d])
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    let p: usize = dims.iter().product();
    if p != len || dims.is_empty() || dims.contains(&0) {
        return Err(QvnError::DimensionMismatch {
            expected: p,
            found: len,
        });
    }
    Ok(())
}

/// Purity of the marginal on `wires`, used to test for product structure.
pub fn marginal_purity(state: &PureState, wires: &[usize]) -> Result<f64> {
    Ok(state.reduced(wires)?.purity())
}
