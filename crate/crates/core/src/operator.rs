//! Unitaries, Kraus channels and projective measurements.

use serde::{Deserialize, Serialize};

use crate::error::{QvnError, Result};
use crate::linalg::{self, cr, CMatrix, CVector, TOL};
use crate::state::{DensityOperator, PureState};

/// A unitary operator with optional subsystem structure and label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Unitary {
    matrix: CMatrix,
    dims: Vec<usize>,
    label: Option<String>,
}

impl Unitary {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        Self::with_dims(matrix, vec![d])
    }

    pub fn with_dims(matrix: CMatrix, dims: Vec<usize>) -> Result<Self> {
        let defect = linalg::unitarity_defect(&matrix);
        if defect > TOL {
            return Err(QvnError::NotUnitary(defect));
        }
        let d: usize = dims.iter().product();
        if d != matrix.nrows() {
            return Err(QvnError::DimensionMismatch {
                expected: matrix.nrows(),
                found: d,
            });
        }
        Ok(Self {
            matrix,
            dims,
            label: None,
        })
    }

    pub(crate) fn from_parts(matrix: CMatrix, dims: Vec<usize>, label: Option<&str>) -> Self {
        Self {
            matrix,
            dims,
            label: label.map(str::to_owned),
        }
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
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

    pub fn adjoint(&self) -> Self {
        Self::from_parts(
            self.matrix.adjoint(),
            self.dims.clone(),
            self.label.as_ref().map(|l| format!("{l}†")).as_deref(),
        )
    }

    pub fn transpose(&self) -> Self {
        Self::from_parts(self.matrix.transpose(), self.dims.clone(), None)
    }

    pub fn conjugate(&self) -> Self {
        Self::from_parts(self.matrix.map(|z| z.conj()), self.dims.clone(), None)
    }

    /// Operator product `self · other` (apply `other` first).
    pub fn then(&self, later: &Unitary) -> Result<Self> {
        if self.dim() != later.dim() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dim(),
                found: later.dim(),
            });
        }
        let label = match (later.label(), self.label()) {
            (Some(a), Some(b)) => Some(format!("{a}·{b}")),
            _ => None,
        };
        Ok(Self::from_parts(
            later.matrix() * &self.matrix,
            self.dims.clone(),
            label.as_deref(),
        ))
    }

    pub fn tensor(&self, other: &Unitary) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::from_parts(linalg::kron(&self.matrix, &other.matrix), dims, None)
    }

    pub fn apply(&self, psi: &PureState) -> Result<PureState> {
        if psi.dim() != self.dim() {
            return Err(QvnError::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        Ok(PureState::from_parts(
            &self.matrix * psi.amplitudes(),
            psi.dims().to_vec(),
        ))
    }

    pub fn with_phase(&self, phase: f64) -> Self {
        Self::from_parts(
            &self.matrix * linalg::c(phase.cos(), phase.sin()),
            self.dims.clone(),
            self.label.as_deref(),
        )
    }

    /// Operator-norm distance minimised over a global phase (qubit or qudit).
    pub fn phase_distance(&self, other: &Unitary) -> f64 {
        let w = self.matrix.adjoint() * other.matrix();
        let phases: Vec<f64> = nalgebra::Schur::new(w.clone())
            .eigenvalues()
            .map(|ev| ev.iter().map(|z| z.arg()).collect())
            .unwrap_or_else(|| vec![0.0]);
        arc_radius(&phases)
    }
}

/// Smallest `max_k |e^{iθ_k} − e^{iφ}|` over φ: twice the sine of half the
/// minimal enclosing arc half-width.
fn arc_radius(phases: &[f64]) -> f64 {
    use std::f64::consts::TAU;
    let mut p: Vec<f64> = phases.iter().map(|x| x.rem_euclid(TAU)).collect();
    p.sort_by(f64::total_cmp);
    if p.len() <= 1 {
        return 0.0;
    }
    let mut max_gap = TAU - (p[p.len() - 1] - p[0]);
    for w in p.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    let arc = TAU - max_gap;
    2.0 * (arc / 4.0).sin()
}

/// A CPTP map in Kraus form; operators map `d_in` to `d_out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausChannel {
    ops: Vec<CMatrix>,
    d_in: usize,
    d_out: usize,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        Self::with_tolerance(ops, TOL)
    }

    pub(crate) fn with_tolerance(ops: Vec<CMatrix>, tol: f64) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| QvnError::InvalidParameter("channel needs at least one Kraus operator".into()))?;
        let (d_out, d_in) = first.shape();
        let mut sum = CMatrix::zeros(d_in, d_in);
        for k in &ops {
            if k.shape() != (d_out, d_in) {
                return Err(QvnError::DimensionMismatch {
                    expected: d_out * d_in,
                    found: k.nrows() * k.ncols(),
                });
            }
            sum += k.adjoint() * k;
        }
        let defect = (sum - linalg::identity(d_in)).norm();
        if defect > tol {
            return Err(QvnError::NotTracePreserving(defect));
        }
        Ok(Self { ops, d_in, d_out })
    }

    pub fn from_unitary(u: &Unitary) -> Self {
        Self {
            ops: vec![u.matrix().clone()],
            d_in: u.dim(),
            d_out: u.dim(),
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            ops: vec![linalg::identity(d)],
            d_in: d,
            d_out: d,
        }
    }

    /// Qubit depolarizing channel `ρ ↦ (1−p)ρ + p·1/2`.
    pub fn depolarizing(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QvnError::InvalidParameter(format!("depolarizing p={p}")));
        }
        let id = (1.0 - 0.75 * p).sqrt();
        let w = (p / 4.0).sqrt();
        let paulis = crate::gates::paulis();
        Ok(Self {
            ops: vec![
                paulis[0].matrix() * cr(id),
                paulis[1].matrix() * cr(w),
                paulis[2].matrix() * cr(w),
                paulis[3].matrix() * cr(w),
            ],
            d_in: 2,
            d_out: 2,
        })
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn rank(&self) -> usize {
        self.ops.len()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    /// `Σ Kᵢ X Kᵢ†` on an arbitrary (not necessarily Hermitian) matrix.
    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        self.ops
            .iter()
            .fold(CMatrix::zeros(self.d_out, self.d_out), |acc, k| acc + k * x * k.adjoint())
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.d_in {
            return Err(QvnError::DimensionMismatch {
                expected: self.d_in,
                found: rho.dim(),
            });
        }
        let dims = if self.d_in == self.d_out {
            rho.dims().to_vec()
        } else {
            vec![self.d_out]
        };
        Ok(DensityOperator::from_parts(self.apply_matrix(rho.matrix()), dims))
    }

    /// Sequential composition: `self` first, then `later`.
    pub fn then(&self, later: &KrausChannel) -> Result<Self> {
        if self.d_out != later.d_in {
            return Err(QvnError::DimensionMismatch {
                expected: self.d_out,
                found: later.d_in,
            });
        }
        let ops = later
            .ops
            .iter()
            .flat_map(|b| self.ops.iter().map(move |a| b * a))
            .collect();
        Ok(Self {
            ops,
            d_in: self.d_in,
            d_out: later.d_out,
        })
    }
}

/// Projective measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pvm {
    projectors: Vec<CMatrix>,
}

impl Pvm {
    pub fn new(projectors: Vec<CMatrix>) -> Result<Self> {
        let d = projectors
            .first()
            .ok_or_else(|| QvnError::InvalidPvm("no projectors".into()))?
            .nrows();
        let mut sum = CMatrix::zeros(d, d);
        for (i, p) in projectors.iter().enumerate() {
            if p.shape() != (d, d) {
                return Err(QvnError::InvalidPvm(format!("projector {i} has wrong shape")));
            }
            if (p * p - p).norm() > TOL {
                return Err(QvnError::InvalidPvm(format!("projector {i} is not idempotent")));
            }
            if linalg::hermiticity_defect(p) > TOL {
                return Err(QvnError::InvalidPvm(format!("projector {i} is not Hermitian")));
            }
            for (j, q) in projectors.iter().enumerate().skip(i + 1) {
                if (p * q).norm() > TOL {
                    return Err(QvnError::InvalidPvm(format!("projectors {i} and {j} overlap")));
                }
            }
            sum += p;
        }
        if (sum - linalg::identity(d)).norm() > TOL {
            return Err(QvnError::InvalidPvm("projectors do not sum to identity".into()));
        }
        Ok(Self { projectors })
    }

    /// Rank-one PVM from an orthonormal basis.
    pub fn from_basis(vectors: &[CVector]) -> Result<Self> {
        Self::new(vectors.iter().map(|v| linalg::outer(v, v)).collect())
    }

    pub fn computational(d: usize) -> Self {
        Self {
            projectors: (0..d)
                .map(|k| {
                    let v = linalg::basis_vector(d, k);
                    linalg::outer(&v, &v)
                })
                .collect(),
        }
    }

    /// Binary measurement `{|ψ⟩⟨ψ|, 1 − |ψ⟩⟨ψ|}`.
    pub fn binary(psi: &PureState) -> Self {
        let p = linalg::outer(psi.amplitudes(), psi.amplitudes());
        let q = linalg::identity(psi.dim()) - &p;
        Self {
            projectors: vec![p, q],
        }
    }

    /// Qubit basis measurement along a Pauli axis: 'X', 'Y' or 'Z'.
    pub fn pauli_basis(axis: char) -> Result<Self> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let basis = match axis {
            'Z' => [vec![cr(1.0), cr(0.0)], vec![cr(0.0), cr(1.0)]],
            'X' => [vec![cr(s), cr(s)], vec![cr(s), cr(-s)]],
            'Y' => [vec![cr(s), linalg::c(0.0, s)], vec![cr(s), linalg::c(0.0, -s)]],
            other => return Err(QvnError::InvalidParameter(format!("unknown Pauli axis {other}"))),
        };
        Self::from_basis(&basis.map(CVector::from_vec))
    }

    /// Product of single-qubit Pauli-basis measurements (first axis on subsystem 0).
    pub fn pauli_product(axes: &[char]) -> Result<Self> {
        let mut projs = vec![CMatrix::identity(1, 1)];
        for &a in axes {
            let single = Self::pauli_basis(a)?;
            projs = projs
                .iter()
                .flat_map(|p| single.projectors.iter().map(move |q| linalg::kron(p, q)))
                .collect();
        }
        Ok(Self { projectors: projs })
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn dim(&self) -> usize {
        self.projectors[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }
}
