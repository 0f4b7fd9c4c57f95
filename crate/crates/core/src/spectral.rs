//! Eigen-decomposition of Hermitian operators.

use nalgebra::SymmetricEigen;

use crate::error::{QvnError, Result};
use crate::linalg::{self, cr, CMatrix, EIG_TOL};
use crate::state::PureState;

/// One eigenpair of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: f64,
    pub vector: PureState,
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * cr(0.5)
}

pub(crate) fn eigenvalues_hermitian(m: &CMatrix) -> Vec<f64> {
    SymmetricEigen::new(hermitize(m)).eigenvalues.iter().copied().collect()
}

/// Eigenpairs sorted by descending eigenvalue. `dims` labels the eigenvectors.
pub fn spectral_decompose(h: &CMatrix, dims: &[usize]) -> Result<Vec<EigenPair>> {
    let defect = linalg::hermiticity_defect(h);
    if defect > EIG_TOL {
        return Err(QvnError::NotHermitian(defect));
    }
    let d: usize = dims.iter().product();
    if d != h.nrows() {
        return Err(QvnError::DimensionMismatch {
            expected: h.nrows(),
            found: d,
        });
    }
    let eig = SymmetricEigen::new(hermitize(h));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    Ok(order
        .into_iter()
        .map(|k| EigenPair {
            value: eig.eigenvalues[k],
            vector: PureState::from_parts(eig.eigenvectors.column(k).into_owned(), dims.to_vec()),
        })
        .collect())
}

/// Square root of a positive semi-definite operator (negative noise clipped).
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = SymmetricEigen::new(hermitize(m));
    let d = m.nrows();
    let mut out = CMatrix::zeros(d, d);
    for k in 0..d {
        let l = eig.eigenvalues[k].max(0.0).sqrt();
        if l == 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(k);
        out += (v * v.adjoint()) * cr(l);
    }
    out
}

/// Sum `Σ λᵢ |vᵢ⟩⟨vᵢ|`.
pub fn reconstruct(pairs: &[EigenPair]) -> CMatrix {
    let d = pairs.first().map_or(0, |p| p.vector.dim());
    pairs.iter().fold(CMatrix::zeros(d, d), |acc, p| {
        acc + linalg::outer(p.vector.amplitudes(), p.vector.amplitudes()) * cr(p.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates;
    use crate::state::fidelity;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pauli_z_eigenpairs() {
        let pairs = spectral_decompose(gates::z().matrix(), &[2]).unwrap();
        assert_abs_diff_eq!(pairs[0].value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pairs[1].value, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&pairs[0].vector, &PureState::zero()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&pairs[1].vector, &PureState::one()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_x_eigenpairs() {
        let pairs = spectral_decompose(gates::x().matrix(), &[2]).unwrap();
        assert_abs_diff_eq!(fidelity(&pairs[0].vector, &PureState::plus()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&pairs[1].vector, &PureState::minus()).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let m = CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
        assert!(matches!(spectral_decompose(&m, &[2]), Err(QvnError::NotHermitian(_))));
    }

    #[test]
    fn sqrt_squares_back() {
        let m = CMatrix::from_row_slice(2, 2, &[cr(0.7), linalg::c(0.1, 0.2), linalg::c(0.1, -0.2), cr(0.3)]);
        let s = psd_sqrt(&m);
        assert!((&s * &s - m).norm() < 1e-12);
    }
}
