//! Dense complex linear algebra over multipartite index spaces.
//!
//! A composite space with subsystem dimensions `dims = [d0, d1, ...]` is
//! flattened with subsystem 0 as the most significant digit, so the flat
//! vector of `a ⊗ b` is the ordinary Kronecker product. Every routine in the
//! crate uses this ordering.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QvnError, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for algebraic identities.
pub const TOL: f64 = 1e-10;
/// Tolerance for quantities produced by iterative eigensolvers.
pub const EIG_TOL: f64 = 1e-8;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm()
}

/// Deviation of `m` from being unitary, `max(‖U†U − 1‖, ‖UU† − 1‖)`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let id = identity(m.nrows());
    let a = (m.adjoint() * m - &id).norm();
    let b = (m * m.adjoint() - id).norm();
    a.max(b)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    (m - m.adjoint()).norm()
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().sum()
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

pub fn basis_vector(d: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[k] = cr(1.0);
    v
}

/// Matrix of the permutation that exchanges the two factors of `d1 ⊗ d2`.
pub fn swap_matrix(d1: usize, d2: usize) -> CMatrix {
    let n = d1 * d2;
    let mut m = CMatrix::zeros(n, n);
    for i in 0..d1 {
        for j in 0..d2 {
            m[(j * d1 + i, i * d2 + j)] = cr(1.0);
        }
    }
    m
}

/// Stride-based view of a composite index space.
#[derive(Clone, Debug)]
pub struct Layout {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Layout {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Self {
            dims: dims.to_vec(),
            strides,
            total: dims.iter().product(),
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn check_targets(&self, targets: &[usize]) -> Result<()> {
        for (i, &t) in targets.iter().enumerate() {
            if t >= self.dims.len() {
                return Err(QvnError::SubsystemOutOfRange {
                    index: t,
                    count: self.dims.len(),
                });
            }
            if targets[..i].contains(&t) {
                return Err(QvnError::InvalidParameter(format!(
                    "subsystem {t} listed twice"
                )));
            }
        }
        Ok(())
    }

    pub fn sub_dim(&self, targets: &[usize]) -> usize {
        targets.iter().map(|&t| self.dims[t]).product()
    }

    /// Flat offsets of every local index over `targets` (first target most significant).
    pub fn offsets(&self, targets: &[usize]) -> Vec<usize> {
        let mut offs = vec![0usize];
        for &t in targets {
            let mut next = Vec::with_capacity(offs.len() * self.dims[t]);
            for &o in &offs {
                for k in 0..self.dims[t] {
                    next.push(o + k * self.strides[t]);
                }
            }
            offs = next;
        }
        offs
    }

    /// Subsystems not listed in `targets`, in ascending order.
    pub fn complement(&self, targets: &[usize]) -> Vec<usize> {
        (0..self.dims.len()).filter(|k| !targets.contains(k)).collect()
    }
}

/// Applies `op` (acting on the subsystems `targets`) to a flat amplitude vector in place.
pub fn apply_local(amps: &mut [C64], layout: &Layout, op: &CMatrix, targets: &[usize]) {
    let offs = layout.offsets(targets);
    let bases = layout.offsets(&layout.complement(targets));
    let dt = offs.len();
    debug_assert_eq!(op.nrows(), dt);
    let mut buf = vec![C64::default(); dt];
    for base in bases {
        for (l, &o) in offs.iter().enumerate() {
            buf[l] = amps[base + o];
        }
        for (r, &o) in offs.iter().enumerate() {
            let mut acc = C64::default();
            for (l, b) in buf.iter().enumerate() {
                let m = op[(r, l)];
                if m.re != 0.0 || m.im != 0.0 {
                    acc += m * b;
                }
            }
            amps[base + o] = acc;
        }
    }
}

/// Contracts `bra` against the subsystems `targets`, returning the
/// (unnormalised) vector on the remaining subsystems in their original order.
pub fn contract_bra(amps: &[C64], layout: &Layout, bra: &CVector, targets: &[usize]) -> CVector {
    let offs = layout.offsets(targets);
    let bases = layout.offsets(&layout.complement(targets));
    let conj: Vec<C64> = bra.iter().map(|z| z.conj()).collect();
    CVector::from_iterator(
        bases.len(),
        bases.iter().map(|&b| {
            offs.iter()
                .zip(&conj)
                .map(|(&o, w)| w * amps[b + o])
                .sum::<C64>()
        }),
    )
}

/// Reduced density matrix of a pure vector on the subsystems `keep` (in the given order).
pub fn reduced_from_pure(amps: &[C64], layout: &Layout, keep: &[usize]) -> CMatrix {
    let keep_offs = layout.offsets(keep);
    let rest_offs = layout.offsets(&layout.complement(keep));
    let dk = keep_offs.len();
    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..dk {
        for cix in r..dk {
            let mut acc = C64::default();
            for &t in &rest_offs {
                acc += amps[keep_offs[r] + t] * amps[keep_offs[cix] + t].conj();
            }
            out[(r, cix)] = acc;
            out[(cix, r)] = acc.conj();
        }
    }
    out
}

/// Partial trace of an operator, keeping the subsystems `keep` in the given order.
pub fn partial_trace_matrix(m: &CMatrix, layout: &Layout, keep: &[usize]) -> CMatrix {
    let keep_offs = layout.offsets(keep);
    let rest_offs = layout.offsets(&layout.complement(keep));
    let dk = keep_offs.len();
    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..dk {
        for cix in 0..dk {
            let mut acc = C64::default();
            for &t in &rest_offs {
                acc += m[(keep_offs[r] + t, keep_offs[cix] + t)];
            }
            out[(r, cix)] = acc;
        }
    }
    out
}

/// Conjugation `O ρ O†` with `O` acting on the subsystems `targets` of `m`.
pub fn conjugate_local(m: &CMatrix, layout: &Layout, op: &CMatrix, targets: &[usize]) -> CMatrix {
    // nalgebra stores column-major: flat index = col * D + row, so the flat
    // layout is [col subsystems..., row subsystems...].
    let n = layout.dims().len();
    let mut dims2 = layout.dims().to_vec();
    dims2.extend_from_slice(layout.dims());
    let l2 = Layout::new(&dims2);
    let mut data = m.as_slice().to_vec();
    let rows: Vec<usize> = targets.iter().map(|t| t + n).collect();
    apply_local(&mut data, &l2, op, &rows);
    let conj = op.map(|z| z.conj());
    apply_local(&mut data, &l2, &conj, targets);
    CMatrix::from_column_slice(m.nrows(), m.ncols(), &data)
}

/// Left multiplication `O m` with `O` acting on `targets` (no adjoint on the right).
pub fn left_multiply_local(m: &CMatrix, layout: &Layout, op: &CMatrix, targets: &[usize]) -> CMatrix {
    let n = layout.dims().len();
    let mut dims2 = layout.dims().to_vec();
    dims2.extend_from_slice(layout.dims());
    let l2 = Layout::new(&dims2);
    let mut data = m.as_slice().to_vec();
    let rows: Vec<usize> = targets.iter().map(|t| t + n).collect();
    apply_local(&mut data, &l2, op, &rows);
    CMatrix::from_column_slice(m.nrows(), m.ncols(), &data)
}

/// Reorders subsystems: output subsystem `k` is input subsystem `order[k]`.
pub fn permute_vector(amps: &[C64], layout: &Layout, order: &[usize]) -> (CVector, Vec<usize>) {
    let new_dims: Vec<usize> = order.iter().map(|&k| layout.dims()[k]).collect();
    let offs = layout.offsets(order);
    (
        CVector::from_iterator(offs.len(), offs.iter().map(|&o| amps[o])),
        new_dims,
    )
}

pub fn permute_matrix(m: &CMatrix, layout: &Layout, order: &[usize]) -> (CMatrix, Vec<usize>) {
    let new_dims: Vec<usize> = order.iter().map(|&k| layout.dims()[k]).collect();
    let offs = layout.offsets(order);
    let n = offs.len();
    (CMatrix::from_fn(n, n, |r, cix| m[(offs[r], offs[cix])]), new_dims)
}

/// Partial transpose of `m` on the subsystems `targets`.
pub fn partial_transpose(m: &CMatrix, layout: &Layout, targets: &[usize]) -> CMatrix {
    let toffs = layout.offsets(targets);
    let roffs = layout.offsets(&layout.complement(targets));
    let n = layout.total();
    let mut out = CMatrix::zeros(n, n);
    for &ra in &roffs {
        for &rb in &roffs {
            for &ta in &toffs {
                for &tb in &toffs {
                    out[(ra + tb, rb + ta)] = m[(ra + ta, rb + tb)];
                }
            }
        }
    }
    out
}

/// Embeds an operator on `targets` into the full space (identity elsewhere).
pub fn embed(op: &CMatrix, layout: &Layout, targets: &[usize]) -> CMatrix {
    let n = layout.total();
    let mut out = identity(n);
    let mut data = out.as_slice().to_vec();
    // columns of the identity are basis vectors; act on each column
    let mut dims2 = vec![n];
    dims2.extend_from_slice(layout.dims());
    let l2 = Layout::new(&dims2);
    let shifted: Vec<usize> = targets.iter().map(|t| t + 1).collect();
    apply_local(&mut data, &l2, op, &shifted);
    out.copy_from_slice(&data);
    out
}

/// Number of qubits needed to hold a register of dimension `d`.
pub fn qubits_for(d: usize) -> usize {
    let mut q = 0;
    while (1usize << q) < d {
        q += 1;
    }
    q
}

/// Row-major matrix as nested `[re, im]` pairs; the JSON interchange format.
pub type MatrixPairs = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_pairs(rows: &MatrixPairs) -> Result<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(QvnError::InvalidParameter("matrix rows are empty or ragged".into()));
    }
    Ok(CMatrix::from_fn(n, m, |r, col| c(rows[r][col][0], rows[r][col][1])))
}

pub fn matrix_to_pairs(m: &CMatrix) -> MatrixPairs {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}
