//! Standard gate library.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use crate::linalg::{c, cr, CMatrix};
use crate::operator::Unitary;

fn qubit(label: &str, m: [crate::linalg::C64; 4]) -> Unitary {
    Unitary::from_parts(CMatrix::from_row_slice(2, 2, &m), vec![2], Some(label))
}

pub fn identity(d: usize) -> Unitary {
    Unitary::from_parts(CMatrix::identity(d, d), vec![d], Some("I"))
}

pub fn x() -> Unitary {
    qubit("X", [cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn y() -> Unitary {
    qubit("Y", [cr(0.0), c(0.0, -1.0), c(0.0, 1.0), cr(0.0)])
}

pub fn z() -> Unitary {
    qubit("Z", [cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

pub fn h() -> Unitary {
    let s = FRAC_1_SQRT_2;
    qubit("H", [cr(s), cr(s), cr(s), cr(-s)])
}

pub fn s() -> Unitary {
    qubit("S", [cr(1.0), cr(0.0), cr(0.0), c(0.0, 1.0)])
}

pub fn t() -> Unitary {
    qubit("T", [cr(1.0), cr(0.0), cr(0.0), c(FRAC_PI_4.cos(), FRAC_PI_4.sin())])
}

/// `diag(1, e^{iφ})`.
pub fn phase(phi: f64) -> Unitary {
    qubit("P", [cr(1.0), cr(0.0), cr(0.0), c(phi.cos(), phi.sin())])
}

/// `exp(−iθZ/2)`.
pub fn rz(theta: f64) -> Unitary {
    let h = theta / 2.0;
    qubit("Rz", [c(h.cos(), -h.sin()), cr(0.0), cr(0.0), c(h.cos(), h.sin())])
}

/// `[I, X, Y, Z]`.
pub fn paulis() -> [Unitary; 4] {
    [identity(2), x(), y(), z()]
}

/// Controlled version of `u` with the control as the most significant subsystem.
pub fn controlled(u: &Unitary) -> Unitary {
    let d = u.dim();
    let mut m = CMatrix::identity(2 * d, 2 * d);
    m.view_mut((d, d), (d, d)).copy_from(u.matrix());
    let mut dims = vec![2];
    dims.extend_from_slice(u.dims());
    Unitary::from_parts(m, dims, u.label().map(|l| format!("C{l}")).as_deref())
}

pub fn cnot() -> Unitary {
    controlled(&x()).labelled("CNOT")
}

pub fn cz() -> Unitary {
    controlled(&z()).labelled("CZ")
}

pub fn swap() -> Unitary {
    Unitary::from_parts(crate::linalg::swap_matrix(2, 2), vec![2, 2], Some("SWAP"))
}

/// Multi-controlled NOT with `controls` control qubits followed by the target.
pub fn mcx(controls: usize) -> Unitary {
    let n = 1usize << (controls + 1);
    let mut m = CMatrix::identity(n, n);
    m[(n - 2, n - 2)] = cr(0.0);
    m[(n - 1, n - 1)] = cr(0.0);
    m[(n - 2, n - 1)] = cr(1.0);
    m[(n - 1, n - 2)] = cr(1.0);
    let label = if controls == 2 { "Toffoli".to_owned() } else { format!("C{controls}X") };
    Unitary::from_parts(m, vec![2; controls + 1], Some(&label))
}

pub fn toffoli() -> Unitary {
    mcx(2)
}

/// Controlled SWAP (Fredkin) on control ⊗ a ⊗ b with `a`, `b` of dimension `d`.
pub fn cswap(d: usize) -> Unitary {
    let sw = Unitary::from_parts(crate::linalg::swap_matrix(d, d), vec![d, d], Some("SWAP"));
    controlled(&sw).labelled("CSWAP")
}

/// Weyl operator `X^a Z^b` on a qudit of dimension `d`.
pub fn weyl(d: usize, a: usize, b: usize) -> Unitary {
    let w = std::f64::consts::TAU / d as f64;
    let m = CMatrix::from_fn(d, d, |r, col| {
        if r == (col + a) % d {
            let ph = w * (b * col) as f64;
            c(ph.cos(), ph.sin())
        } else {
            cr(0.0)
        }
    });
    Unitary::from_parts(m, vec![d], Some(&format!("W{a}{b}")))
}

/// Byproduct operators for Bell measurements on dimension `d`: Paulis `[I,X,Y,Z]`
/// for qubits, Weyl operators indexed `a·d + b` otherwise.
pub fn byproducts(d: usize) -> Vec<Unitary> {
    if d == 2 {
        paulis().to_vec()
    } else {
        (0..d * d).map(|i| weyl(d, i / d, i % d)).collect()
    }
}

/// Looks up a named gate.
pub fn by_name(name: &str) -> Option<Unitary> {
    Some(match name.to_ascii_uppercase().as_str() {
        "I" | "ID" => identity(2),
        "X" => x(),
        "Y" => y(),
        "Z" => z(),
        "H" => h(),
        "S" => s(),
        "T" => t(),
        "CNOT" | "CX" => cnot(),
        "CZ" => cz(),
        "SWAP" => swap(),
        "TOFFOLI" | "CCX" => toffoli(),
        _ => return None,
    })
}
