//! Seeded randomness and random test inputs.
//!
//! Every random draw in the simulator goes through [`RandomSource`], which
//! wraps ChaCha20. Identical seeds reproduce identical transcripts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{QvnError, Result};
use crate::linalg::{self, c, cr, CMatrix, CVector};
use crate::operator::{KrausChannel, Unitary};
use crate::state::{DensityOperator, PureState};

/// Name of the generator backing [`RandomSource`].
pub const GENERATOR: &str = "chacha20";

#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha20Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this source's seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.wrapping_add(1));
        Self {
            seed: self.seed,
            rng,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bit(&mut self) -> bool {
        self.rng.random::<bool>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn complex_normal(&mut self) -> linalg::C64 {
        c(self.normal(), self.normal())
    }
}

/// Haar-random unitary via QR of a complex Gaussian matrix with the phase fix.
pub fn haar_random_unitary(d: usize, rng: &mut RandomSource) -> Result<Unitary> {
    if d < 2 {
        return Err(QvnError::InvalidParameter(format!("Haar dimension {d} < 2")));
    }
    Ok(Unitary::from_parts(haar_matrix(d, rng), vec![d], None))
}

pub(crate) fn haar_matrix(d: usize, rng: &mut RandomSource) -> CMatrix {
    if d == 1 {
        let phi = std::f64::consts::TAU * rng.uniform();
        return CMatrix::from_element(1, 1, c(phi.cos(), phi.sin()));
    }
    let g = CMatrix::from_fn(d, d, |_, _| rng.complex_normal() * cr(std::f64::consts::FRAC_1_SQRT_2));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        let rk = r[(k, k)];
        let ph = if rk.norm() > 0.0 { rk / cr(rk.norm()) } else { cr(1.0) };
        for i in 0..d {
            q[(i, k)] *= ph;
        }
    }
    q
}

/// Haar-random unitary carrying explicit subsystem dims.
pub fn haar_unitary_on(dims: &[usize], rng: &mut RandomSource) -> Unitary {
    let d = dims.iter().product();
    Unitary::from_parts(haar_matrix(d, rng), dims.to_vec(), None)
}

/// Haar-random pure state.
pub fn random_state(dims: &[usize], rng: &mut RandomSource) -> PureState {
    let d: usize = dims.iter().product();
    let v = CVector::from_fn(d, |_, _| rng.complex_normal());
    let n = v.norm();
    PureState::from_parts(v / cr(n), dims.to_vec())
}

/// Random full-rank density operator (Ginibre ensemble).
pub fn random_density(dims: &[usize], rng: &mut RandomSource) -> DensityOperator {
    let d: usize = dims.iter().product();
    let g = CMatrix::from_fn(d, d, |_, _| rng.complex_normal());
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m);
    DensityOperator::from_parts(m / tr, dims.to_vec())
}

/// Random channel of the given Kraus rank from a Haar isometry.
pub fn random_channel(d_in: usize, d_out: usize, rank: usize, rng: &mut RandomSource) -> Result<KrausChannel> {
    if rank == 0 || d_in == 0 || d_out == 0 {
        return Err(QvnError::InvalidParameter("channel dims and rank must be positive".into()));
    }
    let big = d_out * rank;
    if big < d_in {
        return Err(QvnError::InvalidParameter(format!(
            "rank {rank} too small for {d_in} -> {d_out}"
        )));
    }
    let n = big.max(d_in);
    let u = haar_matrix(n, rng);
    // isometry columns 0..d_in, rows split into rank blocks of d_out
    let ops = (0..rank)
        .map(|k| CMatrix::from_fn(d_out, d_in, |r, col| u[(k * d_out + r, col)]))
        .collect();
    KrausChannel::with_tolerance(ops, 1e-9)
}
