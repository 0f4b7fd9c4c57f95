//! Fixtures shared by the benchmarks. Inputs are seeded so runs compare.

use qvn_core::random::{haar_random_unitary, random_state};
use qvn_core::{PureState, RandomSource, Unitary};

pub const SEED: u64 = 0x5eed;

/// A seeded Haar unitary and input state of dimension `d`.
pub fn unitary_and_state(d: usize) -> (Unitary, PureState) {
    let mut rng = RandomSource::new(SEED ^ d as u64);
    let u = haar_random_unitary(d, &mut rng).expect("dimension is positive");
    (u, random_state(&[d], &mut rng))
}
