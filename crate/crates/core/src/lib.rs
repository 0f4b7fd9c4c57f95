//! Simulator of a stored-program quantum architecture.
//!
//! Programs live in a memory unit as Choi states, are executed by injecting
//! inputs with a binary projective measurement, composed by teleportation,
//! transformed by superchannels, controlled through known eigenpairs, and
//! downloaded over a simulated network. Every protocol is checked against a
//! direct matrix computation in the test suite.
//!
//! Conventions fixed crate-wide:
//! - tensor products are ordinary Kronecker products, subsystem 0 is the most
//!   significant index;
//! - a Choi state has its head (output) at subsystem 0 and tail (input) at 1;
//! - algebraic identities hold to `1e-10`, eigen-decompositions to `1e-8`.

pub mod duality;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod measurement;
pub mod memory;
pub mod network;
pub mod operator;
pub mod qcu;
pub mod qpu;
pub mod random;
pub mod resources;
pub mod spectral;
pub mod state;
pub mod superchannel;

pub use duality::{apply_via_choi, choi_of_channel, choi_of_unitary, kraus_from_choi, ChoiState};
pub use error::{QvnError, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use measurement::{measure_pvm, sample_branch, Branch};
pub use memory::{MemoryUnit, ProgramSlot};
pub use operator::{KrausChannel, Pvm, Unitary};
pub use random::{haar_random_unitary, RandomSource};
pub use spectral::spectral_decompose;
pub use state::{bell_state, fidelity, tensor_product, DensityOperator, PureState, QuantumObject};
pub use superchannel::Superchannel;
