//! Projective measurement with full branch enumeration.

use crate::error::{QvnError, Result};
use crate::linalg::{self, cr};
use crate::operator::Pvm;
use crate::random::RandomSource;
use crate::state::{DensityOperator, PureState};

/// Probabilities below this are treated as impossible outcomes.
pub const ZERO_BRANCH: f64 = 1e-14;

/// One outcome of a measurement. `state` is `None` when the branch has
/// (numerically) zero probability.
#[derive(Clone, Debug)]
pub struct Branch<S> {
    pub probability: f64,
    pub state: Option<S>,
}

impl<S> Branch<S> {
    pub fn is_possible(&self) -> bool {
        self.state.is_some()
    }
}

/// States that can be measured by a PVM acting on some of their subsystems.
pub trait Measurable: Sized + Clone {
    fn subsystem_dims(&self) -> &[usize];
    /// Unnormalised post-measurement state and its probability.
    fn project(&self, projector: &linalg::CMatrix, targets: &[usize]) -> (f64, Self);
    fn rescale(self, p: f64) -> Self;
}

impl Measurable for PureState {
    fn subsystem_dims(&self) -> &[usize] {
        self.dims()
    }

    fn project(&self, projector: &linalg::CMatrix, targets: &[usize]) -> (f64, Self) {
        let mut s = self.clone();
        linalg::apply_local(s.amps_mut(), &self.layout(), projector, targets);
        let p = s.amplitudes().norm_squared();
        (p, s)
    }

    fn rescale(self, p: f64) -> Self {
        let dims = self.dims().to_vec();
        PureState::from_parts(self.amplitudes() / cr(p.sqrt()), dims)
    }
}

impl Measurable for DensityOperator {
    fn subsystem_dims(&self) -> &[usize] {
        self.dims()
    }

    fn project(&self, projector: &linalg::CMatrix, targets: &[usize]) -> (f64, Self) {
        let m = linalg::conjugate_local(self.matrix(), &self.layout(), projector, targets);
        let p = linalg::trace(&m).re;
        (p, DensityOperator::from_parts(m, self.dims().to_vec()))
    }

    fn rescale(self, p: f64) -> Self {
        let dims = self.dims().to_vec();
        DensityOperator::from_parts(self.matrix() / cr(p), dims)
    }
}

/// Applies `pvm` to `targets` and returns every branch in projector order.
pub fn measure_pvm<S: Measurable>(state: &S, pvm: &Pvm, targets: &[usize]) -> Result<Vec<Branch<S>>> {
    let layout = linalg::Layout::new(state.subsystem_dims());
    layout.check_targets(targets)?;
    let d = layout.sub_dim(targets);
    if d != pvm.dim() {
        return Err(QvnError::DimensionMismatch {
            expected: d,
            found: pvm.dim(),
        });
    }
    Ok(pvm
        .projectors()
        .iter()
        .map(|p| {
            let (prob, post) = state.project(p, targets);
            let prob = prob.max(0.0);
            if prob < ZERO_BRANCH {
                Branch {
                    probability: prob,
                    state: None,
                }
            } else {
                Branch {
                    probability: prob,
                    state: Some(post.rescale(prob)),
                }
            }
        })
        .collect())
}

/// Draws one branch according to its probability.
pub fn sample_branch<S: Clone>(branches: &[Branch<S>], rng: &mut RandomSource) -> Result<(usize, S)> {
    let total: f64 = branches.iter().map(|b| b.probability).sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(QvnError::InvalidParameter(format!(
            "branch probabilities sum to {total}"
        )));
    }
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, b) in branches.iter().enumerate() {
        if let Some(s) = &b.state {
            acc += b.probability;
            last = Some((i, s));
            if u < acc {
                return Ok((i, s.clone()));
            }
        }
    }
    // rounding at the top of the cumulative sum
    last.map(|(i, s)| (i, s.clone()))
        .ok_or_else(|| QvnError::InvalidParameter("no possible branch".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpu::bell_basis_pvm;
    use crate::state::{bell_state, fidelity};
    use approx::assert_abs_diff_eq;

    #[test]
    fn plus_in_z_basis() {
        let b = measure_pvm(&PureState::plus(), &Pvm::computational(2), &[0]).unwrap();
        assert_abs_diff_eq!(b[0].probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1].probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(b[0].state.as_ref().unwrap(), &PureState::zero()).unwrap(), 1.0);
        assert_abs_diff_eq!(fidelity(b[1].state.as_ref().unwrap(), &PureState::one()).unwrap(), 1.0);
    }

    #[test]
    fn eigenstate_has_impossible_branch() {
        let b = measure_pvm(&PureState::zero(), &Pvm::computational(2), &[0]).unwrap();
        assert_abs_diff_eq!(b[0].probability, 1.0);
        assert!(!b[1].is_possible());
    }

    #[test]
    fn bell_state_in_bell_basis() {
        let b = measure_pvm(&bell_state(2).unwrap(), &bell_basis_pvm(2), &[0, 1]).unwrap();
        let p: Vec<f64> = b.iter().map(|x| x.probability).collect();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-14);
        assert!(p[1..].iter().all(|&x| x < 1e-14));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(measure_pvm(&PureState::zeros(2), &Pvm::computational(4), &[0]).is_err());
    }

    #[test]
    fn mixed_state_branches() {
        let rho = DensityOperator::maximally_mixed(&[2, 2]);
        let b = measure_pvm(&rho, &Pvm::computational(2), &[1]).unwrap();
        assert_abs_diff_eq!(b[0].probability, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_branch_always_selected() {
        let b = measure_pvm(&PureState::zero(), &Pvm::computational(2), &[0]).unwrap();
        let mut rng = RandomSource::new(1);
        for _ in 0..100 {
            assert_eq!(sample_branch(&b, &mut rng).unwrap().0, 0);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let b = measure_pvm(&PureState::plus(), &Pvm::computational(2), &[0]).unwrap();
        let draw = |seed| {
            let mut rng = RandomSource::new(seed);
            (0..64).map(|_| sample_branch(&b, &mut rng).unwrap().0).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn balanced_sampling_within_three_sigma() {
        // binomial: mean n/2, sigma sqrt(n)/2
        let n = 100_000usize;
        let b = measure_pvm(&PureState::plus(), &Pvm::computational(2), &[0]).unwrap();
        let mut rng = RandomSource::new(2024);
        let ones = (0..n).filter(|_| sample_branch(&b, &mut rng).unwrap().0 == 1).count();
        let sigma = (n as f64).sqrt() / 2.0;
        assert!(((ones as f64) - n as f64 / 2.0).abs() < 3.0 * sigma);
    }
}
