//! Cost functions.
//!
//! [`local_cost`] is the training objective everywhere. The observable forms
//! exist for diagnostics and cross-checks.

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;
use crate::statevector::StateVector;

/// `1 - (1/n) sum_i P(qubit i reads 0)`.
pub fn local_cost<T: Real>(state: &StateVector<T>) -> T {
    let n = state.n_qubits();
    // sum_i P0_i == sum_idx |a_idx|^2 * (number of zero bits in idx)
    let zero_weight: T = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(idx, a)| a.norm_sqr() * T::lit((n - (idx.count_ones() as usize)) as f64))
        .sum();
    T::one() - zero_weight / T::lit(n as f64)
}

/// `<psi|H|psi>` for a Hermitian observable.
pub fn observable_cost<T: Real>(state: &StateVector<T>, h: &CMatrix<T>) -> Result<T> {
    state.expectation(h)
}

/// Mean of `observable_cost` over `(state, observable)` pairs.
pub fn dataset_cost<T: Real>(states: &[StateVector<T>], observables: &[CMatrix<T>]) -> Result<T> {
    if states.is_empty() || observables.is_empty() {
        return Err(Error::Validation("dataset cost needs at least one sample".into()));
    }
    if states.len() != observables.len() {
        return Err(Error::Validation(format!("{} states but {} observables", states.len(), observables.len())));
    }
    let mut total = T::zero();
    for (s, h) in states.iter().zip(observables) {
        total += observable_cost(s, h)?;
    }
    Ok(total / T::lit(states.len() as f64))
}

/// Dense form of the local cost, `I - (1/n) sum_i |0><0|_i (x) I`.
pub fn local_cost_observable<T: Real>(n_qubits: usize) -> Result<CMatrix<T>> {
    let d = 1usize << n_qubits;
    let p0 = CMatrix::basis_projector(2, 0);
    let mut acc = CMatrix::zeros(d, d);
    for q in 0..n_qubits {
        acc = &acc + &CMatrix::embed_single_qubit(&p0, q, n_qubits)?;
    }
    let scaled = acc.scale(crate::scalar::cr(T::one() / T::lit(n_qubits as f64)));
    Ok(&CMatrix::identity(d) - &scaled)
}
