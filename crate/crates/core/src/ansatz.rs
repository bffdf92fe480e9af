//! Layered rotation/entangler parameterization.
//!
//! Each layer `i` applies `R_axis(theta[i*n + j])` to every qubit `j`, then the
//! fixed entangler. Layer 0 acts on the input state first.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;
use crate::statevector::{Axis, StateVector, MAX_QUBITS};

/// Largest register for which [`build_unitary`] materializes a dense matrix.
pub const MAX_UNITARY_QUBITS: usize = 6;

/// Layout of the unparameterized entangling block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Entangler {
    /// `CNOT(j -> j+1)` for `j = 0..n-1`, ascending.
    #[default]
    #[serde(rename = "linear-cnot-ladder")]
    LinearCnotLadder,
    /// No entangler; layers are pure rotations.
    #[serde(rename = "none")]
    Disabled,
}

impl FromStr for Entangler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "linear-cnot-ladder" => Ok(Entangler::LinearCnotLadder),
            "none" => Ok(Entangler::Disabled),
            other => Err(Error::Config(format!("unknown entangler layout '{other}'"))),
        }
    }
}

impl fmt::Display for Entangler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entangler::LinearCnotLadder => "linear-cnot-ladder",
            Entangler::Disabled => "none",
        })
    }
}

/// Shape of the parameterized circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub depth: usize,
    #[serde(default)]
    pub rotation_axis: Axis,
    #[serde(default)]
    pub entangler: Entangler,
}

/// One primitive instruction of the expanded circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// Rotation on `qubit` driven by `theta[param]`.
    Rotation {
        qubit: usize,
        param: usize,
    },
    Cnot {
        control: usize,
        target: usize,
    },
}

impl AnsatzSpec {
    /// Y rotations and a CNOT ladder.
    pub fn new(n_qubits: usize, depth: usize) -> Result<Self> {
        let spec = Self { n_qubits, depth, rotation_axis: Axis::Y, entangler: Entangler::LinearCnotLadder };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_axis(mut self, axis: Axis) -> Self {
        self.rotation_axis = axis;
        self
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("qubit count {} outside 1..={MAX_QUBITS}", self.n_qubits)));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        Ok(())
    }

    /// `n_qubits * depth`.
    pub fn param_count(&self) -> usize {
        self.n_qubits * self.depth
    }

    /// Layer and qubit addressed by flat parameter index `k`.
    pub fn param_position(&self, k: usize) -> (usize, usize) {
        (k / self.n_qubits, k % self.n_qubits)
    }

    pub fn entangler_gates(&self) -> Vec<Gate> {
        match self.entangler {
            Entangler::LinearCnotLadder => {
                (0..self.n_qubits.saturating_sub(1)).map(|j| Gate::Cnot { control: j, target: j + 1 }).collect()
            }
            Entangler::Disabled => Vec::new(),
        }
    }

    /// The full gate list in application order.
    pub fn gates(&self) -> Vec<Gate> {
        let ent = self.entangler_gates();
        let mut out = Vec::with_capacity(self.depth * (self.n_qubits + ent.len()));
        for layer in 0..self.depth {
            out.extend((0..self.n_qubits).map(|q| Gate::Rotation { qubit: q, param: layer * self.n_qubits + q }));
            out.extend_from_slice(&ent);
        }
        out
    }

    fn check_state<T: Real>(&self, state: &StateVector<T>) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return shape_err(format!("state has {} qubits, ansatz expects {}", state.n_qubits(), self.n_qubits));
        }
        Ok(())
    }

    pub(crate) fn check_theta<T>(&self, theta: &[T]) -> Result<()> {
        if theta.len() != self.param_count() {
            return shape_err(format!("{} parameters given, ansatz has {}", theta.len(), self.param_count()));
        }
        Ok(())
    }
}

/// Applies one gate. The caller guarantees indices are in range.
#[inline]
pub(crate) fn apply_gate<T: Real>(state: &mut StateVector<T>, axis: Axis, gate: Gate, theta: &[T]) {
    let r = match gate {
        Gate::Rotation { qubit, param } => state.apply_rotation(axis, theta[param], qubit),
        Gate::Cnot { control, target } => state.apply_cnot(control, target),
    };
    debug_assert!(r.is_ok());
}

/// Applies `U(theta)` to `state` in place.
pub fn apply_ansatz<T: Real>(state: &mut StateVector<T>, spec: &AnsatzSpec, theta: &[T]) -> Result<()> {
    spec.validate()?;
    spec.check_state(state)?;
    spec.check_theta(theta)?;
    for gate in spec.gates() {
        apply_gate(state, spec.rotation_axis, gate, theta);
    }
    Ok(())
}

/// Applies one entangling block.
pub fn apply_entangler<T: Real>(state: &mut StateVector<T>, spec: &AnsatzSpec) -> Result<()> {
    spec.check_state(state)?;
    for gate in spec.entangler_gates() {
        apply_gate(state, spec.rotation_axis, gate, &[]);
    }
    Ok(())
}

/// Dense matrix of `U(theta)`, built column by column from basis states.
pub fn build_unitary<T: Real>(spec: &AnsatzSpec, theta: &[T]) -> Result<CMatrix<T>> {
    spec.validate()?;
    if spec.n_qubits > MAX_UNITARY_QUBITS {
        return Err(Error::Config(format!(
            "dense unitary limited to {MAX_UNITARY_QUBITS} qubits, got {}",
            spec.n_qubits
        )));
    }
    spec.check_theta(theta)?;
    let d = 1usize << spec.n_qubits;
    let mut m = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut s = StateVector::basis_state(spec.n_qubits, col)?;
        apply_ansatz(&mut s, spec, theta)?;
        for (row, &a) in s.amplitudes().iter().enumerate() {
            m[(row, col)] = a;
        }
    }
    Ok(m)
}
