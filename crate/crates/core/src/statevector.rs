//! Dense pure-state simulator.
//!
//! Qubit `j` is bit `j` (least significant first) of the amplitude index, so
//! `|10>` written as `|q1 q0>` lives at index 2.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{c, cr, Real, C};

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 14;

/// Largest register for which dense observables are accepted.
pub const MAX_DENSE_OBSERVABLE_QUBITS: usize = 8;

/// Pauli rotation axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Axis {
    X,
    #[default]
    Y,
    Z,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "X" => Ok(Axis::X),
            "Y" => Ok(Axis::Y),
            "Z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown rotation axis '{other}'"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "X",
            Axis::Y => "Y",
            Axis::Z => "Z",
        };
        f.write_str(s)
    }
}

/// A 2x2 unitary, row-major: `[[m00, m01], [m10, m11]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateMatrix2<T> {
    m: [[C<T>; 2]; 2],
}

impl<T: Real> GateMatrix2<T> {
    /// Validates unitarity (`M^dagger M = I` within `1e-12`).
    pub fn new(m: [[C<T>; 2]; 2]) -> Result<Self> {
        let g = Self { m };
        let err = g.unitarity_error();
        if err > T::tol(1e-12) {
            return Err(Error::Validation(format!("gate is not unitary (deviation {err})")));
        }
        Ok(g)
    }

    fn unchecked(m: [[C<T>; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let (z, o) = (cr(T::zero()), cr(T::one()));
        Self::unchecked([[o, z], [z, o]])
    }

    pub fn pauli_x() -> Self {
        let (z, o) = (cr(T::zero()), cr(T::one()));
        Self::unchecked([[z, o], [o, z]])
    }

    pub fn hadamard() -> Self {
        let h = cr(T::FRAC_1_SQRT_2());
        Self::unchecked([[h, h], [h, -h]])
    }

    /// `exp(-i theta sigma / 2)` for the given Pauli axis.
    pub fn rotation(axis: Axis, theta: T) -> Self {
        let half = theta * T::lit(0.5);
        let (s, co) = half.sin_cos();
        let z = T::zero();
        match axis {
            Axis::X => Self::unchecked([[c(co, z), c(z, -s)], [c(z, -s), c(co, z)]]),
            Axis::Y => Self::unchecked([[c(co, z), c(-s, z)], [c(s, z), c(co, z)]]),
            Axis::Z => Self::unchecked([[c(co, -s), c(z, z)], [c(z, z), c(co, s)]]),
        }
    }

    pub fn ry(theta: T) -> Self {
        Self::rotation(Axis::Y, theta)
    }

    pub fn entries(&self) -> [[C<T>; 2]; 2] {
        self.m
    }

    pub fn to_matrix(&self) -> CMatrix<T> {
        CMatrix::from_rows(2, 2, vec![self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1]]).expect("2x2")
    }

    pub fn unitarity_error(&self) -> T {
        self.to_matrix().unitarity_error()
    }
}

/// Amplitudes of a pure `n`-qubit state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StateVector<T> {
    n_qubits: usize,
    amplitudes: Vec<C<T>>,
}

fn check_qubit_count(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Config(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    Ok(())
}

impl<T: Real> StateVector<T> {
    /// `|0...0>` on `n` qubits.
    pub fn zero_state(n: usize) -> Result<Self> {
        check_qubit_count(n)?;
        let mut amplitudes = vec![cr(T::zero()); 1 << n];
        amplitudes[0] = cr(T::one());
        Ok(Self { n_qubits: n, amplitudes })
    }

    /// Wraps raw amplitudes. The length must be a power of two; the norm is
    /// not checked so that unnormalized vectors can be used in linearity tests.
    pub fn from_amplitudes(amplitudes: Vec<C<T>>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return shape_err(format!("amplitude count {len} is not a power of two >= 2"));
        }
        let n = len.trailing_zeros() as usize;
        check_qubit_count(n)?;
        Ok(Self { n_qubits: n, amplitudes })
    }

    /// Basis state `|index>`.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        check_qubit_count(n)?;
        if index >= 1 << n {
            return Err(Error::Index(format!("basis index {index} out of range for {n} qubits")));
        }
        let mut amplitudes = vec![cr(T::zero()); 1 << n];
        amplitudes[index] = cr(T::one());
        Ok(Self { n_qubits: n, amplitudes })
    }

    #[inline]
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amplitudes
    }

    pub fn norm(&self) -> T {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::Index(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
        }
        Ok(())
    }

    /// Applies a 2x2 gate to `target`.
    pub fn apply_single_qubit(&mut self, gate: &GateMatrix2<T>, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let [[m00, m01], [m10, m11]] = gate.m;
        self.for_each_pair(target, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = m00 * x0 + m01 * x1;
            *a1 = m10 * x0 + m11 * x1;
        });
        Ok(())
    }

    /// Applies `RY(theta) = exp(-i theta Y / 2)`. Real coefficients, so this
    /// is cheaper than the general kernel.
    pub fn apply_ry(&mut self, theta: T, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let (s, co) = (theta * T::lit(0.5)).sin_cos();
        self.for_each_pair(target, |a0, a1| {
            let (x0, x1) = (*a0, *a1);
            *a0 = Complex::new(co * x0.re - s * x1.re, co * x0.im - s * x1.im);
            *a1 = Complex::new(s * x0.re + co * x1.re, s * x0.im + co * x1.im);
        });
        Ok(())
    }

    /// Applies `exp(-i theta sigma / 2)` about `axis`.
    pub fn apply_rotation(&mut self, axis: Axis, theta: T, target: usize) -> Result<()> {
        match axis {
            Axis::Y => self.apply_ry(theta, target),
            _ => self.apply_single_qubit(&GateMatrix2::rotation(axis, theta), target),
        }
    }

    /// Flips `target` on every basis state whose `control` bit is set.
    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(Error::Index(format!("control and target are both qubit {control}")));
        }
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amplitudes.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amplitudes.swap(i, i | tmask);
            }
        }
        Ok(())
    }

    #[inline]
    fn for_each_pair(&mut self, target: usize, mut f: impl FnMut(&mut C<T>, &mut C<T>)) {
        let stride = 1usize << target;
        for block in self.amplitudes.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                f(a0, a1);
            }
        }
    }

    /// Probability of reading `0` on `qubit`.
    pub fn prob_zero(&self, qubit: usize) -> Result<T> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self.amplitudes.iter().enumerate().filter(|(i, _)| i & mask == 0).map(|(_, a)| a.norm_sqr()).sum())
    }

    /// Probability of reading `1` on `qubit`, summed independently of
    /// [`prob_zero`](Self::prob_zero).
    pub fn prob_one(&self, qubit: usize) -> Result<T> {
        self.check_qubit(qubit)?;
        let mask = 1usize << qubit;
        Ok(self.amplitudes.iter().enumerate().filter(|(i, _)| i & mask != 0).map(|(_, a)| a.norm_sqr()).sum())
    }

    /// Euclidean norm of `self - other`.
    pub fn norm_of_difference(&self, other: &Self) -> Result<T> {
        if self.dim() != other.dim() {
            return shape_err(format!("state dimensions {} and {} differ", self.dim(), other.dim()));
        }
        Ok(self.amplitudes.iter().zip(&other.amplitudes).map(|(&a, &b)| (a - b).norm_sqr()).sum::<T>().sqrt())
    }

    /// `<psi|H|psi>` for a dense Hermitian `H`.
    pub fn expectation(&self, h: &CMatrix<T>) -> Result<T> {
        if self.n_qubits > MAX_DENSE_OBSERVABLE_QUBITS {
            return Err(Error::Config(format!("dense observables limited to {MAX_DENSE_OBSERVABLE_QUBITS} qubits")));
        }
        if h.rows() != self.dim() || h.cols() != self.dim() {
            return shape_err(format!("observable is {}x{}, state dimension is {}", h.rows(), h.cols(), self.dim()));
        }
        if !h.is_hermitian(T::tol(1e-10)) {
            return Err(Error::Validation("observable is not Hermitian".into()));
        }
        let hpsi = h.mul_vec(&self.amplitudes)?;
        let value = crate::linalg::inner(&self.amplitudes, &hpsi);
        if value.im.abs() > T::tol(1e-10) {
            return Err(Error::Validation(format!("expectation has imaginary part {}", value.im)));
        }
        Ok(value.re)
    }
}
