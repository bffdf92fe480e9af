//! Small dense complex matrices.
//!
//! Only what the oracles and diagnostics need: products, adjoints, traces,
//! Kronecker products and qubit embeddings. Matrices are row-major and sized
//! for `d <= 256`; nothing here is tuned for large dimensions.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{shape_err, Result};
use crate::scalar::{c, cr, Real, C};
use crate::statevector::Axis;

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C::new(T::zero(), T::zero()); rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = cr(T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in 0..cols {
                data.push(f(r, col));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<C<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return shape_err(format!("{} entries for a {}x{} matrix", data.len(), rows, cols));
        }
        Ok(Self { rows, cols, data })
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[T]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = cr(v);
        }
        m
    }

    /// Outer product `|y><y|`.
    pub fn projector(y: &[C<T>]) -> Self {
        Self::from_fn(y.len(), y.len(), |r, col| y[r] * y[col].conj())
    }

    /// Projector onto computational basis state `index` of a `d`-dimensional space.
    pub fn basis_projector(d: usize, index: usize) -> Self {
        let mut m = Self::zeros(d, d);
        m[(index, index)] = cr(T::one());
        m
    }

    pub fn pauli(axis: Axis) -> Self {
        let (z, o) = (T::zero(), T::one());
        let data = match axis {
            Axis::X => vec![c(z, z), c(o, z), c(o, z), c(z, z)],
            Axis::Y => vec![c(z, z), c(z, -o), c(z, o), c(z, z)],
            Axis::Z => vec![c(o, z), c(z, z), c(z, z), c(-o, z)],
        };
        Self { rows: 2, cols: 2, data }
    }

    /// Embeds a single-qubit operator acting on `qubit` into an `n`-qubit
    /// space. Qubit `j` is bit `j` of the basis index.
    pub fn embed_single_qubit(op: &Self, qubit: usize, n_qubits: usize) -> Result<Self> {
        if op.rows != 2 || op.cols != 2 {
            return shape_err("single-qubit operator must be 2x2");
        }
        if qubit >= n_qubits {
            return Err(crate::Error::Index(format!("qubit {qubit} out of range for {n_qubits} qubits")));
        }
        let d = 1usize << n_qubits;
        let mask = 1usize << qubit;
        Ok(Self::from_fn(d, d, |r, col| {
            if (r & !mask) != (col & !mask) {
                C::new(T::zero(), T::zero())
            } else {
                op[((r & mask) >> qubit, (col & mask) >> qubit)]
            }
        }))
    }

    /// Random Hermitian matrix with i.i.d. Gaussian entries (GUE up to scale).
    pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let g = Self::random_gaussian(d, rng);
        let half = T::lit(0.5);
        let mut h = g.clone();
        for r in 0..d {
            for col in 0..d {
                h[(r, col)] = (g[(r, col)] + g[(col, r)].conj()).scale(half);
            }
        }
        h
    }

    /// Matrix of i.i.d. standard complex Gaussians (each part has variance 1/2).
    pub fn random_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_fn(d, d, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c(T::lit(re * s), T::lit(im * s))
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn column(&self, col: usize) -> Vec<C<T>> {
        (0..self.rows).map(|r| self[(r, col)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, col| self[(col, r)].conj())
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).fold(C::new(T::zero(), T::zero()), |acc, i| acc + self[(i, i)])
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return shape_err(format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, other.rows, other.cols));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C<T>]) -> Result<Vec<C<T>>> {
        if v.len() != self.cols {
            return shape_err(format!("vector of length {} against {} columns", v.len(), self.cols));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.data[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .fold(C::new(T::zero(), T::zero()), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<C<T>> {
        if self.cols != other.rows || self.rows != other.cols {
            return shape_err("trace of product needs transposed shapes");
        }
        let mut acc = C::new(T::zero(), T::zero());
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(r, k)] * other[(k, r)];
            }
        }
        Ok(acc)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        Self::from_fn(rows, cols, |r, col| {
            self[(r / other.rows, col / other.cols)] * other[(r % other.rows, col % other.cols)]
        })
    }

    /// `self * other - other * self`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.matmul(other)?;
        let ba = other.matmul(self)?;
        Ok(&ab - &ba)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.rows != other.rows || self.cols != other.cols {
            return shape_err("matrix shapes differ");
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| (a - b).norm()).fold(T::zero(), T::max))
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|r| (r..self.cols).all(|col| (self[(r, col)] - self[(col, r)].conj()).norm() <= tol))
    }

    /// Max entry deviation of `M^dagger M` from the identity.
    pub fn unitarity_error(&self) -> T {
        let p = self.adjoint().matmul(self).expect("adjoint shapes always compatible");
        p.max_abs_diff(&Self::identity(self.cols)).expect("square product")
    }
}

impl<T: Real> Index<(usize, usize)> for CMatrix<T> {
    type Output = C<T>;

    #[inline]
    fn index(&self, (r, col): (usize, usize)) -> &C<T> {
        &self.data[r * self.cols + col]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, col): (usize, usize)) -> &mut C<T> {
        &mut self.data[r * self.cols + col]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn add(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix shapes differ");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn sub(self, rhs: Self) -> CMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix shapes differ");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn mul(self, rhs: Self) -> CMatrix<T> {
        self.matmul(rhs).expect("matrix shapes differ")
    }
}

/// Complex inner product `<a|b>`.
pub fn inner<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &y)| acc + x.conj() * y)
}
