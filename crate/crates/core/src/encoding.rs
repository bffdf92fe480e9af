//! Classical data to quantum state.

use crate::error::{shape_err, Error, Result};
use crate::scalar::{cr, Real, C};
use crate::statevector::StateVector;

fn check_finite<T: Real>(x: &[T]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("input vector has non-finite entries".into()));
    }
    Ok(())
}

/// Qubit encoding: qubit `j` is prepared in `cos(x_j)|0> + sin(x_j)|1>`.
pub fn qubit_encode<T: Real>(x: &[T]) -> Result<StateVector<T>> {
    if x.is_empty() {
        return Err(Error::Validation("qubit encoding needs at least one value".into()));
    }
    check_finite(x)?;
    let n = x.len();
    // Fail on the qubit cap before allocating.
    StateVector::<T>::zero_state(n)?;
    let factors: Vec<(T, T)> = x.iter().map(|&v| (v.cos(), v.sin())).collect();
    let amplitudes: Vec<C<T>> = (0..1usize << n)
        .map(|idx| {
            let amp = factors
                .iter()
                .enumerate()
                .fold(T::one(), |acc, (j, &(co, s))| acc * if idx >> j & 1 == 1 { s } else { co });
            cr(amp)
        })
        .collect();
    StateVector::from_amplitudes(amplitudes)
}

/// Amplitude encoding: `x / ||x||_2` loaded directly as amplitudes. The
/// length must be `2^n`.
pub fn wavefunction_encode<T: Real>(x: &[T]) -> Result<StateVector<T>> {
    if x.len() < 2 || !x.len().is_power_of_two() {
        return shape_err(format!("wavefunction encoding needs 2^n >= 2 values, got {}", x.len()));
    }
    check_finite(x)?;
    let norm = x.iter().map(|&v| v * v).sum::<T>().sqrt();
    if norm == T::zero() {
        return Err(Error::Validation("cannot encode the zero vector".into()));
    }
    StateVector::from_amplitudes(x.iter().map(|&v| cr(v / norm)).collect())
}

/// The fixed input `(pi/4, ..., pi/4)` used by the training experiments.
pub fn quarter_pi_input<T: Real>(n: usize) -> Vec<T> {
    vec![T::FRAC_PI_4(); n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn qubit_encode_examples() {
        let s = qubit_encode(&[FRAC_PI_4, FRAC_PI_4]).unwrap();
        for a in s.amplitudes() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-15);
        }
        let s = qubit_encode(&[0.0f64]).unwrap();
        assert_eq!(s.amplitudes()[0].re, 1.0);
        assert_eq!(s.amplitudes()[1].re, 0.0);
        let s = qubit_encode(&[FRAC_PI_2]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-12);
        assert!(matches!(qubit_encode::<f64>(&[]), Err(Error::Validation(_))));
        assert!(qubit_encode(&[f64::NAN]).is_err());
    }

    #[test]
    fn qubit_encode_bit_order() {
        // qubit 0 rotated to |1>, qubit 1 left in |0>: index 0b01.
        let s = qubit_encode(&[FRAC_PI_2, 0.0]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn wavefunction_encode_examples() {
        let s = wavefunction_encode(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.amplitudes()[0].re, 1.0);
        let s = wavefunction_encode(&[1.0f64, 1.0, 1.0, 1.0]).unwrap();
        assert!(s.amplitudes().iter().all(|a| (a.re - 0.5).abs() < 1e-15));
        let s = wavefunction_encode(&[3.0f64, 4.0]).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 0.8, epsilon = 1e-15);
        assert!(matches!(wavefunction_encode(&[0.0f64, 0.0]), Err(Error::Validation(_))));
        assert!(matches!(wavefunction_encode(&[1.0f64, 2.0, 3.0]), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn qubit_encode_is_unit_product_state(x in prop::collection::vec(-10.0..10.0f64, 1..8)) {
            let s = qubit_encode(&x).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
            for (j, &v) in x.iter().enumerate() {
                prop_assert!((s.prob_zero(j).unwrap() - v.cos().powi(2)).abs() < 1e-12);
            }
        }

        #[test]
        fn wavefunction_encode_is_unit_and_scale_invariant(
            x in prop::collection::vec(-5.0..5.0f64, 8),
            scale in 0.01..100.0f64,
        ) {
            prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
            let a = wavefunction_encode(&x).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let b = wavefunction_encode(&scaled).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
            prop_assert!(a.norm_of_difference(&b).unwrap() < 1e-12);
        }
    }
}
