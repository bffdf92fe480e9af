//! Circuit gradients by parameter shift, central-difference oracles, and the
//! chain rule through the network.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::ansatz::{apply_gate, AnsatzSpec, Gate};
use crate::cost::local_cost;
use crate::encoding::{qubit_encode, wavefunction_encode};
use crate::error::{shape_err, Error, Result};
use crate::linalg::CMatrix;
use crate::mlp::{MlpGradients, MlpModel};
use crate::scalar::Real;
use crate::statevector::{StateVector, MAX_DENSE_OBSERVABLE_QUBITS};

/// How the circuit input state is prepared.
#[derive(Clone, Debug, PartialEq)]
pub enum InputRecipe<T> {
    /// `|0...0>`.
    Zero,
    /// Qubit encoding of the given angles.
    QubitEncoded(Vec<T>),
    /// Amplitude encoding of the given vector.
    Wavefunction(Vec<T>),
    /// An explicit state.
    State(StateVector<T>),
}

impl<T: Real> InputRecipe<T> {
    pub fn prepare(&self, n_qubits: usize) -> Result<StateVector<T>> {
        let state = match self {
            InputRecipe::Zero => StateVector::zero_state(n_qubits)?,
            InputRecipe::QubitEncoded(x) => qubit_encode(x)?,
            InputRecipe::Wavefunction(x) => wavefunction_encode(x)?,
            InputRecipe::State(s) => s.clone(),
        };
        if state.n_qubits() != n_qubits {
            return shape_err(format!("input prepares {} qubits, circuit has {n_qubits}", state.n_qubits()));
        }
        Ok(state)
    }
}

/// Which cost the evaluator computes on the output state.
#[derive(Clone, Debug, PartialEq)]
pub enum CostKind<T> {
    Local,
    Observable(CMatrix<T>),
}

/// `theta -> C(theta)` for a fixed input, ansatz and cost. Counts evaluations.
#[derive(Debug)]
pub struct CircuitEvaluator<T> {
    input: StateVector<T>,
    spec: AnsatzSpec,
    cost: CostKind<T>,
    evaluations: AtomicU64,
}

impl<T: Real> Clone for CircuitEvaluator<T> {
    fn clone(&self) -> Self {
        Self {
            input: self.input.clone(),
            spec: self.spec,
            cost: self.cost.clone(),
            evaluations: AtomicU64::new(self.evaluation_count()),
        }
    }
}

impl<T: Real> CircuitEvaluator<T> {
    pub fn new(input: &InputRecipe<T>, spec: AnsatzSpec, cost: CostKind<T>) -> Result<Self> {
        spec.validate()?;
        let input = input.prepare(spec.n_qubits)?;
        if let CostKind::Observable(h) = &cost {
            if spec.n_qubits > MAX_DENSE_OBSERVABLE_QUBITS {
                return Err(Error::Config(format!(
                    "dense observables limited to {MAX_DENSE_OBSERVABLE_QUBITS} qubits"
                )));
            }
            if h.rows() != input.dim() || h.cols() != input.dim() {
                return shape_err("observable dimension does not match the register");
            }
            if !h.is_hermitian(T::tol(1e-10)) {
                return Err(Error::Validation("observable is not Hermitian".into()));
            }
        }
        Ok(Self { input, spec, cost, evaluations: AtomicU64::new(0) })
    }

    /// Local cost on the given input.
    pub fn local(input: &InputRecipe<T>, spec: AnsatzSpec) -> Result<Self> {
        Self::new(input, spec, CostKind::Local)
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn input(&self) -> &StateVector<T> {
        &self.input
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    /// Number of cost evaluations performed so far.
    pub fn evaluation_count(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_count(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    fn cost_of(&self, state: &StateVector<T>) -> T {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        match &self.cost {
            CostKind::Local => local_cost(state),
            CostKind::Observable(h) => state.expectation(h).expect("observable validated at construction"),
        }
    }

    /// Output state `U(theta)|input>`.
    pub fn output_state(&self, theta: &[T]) -> Result<StateVector<T>> {
        self.spec.check_theta(theta)?;
        let mut s = self.input.clone();
        for g in self.spec.gates() {
            apply_gate(&mut s, self.spec.rotation_axis, g, theta);
        }
        Ok(s)
    }

    /// `C(theta)`.
    pub fn evaluate(&self, theta: &[T]) -> Result<T> {
        let s = self.output_state(theta)?;
        Ok(self.cost_of(&s))
    }

    /// States at the start of every layer, plus the per-layer gate lists.
    fn layer_checkpoints(&self, theta: &[T]) -> (Vec<StateVector<T>>, Vec<Gate>) {
        let gates = self.spec.gates();
        let per_layer = gates.len() / self.spec.depth;
        let mut checkpoints = Vec::with_capacity(self.spec.depth);
        let mut s = self.input.clone();
        for layer in gates.chunks(per_layer) {
            checkpoints.push(s.clone());
            for &g in layer {
                apply_gate(&mut s, self.spec.rotation_axis, g, theta);
            }
        }
        (checkpoints, gates)
    }

    /// Cost with `theta[k]` replaced by `theta[k] + delta`, restarting from
    /// the checkpoint of the layer that holds parameter `k`.
    fn shifted_cost(&self, checkpoints: &[StateVector<T>], gates: &[Gate], theta: &[T], k: usize, delta: T) -> T {
        let per_layer = gates.len() / self.spec.depth;
        let (layer, _) = self.spec.param_position(k);
        let mut s = checkpoints[layer].clone();
        let axis = self.spec.rotation_axis;
        for &g in &gates[layer * per_layer..] {
            match g {
                Gate::Rotation { qubit, param } if param == k => {
                    s.apply_rotation(axis, theta[k] + delta, qubit).expect("qubit in range");
                }
                _ => apply_gate(&mut s, axis, g, theta),
            }
        }
        self.cost_of(&s)
    }
}

/// Exact gradient by the two-term shift rule for `exp(-i theta sigma / 2)`
/// gates: `dC/dtheta_k = [C(theta + pi/2 e_k) - C(theta - pi/2 e_k)] / 2`.
///
/// Performs exactly `2p` cost evaluations. Components are computed
/// independently, so the result does not depend on scheduling.
pub fn param_shift_grad<T: Real>(eval: &CircuitEvaluator<T>, theta: &[T]) -> Result<Vec<T>> {
    eval.spec.check_theta(theta)?;
    let (checkpoints, gates) = eval.layer_checkpoints(theta);
    let shift = T::FRAC_PI_2();
    let half = T::lit(0.5);
    Ok((0..theta.len())
        .into_par_iter()
        .map(|k| {
            let plus = eval.shifted_cost(&checkpoints, &gates, theta, k, shift);
            let minus = eval.shifted_cost(&checkpoints, &gates, theta, k, -shift);
            (plus - minus) * half
        })
        .collect())
}

/// Single component of [`param_shift_grad`]; two cost evaluations.
pub fn param_shift_component<T: Real>(eval: &CircuitEvaluator<T>, theta: &[T], k: usize) -> Result<T> {
    eval.spec.check_theta(theta)?;
    if k >= theta.len() {
        return Err(Error::Index(format!("parameter {k} out of range for {} parameters", theta.len())));
    }
    let shift = T::FRAC_PI_2();
    let mut plus = theta.to_vec();
    plus[k] += shift;
    let mut minus = theta.to_vec();
    minus[k] -= shift;
    Ok((eval.evaluate(&plus)? - eval.evaluate(&minus)?) * T::lit(0.5))
}

/// Central differences `[f(theta + s e_k) - f(theta - s e_k)] / 2s`.
pub fn finite_diff_grad<T: Real>(f: impl Fn(&[T]) -> T, theta: &[T], step: T) -> Result<Vec<T>> {
    if step <= T::zero() || !step.is_finite() {
        return Err(Error::Validation(format!("finite-difference step must be positive, got {step}")));
    }
    let mut work = theta.to_vec();
    let two_step = step + step;
    Ok((0..theta.len())
        .map(|k| {
            let orig = work[k];
            work[k] = orig + step;
            let up = f(&work);
            work[k] = orig - step;
            let down = f(&work);
            work[k] = orig;
            (up - down) / two_step
        })
        .collect())
}

/// Result of one chain-rule gradient through network and circuit.
#[derive(Clone, Debug)]
pub struct HybridGradient<T> {
    pub grads: MlpGradients<T>,
    pub theta: Vec<T>,
    pub cost: T,
}

/// `alpha -> theta = G(alpha; phi) -> C(theta)`: forward through the network,
/// parameter-shift gradient of the circuit, backward through the network.
/// Costs `2p + 1` circuit evaluations.
pub fn hybrid_grad<T: Real>(model: &MlpModel<T>, alpha: &[T], eval: &CircuitEvaluator<T>) -> Result<HybridGradient<T>> {
    if model.architecture().output_dim() != eval.param_count() {
        return shape_err(format!(
            "network outputs {} angles, circuit has {} parameters",
            model.architecture().output_dim(),
            eval.param_count()
        ));
    }
    let (theta, cache) = model.forward(alpha)?;
    let cost = eval.evaluate(&theta)?;
    let upstream = param_shift_grad(eval, &theta)?;
    let grads = model.backward(&cache, &upstream)?;
    Ok(HybridGradient { grads, theta, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{make_architecture, DenseLayer, MlpArchitecture, ModelKind};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn one_qubit() -> CircuitEvaluator<f64> {
        CircuitEvaluator::local(&InputRecipe::Zero, AnsatzSpec::new(1, 1).unwrap()).unwrap()
    }

    #[test]
    fn single_qubit_closed_form() {
        // C(theta) = sin^2(theta/2), dC/dtheta = sin(theta)/2.
        let e = one_qubit();
        assert_abs_diff_eq!(e.evaluate(&[1.1]).unwrap(), (0.55f64).sin().powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(param_shift_grad(&e, &[FRAC_PI_2]).unwrap()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(param_shift_grad(&e, &[0.0]).unwrap()[0], 0.0, epsilon = 1e-15);
        for t in [0.3, 2.0, 4.5] {
            assert_abs_diff_eq!(param_shift_grad(&e, &[t]).unwrap()[0], t.sin() / 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn shift_rule_matches_finite_differences() {
        let spec = AnsatzSpec::new(3, 3).unwrap();
        let e = CircuitEvaluator::local(&InputRecipe::QubitEncoded(vec![0.3, -0.2, 1.0]), spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let ps = param_shift_grad(&e, &theta).unwrap();
        let fd = finite_diff_grad(|t| e.evaluate(t).unwrap(), &theta, 1e-5).unwrap();
        for (a, b) in ps.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6);
        }
        // Also against the naive full re-evaluation of each shift.
        for (k, &g) in ps.iter().enumerate() {
            assert_abs_diff_eq!(param_shift_component(&e, &theta, k).unwrap(), g, epsilon = 1e-14);
        }
    }

    #[test]
    fn shift_rule_with_observable_and_other_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = CMatrix::random_hermitian(4, &mut rng);
        for axis in [crate::statevector::Axis::X, crate::statevector::Axis::Z, crate::statevector::Axis::Y] {
            let spec = AnsatzSpec::new(2, 2).unwrap().with_axis(axis);
            let e = CircuitEvaluator::new(
                &InputRecipe::QubitEncoded(vec![0.4, 1.1]),
                spec,
                CostKind::Observable(h.clone()),
            )
            .unwrap();
            let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
            let ps = param_shift_grad(&e, &theta).unwrap();
            let fd = finite_diff_grad(|t| e.evaluate(t).unwrap(), &theta, 1e-5).unwrap();
            for (a, b) in ps.iter().zip(&fd) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn evaluation_budget() {
        let spec = AnsatzSpec::new(3, 2).unwrap();
        let e = CircuitEvaluator::local(&InputRecipe::Zero, spec).unwrap();
        param_shift_grad(&e, &[0.1; 6]).unwrap();
        assert_eq!(e.evaluation_count(), 12);
        e.reset_count();
        let arch = make_architecture(ModelKind::Model1, 3, 2).unwrap();
        let m = MlpModel::init(&arch, &mut ChaCha8Rng::seed_from_u64(0));
        hybrid_grad(&m, &[1.0, 2.0, 3.0, 4.0], &e).unwrap();
        assert_eq!(e.evaluation_count(), 2 * 6 + 1);
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|_: &[f64]| 3.0, &[1.0, 2.0], 1e-3).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let a = [0.5, -2.0, 3.25];
        let g =
            finite_diff_grad(|t: &[f64]| t.iter().zip(&a).map(|(x, y)| x * y).sum(), &[0.1, 0.2, 0.3], 1e-3).unwrap();
        for (x, y) in g.iter().zip(&a) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert!(finite_diff_grad(|_: &[f64]| 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn hybrid_zero_weight_model() {
        // Single layer 4 -> 1 with zero weights: theta = 0, tanh'(0) = 1, so
        // dC/dW = g * alpha, dC/db = g, dC/dalpha = 0, where g = dC/dtheta at 0.
        let e = CircuitEvaluator::local(&InputRecipe::QubitEncoded(vec![0.4]), AnsatzSpec::new(1, 1).unwrap()).unwrap();
        let arch = MlpArchitecture::new(vec![4, 1]).unwrap();
        let m = MlpModel::zeros(&arch);
        let alpha = [0.5, 1.0, -2.0, 3.0];
        let hg = hybrid_grad(&m, &alpha, &e).unwrap();
        assert_eq!(hg.theta, vec![0.0]);
        // C = sin^2(0.4 + theta/2); dC/dtheta at 0 = sin(0.8)/2
        let g = (0.8f64).sin() / 2.0;
        assert_abs_diff_eq!(hg.cost, (0.4f64).sin().powi(2), epsilon = 1e-15);
        for (w, a) in hg.grads.layers[0].weights.iter().zip(&alpha) {
            assert_abs_diff_eq!(*w, g * a, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(hg.grads.layers[0].bias[0], g, epsilon = 1e-14);
        assert!(hg.grads.alpha.iter().all(|&x| x == 0.0));

        // Two-layer zero model: hidden activations are zero, so only the last
        // layer's bias sees a gradient.
        let arch = make_architecture(ModelKind::Model1, 1, 1).unwrap();
        let hg = hybrid_grad(&MlpModel::zeros(&arch), &alpha, &e).unwrap();
        let flat = hg.grads.flatten();
        let last_bias_index = 4 * 10 + 10 + 10;
        for (i, v) in flat.iter().enumerate() {
            if i == last_bias_index {
                assert_abs_diff_eq!(*v, g, epsilon = 1e-14);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn hybrid_at_stationary_point_has_zero_gradient() {
        // Input |0>, theta = 0 is the minimum: every shifted pair is symmetric.
        let e = CircuitEvaluator::local(&InputRecipe::Zero, AnsatzSpec::new(2, 1).unwrap()).unwrap();
        let arch = MlpArchitecture::new(vec![4, 2]).unwrap();
        let m = MlpModel::<f64>::from_layers(
            &arch,
            vec![DenseLayer { in_dim: 4, out_dim: 2, weights: vec![0.0; 8], bias: vec![0.0; 2] }],
        )
        .unwrap();
        let hg = hybrid_grad(&m, &[1.0, 2.0, 3.0, 4.0], &e).unwrap();
        assert!(hg.grads.flatten().iter().all(|&x| x.abs() < 1e-16));
    }

    #[test]
    fn hybrid_dimension_mismatch() {
        let e = one_qubit();
        let arch = make_architecture(ModelKind::Model1, 2, 2).unwrap();
        let m = MlpModel::<f64>::zeros(&arch);
        assert!(matches!(hybrid_grad(&m, &[0.0; 4], &e), Err(Error::Shape(_))));
    }

    #[test]
    fn evaluator_validation() {
        let spec = AnsatzSpec::new(2, 1).unwrap();
        assert!(CircuitEvaluator::<f64>::local(&InputRecipe::QubitEncoded(vec![0.1]), spec).is_err());
        let bad = CMatrix::from_fn(4, 4, |r, c| crate::scalar::c(r as f64, c as f64));
        assert!(matches!(
            CircuitEvaluator::new(&InputRecipe::Zero, spec, CostKind::Observable(bad)),
            Err(Error::Validation(_))
        ));
        assert!(one_qubit().evaluate(&[0.0, 1.0]).is_err());
    }
}
