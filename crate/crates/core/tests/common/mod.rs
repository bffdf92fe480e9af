//! Oracles shared by the integration and acceptance targets.
#![allow(dead_code)]

use plateau::gradients::{finite_diff_grad, CircuitEvaluator};
use plateau::mlp::MlpModel;
use rand::Rng;

pub const TAU: f64 = std::f64::consts::TAU;

pub fn uniform_angles(rng: &mut impl Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.gen_range(0.0..TAU)).collect()
}

pub fn max_abs_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max_i |a_i - b_i| / max_i |b_i|`, with `b` the oracle.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
    max_abs_err(a, b) / scale
}

/// `(phi, alpha)` flattened: network parameters then the input vector.
pub fn joint_params(model: &MlpModel<f64>, alpha: &[f64]) -> Vec<f64> {
    let mut v = model.flat_params();
    v.extend_from_slice(alpha);
    v
}

fn split_joint(model: &MlpModel<f64>, params: &[f64]) -> (MlpModel<f64>, Vec<f64>) {
    let p = model.param_count();
    let mut m = model.clone();
    m.set_flat_params(&params[..p]).unwrap();
    (m, params[p..].to_vec())
}

/// Central differences of `sum_i w_i theta_i(phi, alpha)` over `(phi, alpha)`.
pub fn network_fd(model: &MlpModel<f64>, alpha: &[f64], weights: &[f64], step: f64) -> Vec<f64> {
    let f = |params: &[f64]| {
        let (m, a) = split_joint(model, params);
        let (theta, _) = m.forward(&a).unwrap();
        theta.iter().zip(weights).map(|(t, w)| t * w).sum::<f64>()
    };
    finite_diff_grad(f, &joint_params(model, alpha), step).unwrap()
}

/// Central differences of `C(G(alpha; phi))` over `(phi, alpha)`.
pub fn hybrid_fd(model: &MlpModel<f64>, alpha: &[f64], eval: &CircuitEvaluator<f64>, step: f64) -> Vec<f64> {
    let f = |params: &[f64]| {
        let (m, a) = split_joint(model, params);
        let (theta, _) = m.forward(&a).unwrap();
        eval.evaluate(&theta).unwrap()
    };
    finite_diff_grad(f, &joint_params(model, alpha), step).unwrap()
}
