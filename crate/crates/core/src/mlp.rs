//! Feed-forward tanh network mapping the trainable input vector `alpha` to
//! circuit angles, with hand-written reverse-mode gradients.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

/// Width of the network input (`alpha`) in every preset architecture.
pub const ALPHA_DIM: usize = 4;

/// Preset network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `4 -> 10 -> p`
    Model1,
    /// `4 -> 30 -> p`
    Model2,
    /// `4 -> 10 -> 20 -> p`
    Model3,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Model1, ModelKind::Model2, ModelKind::Model3];

    fn hidden(self) -> &'static [usize] {
        match self {
            ModelKind::Model1 => &[10],
            ModelKind::Model2 => &[30],
            ModelKind::Model3 => &[10, 20],
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model1" => Ok(ModelKind::Model1),
            "model2" => Ok(ModelKind::Model2),
            "model3" => Ok(ModelKind::Model3),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Model1 => "model1",
            ModelKind::Model2 => "model2",
            ModelKind::Model3 => "model3",
        })
    }
}

/// Layer widths from input to output; tanh follows every affine layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub layer_dims: Vec<usize>,
}

impl MlpArchitecture {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::Config("architecture needs an input and an output width".into()));
        }
        if layer_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(Self { layer_dims })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated non-empty")
    }
}

/// Preset architecture whose output width is `n * depth`.
pub fn make_architecture(kind: ModelKind, n_qubits: usize, depth: usize) -> Result<MlpArchitecture> {
    if n_qubits == 0 || depth == 0 {
        return Err(Error::Config("qubit count and depth must be positive".into()));
    }
    let mut dims = vec![ALPHA_DIM];
    dims.extend_from_slice(kind.hidden());
    dims.push(n_qubits * depth);
    MlpArchitecture::new(dims)
}

/// Affine layer; `weights` is `out x in`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseLayer<T> {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![T::zero(); in_dim * out_dim], bias: vec![T::zero(); out_dim] }
    }

    fn affine(&self, x: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpModel<T> {
    arch: MlpArchitecture,
    layers: Vec<DenseLayer<T>>,
    /// Bumped by every update; ties forward caches to the parameters that
    /// produced them.
    #[serde(skip)]
    revision: u64,
}

/// Activations saved by [`MlpModel::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    revision: u64,
    /// `activations[0]` is the input; `activations[l+1]` is the tanh output of layer `l`.
    activations: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.activations.last().expect("cache always holds input and output")
    }
}

/// Gradients for every weight, bias and input entry.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGradients<T> {
    pub layers: Vec<DenseLayer<T>>,
    pub alpha: Vec<T>,
}

impl<T: Real> MlpGradients<T> {
    /// All entries flattened in the same order as [`MlpModel::flat_params`],
    /// followed by `alpha`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.alpha);
        out
    }
}

impl<T: Real> MlpModel<T> {
    /// Model with every parameter zero.
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layers = arch.layer_dims.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self { arch: arch.clone(), layers, revision: 0 }
    }

    /// Weights and biases drawn i.i.d. from `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let mut model = Self::zeros(arch);
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.in_dim as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = T::lit(dist.sample(rng));
            }
        }
        model
    }

    /// Builds a model from explicit layers, checking them against `arch`.
    pub fn from_layers(arch: &MlpArchitecture, layers: Vec<DenseLayer<T>>) -> Result<Self> {
        let model = Self { arch: arch.clone(), layers, revision: 0 };
        model.validate()?;
        Ok(model)
    }

    /// Checks layer shapes against the architecture (used after deserializing).
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() + 1 != self.arch.layer_dims.len() {
            return shape_err("layer count does not match architecture");
        }
        for (l, w) in self.layers.iter().zip(self.arch.layer_dims.windows(2)) {
            if l.in_dim != w[0] || l.out_dim != w[1] || l.weights.len() != w[0] * w[1] || l.bias.len() != w[1] {
                return shape_err(format!("layer {}x{} does not match architecture", l.out_dim, l.in_dim));
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weights then bias, layer by layer.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return shape_err(format!("{} values for {} parameters", params.len(), self.param_count()));
        }
        let mut it = params.iter().copied();
        for l in self.layers_mut() {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `theta = tanh(W_k(... tanh(W_1 alpha + b_1) ...) + b_k)`.
    pub fn forward(&self, alpha: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        if alpha.len() != self.arch.input_dim() {
            return shape_err(format!("alpha has {} entries, network expects {}", alpha.len(), self.arch.input_dim()));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(alpha.to_vec());
        for layer in &self.layers {
            let z = layer.affine(activations.last().expect("non-empty"));
            activations.push(z.into_iter().map(T::tanh).collect());
        }
        let theta = activations.last().expect("non-empty").clone();
        Ok((theta, ForwardCache { revision: self.revision, activations }))
    }

    /// Reverse-mode pass given `dC/dtheta`.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &[T]) -> Result<MlpGradients<T>> {
        if cache.revision != self.revision || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Validation("forward cache does not belong to this model state".into()));
        }
        if upstream.len() != self.arch.output_dim() {
            return shape_err(format!(
                "upstream gradient has {} entries, network outputs {}",
                upstream.len(),
                self.arch.output_dim()
            ));
        }
        let mut grads: Vec<DenseLayer<T>> = Vec::with_capacity(self.layers.len());
        // delta = dC/d(tanh output) of the current layer
        let mut delta = upstream.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[l];
            let output = &cache.activations[l + 1];
            // through tanh: d/dz tanh(z) = 1 - tanh(z)^2
            let dz: Vec<T> = delta.iter().zip(output).map(|(&d, &y)| d * (T::one() - y * y)).collect();
            let mut g = DenseLayer::zeros(layer.in_dim, layer.out_dim);
            for (o, &dzo) in dz.iter().enumerate() {
                g.bias[o] = dzo;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw = dzo * x;
                }
            }
            let mut prev = vec![T::zero(); layer.in_dim];
            for (o, &dzo) in dz.iter().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += dzo * w;
                }
            }
            grads.push(g);
            delta = prev;
        }
        grads.reverse();
        Ok(MlpGradients { layers: grads, alpha: delta })
    }

    /// Plain gradient step on every weight, bias and on `alpha`.
    pub fn sgd_step(&mut self, alpha: &mut [T], grads: &MlpGradients<T>, eta: T) -> Result<()> {
        if grads.layers.len() != self.layers.len() || grads.alpha.len() != alpha.len() {
            return shape_err("gradient shapes do not match model");
        }
        for (l, g) in self.layers.iter().zip(&grads.layers) {
            if l.weights.len() != g.weights.len() || l.bias.len() != g.bias.len() {
                return shape_err("gradient shapes do not match model");
            }
        }
        for (l, g) in self.layers_mut().iter_mut().zip(&grads.layers) {
            for (p, &d) in l.weights.iter_mut().zip(&g.weights).chain(l.bias.iter_mut().zip(&g.bias)) {
                *p -= eta * d;
            }
        }
        for (a, &d) in alpha.iter_mut().zip(&grads.alpha) {
            *a -= eta * d;
        }
        Ok(())
    }
}
