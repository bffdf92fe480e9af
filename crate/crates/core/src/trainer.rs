//! Gradient-descent training for the baseline ("net") and the
//! network-reparameterized schemes, and the repetition sweep harness.
//!
//! One epoch is one parameter update from one full gradient. The circuit
//! input is always the qubit encoding of `(pi/4, ..., pi/4)` and the
//! objective is the local cost.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzSpec, Entangler};
use crate::encoding::quarter_pi_input;
use crate::error::{Error, Result};
use crate::gradients::{param_shift_grad, CircuitEvaluator, InputRecipe};
use crate::mlp::{make_architecture, MlpModel, ModelKind, ALPHA_DIM};
use crate::scalar::Real;
use crate::statevector::Axis;

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

/// Training scheme: direct angles or angles produced by one of the preset networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Net,
    Model1,
    Model2,
    Model3,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Net, Scheme::Model1, Scheme::Model2, Scheme::Model3];

    pub fn model_kind(self) -> Option<ModelKind> {
        match self {
            Scheme::Net => None,
            Scheme::Model1 => Some(ModelKind::Model1),
            Scheme::Model2 => Some(ModelKind::Model2),
            Scheme::Model3 => Some(ModelKind::Model3),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "net" => Ok(Scheme::Net),
            "model1" => Ok(Scheme::Model1),
            "model2" => Ok(Scheme::Model2),
            "model3" => Ok(Scheme::Model3),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Net => "net",
            Scheme::Model1 => "model1",
            Scheme::Model2 => "model2",
            Scheme::Model3 => "model3",
        })
    }
}

/// How circuit depth follows the qubit count in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthRule {
    /// `L = n`.
    EqualN,
    /// `L = K` for every `n`.
    Fixed(usize),
}

impl DepthRule {
    pub fn depth_for(self, n_qubits: usize) -> usize {
        match self {
            DepthRule::EqualN => n_qubits,
            DepthRule::Fixed(l) => l,
        }
    }
}

impl FromStr for DepthRule {
    type Err = Error;

    /// Accepts `equal`, a bare integer, or `fixed:K`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let fixed = |v: &str| -> Result<Self> {
            match v.parse::<usize>() {
                Ok(l) if l > 0 => Ok(DepthRule::Fixed(l)),
                _ => Err(Error::Config(format!("invalid depth rule '{s}'"))),
            }
        };
        match s {
            "equal" => Ok(DepthRule::EqualN),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => fixed(v),
                None => fixed(s),
            },
        }
    }
}

impl fmt::Display for DepthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthRule::EqualN => f.write_str("equal"),
            DepthRule::Fixed(l) => write!(f, "fixed:{l}"),
        }
    }
}

/// Inputs of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub scheme: Scheme,
    pub n_qubits: usize,
    pub depth: usize,
    pub eta: f64,
    pub target_cost: f64,
    pub max_epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub rotation_axis: Axis,
    #[serde(default)]
    pub entangler: Entangler,
}

impl TrainConfig {
    pub fn new(scheme: Scheme, n_qubits: usize, depth: usize) -> Self {
        Self {
            scheme,
            n_qubits,
            depth,
            eta: DEFAULT_ETA,
            target_cost: 0.001,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
            rotation_axis: Axis::Y,
            entangler: Entangler::LinearCnotLadder,
        }
    }

    pub fn spec(&self) -> Result<AnsatzSpec> {
        Ok(AnsatzSpec::new(self.n_qubits, self.depth)?.with_axis(self.rotation_axis).with_entangler(self.entangler))
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.eta)));
        }
        if !self.target_cost.is_finite() {
            return Err(Error::Config("target cost must be finite".into()));
        }
        Ok(())
    }
}

/// Independent random streams derived from one run seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Theta = 1,
    Alpha = 2,
    Model = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Angles drawn uniformly from `[0, 2 pi)`.
fn uniform_angles<T: Real>(rng: &mut ChaCha8Rng, count: usize) -> Vec<T> {
    (0..count).map(|_| T::lit(rng.gen_range(0.0..std::f64::consts::TAU))).collect()
}

/// Starting point of a run, shared by the trainer and the diagnostics so
/// both see the same initialization for a given seed.
#[derive(Clone, Debug)]
pub enum InitialParameters<T> {
    Direct { theta: Vec<T> },
    Network { model: MlpModel<T>, alpha: Vec<T> },
}

impl<T: Real> InitialParameters<T> {
    pub fn draw(scheme: Scheme, spec: &AnsatzSpec, seed: u64) -> Result<Self> {
        match scheme.model_kind() {
            None => {
                Ok(Self::Direct { theta: uniform_angles(&mut stream_rng(seed, Stream::Theta), spec.param_count()) })
            }
            Some(kind) => {
                let arch = make_architecture(kind, spec.n_qubits, spec.depth)?;
                let model = MlpModel::init(&arch, &mut stream_rng(seed, Stream::Model));
                let alpha = uniform_angles(&mut stream_rng(seed, Stream::Alpha), ALPHA_DIM);
                Ok(Self::Network { model, alpha })
            }
        }
    }

    /// Circuit angles at this point.
    pub fn theta(&self) -> Result<Vec<T>> {
        match self {
            Self::Direct { theta } => Ok(theta.clone()),
            Self::Network { model, alpha } => Ok(model.forward(alpha)?.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub cost: f64,
}

/// Outcome of one run. Not reaching the target is a normal outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RunResult<T> {
    pub reached: bool,
    pub epochs_to_target: Option<usize>,
    /// `trajectory[t]` is the cost after `t` updates; entry 0 is the initial cost.
    pub trajectory: Vec<TrajectoryPoint>,
    pub final_theta: Vec<T>,
    pub final_cost: f64,
    pub final_alpha: Option<Vec<T>>,
    pub final_model: Option<MlpModel<T>>,
    pub cost_evaluations: u64,
}

impl<T> RunResult<T> {
    /// Updates performed.
    pub fn epochs_run(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}

fn evaluator<T: Real>(config: &TrainConfig) -> Result<CircuitEvaluator<T>> {
    CircuitEvaluator::local(&InputRecipe::QubitEncoded(quarter_pi_input(config.n_qubits)), config.spec()?)
}

/// Records `cost` at `epoch` and reports whether the loop should stop.
fn record(traj: &mut Vec<TrajectoryPoint>, epoch: usize, cost: f64, config: &TrainConfig) -> (bool, bool) {
    traj.push(TrajectoryPoint { epoch, cost });
    let reached = cost <= config.target_cost;
    (reached, reached || epoch >= config.max_epochs)
}

/// Baseline: `theta ~ U[0, 2pi)^p`, then `theta <- theta - eta * grad C`.
pub fn train_baseline<T: Real>(config: &TrainConfig) -> Result<RunResult<T>> {
    config.validate()?;
    if config.scheme != Scheme::Net {
        return Err(Error::Config(format!("baseline training needs scheme 'net', got '{}'", config.scheme)));
    }
    let eval = evaluator::<T>(config)?;
    let mut theta = match InitialParameters::<T>::draw(config.scheme, eval.spec(), config.seed)? {
        InitialParameters::Direct { theta } => theta,
        InitialParameters::Network { .. } => unreachable!("net scheme draws direct angles"),
    };
    let eta = T::lit(config.eta);
    let mut trajectory = Vec::new();
    let mut epoch = 0;
    let (reached, cost) = loop {
        let cost = eval.evaluate(&theta)?;
        let (reached, stop) = record(&mut trajectory, epoch, cost.as_f64(), config);
        if stop {
            break (reached, cost);
        }
        let grad = param_shift_grad(&eval, &theta)?;
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= eta * g;
        }
        epoch += 1;
    };
    Ok(RunResult {
        reached,
        epochs_to_target: reached.then_some(epoch),
        trajectory,
        final_theta: theta,
        final_cost: cost.as_f64(),
        final_alpha: None,
        final_model: None,
        cost_evaluations: eval.evaluation_count(),
    })
}

/// Network scheme: `alpha ~ U[0, 2pi)^4`, default network init, then
/// gradient descent on the network parameters and `alpha` jointly.
pub fn train_hybrid<T: Real>(config: &TrainConfig) -> Result<RunResult<T>> {
    config.validate()?;
    if config.scheme.model_kind().is_none() {
        return Err(Error::Config("hybrid training needs a model scheme".into()));
    }
    let eval = evaluator::<T>(config)?;
    let (mut model, mut alpha) = match InitialParameters::<T>::draw(config.scheme, eval.spec(), config.seed)? {
        InitialParameters::Network { model, alpha } => (model, alpha),
        InitialParameters::Direct { .. } => unreachable!("model schemes draw a network"),
    };
    let eta = T::lit(config.eta);
    let mut trajectory = Vec::new();
    let mut epoch = 0;
    let (reached, cost, theta) = loop {
        let (theta, cache) = model.forward(&alpha)?;
        let cost = eval.evaluate(&theta)?;
        let (reached, stop) = record(&mut trajectory, epoch, cost.as_f64(), config);
        if stop {
            break (reached, cost, theta);
        }
        let upstream = param_shift_grad(&eval, &theta)?;
        let grads = model.backward(&cache, &upstream)?;
        model.sgd_step(&mut alpha, &grads, eta)?;
        epoch += 1;
    };
    Ok(RunResult {
        reached,
        epochs_to_target: reached.then_some(epoch),
        trajectory,
        final_theta: theta,
        final_cost: cost.as_f64(),
        final_alpha: Some(alpha),
        final_model: Some(model),
        cost_evaluations: eval.evaluation_count(),
    })
}

/// Dispatches on the scheme.
pub fn train<T: Real>(config: &TrainConfig) -> Result<RunResult<T>> {
    match config.scheme {
        Scheme::Net => train_baseline(config),
        _ => train_hybrid(config),
    }
}

/// Settings shared by every run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub schemes: Vec<Scheme>,
    pub n_values: Vec<usize>,
    pub depth_rule: DepthRule,
    pub reps: usize,
    pub eta: f64,
    pub target_cost: f64,
    pub max_epochs: usize,
    pub seed_base: u64,
    #[serde(default)]
    pub rotation_axis: Axis,
    #[serde(default)]
    pub entangler: Entangler,
}

impl SweepConfig {
    /// Run configurations in output order: scheme, then `n`, then repetition.
    pub fn runs(&self) -> Vec<(usize, TrainConfig)> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &n in &self.n_values {
                for rep in 0..self.reps {
                    out.push((
                        rep,
                        TrainConfig {
                            scheme,
                            n_qubits: n,
                            depth: self.depth_rule.depth_for(n),
                            eta: self.eta,
                            target_cost: self.target_cost,
                            max_epochs: self.max_epochs,
                            seed: self.seed_base.wrapping_add(rep as u64),
                            rotation_axis: self.rotation_axis,
                            entangler: self.entangler,
                        },
                    ));
                }
            }
        }
        out
    }
}

/// One finished run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub config: TrainConfig,
    pub repetition: usize,
    pub reached: bool,
    pub epochs_to_target: Option<usize>,
    pub final_cost: f64,
    /// Seconds; excluded from deterministic outputs.
    pub wall_time: f64,
}

/// Epoch statistics for one `(scheme, n)` cell, over reached runs only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub scheme: Scheme,
    pub n_qubits: usize,
    pub depth: usize,
    pub runs: usize,
    pub reached: usize,
    pub failures: usize,
    pub mean_epochs: Option<f64>,
    pub min_epochs: Option<usize>,
    pub max_epochs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub runs: Vec<SweepRun>,
    pub aggregates: Vec<SweepAggregate>,
}

impl SweepResult {
    pub fn aggregate(&self, scheme: Scheme, n_qubits: usize) -> Option<&SweepAggregate> {
        self.aggregates.iter().find(|a| a.scheme == scheme && a.n_qubits == n_qubits)
    }
}

/// Groups runs by `(scheme, n)` in first-seen order.
pub fn aggregate_runs(runs: &[SweepRun]) -> Vec<SweepAggregate> {
    let mut out: Vec<SweepAggregate> = Vec::new();
    let mut epochs: Vec<Vec<usize>> = Vec::new();
    for run in runs {
        let pos = match out.iter().position(|a| a.scheme == run.config.scheme && a.n_qubits == run.config.n_qubits) {
            Some(p) => p,
            None => {
                out.push(SweepAggregate {
                    scheme: run.config.scheme,
                    n_qubits: run.config.n_qubits,
                    depth: run.config.depth,
                    runs: 0,
                    reached: 0,
                    failures: 0,
                    mean_epochs: None,
                    min_epochs: None,
                    max_epochs: None,
                });
                epochs.push(Vec::new());
                out.len() - 1
            }
        };
        out[pos].runs += 1;
        match run.epochs_to_target {
            Some(e) if run.reached => {
                out[pos].reached += 1;
                epochs[pos].push(e);
            }
            _ => out[pos].failures += 1,
        }
    }
    for (agg, e) in out.iter_mut().zip(&epochs) {
        if !e.is_empty() {
            agg.mean_epochs = Some(e.iter().sum::<usize>() as f64 / e.len() as f64);
            agg.min_epochs = e.iter().copied().min();
            agg.max_epochs = e.iter().copied().max();
        }
    }
    out
}

/// Runs every `(scheme, n, repetition)` cell; repetition `r` uses seed
/// `seed_base + r`. Runs execute in parallel but results keep sweep order.
pub fn run_sweep<T: Real>(config: &SweepConfig) -> Result<SweepResult> {
    if config.schemes.is_empty() {
        return Err(Error::Config("sweep needs at least one scheme".into()));
    }
    if config.n_values.is_empty() {
        return Err(Error::Config("sweep needs at least one qubit count".into()));
    }
    if config.reps == 0 {
        return Err(Error::Config("sweep needs at least one repetition".into()));
    }
    let jobs = config.runs();
    for (_, cfg) in &jobs {
        cfg.validate()?;
    }
    let runs = jobs
        .into_par_iter()
        .map(|(repetition, cfg)| {
            let start = Instant::now();
            let result = train::<T>(&cfg)?;
            Ok(SweepRun {
                repetition,
                reached: result.reached,
                epochs_to_target: result.epochs_to_target,
                final_cost: result.final_cost,
                wall_time: start.elapsed().as_secs_f64(),
                config: cfg,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate_runs(&runs);
    Ok(SweepResult { runs, aggregates })
}
