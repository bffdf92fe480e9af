//! Barren-plateau diagnostics.
//!
//! Monte-Carlo checks of the Haar moment identities, the zero-mean gradient
//! statement, gradient-variance scans over the trained ansatz, and the
//! identity-proximity metric `mu = || U(theta)|phi> - |phi> ||`.
//!
//! Monte-Carlo sampling is chunked: one seed per chunk is drawn from the
//! caller's generator in order, chunks run in parallel, and results are
//! reduced in chunk order. Estimates therefore depend only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{apply_gate, AnsatzSpec, Entangler, Gate, MAX_UNITARY_QUBITS};
use crate::encoding::qubit_encode;
use crate::error::{shape_err, Error, Result};
use crate::gradients::{param_shift_component, CircuitEvaluator, CostKind, InputRecipe};
use crate::linalg::{inner, CMatrix};
use crate::scalar::{Real, C};
use crate::statevector::{Axis, StateVector};
use crate::stats;
use crate::trainer::{DepthRule, InitialParameters, Scheme};

pub const MAX_HAAR_DIM: usize = 64;
/// Register size cap for the dense Haar gradient checks.
pub const MAX_HAAR_QUBITS: usize = 4;
/// Below this many samples a lemma check is reported as inconclusive.
pub const MIN_CONCLUSIVE_SAMPLES: usize = 100;
/// Largest imaginary part tolerated in a commutator-form derivative sample.
pub const IMAG_TOLERANCE: f64 = 1e-10;
const CHUNK: usize = 1024;

/// Haar-random unitary: Gram-Schmidt on a complex Gaussian matrix.
///
/// Normalizing each column by its positive norm fixes the diagonal of the
/// implied `R` factor to be real positive, which removes the phase bias of a
/// plain QR and leaves `Q` Haar distributed. Each column is orthogonalized
/// twice to keep `U^dagger U = I` at roundoff for `d = 64`.
pub fn haar_unitary<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<CMatrix<T>> {
    if !(2..=MAX_HAAR_DIM).contains(&d) {
        return Err(Error::Config(format!("Haar dimension must be in 2..={MAX_HAAR_DIM}, got {d}")));
    }
    let g = CMatrix::<T>::random_gaussian(d, rng);
    let mut q: Vec<Vec<C<T>>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = g.column(j);
        for _ in 0..2 {
            for u in &q {
                let proj = inner(u, &v);
                for (vi, &ui) in v.iter_mut().zip(u) {
                    *vi -= proj * ui;
                }
            }
        }
        let norm = v.iter().map(|a| a.norm_sqr()).sum::<T>().sqrt();
        for vi in &mut v {
            *vi = vi.unscale(norm);
        }
        q.push(v);
    }
    Ok(CMatrix::from_fn(d, d, |r, col| q[col][r]))
}

/// Draws `samples` values of `f`, deterministic in the state of `rng`.
fn mc_values<R, F>(samples: usize, rng: &mut R, f: F) -> Vec<C<f64>>
where
    R: Rng + ?Sized,
    F: Fn(&mut ChaCha8Rng) -> C<f64> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let seeds: Vec<u64> = (0..chunks).map(|_| rng.gen()).collect();
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(i, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let size = CHUNK.min(samples - i * CHUNK);
            (0..size).map(|_| f(&mut r)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

fn to_c64<T: Real>(z: C<T>) -> C<f64> {
    C::new(z.re.as_f64(), z.im.as_f64())
}

fn unitary<T: Real>(d: usize, r: &mut ChaCha8Rng) -> CMatrix<T> {
    haar_unitary(d, r).expect("dimension checked by caller")
}

/// `W X W^dagger`.
fn conjugate<T: Real>(w: &CMatrix<T>, x: &CMatrix<T>) -> CMatrix<T> {
    &(w * x) * &w.adjoint()
}

/// Right-hand side of `int dW Tr[W A W^dag B] = Tr A Tr B / d`.
pub fn lemma1_rhs<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> C<T> {
    let d = T::lit(a.rows() as f64);
    (a.trace() * b.trace()).unscale(d)
}

/// Right-hand side for `int dW Tr[W A W^dag B W C W^dag D]`.
pub fn lemma2_rhs<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, c: &CMatrix<T>, d: &CMatrix<T>) -> C<T> {
    let (ta, tb, tc, td) = (a.trace(), b.trace(), c.trace(), d.trace());
    let tac = a.trace_product(c).expect("square operands");
    let tbd = b.trace_product(d).expect("square operands");
    let dim = T::lit(a.rows() as f64);
    let dd = dim * dim - T::one();
    (ta * tc * tbd + tac * tb * td).unscale(dd) - (tac * tbd + ta * tb * tc * td).unscale(dim * dd)
}

/// Right-hand side for `int dW Tr[W A W^dag B] Tr[W C W^dag D]`.
pub fn lemma3_rhs<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, c: &CMatrix<T>, d: &CMatrix<T>) -> C<T> {
    let (ta, tb, tc, td) = (a.trace(), b.trace(), c.trace(), d.trace());
    let tac = a.trace_product(c).expect("square operands");
    let tbd = b.trace_product(d).expect("square operands");
    let dim = T::lit(a.rows() as f64);
    let dd = dim * dim - T::one();
    (ta * tb * tc * td + tac * tbd).unscale(dd) - (tac * tb * td + ta * tc * tbd).unscale(dim * dd)
}

/// Monte-Carlo estimate of one moment identity against its closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheckReport {
    pub lemma: u8,
    pub case: String,
    pub dim: usize,
    pub samples: usize,
    pub estimate_re: f64,
    pub estimate_im: f64,
    pub analytic_re: f64,
    pub analytic_im: f64,
    pub abs_error: f64,
    /// `None` when the analytic value is zero.
    pub rel_error: Option<f64>,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// Both parts within three standard errors (plus a roundoff floor).
    pub within_band: bool,
    pub conclusive: bool,
}

fn check_operands<T: Real>(ops: &[&CMatrix<T>]) -> Result<usize> {
    let d = ops[0].rows();
    if !(2..=MAX_HAAR_DIM).contains(&d) {
        return Err(Error::Config(format!("dimension must be in 2..={MAX_HAAR_DIM}, got {d}")));
    }
    if ops.iter().any(|m| m.rows() != d || m.cols() != d) {
        return shape_err(format!("all operators must be {d}x{d}"));
    }
    Ok(d)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::Config(format!("need at least 2 samples, got {samples}")));
    }
    Ok(())
}

fn lemma_report(lemma: u8, case: &str, dim: usize, values: &[C<f64>], analytic: C<f64>) -> LemmaCheckReport {
    let re: Vec<f64> = values.iter().map(|z| z.re).collect();
    let im: Vec<f64> = values.iter().map(|z| z.im).collect();
    let est = C::new(stats::mean(&re), stats::mean(&im));
    let (se_re, se_im) = (stats::stderr_of_mean(&re), stats::stderr_of_mean(&im));
    let floor = 1e-9 * analytic.norm().max(1.0);
    let abs_error = (est - analytic).norm();
    LemmaCheckReport {
        lemma,
        case: case.to_string(),
        dim,
        samples: values.len(),
        estimate_re: est.re,
        estimate_im: est.im,
        analytic_re: analytic.re,
        analytic_im: analytic.im,
        abs_error,
        rel_error: (analytic.norm() > 0.0).then(|| abs_error / analytic.norm()),
        stderr_re: se_re,
        stderr_im: se_im,
        within_band: (est.re - analytic.re).abs() <= 3.0 * se_re + floor
            && (est.im - analytic.im).abs() <= 3.0 * se_im + floor,
        conclusive: values.len() >= MIN_CONCLUSIVE_SAMPLES,
    }
}

pub fn mc_lemma1<T: Real, R: Rng + ?Sized>(
    case: &str,
    a: &CMatrix<T>,
    b: &CMatrix<T>,
    samples: usize,
    rng: &mut R,
) -> Result<LemmaCheckReport> {
    let d = check_operands(&[a, b])?;
    check_samples(samples)?;
    let values = mc_values(samples, rng, |r| {
        let w = unitary::<T>(d, r);
        to_c64(conjugate(&w, a).trace_product(b).expect("shapes checked"))
    });
    Ok(lemma_report(1, case, d, &values, to_c64(lemma1_rhs(a, b))))
}

pub fn mc_lemma2<T: Real, R: Rng + ?Sized>(
    case: &str,
    [a, b, c, d]: [&CMatrix<T>; 4],
    samples: usize,
    rng: &mut R,
) -> Result<LemmaCheckReport> {
    let dim = check_operands(&[a, b, c, d])?;
    check_samples(samples)?;
    let values = mc_values(samples, rng, |r| {
        let w = unitary::<T>(dim, r);
        let left = &conjugate(&w, a) * b;
        let right = &conjugate(&w, c) * d;
        to_c64(left.trace_product(&right).expect("shapes checked"))
    });
    Ok(lemma_report(2, case, dim, &values, to_c64(lemma2_rhs(a, b, c, d))))
}

pub fn mc_lemma3<T: Real, R: Rng + ?Sized>(
    case: &str,
    [a, b, c, d]: [&CMatrix<T>; 4],
    samples: usize,
    rng: &mut R,
) -> Result<LemmaCheckReport> {
    let dim = check_operands(&[a, b, c, d])?;
    check_samples(samples)?;
    let values = mc_values(samples, rng, |r| {
        let w = unitary::<T>(dim, r);
        let x = conjugate(&w, a).trace_product(b).expect("shapes checked");
        let y = conjugate(&w, c).trace_product(d).expect("shapes checked");
        to_c64(x * y)
    });
    Ok(lemma_report(3, case, dim, &values, to_c64(lemma3_rhs(a, b, c, d))))
}

/// `diag(+1, ..., +1, -1, ..., -1)` (a zero in the middle for odd `d`):
/// Pauli-Z on the most significant qubit when `d` is a power of two.
pub fn traceless_diagonal<T: Real>(d: usize) -> CMatrix<T> {
    let v: Vec<T> = (0..d)
        .map(|i| match (2 * i + 1).cmp(&d) {
            std::cmp::Ordering::Less => T::one(),
            std::cmp::Ordering::Equal => T::zero(),
            std::cmp::Ordering::Greater => -T::one(),
        })
        .collect();
    CMatrix::diag(&v)
}

/// A named operator input for one lemma check.
#[derive(Clone, Debug)]
pub struct LemmaCase<T> {
    pub lemma: u8,
    pub name: &'static str,
    pub ops: Vec<CMatrix<T>>,
    /// Every sample equals the analytic value.
    pub exact: bool,
}

/// Identity, rank-one projector, traceless and random-Hermitian inputs for
/// all three identities at dimension `d`.
pub fn operator_battery<T: Real, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<LemmaCase<T>> {
    let id = CMatrix::<T>::identity(d);
    let p0 = CMatrix::<T>::basis_projector(d, 0);
    let z = traceless_diagonal::<T>(d);
    let h: Vec<CMatrix<T>> = (0..4).map(|_| CMatrix::random_hermitian(d, rng)).collect();
    let case = |lemma, name, ops: Vec<&CMatrix<T>>, exact| LemmaCase {
        lemma,
        name,
        ops: ops.into_iter().cloned().collect(),
        exact,
    };
    vec![
        case(1, "identity", vec![&id, &id], true),
        case(1, "projector", vec![&p0, &p0], false),
        case(1, "traceless", vec![&z, &p0], false),
        case(1, "random-hermitian", vec![&h[0], &h[1]], false),
        case(2, "identity", vec![&id, &id, &id, &id], true),
        case(2, "projector", vec![&p0, &p0, &p0, &p0], false),
        case(2, "traceless", vec![&z, &p0, &z, &p0], false),
        case(2, "random-hermitian", vec![&h[0], &h[1], &h[2], &h[3]], false),
        case(3, "identity", vec![&id, &id, &id, &id], true),
        case(3, "identity-sandwich", vec![&id, &h[0], &id, &h[1]], true),
        case(3, "projector", vec![&p0, &p0, &p0, &p0], false),
        case(3, "traceless", vec![&z, &p0, &z, &p0], false),
        case(3, "random-hermitian", vec![&h[0], &h[1], &h[2], &h[3]], false),
    ]
}

pub fn run_lemma_case<T: Real, R: Rng + ?Sized>(
    case: &LemmaCase<T>,
    samples: usize,
    rng: &mut R,
) -> Result<LemmaCheckReport> {
    let o = &case.ops;
    match case.lemma {
        1 => mc_lemma1(case.name, &o[0], &o[1], samples, rng),
        2 => mc_lemma2(case.name, [&o[0], &o[1], &o[2], &o[3]], samples, rng),
        3 => mc_lemma3(case.name, [&o[0], &o[1], &o[2], &o[3]], samples, rng),
        other => Err(Error::Config(format!("no moment identity numbered {other}"))),
    }
}

/// Runs the whole battery: `samples_first` for the first identity,
/// `samples_second` for the two second-moment identities.
pub fn run_lemma_battery<T: Real, R: Rng + ?Sized>(
    d: usize,
    samples_first: usize,
    samples_second: usize,
    rng: &mut R,
) -> Result<Vec<LemmaCheckReport>> {
    if !(2..=MAX_HAAR_DIM).contains(&d) {
        return Err(Error::Config(format!("dimension must be in 2..={MAX_HAAR_DIM}, got {d}")));
    }
    operator_battery::<T, _>(d, rng)
        .iter()
        .map(|case| run_lemma_case(case, if case.lemma == 1 { samples_first } else { samples_second }, rng))
        .collect()
}

/// Mean and variance of a sampled gradient component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub n_qubits: usize,
    pub depth: Option<usize>,
    pub param_index: usize,
    pub samples: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub variance_stderr: f64,
    /// Largest imaginary part seen, for the commutator-form samples.
    pub max_imag_part: Option<f64>,
}

impl VarianceReport {
    fn from_samples(n_qubits: usize, depth: Option<usize>, param_index: usize, xs: &[f64]) -> Self {
        Self {
            n_qubits,
            depth,
            param_index,
            samples: xs.len(),
            mean: stats::mean(xs),
            variance: stats::sample_variance(xs),
            stderr: stats::stderr_of_mean(xs),
            variance_stderr: stats::stderr_of_variance(xs),
            max_imag_part: None,
        }
    }

    /// `|mean| < 3 * stderr`, or an exactly zero mean.
    pub fn mean_consistent_with_zero(&self) -> bool {
        self.mean == 0.0 || self.mean.abs() < 3.0 * self.stderr
    }
}

/// Which factors of `U = U_L U_R` are Haar random in the zero-mean check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaarSides {
    #[default]
    Both,
    /// `U_L = I`.
    RightOnly,
    /// `U_R = I`.
    LeftOnly,
}

/// `(i/2) Tr[[rho', G] H']` with `rho' = U_R rho U_R^dag`, `H' = U_L^dag H U_L`.
fn commutator_derivative<T: Real>(rho: &CMatrix<T>, g: &CMatrix<T>, h: &CMatrix<T>) -> C<T> {
    let comm = rho.commutator(g).expect("square operands");
    comm.trace_product(h).expect("square operands") * C::new(T::zero(), T::lit(0.5))
}

fn check_hermitian<T: Real>(m: &CMatrix<T>, what: &str) -> Result<()> {
    if !m.is_hermitian(T::tol(1e-10)) {
        return Err(Error::Validation(format!("{what} is not Hermitian")));
    }
    Ok(())
}

/// Samples `dC/dtheta_k` in commutator form with Haar `U_R` and/or `U_L`.
/// The generator is `sigma` on `qubit`. Reports the sample mean and
/// variance; `max_imag_part` records the largest discarded imaginary part.
#[allow(clippy::too_many_arguments)]
pub fn zero_mean_gradient_check<T: Real, R: Rng + ?Sized>(
    n_qubits: usize,
    rho: &CMatrix<T>,
    h: &CMatrix<T>,
    axis: Axis,
    qubit: usize,
    sides: HaarSides,
    samples: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    if !(1..=MAX_HAAR_QUBITS).contains(&n_qubits) {
        return Err(Error::Config(format!("dense Haar checks need 1..={MAX_HAAR_QUBITS} qubits, got {n_qubits}")));
    }
    if qubit >= n_qubits {
        return Err(Error::Index(format!("qubit {qubit} out of range for {n_qubits} qubits")));
    }
    let d = 1usize << n_qubits;
    check_operands(&[rho, h])?;
    if rho.rows() != d {
        return shape_err(format!("operators must be {d}x{d} for {n_qubits} qubits"));
    }
    check_hermitian(h, "observable")?;
    check_hermitian(rho, "density matrix")?;
    check_samples(samples)?;
    let g = CMatrix::embed_single_qubit(&CMatrix::pauli(axis), qubit, n_qubits)?;
    let values = mc_values(samples, rng, |r| {
        let rho_r = match sides {
            HaarSides::LeftOnly => rho.clone(),
            _ => conjugate(&unitary::<T>(d, r), rho),
        };
        let h_l = match sides {
            HaarSides::RightOnly => h.clone(),
            _ => conjugate(&unitary::<T>(d, r).adjoint(), h),
        };
        to_c64(commutator_derivative(&rho_r, &g, &h_l))
    });
    let re: Vec<f64> = values.iter().map(|z| z.re).collect();
    let mut report = VarianceReport::from_samples(n_qubits, None, qubit, &re);
    report.max_imag_part = Some(values.iter().map(|z| z.im.abs()).fold(0.0, f64::max));
    Ok(report)
}

/// Dense unitary of a gate sequence.
fn gates_unitary<T: Real>(n_qubits: usize, axis: Axis, gates: &[Gate], theta: &[T]) -> Result<CMatrix<T>> {
    let d = 1usize << n_qubits;
    let mut m = CMatrix::zeros(d, d);
    for col in 0..d {
        let mut s = StateVector::basis_state(n_qubits, col)?;
        for &g in gates {
            apply_gate(&mut s, axis, g, theta);
        }
        for (row, &a) in s.amplitudes().iter().enumerate() {
            m[(row, col)] = a;
        }
    }
    Ok(m)
}

/// `dC/dtheta_k` of `<in|U^dag H U|in>` from the commutator form on a
/// concrete circuit. `U_R` is every gate up to and including the rotation
/// block that holds `theta_k`, so the generator sits between the two
/// factors; `U_L` is the remainder.
pub fn split_commutator_derivative<T: Real>(
    spec: &AnsatzSpec,
    theta: &[T],
    k: usize,
    input: &StateVector<T>,
    h: &CMatrix<T>,
) -> Result<T> {
    spec.validate()?;
    spec.check_theta(theta)?;
    if spec.n_qubits > MAX_UNITARY_QUBITS {
        return Err(Error::Config(format!("dense split limited to {MAX_UNITARY_QUBITS} qubits")));
    }
    if k >= theta.len() {
        return Err(Error::Index(format!("parameter {k} out of range for {} parameters", theta.len())));
    }
    if input.n_qubits() != spec.n_qubits || h.rows() != input.dim() || h.cols() != input.dim() {
        return shape_err("input state and observable must match the ansatz register");
    }
    check_hermitian(h, "observable")?;
    let gates = spec.gates();
    let per_layer = gates.len() / spec.depth;
    let (layer, qubit) = spec.param_position(k);
    let cut = layer * per_layer + spec.n_qubits;
    let u_r = gates_unitary(spec.n_qubits, spec.rotation_axis, &gates[..cut], theta)?;
    let u_l = gates_unitary(spec.n_qubits, spec.rotation_axis, &gates[cut..], theta)?;
    let rho = conjugate(&u_r, &CMatrix::projector(input.amplitudes()));
    let h_l = conjugate(&u_l.adjoint(), h);
    let g = CMatrix::embed_single_qubit(&CMatrix::pauli(spec.rotation_axis), qubit, spec.n_qubits)?;
    let value = commutator_derivative(&rho, &g, &h_l);
    if value.im.abs() > T::tol(1e-10) * T::lit(10.0) {
        return Err(Error::Validation(format!("derivative has imaginary part {}", value.im)));
    }
    Ok(value.re)
}

/// The same derivative by parameter shift, for comparison.
pub fn split_shift_derivative<T: Real>(
    spec: &AnsatzSpec,
    theta: &[T],
    k: usize,
    input: &StateVector<T>,
    h: &CMatrix<T>,
) -> Result<T> {
    let eval = CircuitEvaluator::new(&InputRecipe::State(input.clone()), *spec, CostKind::Observable(h.clone()))?;
    param_shift_component(&eval, theta, k)
}

/// Input state of a variance scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanInput {
    #[default]
    Zero,
    QuarterPi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceScanConfig {
    pub n_values: Vec<usize>,
    pub depth_rule: DepthRule,
    pub samples: usize,
    pub param_index: usize,
    #[serde(default)]
    pub rotation_axis: Axis,
    #[serde(default)]
    pub entangler: Entangler,
    #[serde(default)]
    pub input: ScanInput,
}

impl VarianceScanConfig {
    pub fn new(n_values: Vec<usize>, samples: usize) -> Self {
        Self {
            n_values,
            depth_rule: DepthRule::EqualN,
            samples,
            param_index: 0,
            rotation_axis: Axis::Y,
            entangler: Entangler::LinearCnotLadder,
            input: ScanInput::Zero,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceScan {
    pub reports: Vec<VarianceReport>,
    /// Least-squares slope of `ln Var` against `n`; needs two distinct `n`.
    pub log_variance_slope: Option<f64>,
}

/// Variance of `dC/dtheta_k` of the local cost over `theta ~ U[0, 2 pi)^p`,
/// per register size. Angles are drawn sequentially from `rng`; the
/// gradient evaluations run in parallel.
pub fn ansatz_variance_scan<T: Real, R: Rng + ?Sized>(
    config: &VarianceScanConfig,
    rng: &mut R,
) -> Result<VarianceScan> {
    check_samples(config.samples)?;
    if config.n_values.is_empty() {
        return Err(Error::Config("variance scan needs at least one qubit count".into()));
    }
    let mut reports = Vec::with_capacity(config.n_values.len());
    for &n in &config.n_values {
        let depth = config.depth_rule.depth_for(n);
        let spec = AnsatzSpec::new(n, depth)?.with_axis(config.rotation_axis).with_entangler(config.entangler);
        let p = spec.param_count();
        if config.param_index >= p {
            return Err(Error::Index(format!("parameter {} out of range for {p} parameters", config.param_index)));
        }
        let input = match config.input {
            ScanInput::Zero => InputRecipe::Zero,
            ScanInput::QuarterPi => InputRecipe::QubitEncoded(crate::encoding::quarter_pi_input(n)),
        };
        let eval = CircuitEvaluator::<T>::local(&input, spec)?;
        let thetas: Vec<Vec<T>> = (0..config.samples)
            .map(|_| (0..p).map(|_| T::lit(rng.gen_range(0.0..std::f64::consts::TAU))).collect())
            .collect();
        let grads = thetas
            .par_iter()
            .map(|th| param_shift_component(&eval, th, config.param_index).map(|g| g.as_f64()))
            .collect::<Result<Vec<f64>>>()?;
        reports.push(VarianceReport::from_samples(n, Some(depth), config.param_index, &grads));
    }
    let xs: Vec<f64> = reports.iter().map(|r| r.n_qubits as f64).collect();
    let distinct = xs.iter().any(|&x| x != xs[0]);
    let log_variance_slope = distinct.then(|| {
        let ys: Vec<f64> = reports.iter().map(|r| r.variance.ln()).collect();
        stats::linear_slope(&xs, &ys)
    });
    Ok(VarianceScan { reports, log_variance_slope })
}

/// `(pi/4, pi/8, pi/4, pi/8, ...)`: an encoder input whose amplitudes are
/// not all equal, so a bare CNOT ladder moves the state.
pub fn alternating_input<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|j| if j % 2 == 0 { T::FRAC_PI_4() } else { T::FRAC_PI_8() }).collect()
}

/// `mu = || U(theta)|phi> - |phi> ||` for given angles.
pub fn proximity_mu<T: Real>(spec: &AnsatzSpec, theta: &[T], input: &StateVector<T>) -> Result<T> {
    let mut out = input.clone();
    crate::ansatz::apply_ansatz(&mut out, spec, theta)?;
    out.norm_of_difference(input)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityProximityReport {
    pub scheme: Scheme,
    pub n_qubits: usize,
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub mu: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// `mu` at the trainer's initial angles for each seed.
pub fn identity_proximity<T: Real>(
    scheme: Scheme,
    spec: &AnsatzSpec,
    seeds: &[u64],
    encoder_input: &[T],
) -> Result<IdentityProximityReport> {
    if seeds.is_empty() {
        return Err(Error::Config("identity proximity needs at least one seed".into()));
    }
    if encoder_input.len() != spec.n_qubits {
        return shape_err(format!("{} encoder inputs for {} qubits", encoder_input.len(), spec.n_qubits));
    }
    let phi = qubit_encode(encoder_input)?;
    let mu = seeds
        .par_iter()
        .map(|&seed| {
            let theta = InitialParameters::<T>::draw(scheme, spec, seed)?.theta()?;
            Ok(proximity_mu(spec, &theta, &phi)?.as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(IdentityProximityReport {
        scheme,
        n_qubits: spec.n_qubits,
        depth: spec.depth,
        seeds: seeds.to_vec(),
        mean: stats::mean(&mu),
        min: mu.iter().copied().fold(f64::INFINITY, f64::min),
        max: mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mu,
    })
}

/// Two-sample Kolmogorov-Smirnov comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub samples: usize,
    pub statistic: f64,
    pub critical_1pct: f64,
    pub rejected: bool,
}

/// Compares the law of `Re Tr[W A W^dag B]` for Haar `W` against that of
/// `(V W)`, using independent draws for the two samples.
pub fn haar_invariance_ks<T: Real, R: Rng + ?Sized>(
    a: &CMatrix<T>,
    b: &CMatrix<T>,
    v: &CMatrix<T>,
    samples: usize,
    rng: &mut R,
) -> Result<KsReport> {
    let d = check_operands(&[a, b, v])?;
    check_samples(samples)?;
    if v.unitarity_error() > T::tol(1e-10) {
        return Err(Error::Validation("premultiplier is not unitary".into()));
    }
    let draw = |rng: &mut R, premultiply: bool| -> Vec<f64> {
        mc_values(samples, rng, |r| {
            let w = unitary::<T>(d, r);
            let w = if premultiply { v * &w } else { w };
            to_c64(conjugate(&w, a).trace_product(b).expect("shapes checked"))
        })
        .into_iter()
        .map(|z| z.re)
        .collect()
    };
    let plain = draw(rng, false);
    let rotated = draw(rng, true);
    let statistic = stats::ks_statistic(&plain, &rotated);
    let critical_1pct = stats::ks_critical_1pct(samples, samples);
    Ok(KsReport { samples, statistic, critical_1pct, rejected: statistic > critical_1pct })
}

/// Global phase `e^{i phi}` applied to every amplitude.
pub fn with_global_phase<T: Real>(state: &StateVector<T>, phi: T) -> StateVector<T> {
    let p = C::from_polar(T::one(), phi);
    StateVector::from_amplitudes(state.amplitudes().iter().map(|&a| a * p).collect()).expect("same dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::build_unitary;
    use crate::encoding::quarter_pi_input;
    use crate::scalar::cr;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn haar_is_unitary() {
        let mut r = rng(1);
        for d in [2, 3, 4, 16, 64] {
            let u = haar_unitary::<f64, _>(d, &mut r).unwrap();
            assert!(u.unitarity_error() < 1e-10, "d={d}");
        }
        assert!(haar_unitary::<f64, _>(1, &mut r).is_err());
        assert!(haar_unitary::<f64, _>(65, &mut r).is_err());
    }

    #[test]
    fn haar_first_moments() {
        let mut r = rng(2);
        let vals = mc_values(100_000, &mut r, |r| to_c64(unitary::<f64>(4, r)[(0, 0)]));
        let abs2: Vec<f64> = vals.iter().map(|z| z.norm_sqr()).collect();
        assert!((stats::mean(&abs2) - 0.25).abs() < 3.0 * stats::stderr_of_mean(&abs2));
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
        assert!(stats::mean(&re).abs() < 3.0 * stats::stderr_of_mean(&re));
        assert!(stats::mean(&im).abs() < 3.0 * stats::stderr_of_mean(&im));
    }

    #[test]
    fn closed_forms_match_hand_values() {
        let z = CMatrix::<f64>::pauli(Axis::Z);
        let p0 = CMatrix::<f64>::basis_projector(2, 0);
        assert_abs_diff_eq!(lemma1_rhs(&p0, &p0).re, 0.5, epsilon = 1e-15);
        assert_eq!(lemma1_rhs(&z, &p0).re, 0.0);
        assert_abs_diff_eq!(lemma2_rhs(&z, &p0, &z, &p0).re, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lemma3_rhs(&p0, &p0, &p0, &p0).re, 1.0 / 3.0, epsilon = 1e-15);
        for d in [2usize, 4, 8] {
            let id = CMatrix::<f64>::identity(d);
            assert_abs_diff_eq!(lemma2_rhs(&id, &id, &id, &id).re, d as f64, epsilon = 1e-12);
            let mut r = rng(d as u64);
            let (b, dd) = (CMatrix::random_hermitian(d, &mut r), CMatrix::random_hermitian(d, &mut r));
            let rhs = lemma3_rhs(&id, &b, &id, &dd);
            let expect = b.trace() * dd.trace();
            assert_abs_diff_eq!(rhs.re, expect.re, epsilon = 1e-10);
        }
    }

    #[test]
    fn second_moment_by_direct_integration() {
        // |U_00|^2 for U(2) Haar is uniform on [0, 1]; E[|U_00|^4] = 1/3.
        let mut r = rng(3);
        let vals = mc_values(200_000, &mut r, |r| cr(unitary::<f64>(2, r)[(0, 0)].norm_sqr().powi(2)));
        let xs: Vec<f64> = vals.iter().map(|z| z.re).collect();
        assert!((stats::mean(&xs) - 1.0 / 3.0).abs() < 3.0 * stats::stderr_of_mean(&xs));
    }

    #[test]
    fn lemma_examples() {
        let mut r = rng(4);
        let id = CMatrix::<f64>::identity(2);
        let p0 = CMatrix::<f64>::basis_projector(2, 0);
        let z = CMatrix::<f64>::pauli(Axis::Z);
        let exact = mc_lemma1("identity", &id, &id, 200, &mut r).unwrap();
        assert_abs_diff_eq!(exact.estimate_re, 2.0, epsilon = 1e-12);
        assert!(exact.within_band);
        assert!(mc_lemma1("projector", &p0, &p0, 20_000, &mut r).unwrap().within_band);
        assert!(mc_lemma1("traceless", &z, &p0, 20_000, &mut r).unwrap().within_band);
        let r2 = mc_lemma2("mixed", [&z, &p0, &z, &p0], 20_000, &mut r).unwrap();
        assert!(r2.within_band, "{r2:?}");
        let r3 = mc_lemma3("projector", [&p0, &p0, &p0, &p0], 20_000, &mut r).unwrap();
        assert!(r3.within_band, "{r3:?}");
    }

    #[test]
    fn lemma_inputs_are_checked() {
        let mut r = rng(5);
        let a = CMatrix::<f64>::identity(2);
        let b = CMatrix::<f64>::identity(4);
        assert!(mc_lemma1("x", &a, &b, 10, &mut r).is_err());
        assert!(mc_lemma1("x", &a, &a, 1, &mut r).is_err());
        let one = CMatrix::<f64>::identity(1);
        assert!(mc_lemma1("x", &one, &one, 10, &mut r).is_err());
        let big = CMatrix::<f64>::identity(64);
        let rep = mc_lemma1("x", &big, &big, 10, &mut r).unwrap();
        assert!(!rep.conclusive);
    }

    #[test]
    fn battery_runs_small() {
        let reports = run_lemma_battery::<f64, _>(2, 2_000, 2_000, &mut rng(6)).unwrap();
        assert_eq!(reports.len(), 13);
        for rep in reports.iter().filter(|r| r.case.starts_with("identity")) {
            assert_abs_diff_eq!(rep.estimate_re, rep.analytic_re, epsilon = 1e-9);
        }
    }

    #[test]
    fn traceless_diagonal_is_pauli_z_on_top_qubit() {
        let z4 = traceless_diagonal::<f64>(4);
        let expect = CMatrix::<f64>::embed_single_qubit(&CMatrix::pauli(Axis::Z), 1, 2).unwrap();
        assert_eq!(z4.max_abs_diff(&expect).unwrap(), 0.0);
        assert_eq!(traceless_diagonal::<f64>(3).trace().re, 0.0);
    }

    #[test]
    fn zero_mean_identity_observable_is_exactly_zero() {
        let rho = CMatrix::<f64>::basis_projector(4, 0);
        let rep =
            zero_mean_gradient_check(2, &rho, &CMatrix::identity(4), Axis::Y, 0, HaarSides::Both, 500, &mut rng(7))
                .unwrap();
        assert!(rep.mean.abs() < 1e-14);
        assert!(rep.variance < 1e-28);
    }

    #[test]
    fn zero_mean_examples() {
        let rho = CMatrix::<f64>::basis_projector(4, 0);
        let h = CMatrix::embed_single_qubit(&CMatrix::basis_projector(2, 0), 0, 2).unwrap();
        for sides in [HaarSides::Both, HaarSides::RightOnly] {
            let rep = zero_mean_gradient_check(2, &rho, &h, Axis::Y, 0, sides, 20_000, &mut rng(8)).unwrap();
            assert!(rep.mean_consistent_with_zero(), "{sides:?}: {rep:?}");
            assert!(rep.max_imag_part.unwrap() < IMAG_TOLERANCE);
            assert!(rep.variance > 0.0);
        }
        let bad = CMatrix::<f64>::from_fn(4, 4, |r, c| if r == 0 && c == 1 { cr(1.0) } else { cr(0.0) });
        assert!(matches!(
            zero_mean_gradient_check(2, &rho, &bad, Axis::Y, 0, HaarSides::Both, 10, &mut rng(0)),
            Err(Error::Validation(_))
        ));
        assert!(zero_mean_gradient_check(5, &rho, &h, Axis::Y, 0, HaarSides::Both, 10, &mut rng(0)).is_err());
    }

    #[test]
    fn split_derivative_matches_shift_rule() {
        let mut r = rng(9);
        let spec = AnsatzSpec::new(2, 2).unwrap();
        let h = CMatrix::random_hermitian(4, &mut r);
        let input = qubit_encode(&quarter_pi_input::<f64>(2)).unwrap();
        for _ in 0..5 {
            let theta: Vec<f64> = (0..4).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
            for k in 0..4 {
                let a = split_commutator_derivative(&spec, &theta, k, &input, &h).unwrap();
                let b = split_shift_derivative(&spec, &theta, k, &input, &h).unwrap();
                assert!((a - b).abs() < 1e-10, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn split_pieces_compose_to_full_unitary() {
        let spec = AnsatzSpec::new(3, 2).unwrap();
        let theta: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 + 0.1).collect();
        let gates = spec.gates();
        let cut = spec.n_qubits;
        let u_r = gates_unitary(3, Axis::Y, &gates[..cut], &theta).unwrap();
        let u_l = gates_unitary(3, Axis::Y, &gates[cut..], &theta).unwrap();
        let full = build_unitary(&spec, &theta).unwrap();
        assert!((&u_l * &u_r).max_abs_diff(&full).unwrap() < 1e-14);
    }

    #[test]
    fn variance_single_qubit_anchor() {
        let cfg = VarianceScanConfig::new(vec![1], 20_000);
        let scan = ansatz_variance_scan::<f64, _>(&cfg, &mut rng(10)).unwrap();
        let rep = &scan.reports[0];
        assert!((rep.variance - 0.125).abs() < 3.0 * rep.variance_stderr, "{rep:?}");
        assert!(rep.mean_consistent_with_zero());
        assert_eq!(scan.log_variance_slope, None);
        let quarter = VarianceScanConfig { input: ScanInput::QuarterPi, ..cfg };
        let rep = &ansatz_variance_scan::<f64, _>(&quarter, &mut rng(11)).unwrap().reports[0];
        assert!((rep.variance - 0.125).abs() < 3.0 * rep.variance_stderr);
    }

    #[test]
    fn variance_scan_validation() {
        let mut r = rng(0);
        assert!(ansatz_variance_scan::<f64, _>(&VarianceScanConfig::new(vec![2], 1), &mut r).is_err());
        let cfg = VarianceScanConfig { param_index: 9, ..VarianceScanConfig::new(vec![2], 10) };
        assert!(matches!(ansatz_variance_scan::<f64, _>(&cfg, &mut r), Err(Error::Index(_))));
    }

    #[test]
    fn variance_scan_is_seed_deterministic() {
        let cfg = VarianceScanConfig::new(vec![2, 3], 64);
        let a = ansatz_variance_scan::<f64, _>(&cfg, &mut rng(12)).unwrap();
        let b = ansatz_variance_scan::<f64, _>(&cfg, &mut rng(12)).unwrap();
        assert_eq!(a, b);
        assert!(a.log_variance_slope.is_some());
    }

    #[test]
    fn proximity_controls() {
        let spec = AnsatzSpec::new(2, 2).unwrap().with_entangler(Entangler::Disabled);
        let phi = qubit_encode(&alternating_input::<f64>(2)).unwrap();
        assert_eq!(proximity_mu(&spec, &[0.0; 4], &phi).unwrap(), 0.0);
        // Symmetric input: all amplitudes 1/2, so the CNOT swap is invisible.
        let ladder = AnsatzSpec::new(2, 1).unwrap();
        let sym = qubit_encode(&quarter_pi_input::<f64>(2)).unwrap();
        assert!(proximity_mu(&ladder, &[0.0; 2], &sym).unwrap() < 1e-15);
        // (pi/4, pi/8): qubit 0 is |+>-like, qubit 1 is not, so swapping |01>,|11> moves it.
        let mu = proximity_mu(&ladder, &[0.0; 2], &phi).unwrap();
        let s4 = std::f64::consts::FRAC_PI_4.sin();
        let (c8, s8) = (std::f64::consts::FRAC_PI_8.cos(), std::f64::consts::FRAC_PI_8.sin());
        // |01> holds s4*c8 and |11> holds s4*s8; the swap exchanges them.
        let expect = 2f64.sqrt() * s4 * (c8 - s8);
        assert_abs_diff_eq!(mu, expect, epsilon = 1e-14);
    }

    #[test]
    fn proximity_uses_trainer_initialization() {
        let spec = AnsatzSpec::new(3, 3).unwrap();
        let input = alternating_input::<f64>(3);
        let rep = identity_proximity(Scheme::Model1, &spec, &[0, 1, 2], &input).unwrap();
        assert_eq!(rep.mu.len(), 3);
        for (&seed, &mu) in rep.seeds.iter().zip(&rep.mu) {
            let theta = InitialParameters::<f64>::draw(Scheme::Model1, &spec, seed).unwrap().theta().unwrap();
            let phi = qubit_encode(&input).unwrap();
            assert_eq!(mu, proximity_mu(&spec, &theta, &phi).unwrap());
        }
        assert!(identity_proximity(Scheme::Net, &spec, &[], &input).is_err());
        assert!(identity_proximity(Scheme::Net, &spec, &[1], &input[..2]).is_err());
    }

    #[test]
    fn ks_detects_no_change_under_left_invariance() {
        let mut r = rng(13);
        let a = CMatrix::random_hermitian(3, &mut r);
        let b = CMatrix::random_hermitian(3, &mut r);
        let v = haar_unitary::<f64, _>(3, &mut r).unwrap();
        let rep = haar_invariance_ks(&a, &b, &v, 4_000, &mut r).unwrap();
        assert!(!rep.rejected, "{rep:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mu_bounded_and_phase_invariant(n in 1usize..=5, depth in 1usize..=4, seed in any::<u64>(), phase in 0.0..6.3f64) {
            let spec = AnsatzSpec::new(n, depth).unwrap();
            let mut r = rng(seed);
            let theta: Vec<f64> = (0..n * depth).map(|_| r.gen_range(0.0..std::f64::consts::TAU)).collect();
            let x: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
            let phi = qubit_encode(&x).unwrap();
            let mu = proximity_mu(&spec, &theta, &phi).unwrap();
            prop_assert!((0.0..=2.0 + 1e-12).contains(&mu));
            let shifted = proximity_mu(&spec, &theta, &with_global_phase(&phi, phase)).unwrap();
            prop_assert!((mu - shifted).abs() < 1e-12);
        }

        #[test]
        fn haar_columns_orthonormal(d in 2usize..=12, seed in any::<u64>()) {
            let u = haar_unitary::<f64, _>(d, &mut rng(seed)).unwrap();
            prop_assert!(u.unitarity_error() < 1e-12);
        }
    }
}
