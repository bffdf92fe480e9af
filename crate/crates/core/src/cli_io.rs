//! Command-line front end and result persistence.
//!
//! Tabular outputs are CSV (header row, LF endings, floats at 17 significant
//! digits); summaries and model snapshots are JSON. CSV files contain no
//! timing data, so they are byte-identical across runs with the same inputs
//! and any worker-thread count. Wall times live in `summary.json`.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ansatz::{AnsatzSpec, Entangler};
use crate::bp_lab::{self, ScanInput, VarianceScanConfig};
use crate::encoding::quarter_pi_input;
use crate::error::Error;
use crate::statevector::Axis;
use crate::trainer::{
    self, aggregate_runs, DepthRule, Scheme, SweepAggregate, SweepConfig, SweepRun, TrainConfig, DEFAULT_ETA,
    DEFAULT_MAX_EPOCHS,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PLATEAU_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "plateau-out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_REACHED: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// `%.17g`: 17 significant digits, trailing zeros trimmed, exponent form
/// outside `1e-4 <= |x| < 1e17`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let fixed = format!("{:.*}", (16 - exp) as usize, x);
        trim_fraction(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_fraction(mantissa), exp.abs())
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_g17).unwrap_or_default()
}

/// Writes a CSV with a header row and LF line endings, creating parent
/// directories as needed.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn unix_timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parses `a:b` (inclusive), a comma list, or a single integer.
pub fn parse_qubit_range(s: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::Config(format!("invalid qubit range '{s}'"));
    let s = s.trim();
    let out: Vec<usize> = if let Some((a, b)) = s.split_once(':') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|v| v.trim().parse::<usize>().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(bad());
    }
    Ok(out)
}

/// Parses a comma-separated scheme list.
pub fn parse_schemes(s: &str) -> Result<Vec<Scheme>, Error> {
    let list: Vec<Scheme> =
        s.split(',').map(str::trim).filter(|v| !v.is_empty()).map(Scheme::from_str).collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err(Error::Config("scheme list is empty".into()));
    }
    Ok(list)
}

/// Flat JSON configuration. Every key is optional; command-line flags take
/// precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scheme: Option<Scheme>,
    pub schemes: Option<String>,
    pub qubits: Option<usize>,
    pub depth: Option<usize>,
    pub eta: Option<f64>,
    pub target: Option<f64>,
    pub max_epochs: Option<usize>,
    pub seed: Option<u64>,
    pub seed_base: Option<u64>,
    pub reps: Option<usize>,
    pub qubits_range: Option<String>,
    pub depth_rule: Option<String>,
    pub samples: Option<usize>,
    pub samples_second: Option<usize>,
    pub param_index: Option<usize>,
    pub dim: Option<usize>,
    pub seeds: Option<usize>,
    pub input: Option<String>,
    pub rotation_axis: Option<Axis>,
    pub entangler: Option<Entangler>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }
}

#[derive(Parser, Debug)]
#[command(name = "plateau", version, about = "Variational-circuit training and barren-plateau diagnostics")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One training run.
    Train(TrainArgs),
    /// Repeated runs over schemes and register sizes.
    Sweep(SweepArgs),
    /// Gradient-variance scan over register sizes.
    Variance(VarianceArgs),
    /// Monte-Carlo checks of the Haar moment identities.
    Lemmas(LemmasArgs),
    /// Distance of the initial circuit from the identity.
    Identity(IdentityArgs),
}

#[derive(Args, Debug, Default)]
struct CircuitFlags {
    /// Rotation axis: X, Y or Z.
    #[arg(long)]
    axis: Option<Axis>,
    /// Entangler layout: linear-cnot-ladder or none.
    #[arg(long)]
    entangler: Option<Entangler>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    circuit: CircuitFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma list, e.g. net,model1,model2,model3.
    #[arg(long)]
    schemes: Option<String>,
    /// `a:b` inclusive, or a comma list.
    #[arg(long)]
    qubits_range: Option<String>,
    /// equal, a fixed depth K, or fixed:K.
    #[arg(long)]
    depth_rule: Option<String>,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    #[command(flatten)]
    circuit: CircuitFlags,
}

#[derive(Args, Debug)]
struct VarianceArgs {
    #[arg(long)]
    qubits_range: Option<String>,
    #[arg(long)]
    depth_rule: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    param_index: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Circuit input: zero or quarter-pi.
    #[arg(long)]
    input: Option<String>,
    #[command(flatten)]
    circuit: CircuitFlags,
}

#[derive(Args, Debug)]
struct LemmasArgs {
    #[arg(long)]
    dim: Option<usize>,
    /// Samples for the first-moment identity.
    #[arg(long)]
    samples: Option<usize>,
    /// Samples for the second-moment identities (default: twice --samples).
    #[arg(long)]
    samples_second: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentityArgs {
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    qubits_range: Option<String>,
    #[arg(long)]
    depth_rule: Option<String>,
    /// Number of seeds per (scheme, n); seeds are seed-base, seed-base+1, ...
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    seed_base: Option<u64>,
    /// Encoder input: quarter-pi or alternating.
    #[arg(long)]
    input: Option<String>,
    #[command(flatten)]
    circuit: CircuitFlags,
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    match flag.or(file) {
        Some(v) => Ok(v),
        None => usage(format!("missing required option --{name}")),
    }
}

fn out_dir(flag: Option<PathBuf>, file: &ConfigFile) -> PathBuf {
    flag.or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn depth_rule(flag: Option<String>, file: &ConfigFile) -> CliResult<DepthRule> {
    Ok(flag.or_else(|| file.depth_rule.clone()).as_deref().unwrap_or("equal").parse()?)
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_) | CliError::Lib(_)) {
                eprintln!("run with --help for usage");
            }
            EXIT_USAGE
        }
    }
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            return usage("--threads must be positive");
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(a, &file),
        Command::Sweep(a) => cmd_sweep(a, &file),
        Command::Variance(a) => cmd_variance(a, &file),
        Command::Lemmas(a) => cmd_lemmas(a, &file),
        Command::Identity(a) => cmd_identity(a, &file),
    }
}

fn cmd_train(a: TrainArgs, file: &ConfigFile) -> CliResult<i32> {
    let n = required(a.qubits, file.qubits, "qubits")?;
    let config = TrainConfig {
        scheme: required(a.scheme, file.scheme, "scheme")?,
        n_qubits: n,
        depth: a.depth.or(file.depth).unwrap_or(n),
        eta: a.eta.or(file.eta).unwrap_or(DEFAULT_ETA),
        target_cost: required(a.target, file.target, "target")?,
        max_epochs: a.max_epochs.or(file.max_epochs).unwrap_or(DEFAULT_MAX_EPOCHS),
        seed: a.seed.or(file.seed).unwrap_or(0),
        rotation_axis: a.circuit.axis.or(file.rotation_axis).unwrap_or_default(),
        entangler: a.circuit.entangler.or(file.entangler).unwrap_or_default(),
    };
    let out = out_dir(a.circuit.out, file);
    let start = Instant::now();
    let result = trainer::train::<f64>(&config)?;
    let wall = start.elapsed().as_secs_f64();

    let rows: Vec<Vec<String>> = result.trajectory.iter().map(|p| vec![p.epoch.to_string(), fmt_g17(p.cost)]).collect();
    write_csv(&out.join("trajectory.csv"), &["epoch", "cost"], &rows)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "train",
            "config": config,
            "reached": result.reached,
            "epochs_to_target": result.epochs_to_target,
            "epochs_run": result.epochs_run(),
            "initial_cost": result.trajectory[0].cost,
            "final_cost": result.final_cost,
            "cost_evaluations": result.cost_evaluations,
            "final_theta": result.final_theta,
            "wall_time_seconds": wall,
            "timestamp": unix_timestamp(),
        }),
    )?;
    if let (Some(model), Some(alpha)) = (&result.final_model, &result.final_alpha) {
        write_json(
            &out.join("model.json"),
            &json!({ "schema_version": SCHEMA_VERSION, "scheme": config.scheme, "model": model, "alpha": alpha }),
        )?;
    }
    match result.epochs_to_target {
        Some(e) => {
            println!("reached target {} after {e} epochs (cost {})", config.target_cost, fmt_g17(result.final_cost))
        }
        None => println!(
            "target {} not reached after {} epochs (cost {})",
            config.target_cost,
            result.epochs_run(),
            fmt_g17(result.final_cost)
        ),
    }
    Ok(if result.reached { EXIT_OK } else { EXIT_NOT_REACHED })
}

pub const RECORD_HEADER: [&str; 13] = [
    "schema_version",
    "experiment_id",
    "scheme",
    "n",
    "depth",
    "eta",
    "target",
    "max_epochs",
    "seed",
    "repetition",
    "reached",
    "epochs",
    "final_cost",
];

pub const AGGREGATE_HEADER: [&str; 10] = [
    "schema_version",
    "scheme",
    "n",
    "depth",
    "runs",
    "reached",
    "failures",
    "mean_epochs",
    "min_epochs",
    "max_epochs",
];

pub fn experiment_id(c: &TrainConfig) -> String {
    format!("{}-n{}-L{}-s{}", c.scheme, c.n_qubits, c.depth, c.seed)
}

pub fn record_row(run: &SweepRun) -> Vec<String> {
    let c = &run.config;
    vec![
        SCHEMA_VERSION.to_string(),
        experiment_id(c),
        c.scheme.to_string(),
        c.n_qubits.to_string(),
        c.depth.to_string(),
        fmt_g17(c.eta),
        fmt_g17(c.target_cost),
        c.max_epochs.to_string(),
        c.seed.to_string(),
        run.repetition.to_string(),
        run.reached.to_string(),
        opt_usize(run.epochs_to_target),
        fmt_g17(run.final_cost),
    ]
}

pub fn aggregate_row(a: &SweepAggregate) -> Vec<String> {
    vec![
        SCHEMA_VERSION.to_string(),
        a.scheme.to_string(),
        a.n_qubits.to_string(),
        a.depth.to_string(),
        a.runs.to_string(),
        a.reached.to_string(),
        a.failures.to_string(),
        opt_f64(a.mean_epochs),
        opt_usize(a.min_epochs),
        opt_usize(a.max_epochs),
    ]
}

fn field<'r>(rec: &'r csv::StringRecord, headers: &csv::StringRecord, name: &str) -> CliResult<&'r str> {
    let idx =
        headers.iter().position(|h| h == name).ok_or_else(|| CliError::Usage(format!("missing column {name}")))?;
    Ok(rec.get(idx).unwrap_or(""))
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, headers: &csv::StringRecord, name: &str) -> CliResult<T> {
    let raw = field(rec, headers, name)?;
    raw.parse().map_err(|_| CliError::Usage(format!("bad value '{raw}' in column {name}")))
}

fn parse_opt<T: FromStr>(rec: &csv::StringRecord, headers: &csv::StringRecord, name: &str) -> CliResult<Option<T>> {
    match field(rec, headers, name)? {
        "" => Ok(None),
        _ => parse_field(rec, headers, name).map(Some),
    }
}

/// Reads a `records.csv` back into runs. Wall time is not stored and reads as 0.
pub fn read_records(path: &Path) -> CliResult<Vec<SweepRun>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let config = TrainConfig {
            scheme: parse_field(&rec, &headers, "scheme")?,
            n_qubits: parse_field(&rec, &headers, "n")?,
            depth: parse_field(&rec, &headers, "depth")?,
            eta: parse_field(&rec, &headers, "eta")?,
            target_cost: parse_field(&rec, &headers, "target")?,
            max_epochs: parse_field(&rec, &headers, "max_epochs")?,
            seed: parse_field(&rec, &headers, "seed")?,
            rotation_axis: Axis::default(),
            entangler: Entangler::default(),
        };
        out.push(SweepRun {
            repetition: parse_field(&rec, &headers, "repetition")?,
            reached: parse_field(&rec, &headers, "reached")?,
            epochs_to_target: parse_opt(&rec, &headers, "epochs")?,
            final_cost: parse_field(&rec, &headers, "final_cost")?,
            wall_time: 0.0,
            config,
        });
    }
    Ok(out)
}

pub fn read_aggregates(path: &Path) -> CliResult<Vec<SweepAggregate>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(SweepAggregate {
            scheme: parse_field(&rec, &headers, "scheme")?,
            n_qubits: parse_field(&rec, &headers, "n")?,
            depth: parse_field(&rec, &headers, "depth")?,
            runs: parse_field(&rec, &headers, "runs")?,
            reached: parse_field(&rec, &headers, "reached")?,
            failures: parse_field(&rec, &headers, "failures")?,
            mean_epochs: parse_opt(&rec, &headers, "mean_epochs")?,
            min_epochs: parse_opt(&rec, &headers, "min_epochs")?,
            max_epochs: parse_opt(&rec, &headers, "max_epochs")?,
        });
    }
    Ok(out)
}

/// Recomputes the aggregate table from a record file.
pub fn recompute_aggregates(records: &Path) -> CliResult<Vec<SweepAggregate>> {
    Ok(aggregate_runs(&read_records(records)?))
}

fn cmd_sweep(a: SweepArgs, file: &ConfigFile) -> CliResult<i32> {
    let schemes = parse_schemes(&required(a.schemes, file.schemes.clone(), "schemes")?)?;
    let config = SweepConfig {
        schemes,
        n_values: parse_qubit_range(&required(a.qubits_range, file.qubits_range.clone(), "qubits-range")?)?,
        depth_rule: depth_rule(a.depth_rule, file)?,
        reps: a.reps.or(file.reps).unwrap_or(10),
        eta: a.eta.or(file.eta).unwrap_or(DEFAULT_ETA),
        target_cost: required(a.target, file.target, "target")?,
        max_epochs: a.max_epochs.or(file.max_epochs).unwrap_or(DEFAULT_MAX_EPOCHS),
        seed_base: a.seed_base.or(file.seed_base).unwrap_or(0),
        rotation_axis: a.circuit.axis.or(file.rotation_axis).unwrap_or_default(),
        entangler: a.circuit.entangler.or(file.entangler).unwrap_or_default(),
    };
    let out = out_dir(a.circuit.out, file);
    let start = Instant::now();
    let result = trainer::run_sweep::<f64>(&config)?;
    let wall = start.elapsed().as_secs_f64();

    let records: Vec<Vec<String>> = result.runs.iter().map(record_row).collect();
    write_csv(&out.join("records.csv"), &RECORD_HEADER, &records)?;
    let aggregates: Vec<Vec<String>> = result.aggregates.iter().map(aggregate_row).collect();
    write_csv(&out.join("aggregate.csv"), &AGGREGATE_HEADER, &aggregates)?;
    let timings: Vec<_> = result
        .runs
        .iter()
        .map(|r| json!({ "experiment_id": experiment_id(&r.config), "wall_time_seconds": r.wall_time }))
        .collect();
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "sweep",
            "config": config,
            "aggregates": result.aggregates,
            "run_timings": timings,
            "wall_time_seconds": wall,
            "timestamp": unix_timestamp(),
        }),
    )?;
    for agg in &result.aggregates {
        println!(
            "{:<7} n={:<2} L={:<3} reached {}/{}  mean epochs {}",
            agg.scheme.to_string(),
            agg.n_qubits,
            agg.depth,
            agg.reached,
            agg.runs,
            agg.mean_epochs.map(|m| format!("{m:.1}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(EXIT_OK)
}

pub const VARIANCE_HEADER: [&str; 8] =
    ["schema_version", "n", "depth", "mean", "variance", "stderr", "samples", "variance_stderr"];

fn cmd_variance(a: VarianceArgs, file: &ConfigFile) -> CliResult<i32> {
    let input = match a.input.or_else(|| file.input.clone()).as_deref().unwrap_or("zero") {
        "zero" => ScanInput::Zero,
        "quarter-pi" => ScanInput::QuarterPi,
        other => return usage(format!("unknown scan input '{other}' (expected zero or quarter-pi)")),
    };
    let config = VarianceScanConfig {
        n_values: parse_qubit_range(&required(a.qubits_range, file.qubits_range.clone(), "qubits-range")?)?,
        depth_rule: depth_rule(a.depth_rule, file)?,
        samples: required(a.samples, file.samples, "samples")?,
        param_index: a.param_index.or(file.param_index).unwrap_or(0),
        rotation_axis: a.circuit.axis.or(file.rotation_axis).unwrap_or_default(),
        entangler: a.circuit.entangler.or(file.entangler).unwrap_or_default(),
        input,
    };
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let out = out_dir(a.circuit.out, file);
    let start = Instant::now();
    let scan = bp_lab::ansatz_variance_scan::<f64, _>(&config, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let wall = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<String>> = scan
        .reports
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.n_qubits.to_string(),
                opt_usize(r.depth),
                fmt_g17(r.mean),
                fmt_g17(r.variance),
                fmt_g17(r.stderr),
                r.samples.to_string(),
                fmt_g17(r.variance_stderr),
            ]
        })
        .collect();
    write_csv(&out.join("variance.csv"), &VARIANCE_HEADER, &rows)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "variance",
            "config": config,
            "seed": seed,
            "log_variance_slope": scan.log_variance_slope,
            "reports": scan.reports,
            "wall_time_seconds": wall,
            "timestamp": unix_timestamp(),
        }),
    )?;
    for r in &scan.reports {
        println!("n={:<2} mean {:+.3e}  var {:.4e}  (se {:.2e})", r.n_qubits, r.mean, r.variance, r.variance_stderr);
    }
    if let Some(s) = scan.log_variance_slope {
        println!("slope of ln Var vs n: {s:.4}");
    }
    Ok(EXIT_OK)
}

pub const LEMMA_HEADER: [&str; 15] = [
    "schema_version",
    "lemma",
    "case",
    "dim",
    "samples",
    "estimate_re",
    "estimate_im",
    "analytic_re",
    "analytic_im",
    "abs_error",
    "rel_error",
    "stderr_re",
    "stderr_im",
    "within_band",
    "conclusive",
];

fn cmd_lemmas(a: LemmasArgs, file: &ConfigFile) -> CliResult<i32> {
    let dim = required(a.dim, file.dim, "dim")?;
    let samples = required(a.samples, file.samples, "samples")?;
    let second = a.samples_second.or(file.samples_second).unwrap_or(2 * samples);
    let seed = a.seed.or(file.seed).unwrap_or(0);
    let out = out_dir(a.out, file);
    let start = Instant::now();
    let reports = bp_lab::run_lemma_battery::<f64, _>(dim, samples, second, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let wall = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.lemma.to_string(),
                r.case.clone(),
                r.dim.to_string(),
                r.samples.to_string(),
                fmt_g17(r.estimate_re),
                fmt_g17(r.estimate_im),
                fmt_g17(r.analytic_re),
                fmt_g17(r.analytic_im),
                fmt_g17(r.abs_error),
                opt_f64(r.rel_error),
                fmt_g17(r.stderr_re),
                fmt_g17(r.stderr_im),
                r.within_band.to_string(),
                r.conclusive.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("lemmas.csv"), &LEMMA_HEADER, &rows)?;
    let inconclusive = reports.iter().any(|r| !r.conclusive);
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "lemmas",
            "dim": dim,
            "samples": samples,
            "samples_second": second,
            "seed": seed,
            "all_within_band": reports.iter().all(|r| r.within_band),
            "statistically_inconclusive": inconclusive,
            "reports": reports,
            "wall_time_seconds": wall,
            "timestamp": unix_timestamp(),
        }),
    )?;
    for r in &reports {
        println!(
            "lemma {} {:<18} d={:<2} estimate {:+.6} analytic {:+.6} se {:.2e} {}",
            r.lemma,
            r.case,
            r.dim,
            r.estimate_re,
            r.analytic_re,
            r.stderr_re,
            if r.within_band { "ok" } else { "OUTSIDE 3se" }
        );
    }
    if inconclusive {
        println!("statistically inconclusive: fewer than {} samples", bp_lab::MIN_CONCLUSIVE_SAMPLES);
    }
    Ok(EXIT_OK)
}

pub const IDENTITY_HEADER: [&str; 6] = ["schema_version", "scheme", "n", "depth", "seed", "mu"];

fn cmd_identity(a: IdentityArgs, file: &ConfigFile) -> CliResult<i32> {
    let schemes = parse_schemes(&required(a.schemes, file.schemes.clone(), "schemes")?)?;
    let n_values = parse_qubit_range(&required(a.qubits_range, file.qubits_range.clone(), "qubits-range")?)?;
    let rule = depth_rule(a.depth_rule, file)?;
    let count = a.seeds.or(file.seeds).unwrap_or(10);
    if count == 0 {
        return usage("--seeds must be at least 1");
    }
    let base = a.seed_base.or(file.seed_base).unwrap_or(0);
    let seeds: Vec<u64> = (0..count as u64).map(|i| base.wrapping_add(i)).collect();
    let input_kind = a.input.or_else(|| file.input.clone()).unwrap_or_else(|| "quarter-pi".into());
    let axis = a.circuit.axis.or(file.rotation_axis).unwrap_or_default();
    let entangler = a.circuit.entangler.or(file.entangler).unwrap_or_default();
    let out = out_dir(a.circuit.out, file);

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for &scheme in &schemes {
        for &n in &n_values {
            let spec = AnsatzSpec::new(n, rule.depth_for(n))?.with_axis(axis).with_entangler(entangler);
            let input: Vec<f64> = match input_kind.as_str() {
                "quarter-pi" => quarter_pi_input(n),
                "alternating" => bp_lab::alternating_input(n),
                other => return usage(format!("unknown encoder input '{other}' (expected quarter-pi or alternating)")),
            };
            let rep = bp_lab::identity_proximity(scheme, &spec, &seeds, &input)?;
            for (seed, mu) in rep.seeds.iter().zip(&rep.mu) {
                rows.push(vec![
                    SCHEMA_VERSION.to_string(),
                    scheme.to_string(),
                    n.to_string(),
                    spec.depth.to_string(),
                    seed.to_string(),
                    fmt_g17(*mu),
                ]);
            }
            println!("{:<7} n={:<2} mean mu {:.4} (min {:.4})", scheme.to_string(), n, rep.mean, rep.min);
            reports.push(rep);
        }
    }
    write_csv(&out.join("identity.csv"), &IDENTITY_HEADER, &rows)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "identity",
            "input": input_kind,
            "depth_rule": rule,
            "reports": reports,
            "timestamp": unix_timestamp(),
        }),
    )?;
    Ok(EXIT_OK)
}
