//! Command-line front end.
//!
//! Each subcommand resolves its arguments (config file section first, flags
//! override), runs the computation and writes a JSON envelope or a CSV table.
//! Envelopes carry the canonical config, its SHA-256 and the calibration
//! table version, so identical inputs give byte-identical files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::calibration::{self, write_atomic, CalibrateOptions, CalibrationError, CalibrationTable};
use crate::integral_tests::{self, Class, ClassifyError, RateDirection, Verdict};
use crate::kernels::{self, classify_long_run, KernelError, KernelModel};
use crate::mc_verify::{
    estimate_block_events, pairwise_from_flags, verify_rate_dichotomy, BlockMode, BlockSpec, McError, RateSide,
    PAIRWISE_MIN_COUNT,
};
use crate::potential::{GreenMode, PotentialError};
use crate::scaling::{parse_preset, RateCandidate, ScalingError, ScalingFunction};
use crate::simulate::{sample_path, Refinement, Scheme, SimulateError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Default location of the calibration table.
pub const DEFAULT_CALIBRATION: &str = "data/calibration.toml";

#[derive(Debug, Parser)]
#[command(name = "hkrate", version, about = "Rate functions, potential bounds and Monte Carlo checks for heat-kernel models")]
pub struct Cli {
    /// TOML file with one section per subcommand; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Calibration table used by bound and verification commands.
    #[arg(long, global = true, default_value = DEFAULT_CALIBRATION)]
    pub calibration: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Build the versioned constants table.
    Calibrate(CalibrateArgs),
    /// Run an integral test.
    Classify(ClassifyArgs),
    /// Sample path skeletons.
    Simulate(SimulateArgs),
    /// Evaluate potential-theoretic bounds from the calibration table.
    Bounds(BoundsArgs),
    /// Violation-fraction trend for an upper rate candidate.
    VerifyUpper(VerifyUpperArgs),
    /// Violation-fraction trend or block events for a lower rate candidate.
    VerifyLower(VerifyLowerArgs),
    /// Flatten JSON outputs into one plot-ready CSV.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate(_) => "calibrate",
            Command::Classify(_) => "classify",
            Command::Simulate(_) => "simulate",
            Command::Bounds(_) => "bounds",
            Command::VerifyUpper(_) => "verify-upper",
            Command::VerifyLower(_) => "verify-lower",
            Command::Report(_) => "report",
        }
    }

    fn config_value(&self) -> Result<Value> {
        Ok(match self {
            Command::Calibrate(a) => serde_json::to_value(a)?,
            Command::Classify(a) => serde_json::to_value(a)?,
            Command::Simulate(a) => serde_json::to_value(a)?,
            Command::Bounds(a) => serde_json::to_value(a)?,
            Command::VerifyUpper(a) => serde_json::to_value(a)?,
            Command::VerifyLower(a) => serde_json::to_value(a)?,
            Command::Report(a) => serde_json::to_value(a)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Output destination shared by the subcommands; not part of the config hash.
#[derive(Debug, Clone, Args)]
pub struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub seed: u64,
    /// Replicas per hitting and `Q` fit point.
    #[arg(long, default_value_t = calibration::DEFAULT_MC_REPLICAS)]
    pub replicas: usize,
    #[arg(long, default_value_t = calibration::DEFAULT_BLOCK_REPLICAS)]
    pub block_replicas: usize,
    /// Comma-separated model ids.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Where to write the table; defaults to `--calibration`.
    #[arg(long)]
    #[serde(skip)]
    pub table: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    /// `∫ f(t) dt` for an expression in `t`.
    Generic,
    Kolmogorov,
    DvoretzkyErdos,
    UpperRate,
    Subcritical,
    Critical,
    LongRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    OneProb,
    ZeroProb,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long, value_enum)]
    pub test: TestKind,
    /// Integrand expression for the generic test.
    #[arg(long)]
    pub f: Option<String>,
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub phi: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub dim: Option<u32>,
    #[arg(long, default_value_t = integral_tests::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Direction::OneProb)]
    pub direction: Direction,
    /// Lower end of the integration range.
    #[arg(long, default_value_t = integral_tests::DEFAULT_T0)]
    pub t0: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    /// Time horizon.
    #[arg(long = "horizon", short = 'T')]
    pub horizon: f64,
    /// `dyadic:N`, `dyadic:BASE,N` or `uniform:DT`.
    #[arg(long, default_value = "dyadic:256")]
    pub scheme: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// Green function at distance `d`.
    Green,
    /// Capacity of the ball of radius `r`.
    Capacity,
    /// Probability of hitting `B(x, r)` from distance `d`.
    Hit,
    /// `Q(x, r, t)`: hitting `B(x, r)` after time `t`.
    Q,
    /// Lower rate window radius at `(r, t, theta)`.
    Window,
    /// Probability of visiting `B(x, r)` during `[a, b]`, critical models.
    Occupation,
    /// `P(d(X_t, x) >= r)`.
    Tail,
    /// `P(d(X_t, x) < r)`.
    Ball,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    /// Comma-separated values; every listed combination is evaluated.
    #[arg(long, value_delimiter = ',')]
    pub r: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub a: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub b: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub theta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = GreenKind::Envelope)]
    pub green_mode: GreenKind,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreenKind {
    Envelope,
    Quadrature,
}

/// Options shared by the two trend commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrendArgs {
    #[arg(long)]
    pub model: String,
    /// Window pairs `T0:T`, comma-separated; `B^E` is accepted for powers.
    #[arg(long, value_delimiter = ',')]
    pub windows: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub replicas: usize,
    /// Step-size factor of the adaptive walker.
    #[arg(long, default_value_t = Refinement::default().kappa)]
    pub kappa: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyUpperArgs {
    #[command(flatten)]
    pub trend: TrendArgs,
    /// Candidate rate function preset.
    #[arg(long)]
    pub phi: String,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyLowerArgs {
    #[command(flatten)]
    pub trend: TrendArgs,
    /// Gauge `g` of the candidate built from the model's walk function.
    #[arg(long, conflicts_with = "phi")]
    pub g: Option<String>,
    /// Candidate rate function used as is.
    #[arg(long)]
    pub phi: Option<String>,
    /// Block events over `[B^n, B^(n+1)]`, `FIRST:LAST`, instead of a trend.
    #[arg(long)]
    pub blocks: Option<String>,
    #[arg(long, default_value_t = 2.0)]
    pub base: f64,
    /// Radius multiplier of the block events.
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[command(flatten)]
    #[serde(skip)]
    pub output: Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// JSON files written by the other subcommands.
    #[arg(long, required = true, num_args = 1..)]
    #[serde(skip)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

/// Result of a subcommand before serialisation.
struct Outcome {
    result: Value,
    /// Header and rows for CSV output.
    table: (Vec<String>, Vec<Vec<String>>),
    inconclusive: bool,
}

impl Outcome {
    fn new(result: Value, header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Outcome {
            result,
            table: (header.iter().map(|s| s.to_string()).collect(), rows),
            inconclusive: false,
        }
    }
}

/// Runs the CLI on `args` (including the program name).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match parse(&args) {
        Ok(cli) => match run(&cli) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            let help = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            ExitCode::from(if help { 0 } else { 1 })
        }
    }
}

fn parse(args: &[OsString]) -> std::result::Result<Cli, clap::Error> {
    // required flags may live in the config file, so locate it before clap runs
    let strs: Vec<&str> = args.iter().map(|a| a.to_str().unwrap_or_default()).collect();
    let config = strs.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--config") {
        Some("") => strs.get(i + 1).map(|s| s.to_string()),
        Some(v) => v.strip_prefix('=').map(str::to_string),
        None => None,
    });
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let sub = strs.iter().find(|a| names.iter().any(|n| n == *a));
    let args = match (config, sub) {
        (Some(path), Some(sub)) => merge_config(args, Path::new(&path), sub)
            .map_err(|e| Cli::command().error(clap::error::ErrorKind::InvalidValue, e.to_string()))?,
        _ => args.to_vec(),
    };
    let matches = Cli::command().try_get_matches_from(&args)?;
    Cli::from_arg_matches(&matches)
}

/// Inserts `--key value` pairs from the config section of `sub` after the
/// subcommand name, skipping keys already given on the command line.
fn merge_config(args: &[OsString], path: &Path, sub: &str) -> Result<Vec<OsString>> {
    let bad = |reason: String| CliError::Config {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    for key in doc.keys() {
        if !doc[key].is_table() {
            return Err(bad(format!("top-level key `{key}` must live in a subcommand section")));
        }
    }
    let Some(section) = doc.get(sub).and_then(|v| v.as_table()) else {
        return Ok(args.to_vec());
    };
    let pos = args
        .iter()
        .position(|a| a.to_str() == Some(sub))
        .ok_or_else(|| bad(format!("subcommand `{sub}` not found in arguments")))?;
    let given: Vec<String> = args[pos + 1..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra: Vec<OsString> = Vec::new();
    for (key, value) in section {
        let flag = key.replace('_', "-");
        if given.contains(&flag) {
            continue;
        }
        let text = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(true) => {
                extra.push(format!("--{flag}").into());
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    _ => Err(bad(format!("unsupported array item in `{key}`"))),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            _ => return Err(bad(format!("unsupported value for `{key}`"))),
        };
        extra.push(format!("--{flag}").into());
        extra.push(text.into());
    }
    let mut merged = args[..=pos].to_vec();
    merged.extend(extra);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(merged)
}

/// Canonical JSON of the resolved arguments and its SHA-256.
pub fn config_hash(command: &Command) -> Result<(Value, String)> {
    let config = json!({ "command": command.name(), "args": command.config_value()? });
    let text = serde_json::to_string(&config)?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok((config, hash))
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a pool may already exist when run is called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let (config, hash) = config_hash(&cli.command)?;
    let (outcome, version, output) = match &cli.command {
        Command::Calibrate(a) => {
            let (o, v) = calibrate_cmd(a, &cli.calibration)?;
            (o, Some(v), &a.output)
        }
        Command::Classify(a) => (classify_cmd(a)?, optional_version(&cli.calibration), &a.output),
        Command::Simulate(a) => (simulate_cmd(a)?, optional_version(&cli.calibration), &a.output),
        Command::Bounds(a) => {
            let table = CalibrationTable::load(&cli.calibration)?;
            (bounds_cmd(a, &table)?, Some(table.version.clone()), &a.output)
        }
        Command::VerifyUpper(a) => {
            let table = CalibrationTable::load(&cli.calibration)?;
            (verify_upper_cmd(a, &table)?, Some(table.version.clone()), &a.output)
        }
        Command::VerifyLower(a) => {
            let table = CalibrationTable::load(&cli.calibration)?;
            (verify_lower_cmd(a, &table)?, Some(table.version.clone()), &a.output)
        }
        Command::Report(a) => {
            report_cmd(a)?;
            return Ok(ExitCode::SUCCESS);
        }
    };
    let bytes = match output.format {
        Format::Json => {
            let envelope = json!({
                "tool": "hkrate",
                "tool_version": env!("CARGO_PKG_VERSION"),
                "command": cli.command.name(),
                "config": config,
                "config_hash": hash,
                "calibration_version": version,
                "result": outcome.result,
            });
            let mut s = serde_json::to_string_pretty(&envelope)?;
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => {
            let (header, rows) = &outcome.table;
            let mut full_header = vec!["config_hash".to_string(), "calibration_version".to_string()];
            full_header.extend(header.iter().cloned());
            let v = version.clone().unwrap_or_default();
            let rows = rows.iter().map(|r| {
                let mut full = vec![hash.clone(), v.clone()];
                full.extend(r.iter().cloned());
                full
            });
            csv_bytes(&full_header, rows)?
        }
    };
    emit(output.out.as_deref(), &bytes)?;
    Ok(if outcome.inconclusive {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn optional_version(path: &Path) -> Option<String> {
    CalibrationTable::load(path).ok().map(|t| t.version)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => Ok(write_atomic(p, bytes)?),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
    }
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn require<'a>(v: &'a Option<String>, flag: &str, test: &str) -> Result<&'a str> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required for {test}")))
}

fn calibrate_cmd(a: &CalibrateArgs, default_path: &Path) -> Result<(Outcome, String)> {
    let mut opts = CalibrateOptions {
        seed: a.seed,
        mc_replicas: a.replicas,
        block_replicas: a.block_replicas,
        ..CalibrateOptions::default()
    };
    if !a.models.is_empty() {
        opts.models = a.models.clone();
    }
    let table = calibration::calibrate(&opts)?;
    let path = a.table.clone().unwrap_or_else(|| default_path.to_path_buf());
    table.save(&path)?;
    let rows = table
        .models
        .iter()
        .map(|(id, e)| {
            vec![
                id.clone(),
                num(e.constants.hit.lo),
                num(e.constants.hit.hi),
                num(e.constants.q.lo),
                num(e.constants.q.hi),
            ]
        })
        .collect();
    let result = json!({
        "version": table.version,
        "models": table.models.keys().collect::<Vec<_>>(),
        "block_events": table.block_events,
    });
    let o = Outcome::new(result, &["model", "hit_lo", "hit_hi", "q_lo", "q_hi"], rows);
    Ok((o, table.version))
}

fn verdict_outcome(v: Verdict) -> Result<Outcome> {
    let rows = v
        .block_table
        .iter()
        .map(|b| {
            vec![
                b.depth.to_string(),
                b.index.to_string(),
                num(b.lower),
                num(b.upper),
                num(b.ln_integral),
            ]
        })
        .collect();
    let inconclusive = v.class == Class::Inconclusive;
    let mut o = Outcome::new(
        serde_json::to_value(&v)?,
        &["depth", "index", "lower", "upper", "ln_integral"],
        rows,
    );
    o.inconclusive = inconclusive;
    Ok(o)
}

fn classify_cmd(a: &ClassifyArgs) -> Result<Outcome> {
    let preset = |v: &Option<String>, flag: &str| -> Result<ScalingFunction> {
        Ok(parse_preset(require(v, flag, "this test")?)?)
    };
    let model = || -> Result<KernelModel> { Ok(KernelModel::parse(require(&a.model, "model", "this test")?)?) };
    let dim = |m: Option<&KernelModel>| -> Result<u32> {
        a.dim
            .or_else(|| m.and_then(|m| m.dim).map(|d| d as u32))
            .ok_or_else(|| CliError::Usage("--dim or --model is required".into()))
    };
    let verdict = match a.test {
        TestKind::Generic => integral_tests::classify_expression(require(&a.f, "f", "the generic test")?, a.t0)?,
        TestKind::Kolmogorov => integral_tests::kolmogorov_test(&preset(&a.g, "g")?, dim(None)?)?,
        TestKind::DvoretzkyErdos => integral_tests::dvoretzky_erdos_test(&preset(&a.h, "h")?, dim(None)?)?,
        TestKind::UpperRate => {
            let (h, rho) = match &a.model {
                Some(_) => {
                    let m = model()?;
                    let dw = m.exponents().d4;
                    (m.tail_shape()?, ScalingFunction::power(1.0 / dw, 1.0))
                }
                None => (preset(&a.h, "h")?, preset(&a.rho, "rho")?),
            };
            let direction = match a.direction {
                Direction::OneProb => RateDirection::OneProb,
                Direction::ZeroProb => RateDirection::ZeroProb,
            };
            let phi = RateCandidate::direct(preset(&a.phi, "phi")?);
            integral_tests::upper_rate_test(&h, &rho, &phi, a.eps, direction)?
        }
        TestKind::Subcritical => integral_tests::subcritical_lower_rate_test(&model()?, &preset(&a.g, "g")?)?,
        TestKind::Critical => integral_tests::critical_lower_rate_test(&preset(&a.g, "g")?)?,
        TestKind::LongRun => classify_long_run(&model()?)?.1,
    };
    verdict_outcome(verdict)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<Outcome> {
    let model = KernelModel::parse(&a.model)?;
    let scheme: Scheme = a.scheme.parse()?;
    if a.replicas == 0 {
        return Err(CliError::Usage("--replicas must be positive".into()));
    }
    let mut dim = 0;
    let mut paths = Vec::with_capacity(a.replicas);
    let mut rows = Vec::new();
    for i in 0..a.replicas as u64 {
        let p = sample_path(&model, a.horizon, scheme, a.seed ^ i)?;
        dim = p.dim();
        for (t, x) in p.times.iter().zip(&p.positions) {
            let mut row = vec![i.to_string(), num(*t)];
            row.extend(x.iter().map(|v| num(*v)));
            rows.push(row);
        }
        paths.push(json!({ "replica": i, "times": p.times, "positions": p.positions }));
    }
    let mut header = vec!["replica".to_string(), "time".to_string()];
    header.extend((0..dim).map(|k| format!("x{k}")));
    let result = json!({
        "model": a.model,
        "scheme": scheme,
        "horizon": a.horizon,
        "seeds": [a.seed, a.seed ^ (a.replicas as u64 - 1)],
        "paths": paths,
    });
    Ok(Outcome {
        result,
        table: (header, rows),
        inconclusive: false,
    })
}

fn bounds_cmd(a: &BoundsArgs, table: &CalibrationTable) -> Result<Outcome> {
    let potential = table.potential(&a.model)?;
    let model = potential.model().clone();
    let names: &[&str] = match a.quantity {
        Quantity::Green => &["d"],
        Quantity::Capacity => &["r"],
        Quantity::Hit => &["r", "d"],
        Quantity::Q => &["r", "t"],
        Quantity::Window => &["r", "t", "theta"],
        Quantity::Occupation => &["r", "a", "b"],
        Quantity::Tail | Quantity::Ball => &["t", "r"],
    };
    let lists: Vec<&Vec<f64>> = names
        .iter()
        .map(|&n| {
            let v = match n {
                "r" => &a.r,
                "d" => &a.d,
                "t" => &a.t,
                "a" => &a.a,
                "b" => &a.b,
                _ => &a.theta,
            };
            if v.is_empty() {
                Err(CliError::Usage(format!("--{n} is required for this quantity")))
            } else {
                Ok(v)
            }
        })
        .collect::<Result<_>>()?;
    let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
    for list in &lists {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                list.iter().map(move |&x| {
                    let mut c = c.clone();
                    c.push(x);
                    c
                })
            })
            .collect();
    }
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for c in combos {
        let (value, lower, upper, detail) = match a.quantity {
            Quantity::Green => {
                let mode = match a.green_mode {
                    GreenKind::Envelope => GreenMode::Envelope,
                    GreenKind::Quadrature => GreenMode::Quadrature,
                };
                let g = potential.green_function(c[0], mode)?;
                let (value, lo, hi) = match &g {
                    crate::potential::GreenValue::Envelope { center, bounds } => {
                        (Some(*center), Some(bounds.lower), Some(bounds.upper))
                    }
                    crate::potential::GreenValue::Quadrature { value } => (Some(*value), None, None),
                };
                (value, lo, hi, serde_json::to_value(&g)?)
            }
            Quantity::Capacity => pair(potential.capacity_bounds(c[0])?)?,
            Quantity::Hit => pair(potential.hit_ball_from_distance(c[0], c[1])?)?,
            Quantity::Q => pair(potential.q_bounds(c[0], c[1])?)?,
            Quantity::Window => {
                let w = potential.r_window_lower(c[0], c[1], c[2])?;
                (Some(w.value), None, None, serde_json::to_value(w)?)
            }
            Quantity::Occupation => pair(potential.occupation_sandwich(c[0], c[1], c[2])?)?,
            Quantity::Tail => {
                let p = kernels::tail_probability(&model, c[0], c[1])?;
                (Some(p.estimate), None, None, serde_json::to_value(p)?)
            }
            Quantity::Ball => {
                let p = kernels::ball_probability(&model, c[0], c[1])?;
                (p.probability, None, Some(p.envelope), serde_json::to_value(p)?)
            }
        };
        let mut row: Vec<String> = c.iter().map(|x| num(*x)).collect();
        row.extend([opt_num(value), opt_num(lower), opt_num(upper)]);
        rows.push(row);
        let params: Map<String, Value> = names.iter().zip(&c).map(|(n, x)| (n.to_string(), json!(x))).collect();
        results.push(json!({ "params": params, "bounds": detail }));
    }
    let mut header: Vec<&str> = names.to_vec();
    header.extend(["value", "lower", "upper"]);
    let result = json!({ "model": a.model, "quantity": a.quantity, "points": results });
    Ok(Outcome::new(result, &header, rows))
}

type PairRow = (Option<f64>, Option<f64>, Option<f64>, Value);

fn pair(b: crate::potential::BoundPair) -> Result<PairRow> {
    Ok((None, Some(b.lower), Some(b.upper), serde_json::to_value(b)?))
}

/// Parses `2^32`-style powers as well as plain numbers.
fn parse_time(s: &str) -> Result<f64> {
    let bad = || CliError::Usage(format!("invalid time `{s}`"));
    let v = match s.split_once('^') {
        Some((b, e)) => {
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let e: f64 = e.trim().parse().map_err(|_| bad())?;
            b.powf(e)
        }
        None => s.trim().parse().map_err(|_| bad())?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn parse_windows(items: &[String], default: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if items.is_empty() {
        return Ok(default.to_vec());
    }
    items
        .iter()
        .map(|w| {
            let (a, b) = w
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("window `{w}` must be T0:T")))?;
            let (a, b) = (parse_time(a)?, parse_time(b)?);
            if a < b {
                Ok((a, b))
            } else {
                Err(CliError::Usage(format!("window `{w}` must have T0 < T")))
            }
        })
        .collect()
}

/// Windows used when none are given.
pub const DEFAULT_WINDOWS: &[(f64, f64)] = &[(64.0, 1024.0), (256.0, 4096.0), (1024.0, 16384.0)];

fn refinement(kappa: f64) -> Result<Refinement> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(CliError::Usage(format!("--kappa {kappa} must lie in (0, 1]")));
    }
    Ok(Refinement {
        kappa,
        ..Refinement::default()
    })
}

fn trend_outcome(report: crate::mc_verify::DichotomyReport) -> Result<Outcome> {
    let rows = report
        .reports
        .iter()
        .zip(&report.trend.windows)
        .map(|(r, w)| {
            vec![
                num(w.0),
                num(w.1),
                num(r.estimate),
                num(r.ci_halfwidth),
                r.n_replicas.to_string(),
                opt_num(r.grid_sensitivity),
            ]
        })
        .collect();
    Ok(Outcome::new(
        serde_json::to_value(&report)?,
        &["t0", "t", "fraction", "ci", "n", "grid_sensitivity"],
        rows,
    ))
}

fn verify_upper_cmd(a: &VerifyUpperArgs, table: &CalibrationTable) -> Result<Outcome> {
    let model = table.model(&a.trend.model)?;
    let windows = parse_windows(&a.trend.windows, DEFAULT_WINDOWS)?;
    let cand = RateCandidate::direct(parse_preset(&a.phi)?);
    let report = verify_rate_dichotomy(
        &model,
        &cand,
        RateSide::Upper,
        &windows,
        a.trend.replicas,
        a.trend.seed,
        refinement(a.trend.kappa)?,
    )?;
    trend_outcome(report)
}

fn lower_candidate(a: &VerifyLowerArgs, model: &KernelModel) -> Result<(RateCandidate, Option<Verdict>)> {
    if let Some(phi) = &a.phi {
        return Ok((RateCandidate::direct(parse_preset(phi)?), None));
    }
    let g = parse_preset(require(&a.g, "g", "verify-lower without --phi")?)?;
    let walk = model.walk()?;
    if model.is_critical() {
        let v = integral_tests::critical_lower_rate_test(&g).ok();
        Ok((RateCandidate::critical(walk, g), v))
    } else if model.is_subcritical() {
        let v = integral_tests::subcritical_lower_rate_test(model, &g).ok();
        Ok((RateCandidate::subcritical(walk, g), v))
    } else {
        Err(CliError::Usage(format!(
            "model {} is neither critical nor subcritical; pass --phi",
            model.id
        )))
    }
}

fn verify_lower_cmd(a: &VerifyLowerArgs, table: &CalibrationTable) -> Result<Outcome> {
    let model = table.model(&a.trend.model)?;
    let (cand, verdict) = lower_candidate(a, &model)?;
    let refn = refinement(a.trend.kappa)?;
    let Some(blocks) = &a.blocks else {
        let windows = parse_windows(&a.trend.windows, DEFAULT_WINDOWS)?;
        let report = verify_rate_dichotomy(
            &model,
            &cand,
            RateSide::Lower,
            &windows,
            a.trend.replicas,
            a.trend.seed,
            refn,
        )?;
        let mut o = trend_outcome(report)?;
        o.result = json!({ "dichotomy": o.result, "integral_test": verdict });
        return Ok(o);
    };
    let (first, last) = blocks
        .split_once(':')
        .and_then(|(f, l)| Some((f.trim().parse::<i32>().ok()?, l.trim().parse::<i32>().ok()?)))
        .ok_or_else(|| CliError::Usage(format!("--blocks `{blocks}` must be FIRST:LAST")))?;
    let spec = BlockSpec {
        base: a.base,
        first,
        last,
        c: a.c,
        mode: BlockMode::LowerRate,
    };
    let potential = if model.is_subcritical() {
        Some(table.potential(&a.trend.model)?)
    } else {
        None
    };
    let run = estimate_block_events(&model, &cand, &spec, a.trend.replicas, a.trend.seed, refn, potential.as_ref())?;
    let pairwise = pairwise_from_flags(&run.flags, &spec.indices(), PAIRWISE_MIN_COUNT)?;
    let rows = run
        .reports
        .iter()
        .zip(spec.indices())
        .map(|(r, n)| {
            let c = r.comparison.as_ref();
            vec![
                n.to_string(),
                num(r.estimate),
                num(r.ci_halfwidth),
                opt_num(c.and_then(|c| c.reference)),
                opt_num(c.and_then(|c| c.ratio)),
                opt_num(r.grid_sensitivity),
            ]
        })
        .collect();
    let result = json!({ "blocks": run, "pairwise": pairwise, "integral_test": verdict });
    Ok(Outcome::new(
        result,
        &["block", "estimate", "ci", "reference", "ratio", "grid_sensitivity"],
        rows,
    ))
}

/// Every numeric leaf of `v` as `(json pointer, value)`.
fn numeric_leaves(v: &Value, prefix: &mut String, out: &mut Vec<(String, String)>) {
    match v {
        Value::Number(n) => out.push((prefix.clone(), n.to_string())),
        Value::Bool(b) => out.push((prefix.clone(), b.to_string())),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let len = prefix.len();
                prefix.push_str(&format!("/{i}"));
                numeric_leaves(item, prefix, out);
                prefix.truncate(len);
            }
        }
        Value::Object(map) => {
            for (k, item) in map {
                let len = prefix.len();
                prefix.push('/');
                prefix.push_str(&k.replace('~', "~0").replace('/', "~1"));
                numeric_leaves(item, prefix, out);
                prefix.truncate(len);
            }
        }
        Value::String(_) | Value::Null => {}
    }
}

/// Long-format CSV: one row per numeric leaf of each input's result.
fn report_cmd(a: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &a.input {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let doc: Value = serde_json::from_str(&text)?;
        let field = |k: &str| doc.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
        let Some(result) = doc.get("result") else {
            return Err(CliError::Usage(format!("{} is not an hkrate output", path.display())));
        };
        let mut leaves = Vec::new();
        numeric_leaves(result, &mut String::new(), &mut leaves);
        for (pointer, value) in leaves {
            rows.push(vec![
                path.display().to_string(),
                field("command"),
                field("config_hash"),
                field("calibration_version"),
                pointer,
                value,
            ]);
        }
    }
    let header: Vec<String> = ["source", "command", "config_hash", "calibration_version", "pointer", "value"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let bytes = csv_bytes(&header, rows)?;
    emit(a.out.as_deref(), &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_sections_fill_missing_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "[classify]\ntest = \"critical\"\ng = \"powerlog:0,-1\"\n").unwrap();
        let p = path.to_str().unwrap();
        let cli = parse(&os(&["hkrate", "--config", p, "classify", "--g", "iterated-log-g:0.5"])).unwrap();
        let Command::Classify(a) = &cli.command else { panic!() };
        assert_eq!(a.test, TestKind::Critical);
        assert_eq!(a.g.as_deref(), Some("iterated-log-g:0.5"));
    }

    #[test]
    fn config_hash_ignores_output_location() {
        let a = parse(&os(&["hkrate", "classify", "--test", "generic", "--f", "1/t"])).unwrap();
        let b = parse(&os(&["hkrate", "classify", "--test", "generic", "--f", "1/t", "--out", "x.json"])).unwrap();
        let c = parse(&os(&["hkrate", "classify", "--test", "generic", "--f", "1/t^2"])).unwrap();
        let h = |c: &Cli| config_hash(&c.command).unwrap().1;
        assert_eq!(h(&a), h(&b));
        assert_ne!(h(&a), h(&c));
    }

    #[test]
    fn stochastic_commands_need_a_seed() {
        assert!(parse(&os(&["hkrate", "simulate", "--model", "cauchy1d", "-T", "8"])).is_err());
        assert!(parse(&os(&["hkrate", "verify-upper", "--model", "cauchy1d", "--phi", "powerlog:1,2"])).is_err());
    }

    #[test]
    fn times_and_windows_parse() {
        assert_eq!(parse_time("2^10").unwrap(), 1024.0);
        assert_eq!(parse_time("16").unwrap(), 16.0);
        assert!(parse_time("-1").is_err());
        let w = parse_windows(&["16:2^8".into()], &[]).unwrap();
        assert_eq!(w, vec![(16.0, 256.0)]);
        assert!(parse_windows(&["8:4".into()], &[]).is_err());
    }

    #[test]
    fn numeric_leaves_use_json_pointers() {
        let v = json!({ "a": [1, { "b/c": 2.5 }], "s": "x" });
        let mut out = Vec::new();
        numeric_leaves(&v, &mut String::new(), &mut out);
        assert_eq!(out, vec![("/a/0".into(), "1".into()), ("/a/1/b~1c".into(), "2.5".into())]);
    }
}
