//! Versioned table of calibrated constants.
//!
//! The table records, per model, the comparability bracket of the exact
//! density against its envelope, the constants derived from it, and Monte
//! Carlo fits of the hitting and `Q` multipliers. It also freezes the band
//! and pairwise constant of the critical block-event check. Its `version`
//! is the SHA-256 of the table serialised with an empty version field, so
//! any edit or change of [`PROTOCOL`] makes a stored table stale.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kernels::{calibrate_comparability, Comparability, KernelError, KernelModel, TailConstant};
use crate::mc_verify::{
    estimate_block_events, estimate_hit_from_distance, estimate_q, pairwise_from_flags, BlockMode, BlockSpec,
    McError, PAIRWISE_MIN_COUNT,
};
use crate::potential::{ConstantPair, ModelConstants, Potential, PotentialError};
use crate::scaling::{parse_preset, RateCandidate, ScalingError};
use crate::simulate::Refinement;

pub const SCHEMA: u32 = 1;

/// Identifies the calibration procedure; bump when it changes.
pub const PROTOCOL: &str = "hkrate-calibration/1";

/// Models calibrated by default.
pub const DEFAULT_MODELS: &[&str] = &[
    "cauchy1d",
    "gaussian:3",
    "stable:1.5,1",
    "stable:1.5,3",
    "stablelike:1,1.5",
    "stablelike:3,1.5",
];

/// Fitted bands are widened by this factor on each side.
pub const BAND_WIDENING: f64 = 1.5;

pub const HIT_RADIUS: f64 = 1.0;
pub const HIT_DISTANCES: &[f64] = &[3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0];
pub const HIT_HORIZON: f64 = 16384.0;
pub const Q_TIMES: &[f64] = &[16.0, 32.0, 128.0, 256.0, 1024.0];
pub const Q_HORIZON: f64 = 65536.0;

pub const DEFAULT_SEED: u64 = 0x00c0_ffee;
pub const DEFAULT_MC_REPLICAS: usize = 100_000;
pub const DEFAULT_BLOCK_REPLICAS: usize = 10_000;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration table not found at {0}; run `hkrate calibrate` first")]
    Missing(PathBuf),
    #[error("calibration table is stale: {0}; rerun `hkrate calibrate`")]
    Stale(String),
    #[error("model {0} is not in the calibration table")]
    UnknownModel(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed calibration table: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise calibration table: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error(transparent)]
    Mc(#[from] McError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Monte Carlo ratios behind a fitted constant pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    /// `(grid value, estimate / lower shape, estimate / upper shape)`.
    pub points: Vec<(f64, f64, f64)>,
    pub replicas: usize,
    /// Geometric mean of the midpoint ratios, the least-squares centre in
    /// log scale.
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub comparability: Comparability,
    pub tail: Option<TailConstant>,
    pub constants: ModelConstants,
    pub hit_fit: Option<FitRecord>,
    pub q_fit: Option<FitRecord>,
}

/// Frozen reference values of the critical block-event check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEventEntry {
    pub model: String,
    pub g: String,
    pub c: f64,
    pub base: f64,
    pub first: i32,
    pub last: i32,
    pub replicas: usize,
    pub seed: u64,
    /// `P̂(A_n) |ln g(t_{n+1})|` per block.
    pub ratios: Vec<f64>,
    pub band_lo: f64,
    pub band_hi: f64,
    pub pairwise_observed: f64,
    pub pairwise_constant: f64,
}

impl BlockEventEntry {
    pub fn spec(&self) -> BlockSpec {
        BlockSpec {
            base: self.base,
            first: self.first,
            last: self.last,
            c: self.c,
            mode: BlockMode::LowerRate,
        }
    }

    pub fn candidate(&self) -> Result<(KernelModel, RateCandidate)> {
        let model = KernelModel::parse(&self.model)?;
        let cand = RateCandidate::critical(model.walk()?, parse_preset(&self.g)?);
        Ok((model, cand))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub schema: u32,
    pub protocol: String,
    pub version: String,
    pub seed: u64,
    pub models: BTreeMap<String, ModelEntry>,
    pub block_events: Option<BlockEventEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateOptions {
    pub models: Vec<String>,
    pub seed: u64,
    pub mc_replicas: usize,
    pub block_replicas: usize,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        CalibrateOptions {
            models: DEFAULT_MODELS.iter().map(|s| s.to_string()).collect(),
            seed: DEFAULT_SEED,
            mc_replicas: DEFAULT_MC_REPLICAS,
            block_replicas: DEFAULT_BLOCK_REPLICAS,
        }
    }
}

fn widen(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.2).fold(0.0, f64::max);
    (lo / BAND_WIDENING, hi * BAND_WIDENING)
}

fn fit_record(points: Vec<(f64, f64, f64)>, replicas: usize) -> FitRecord {
    let logs: Vec<f64> = points.iter().map(|p| (0.5 * (p.1 + p.2)).ln()).collect();
    let center = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    FitRecord {
        points,
        replicas,
        center,
    }
}

/// Fits the hitting and `Q` multipliers of a transient simulable model.
fn fit_hitting(model: &KernelModel, seed: u64, n: usize) -> Result<(ConstantPair, FitRecord, ConstantPair, FitRecord)> {
    let shapes = Potential::new(model.clone(), ModelConstants::UNIT)?;
    let refinement = Refinement::default();
    let mut hit = Vec::new();
    for &d in HIT_DISTANCES {
        let rep = estimate_hit_from_distance(&shapes, HIT_RADIUS, d, HIT_HORIZON, n, seed, refinement)?;
        let b = shapes.hit_ball_from_distance(HIT_RADIUS, d)?;
        hit.push((d, rep.estimate / b.lower, rep.estimate / b.upper));
    }
    let mut q = Vec::new();
    for &t in Q_TIMES {
        let rep = estimate_q(&shapes, HIT_RADIUS, t, Q_HORIZON, n, seed ^ 0x51, refinement)?;
        let b = shapes.q_bounds(HIT_RADIUS, t)?;
        q.push((t, rep.estimate / b.lower, rep.estimate / b.upper));
    }
    let (hl, hh) = widen(&hit);
    let (ql, qh) = widen(&q);
    Ok((
        ConstantPair::calibrated(hl, hh),
        fit_record(hit, n),
        ConstantPair::calibrated(ql, qh),
        fit_record(q, n),
    ))
}

fn calibrate_model(id: &str, opts: &CalibrateOptions) -> Result<ModelEntry> {
    let parsed = KernelModel::parse(id)?;
    let comparability = match parsed.exact_law {
        Some(_) => calibrate_comparability(&parsed)?,
        None => Comparability::UNIT,
    };
    let model = parsed.with_comparability(comparability);
    let mut constants = ModelConstants::derived(&model)?;
    let potential = Potential::new(model.clone(), constants)?;
    let (mut hit_fit, mut q_fit) = (None, None);
    let transient = potential.long_run() == crate::kernels::LongRun::Transient;
    if transient && model.exact_law.is_some() && opts.mc_replicas > 0 {
        let (hit, hf, q, qf) = fit_hitting(&model, opts.seed, opts.mc_replicas)?;
        constants.hit = hit;
        constants.q = q;
        hit_fit = Some(hf);
        q_fit = Some(qf);
    }
    Ok(ModelEntry {
        comparability,
        tail: model.tail_constant().ok(),
        constants,
        hit_fit,
        q_fit,
    })
}

/// Block-event reference run: Cauchy process, `g(t) = 1/ln(e + t)`,
/// `c = 1/2`, blocks `[2^n, 2^(n+1)]` for `n` in `4..=14`.
pub fn calibrate_block_events(seed: u64, n: usize) -> Result<BlockEventEntry> {
    let mut entry = BlockEventEntry {
        model: "cauchy1d".into(),
        g: "powerlog:0,-1".into(),
        c: 0.5,
        base: 2.0,
        first: 4,
        last: 14,
        replicas: n,
        seed,
        ratios: Vec::new(),
        band_lo: 0.0,
        band_hi: 0.0,
        pairwise_observed: 0.0,
        pairwise_constant: 0.0,
    };
    let (model, cand) = entry.candidate()?;
    let spec = entry.spec();
    let run = estimate_block_events(&model, &cand, &spec, n, seed, Refinement::default(), None)?;
    entry.ratios = run
        .reports
        .iter()
        .map(|r| r.comparison.as_ref().and_then(|c| c.ratio).unwrap_or(f64::NAN))
        .collect();
    let lo = entry.ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = entry.ratios.iter().copied().fold(0.0, f64::max);
    entry.band_lo = lo / BAND_WIDENING;
    entry.band_hi = hi * BAND_WIDENING;
    let pw = pairwise_from_flags(&run.flags, &spec.indices(), PAIRWISE_MIN_COUNT)?;
    entry.pairwise_observed = pw.max_ratio.unwrap_or(f64::NAN);
    entry.pairwise_constant = entry.pairwise_observed * BAND_WIDENING;
    Ok(entry)
}

/// Runs the full calibration.
pub fn calibrate(opts: &CalibrateOptions) -> Result<CalibrationTable> {
    let mut models = BTreeMap::new();
    for id in &opts.models {
        models.insert(id.clone(), calibrate_model(id, opts)?);
    }
    let block_events = if opts.block_replicas > 0 {
        Some(calibrate_block_events(opts.seed ^ 0xb10c, opts.block_replicas)?)
    } else {
        None
    };
    let mut table = CalibrationTable {
        schema: SCHEMA,
        protocol: PROTOCOL.into(),
        version: String::new(),
        seed: opts.seed,
        models,
        block_events,
    };
    table.version = table.digest()?;
    Ok(table)
}

impl CalibrationTable {
    /// SHA-256 of the table serialised with an empty version.
    pub fn digest(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.version.clear();
        let text = toml::to_string(&blank)?;
        Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Parses a table and rejects it unless schema, protocol and version
    /// all match.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: CalibrationTable = toml::from_str(text)?;
        if table.schema != SCHEMA {
            return Err(CalibrationError::Stale(format!("schema {} != {SCHEMA}", table.schema)));
        }
        if table.protocol != PROTOCOL {
            return Err(CalibrationError::Stale(format!("protocol {} != {PROTOCOL}", table.protocol)));
        }
        let digest = table.digest()?;
        if table.version != digest {
            return Err(CalibrationError::Stale(format!(
                "version {} does not match content digest {digest}",
                table.version
            )));
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CalibrationError::Missing(path.to_path_buf()))
            }
            Err(source) => {
                return Err(CalibrationError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        Self::from_toml(&text)
    }

    /// Writes the table atomically.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml()?.as_bytes())
    }

    pub fn entry(&self, id: &str) -> Result<&ModelEntry> {
        self.models.get(id).ok_or_else(|| CalibrationError::UnknownModel(id.to_string()))
    }

    /// The model with its calibrated comparability bracket.
    pub fn model(&self, id: &str) -> Result<KernelModel> {
        let e = self.entry(id)?;
        Ok(KernelModel::parse(id)?.with_comparability(e.comparability))
    }

    /// A potential carrying the calibrated constants.
    pub fn potential(&self, id: &str) -> Result<Potential> {
        let e = self.entry(id)?;
        Ok(Potential::new(self.model(id)?, e.constants)?)
    }
}

/// Writes `bytes` to a temporary file beside `path` and renames it over.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CalibrationError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> CalibrationTable {
        let opts = CalibrateOptions {
            models: vec!["cauchy1d".into(), "gaussian:3".into()],
            seed: 1,
            mc_replicas: 0,
            block_replicas: 0,
        };
        calibrate(&opts).unwrap()
    }

    #[test]
    fn round_trip_and_staleness() {
        let table = quick();
        let text = table.to_toml().unwrap();
        assert_eq!(CalibrationTable::from_toml(&text).unwrap(), table);
        let edited = text.replacen("c_hi = ", "c_hi = 1", 1);
        assert!(matches!(CalibrationTable::from_toml(&edited), Err(CalibrationError::Stale(_))));
        let other = text.replace(PROTOCOL, "hkrate-calibration/0");
        assert!(matches!(CalibrationTable::from_toml(&other), Err(CalibrationError::Stale(_))));
    }

    #[test]
    fn missing_table_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("none.toml");
        assert!(matches!(CalibrationTable::load(&p), Err(CalibrationError::Missing(_))));
        let table = quick();
        table.save(&p).unwrap();
        assert_eq!(CalibrationTable::load(&p).unwrap(), table);
    }

    #[test]
    fn calibrated_gaussian_green_constants_bracket_newton_kernel() {
        let table = quick();
        let pot = table.potential("gaussian:3").unwrap();
        for d in [0.5, 1.0, 2.0] {
            let (_, b) = pot.green_envelope(d).unwrap();
            assert!(b.contains(1.0 / (4.0 * std::f64::consts::PI * d), 0.0), "{b:?}");
        }
        assert!(matches!(table.entry("nope"), Err(CalibrationError::UnknownModel(_))));
    }
}
