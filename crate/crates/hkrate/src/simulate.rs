//! Exact-increment path samplers and path functionals.
//!
//! Increments over a step of length `Δ` are drawn from the law at time `Δ`
//! itself, so no discretisation error enters the positions: Gaussian
//! directly, the symmetric 1-d stable law by the Chambers–Mallows–Stuck
//! transform, and the isotropic d-dimensional stable law by subordination
//! (a positive (α/2)-stable time change of Brownian motion). Only the
//! observation grid is discrete. Grid minima of distances therefore
//! overestimate path infima and grid maxima underestimate suprema.
//!
//! Replica `r` of a run with seed `s` draws from `ChaCha8Rng` seeded with
//! `s ^ r`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::kernels::{ExactLaw, KernelError, KernelModel};
use crate::scaling::ScalingFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error("unsupported model {id}: {reason}")]
    UnsupportedModel { id: String, reason: String },
    #[error("invalid scheme `{0}`")]
    InvalidScheme(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, SimulateError>;

/// Generator for replica `replica` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ replica)
}

/// Positive stable variable with `E exp(-λS) = exp(-λ^a)`, `0 < a < 1`,
/// by Kanter's representation. Non-finite draws are redrawn.
pub fn positive_stable<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    loop {
        let u = PI * rng.random::<f64>();
        let e: f64 = rng.sample(Exp1);
        let num = (a * u).sin().powf(a / (1.0 - a)) * ((1.0 - a) * u).sin();
        let den = u.sin().powf(1.0 / (1.0 - a)) * e;
        let s = (num / den).powf((1.0 - a) / a);
        if s.is_finite() && s > 0.0 {
            return s;
        }
    }
}

/// Symmetric stable variable with characteristic function `exp(-|ξ|^α)`,
/// `0 < α <= 2`, by the Chambers–Mallows–Stuck transform.
pub fn symmetric_stable<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    loop {
        let v = PI * (rng.random::<f64>() - 0.5);
        let w: f64 = rng.sample(Exp1);
        let x = if alpha == 1.0 {
            v.tan()
        } else {
            (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
        };
        if x.is_finite() {
            return x;
        }
    }
}

/// Increment law of a simulable model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementSampler {
    /// Per-coordinate variance `2Δ`.
    Gaussian { dim: usize },
    /// `Δ · tan(π(U - 1/2))`.
    Cauchy,
    /// Symmetric 1-d α-stable by CMS.
    Stable1d { alpha: f64 },
    /// `sqrt(2 S) N` with `S` positive (α/2)-stable at time `Δ`.
    Subordinated { alpha: f64, dim: usize },
}

impl IncrementSampler {
    pub fn for_model(model: &KernelModel) -> Result<Self> {
        let unsupported = |reason: &str| SimulateError::UnsupportedModel {
            id: model.id.clone(),
            reason: reason.to_string(),
        };
        match model.exact_law {
            Some(ExactLaw::Gaussian) => Ok(IncrementSampler::Gaussian {
                dim: model.dim.ok_or_else(|| unsupported("missing dimension"))?,
            }),
            Some(ExactLaw::Cauchy1d) => Ok(IncrementSampler::Cauchy),
            Some(ExactLaw::StableNumeric { alpha, dim: 1 }) => Ok(IncrementSampler::Stable1d { alpha }),
            Some(ExactLaw::StableNumeric { alpha, dim }) => Ok(IncrementSampler::Subordinated { alpha, dim }),
            None => Err(unsupported("no exact law to sample from")),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            IncrementSampler::Gaussian { dim } | IncrementSampler::Subordinated { dim, .. } => dim,
            IncrementSampler::Cauchy | IncrementSampler::Stable1d { .. } => 1,
        }
    }

    /// Writes one increment over a step of length `dt` into `out`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64, out: &mut [f64]) {
        match *self {
            IncrementSampler::Gaussian { .. } => {
                let s = (2.0 * dt).sqrt();
                for o in out.iter_mut() {
                    *o = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            IncrementSampler::Cauchy => out[0] = dt * symmetric_stable(rng, 1.0),
            IncrementSampler::Stable1d { alpha } => out[0] = dt.powf(1.0 / alpha) * symmetric_stable(rng, alpha),
            IncrementSampler::Subordinated { alpha, .. } => {
                let a = alpha / 2.0;
                // Laplace exponent Δ λ^a means S = Δ^{1/a} S_1
                let time = if a >= 1.0 {
                    dt
                } else {
                    dt.powf(1.0 / a) * positive_stable(rng, a)
                };
                let s = (2.0 * time).sqrt();
                for o in out.iter_mut() {
                    *o = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// Observation grid of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    UniformGrid { dt: f64 },
    /// `per_block` equal steps in `[0, 1]` and in each `[base^n, base^(n+1)]`.
    DyadicBlocks { base: f64, per_block: usize },
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme::DyadicBlocks {
            base: 2.0,
            per_block: 256,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::UniformGrid { dt } => write!(f, "uniform:{dt}"),
            Scheme::DyadicBlocks { base, per_block } => write!(f, "dyadic:{base},{per_block}"),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl FromStr for Scheme {
    type Err = SimulateError;

    /// `dyadic:N`, `dyadic:BASE,N` or `uniform:DT`.
    fn from_str(src: &str) -> Result<Self> {
        let bad = || SimulateError::InvalidScheme(src.to_string());
        let (name, args) = src.split_once(':').ok_or_else(bad)?;
        let nums: Vec<&str> = args.split(',').map(str::trim).collect();
        match (name, nums.as_slice()) {
            ("dyadic", [n]) => Ok(Scheme::DyadicBlocks {
                base: 2.0,
                per_block: n.parse().ok().filter(|&k| k > 0).ok_or_else(bad)?,
            }),
            ("dyadic", [b, n]) => {
                let base: f64 = b.parse().map_err(|_| bad())?;
                if !(base > 1.0 && base.is_finite()) {
                    return Err(bad());
                }
                Ok(Scheme::DyadicBlocks {
                    base,
                    per_block: n.parse().ok().filter(|&k| k > 0).ok_or_else(bad)?,
                })
            }
            ("uniform", [dt]) => {
                let dt: f64 = dt.parse().map_err(|_| bad())?;
                if !(dt > 0.0 && dt.is_finite()) {
                    return Err(bad());
                }
                Ok(Scheme::UniformGrid { dt })
            }
            _ => Err(bad()),
        }
    }
}

const MAX_GRID_POINTS: usize = 50_000_000;

impl Scheme {
    /// Grid times in `[0, horizon]`, starting at 0 and ending at `horizon`.
    pub fn times(&self, horizon: f64) -> Result<Vec<f64>> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(SimulateError::Precondition(format!("horizon must be positive, got {horizon}")));
        }
        let mut times = vec![0.0];
        match *self {
            Scheme::UniformGrid { dt } => {
                let n = (horizon / dt).ceil();
                if n > MAX_GRID_POINTS as f64 {
                    return Err(SimulateError::Precondition(format!("{n} grid points exceed the limit")));
                }
                for k in 1..=n as usize {
                    times.push((k as f64 * dt).min(horizon));
                }
            }
            Scheme::DyadicBlocks { base, per_block } => {
                let (mut lo, mut hi) = (0.0, 1.0_f64);
                'blocks: loop {
                    let step = (hi - lo) / per_block as f64;
                    for k in 1..=per_block {
                        let t = if k == per_block { hi } else { lo + k as f64 * step };
                        if t >= horizon {
                            times.push(horizon);
                            break 'blocks;
                        }
                        times.push(t);
                    }
                    if times.len() > MAX_GRID_POINTS {
                        return Err(SimulateError::Precondition("grid exceeds the point limit".into()));
                    }
                    lo = hi;
                    hi *= base;
                }
            }
        }
        times.dedup();
        Ok(times)
    }
}

/// A sampled trajectory observed on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSkeleton {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub seed: u64,
    pub model_id: String,
    pub scheme: Scheme,
}

impl PathSkeleton {
    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }
}

/// Samples a path from the origin on the scheme's grid. Deterministic in
/// `(model, horizon, scheme, seed)`.
pub fn sample_path(model: &KernelModel, horizon: f64, scheme: Scheme, seed: u64) -> Result<PathSkeleton> {
    let sampler = IncrementSampler::for_model(model)?;
    let times = scheme.times(horizon)?;
    let dim = sampler.dim();
    let mut rng = replica_rng(seed, 0);
    let mut positions = Vec::with_capacity(times.len());
    let mut x = vec![0.0; dim];
    let mut inc = vec![0.0; dim];
    positions.push(x.clone());
    for w in times.windows(2) {
        sampler.sample(&mut rng, w[1] - w[0], &mut inc);
        for (xi, di) in x.iter_mut().zip(&inc) {
            *xi += di;
        }
        positions.push(x.clone());
    }
    Ok(PathSkeleton {
        times,
        positions,
        seed,
        model_id: model.id.clone(),
        scheme,
    })
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn window_distances<'a>(
    path: &'a PathSkeleton,
    origin: &'a [f64],
    a: f64,
    b: f64,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if origin.len() != path.dim() {
        return Err(SimulateError::Precondition(format!(
            "origin has dimension {}, path has {}",
            origin.len(),
            path.dim()
        )));
    }
    if !(0.0 <= a && a <= b && b <= path.horizon()) {
        return Err(SimulateError::Precondition(format!(
            "window [{a}, {b}] is not inside [0, {}]",
            path.horizon()
        )));
    }
    if !path.times.iter().any(|&t| t >= a && t <= b) {
        return Err(SimulateError::Precondition(format!("no grid point in [{a}, {b}]")));
    }
    Ok(path
        .times
        .iter()
        .zip(&path.positions)
        .filter(move |(&t, _)| t >= a && t <= b)
        .map(move |(_, x)| distance(x, origin)))
}

/// Minimum grid distance to `origin` over `[a, b]`; an overestimate of the
/// path infimum.
pub fn window_min_distance(path: &PathSkeleton, origin: &[f64], a: f64, b: f64) -> Result<f64> {
    Ok(window_distances(path, origin, a, b)?.fold(f64::INFINITY, f64::min))
}

/// Maximum grid distance to `origin` over `[a, b]`; an underestimate of the
/// path supremum.
pub fn window_max_distance(path: &PathSkeleton, origin: &[f64], a: f64, b: f64) -> Result<f64> {
    Ok(window_distances(path, origin, a, b)?.fold(0.0, f64::max))
}

/// First positive grid time with `d(X_t, center) <= r`.
pub fn first_hit_time(path: &PathSkeleton, center: &[f64], r: f64) -> Result<Option<f64>> {
    if !(r > 0.0) {
        return Err(SimulateError::Precondition(format!("radius must be positive, got {r}")));
    }
    if center.len() != path.dim() {
        return Err(SimulateError::Precondition("center dimension mismatch".into()));
    }
    Ok(path
        .times
        .iter()
        .zip(&path.positions)
        .find(|(&t, x)| t > 0.0 && distance(x, center) <= r)
        .map(|(&t, _)| t))
}

/// Step-size control of the adaptive walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refinement {
    /// Step is `kappa · φ(gap)`.
    pub kappa: f64,
    /// Steps never exceed this fraction of the current time, plus the step
    /// at the floor gap.
    pub max_step_frac: f64,
    /// Gaps are floored at this fraction of the smallest reference radius.
    pub gap_floor: f64,
    /// Step budget of one path.
    pub max_steps: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Refinement {
            kappa: 0.05,
            max_step_frac: 1.0 / 16.0,
            gap_floor: 0.1,
            max_steps: 100_000_000,
        }
    }
}

impl Refinement {
    /// Steps `factor` times finer.
    pub fn finer(self, factor: f64) -> Self {
        Refinement {
            kappa: self.kappa / factor,
            max_step_frac: self.max_step_frac / factor,
            gap_floor: self.gap_floor,
            max_steps: (self.max_steps as f64 * factor) as usize,
        }
    }
}

/// Extremes over one observation window of `ln d(X_s, focus) - ln R(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowExtremes {
    pub min_excess: f64,
    pub max_excess: f64,
}

/// Which crossing settles a window. A settled window is no longer
/// observed, so its extremes stop at the first crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Watch {
    /// Settled once `d <= R`.
    Below,
    /// Settled once `d >= R`.
    Above,
    /// Never settled; both extremes are tracked over the whole window.
    Both,
}

impl Watch {
    fn settles(self, e: &WindowExtremes) -> bool {
        match self {
            Watch::Below => e.min_excess <= 0.0,
            Watch::Above => e.max_excess >= 0.0,
            Watch::Both => false,
        }
    }
}

fn push<R: Rng + ?Sized>(sampler: &IncrementSampler, rng: &mut R, dt: f64, x: &mut [f64], inc: &mut [f64]) {
    sampler.sample(rng, dt, inc);
    for (xi, di) in x.iter_mut().zip(inc.iter()) {
        *xi += di;
    }
}

/// Walks one path from the origin and records, for each window `[a, b]`,
/// the extremes of `ln d(X_s, focus) - ln R_w(s)` over the observed times,
/// where `ln R_w(s) = ln_reference(w, s)`.
///
/// Between windows, and across stretches where every open window is
/// settled, the path jumps with a single exact increment. Inside a window
/// the step is `kappa · φ(gap)`, where `gap` is the distance from the path
/// to the nearest reference sphere `{d = R_w(s)}` of the open unsettled
/// windows, floored at `gap_floor · min R_w`. The grid is therefore fine
/// exactly where an event can switch, whether the event is entering a
/// small ball or leaving a large one. The walk ends as soon as every
/// remaining window is settled.
///
/// Time is carried as a compensated sum, so steps far below the rounding
/// unit of the current time still advance it.
#[allow(clippy::too_many_arguments)]
pub fn window_extremes<R: Rng + ?Sized>(
    sampler: &IncrementSampler,
    walk: &ScalingFunction,
    focus: &[f64],
    windows: &[(f64, f64)],
    watch: &[Watch],
    ln_reference: &dyn Fn(usize, f64) -> f64,
    refinement: Refinement,
    rng: &mut R,
) -> Result<Vec<WindowExtremes>> {
    let dim = sampler.dim();
    if focus.len() != dim {
        return Err(SimulateError::Precondition(format!("focus must have dimension {dim}")));
    }
    if watch.len() != windows.len() {
        return Err(SimulateError::Precondition("one watch mode per window".into()));
    }
    for &(a, b) in windows {
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return Err(SimulateError::Precondition(format!("bad window [{a}, {b}]")));
        }
    }
    let mut out = vec![
        WindowExtremes {
            min_excess: f64::INFINITY,
            max_excess: f64::NEG_INFINITY,
        };
        windows.len()
    ];
    let mut settled = vec![false; windows.len()];
    // union of windows, walked in time order
    let mut spans: Vec<(f64, f64)> = windows.to_vec();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut union: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        match union.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => union.push((a, b)),
        }
    }
    let mut x = vec![0.0; dim];
    let mut inc = vec![0.0; dim];
    // time is s + lo
    let (mut s, mut lo) = (0.0_f64, 0.0_f64);
    let mut steps = 0usize;
    for (a, b) in union {
        if a > s {
            push(sampler, rng, (a - s) - lo, &mut x, &mut inc);
        }
        s = a;
        lo = 0.0;
        loop {
            let d = distance(&x, focus);
            let ld = d.ln();
            for (w, &(wa, wb)) in windows.iter().enumerate() {
                if !settled[w] && s >= wa && s <= wb {
                    let e = ld - ln_reference(w, s);
                    out[w].min_excess = out[w].min_excess.min(e);
                    out[w].max_excess = out[w].max_excess.max(e);
                    settled[w] = watch[w].settles(&out[w]);
                }
            }
            if s >= b {
                break;
            }
            if windows.iter().zip(&settled).all(|(&(_, wb), &done)| done || wb <= s) {
                return Ok(out);
            }
            let open = |w: usize| !settled[w] && s >= windows[w].0 && s < windows[w].1;
            let (gap, r_min) = (0..windows.len())
                .filter(|&w| open(w))
                .map(|w| ln_reference(w, s).exp())
                .fold((f64::INFINITY, f64::INFINITY), |(g, m), r| ((d - r).abs().min(g), m.min(r)));
            if !gap.is_finite() {
                // nothing to observe until the next unsettled window opens
                let next = (0..windows.len())
                    .filter(|&w| !settled[w] && windows[w].0 > s)
                    .map(|w| windows[w].0)
                    .fold(b, f64::min);
                push(sampler, rng, (next - s) - lo, &mut x, &mut inc);
                s = next;
                lo = 0.0;
                continue;
            }
            let floor = if r_min > 0.0 {
                refinement.gap_floor * r_min
            } else if d > 0.0 {
                d
            } else {
                f64::MIN_POSITIVE
            };
            let scale = walk.ln_eval(gap.max(floor).ln()).exp();
            let at_floor = walk.ln_eval(floor.ln()).exp();
            let mut dt = (refinement.kappa * scale).min(refinement.max_step_frac * s + refinement.kappa * at_floor);
            if !(dt > 0.0) || !dt.is_finite() {
                dt = 1e-9 * (b - s);
            }
            steps += 1;
            if steps > refinement.max_steps {
                return Err(SimulateError::Precondition(format!(
                    "step budget of {} exhausted at time {s}",
                    refinement.max_steps
                )));
            }
            if s + (lo + dt) >= b {
                push(sampler, rng, (b - s) - lo, &mut x, &mut inc);
                s = b;
                lo = 0.0;
            } else {
                push(sampler, rng, dt, &mut x, &mut inc);
                lo += dt;
                let t = s + lo;
                lo -= t - s;
                s = t;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_parsing_and_grid() {
        let s: Scheme = "dyadic:256".parse().unwrap();
        assert_eq!(s, Scheme::default());
        let t = s.times(4.0).unwrap();
        assert_eq!(t.len(), 1 + 3 * 256);
        assert_eq!(t[256], 1.0);
        assert_eq!(*t.last().unwrap(), 4.0);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        let u: Scheme = "uniform:0.25".parse().unwrap();
        assert_eq!(u.times(1.0).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!("dyadic:0".parse::<Scheme>().is_err());
        assert!("uniform:-1".parse::<Scheme>().is_err());
        assert!("brownian".parse::<Scheme>().is_err());
        let odd = Scheme::DyadicBlocks { base: 2.0, per_block: 4 }.times(2.5).unwrap();
        assert_eq!(*odd.last().unwrap(), 2.5);
    }

    #[test]
    fn skeleton_is_deterministic() {
        let m = KernelModel::parse("stable:1.5,2").unwrap();
        let a = sample_path(&m, 64.0, Scheme::default(), 11).unwrap();
        let b = sample_path(&m, 64.0, Scheme::default(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positions[0], vec![0.0, 0.0]);
        assert_eq!(a.times.len(), a.positions.len());
        let c = sample_path(&m, 64.0, Scheme::default(), 12).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn unsupported_model() {
        let m = KernelModel::parse("subgaussian:2,3,1").unwrap();
        assert!(matches!(
            sample_path(&m, 1.0, Scheme::default(), 1),
            Err(SimulateError::UnsupportedModel { .. })
        ));
    }

    fn fixed(times: Vec<f64>, positions: Vec<Vec<f64>>) -> PathSkeleton {
        PathSkeleton {
            times,
            positions,
            seed: 0,
            model_id: "fixed".into(),
            scheme: Scheme::UniformGrid { dt: 1.0 },
        }
    }

    #[test]
    fn window_functionals() {
        let p = fixed(vec![0.0, 1.0, 2.0, 3.0], vec![vec![0.0], vec![3.0], vec![-1.0], vec![5.0]]);
        assert_eq!(window_min_distance(&p, &[0.0], 1.0, 3.0).unwrap(), 1.0);
        assert_eq!(window_max_distance(&p, &[0.0], 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(window_max_distance(&p, &[0.0], 0.0, 2.0).unwrap(), 3.0);
        assert_eq!(window_min_distance(&p, &[0.0], 2.0, 2.0).unwrap(), 1.0);
        assert!(window_min_distance(&p, &[0.0], 1.5, 1.7).is_err());
        assert!(window_min_distance(&p, &[0.0], 0.0, 9.0).is_err());
        assert_eq!(first_hit_time(&p, &[0.0], 1.5).unwrap(), Some(2.0));
        assert_eq!(first_hit_time(&p, &[0.0], 10.0).unwrap(), Some(1.0));
        assert_eq!(first_hit_time(&p, &[20.0], 1.0).unwrap(), None);
        let still = fixed(vec![0.0, 1.0], vec![vec![0.0], vec![0.0]]);
        assert_eq!(window_min_distance(&still, &[0.0], 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn walker_records_each_window() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let sampler = IncrementSampler::for_model(&m).unwrap();
        let walk = m.walk().unwrap();
        let windows = [(1.0, 2.0), (2.0, 4.0), (1.0, 4.0)];
        let mut rng = replica_rng(5, 0);
        let watch = [Watch::Both; 3];
        let ex = window_extremes(&sampler, &walk, &[0.0], &windows, &watch, &|_, _| 0.0, Refinement::default(), &mut rng)
            .unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[2].min_excess, ex[0].min_excess.min(ex[1].min_excess));
        assert_eq!(ex[2].max_excess, ex[0].max_excess.max(ex[1].max_excess));
        for e in &ex {
            assert!(e.min_excess <= e.max_excess);
        }
    }

    #[test]
    fn walker_stops_at_settled_windows() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let sampler = IncrementSampler::for_model(&m).unwrap();
        let walk = m.walk().unwrap();
        // reference radius 1e300 is crossed from below at the first observation
        let mut rng = replica_rng(5, 0);
        let ex = window_extremes(
            &sampler,
            &walk,
            &[0.0],
            &[(1.0, 1e6)],
            &[Watch::Below],
            &|_, _| 690.0,
            Refinement { max_steps: 1, ..Refinement::default() },
            &mut rng,
        )
        .unwrap();
        assert!(ex[0].min_excess <= 0.0);
    }

    #[test]
    fn tiny_steps_still_advance_time() {
        // reference radius far below the rounding unit of the time
        let m = KernelModel::parse("cauchy1d").unwrap();
        let sampler = IncrementSampler::for_model(&m).unwrap();
        let walk = m.walk().unwrap();
        let mut rng = replica_rng(9, 0);
        let ex = window_extremes(
            &sampler,
            &walk,
            &[0.0],
            &[(1e20, 1.1e20)],
            &[Watch::Below],
            &|_, s| s.ln() - 60.0,
            Refinement::default(),
            &mut rng,
        )
        .unwrap();
        assert!(ex[0].min_excess.is_finite());
    }
}
