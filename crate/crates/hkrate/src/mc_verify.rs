//! Monte Carlo estimates of tail, hitting and block-event probabilities,
//! compared against the analytic bounds.
//!
//! Every estimate is a fraction of independent replicas. Replica `i` uses
//! [`replica_rng`]`(seed, i)`, replicas run in parallel and results are
//! merged in replica order, so a report is a pure function of its inputs.
//! Window events are observed on the adaptive grid of
//! [`window_extremes`]; each such estimate is repeated on a 4x finer grid
//! for the first tenth of the replicas and the difference is reported as
//! `grid_sensitivity`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::integral_tests::Verdict;
use crate::kernels::{tail_probability, KernelError, KernelModel};
use crate::potential::{Potential, PotentialError, Side};
use crate::scaling::{RateCandidate, RateRecipe, ScalingError};
use crate::simulate::{
    distance, replica_rng, window_extremes, IncrementSampler, PathSkeleton, Refinement, SimulateError, Watch,
    WindowExtremes,
};

/// Printed with every report.
pub const FINITE_HORIZON_NOTE: &str =
    "finite-horizon Monte Carlo proxy: almost-sure asymptotics are not finitely observable";

/// Multiplier of the 95% normal interval.
pub const Z95: f64 = 1.96;

/// Share of replicas rerun on the finer grid.
pub const SENSITIVITY_SHARE: usize = 10;

/// Step refinement factor of the sensitivity rerun.
pub const SENSITIVITY_FACTOR: f64 = 4.0;

#[derive(Debug, Error)]
pub enum McError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

pub type Result<T> = std::result::Result<T, McError>;

/// Half-width of the 95% normal interval of a fraction `p` over `n` trials.
pub fn ci95(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    Z95 * (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level 1%.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

/// An estimate set against an analytic value or bracket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub label: String,
    /// Exact or asymptotic reference value.
    pub reference: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// `estimate / reference`.
    pub ratio: Option<f64>,
    /// Whether the estimate is consistent with the bracket within `3 ci`.
    pub within: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub quantity_id: String,
    pub note: String,
    pub params: BTreeMap<String, Value>,
    pub estimate: f64,
    /// Half-width of the 95% confidence interval.
    #[serde(rename = "ci")]
    pub ci_halfwidth: f64,
    #[serde(rename = "n")]
    pub n_replicas: usize,
    pub seed: u64,
    /// First and last replica index; replica `i` is seeded with `seed ^ i`.
    pub seeds: [u64; 2],
    pub grid_sensitivity: Option<f64>,
    pub comparison: Option<Comparison>,
    pub verdict_context: Option<Verdict>,
}

impl McReport {
    fn fraction(quantity_id: &str, params: BTreeMap<String, Value>, hits: usize, n: usize, seed: u64) -> Self {
        let p = hits as f64 / n as f64;
        McReport {
            quantity_id: quantity_id.to_string(),
            note: FINITE_HORIZON_NOTE.to_string(),
            params,
            estimate: p,
            ci_halfwidth: ci95(p, n),
            n_replicas: n,
            seed,
            seeds: [0, n as u64 - 1],
            grid_sensitivity: None,
            comparison: None,
            verdict_context: None,
        }
    }
}

fn require_replicas(n: usize) -> Result<()> {
    if n == 0 {
        return Err(McError::Precondition("need at least one replica".into()));
    }
    Ok(())
}

/// Runs `f` on replicas `0..n` in parallel, results in replica order.
fn per_replica<T, F>(seed: u64, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| f(&mut replica_rng(seed, i)))
        .collect()
}

/// Fraction of endpoints `X_t` at distance at least `r` from the start.
pub fn estimate_tail(model: &KernelModel, t: f64, r: f64, n: usize, seed: u64) -> Result<McReport> {
    require_replicas(n)?;
    let sampler = IncrementSampler::for_model(model)?;
    let bound = tail_probability(model, t, r)?;
    let dim = sampler.dim();
    let flags = per_replica(seed, n, |rng| {
        let mut x = vec![0.0; dim];
        sampler.sample(rng, t, &mut x);
        Ok(distance(&x, &vec![0.0; dim]) >= r)
    })?;
    let hits = flags.iter().filter(|&&f| f).count();
    let params = BTreeMap::from([
        ("model".to_string(), json!(model.id)),
        ("t".to_string(), json!(t)),
        ("r".to_string(), json!(r)),
    ]);
    let mut rep = McReport::fraction("tail", params, hits, n, seed);
    rep.comparison = Some(Comparison {
        label: "tail probability against c1 h(r / ρ(t))".into(),
        reference: Some(bound.estimate),
        lower: None,
        upper: Some(bound.upper_bound),
        ratio: (bound.estimate > 0.0).then(|| rep.estimate / bound.estimate),
        within: Some(rep.estimate <= bound.upper_bound + 3.0 * rep.ci_halfwidth),
    });
    Ok(rep)
}

/// One window event observed on the adaptive grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// The path comes within the reference radius.
    Enter,
    /// The path reaches beyond the reference radius.
    Exit,
}

impl EventKind {
    fn watch(self) -> Watch {
        match self {
            EventKind::Enter => Watch::Below,
            EventKind::Exit => Watch::Above,
        }
    }

    fn occurred(self, e: &WindowExtremes) -> bool {
        match self {
            EventKind::Enter => e.min_excess <= 0.0,
            EventKind::Exit => e.max_excess >= 0.0,
        }
    }
}

/// Geometry shared by the window-event estimators.
struct WindowEvents<'a> {
    sampler: IncrementSampler,
    walk: crate::scaling::ScalingFunction,
    focus: Vec<f64>,
    windows: Vec<(f64, f64)>,
    kinds: Vec<EventKind>,
    ln_reference: &'a (dyn Fn(usize, f64) -> f64 + Sync),
}

impl WindowEvents<'_> {
    fn flags<R: Rng + ?Sized>(&self, refinement: Refinement, rng: &mut R) -> Result<Vec<bool>> {
        let watch: Vec<Watch> = self.kinds.iter().map(|k| k.watch()).collect();
        let ex = window_extremes(
            &self.sampler,
            &self.walk,
            &self.focus,
            &self.windows,
            &watch,
            &|w, s| (self.ln_reference)(w, s),
            refinement,
            rng,
        )?;
        Ok(ex.iter().zip(&self.kinds).map(|(e, k)| k.occurred(e)).collect())
    }

    /// Per-replica flags on the default grid plus, per window, the change
    /// in the estimate on the finer grid over the first tenth of replicas.
    fn run(&self, refinement: Refinement, n: usize, seed: u64) -> Result<(Vec<Vec<bool>>, Vec<Option<f64>>)> {
        let flags = per_replica(seed, n, |rng| self.flags(refinement, rng))?;
        let m = n / SENSITIVITY_SHARE;
        if m == 0 {
            return Ok((flags, vec![None; self.windows.len()]));
        }
        let fine = per_replica(seed, m, |rng| self.flags(refinement.finer(SENSITIVITY_FACTOR), rng))?;
        let share = |rows: &[Vec<bool>], w: usize| rows.iter().filter(|f| f[w]).count() as f64 / m as f64;
        let delta = (0..self.windows.len())
            .map(|w| Some(share(&fine, w) - share(&flags[..m], w)))
            .collect();
        Ok((flags, delta))
    }
}

fn count(flags: &[Vec<bool>], w: usize) -> usize {
    flags.iter().filter(|f| f[w]).count()
}

fn model_sampler(potential: &Potential) -> Result<(IncrementSampler, crate::scaling::ScalingFunction)> {
    let model = potential.model();
    Ok((IncrementSampler::for_model(model)?, model.walk()?))
}

/// Fraction of paths from the origin that enter `B(x0, r)` by `horizon`,
/// with `x0` at distance `D`, against the hitting sandwich. The bracket's
/// lower side is reduced by `Q` Upper at the horizon, which bounds the
/// probability of a first visit after it.
pub fn estimate_hit_from_distance(
    potential: &Potential,
    r: f64,
    big_d: f64,
    horizon: f64,
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<McReport> {
    require_replicas(n)?;
    let bounds = potential.hit_ball_from_distance(r, big_d)?;
    let tail = potential.q_bound(r, horizon, Side::Upper)?;
    let (sampler, walk) = model_sampler(potential)?;
    let mut focus = vec![0.0; sampler.dim()];
    focus[0] = big_d;
    let ln_r = r.ln();
    let ev = WindowEvents {
        sampler,
        walk,
        focus,
        windows: vec![(0.0, horizon)],
        kinds: vec![EventKind::Enter],
        ln_reference: &move |_, _| ln_r,
    };
    let (flags, delta) = ev.run(refinement, n, seed)?;
    let params = BTreeMap::from([
        ("model".to_string(), json!(potential.model().id)),
        ("r".to_string(), json!(r)),
        ("distance".to_string(), json!(big_d)),
        ("horizon".to_string(), json!(horizon)),
    ]);
    let mut rep = McReport::fraction("hit_ball_from_distance", params, count(&flags, 0), n, seed);
    rep.grid_sensitivity = delta[0];
    let lower = bounds.lower - tail;
    let slack = 3.0 * rep.ci_halfwidth;
    rep.comparison = Some(Comparison {
        label: format!("{} bracket, lower side less Q upper at the horizon ({tail:.3e})", bounds.formula_id),
        reference: None,
        lower: Some(lower),
        upper: Some(bounds.upper),
        ratio: None,
        within: Some(rep.estimate >= lower - slack && rep.estimate <= bounds.upper + slack),
    });
    Ok(rep)
}

/// `Q̂(x0, r, t)`: fraction of paths from `x0` that visit `B(x0, r)`
/// during `(t, horizon]`, against the calibrated `Q` bracket with the same
/// truncation allowance as [`estimate_hit_from_distance`].
pub fn estimate_q(
    potential: &Potential,
    r: f64,
    t: f64,
    horizon: f64,
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<McReport> {
    require_replicas(n)?;
    if !(horizon > t) {
        return Err(McError::Precondition(format!("horizon {horizon} must exceed t = {t}")));
    }
    let bounds = potential.q_bounds(r, t)?;
    let tail = potential.q_bound(r, horizon, Side::Upper)?;
    let (sampler, walk) = model_sampler(potential)?;
    let ln_r = r.ln();
    let ev = WindowEvents {
        focus: vec![0.0; sampler.dim()],
        sampler,
        walk,
        windows: vec![(t, horizon)],
        kinds: vec![EventKind::Enter],
        ln_reference: &move |_, _| ln_r,
    };
    let (flags, delta) = ev.run(refinement, n, seed)?;
    let params = BTreeMap::from([
        ("model".to_string(), json!(potential.model().id)),
        ("r".to_string(), json!(r)),
        ("t".to_string(), json!(t)),
        ("horizon".to_string(), json!(horizon)),
    ]);
    let mut rep = McReport::fraction("q", params, count(&flags, 0), n, seed);
    rep.grid_sensitivity = delta[0];
    let lower = bounds.lower - tail;
    let slack = 3.0 * rep.ci_halfwidth;
    rep.comparison = Some(Comparison {
        label: format!("q bracket, lower side less Q upper at the horizon ({tail:.3e})"),
        reference: None,
        lower: Some(lower),
        upper: Some(bounds.upper),
        ratio: None,
        within: Some(rep.estimate >= lower - slack && rep.estimate <= bounds.upper + slack),
    });
    Ok(rep)
}

/// Which block events are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockMode {
    /// `A_n`: the path comes within `c φ(t_{n+1})` of the start during
    /// `[t_n, t_{n+1}]`.
    LowerRate,
    /// `A_n`: the path reaches distance `c φ(t_n)` during `[t_n, t_{n+1}]`.
    UpperRate,
}

/// Blocks `[t_n, t_{n+1}]` with `t_n = base^n` for `n` in `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockSpec {
    pub base: f64,
    pub first: i32,
    pub last: i32,
    /// Contraction of the candidate radius; `0` makes every radius 0.
    pub c: f64,
    pub mode: BlockMode,
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 1.0) || self.first > self.last || !(self.c >= 0.0) {
            return Err(McError::Precondition(format!(
                "need base > 1, first <= last and c >= 0, got {self:?}"
            )));
        }
        if self.base.powi(self.first) <= 1.0 {
            return Err(McError::Precondition("blocks must start after t = 1".into()));
        }
        Ok(())
    }

    pub fn indices(&self) -> Vec<i32> {
        (self.first..=self.last).collect()
    }

    pub fn windows(&self) -> Vec<(f64, f64)> {
        self.indices()
            .iter()
            .map(|&n| (self.base.powi(n), self.base.powi(n + 1)))
            .collect()
    }

    /// `ln` of the reference radius of each block.
    pub fn ln_radii(&self, candidate: &RateCandidate) -> Result<Vec<f64>> {
        self.windows()
            .iter()
            .map(|&(a, b)| {
                let at = match self.mode {
                    BlockMode::LowerRate => b,
                    BlockMode::UpperRate => a,
                };
                Ok(self.c.ln() + candidate.ln_eval(at.ln())?)
            })
            .collect()
    }

    fn kind(&self) -> EventKind {
        match self.mode {
            BlockMode::LowerRate => EventKind::Enter,
            BlockMode::UpperRate => EventKind::Exit,
        }
    }
}

/// Block events on a fixed observation grid: `A_n` read off the skeleton's
/// window minima (LowerRate) or maxima (UpperRate).
pub fn block_events_on_skeleton(path: &PathSkeleton, candidate: &RateCandidate, spec: &BlockSpec) -> Result<Vec<bool>> {
    spec.validate()?;
    let origin = path.positions[0].clone();
    let radii = spec.ln_radii(candidate)?;
    spec.windows()
        .iter()
        .zip(radii)
        .map(|(&(a, b), ln_r)| {
            Ok(match spec.mode {
                BlockMode::LowerRate => crate::simulate::window_min_distance(path, &origin, a, b)?.ln() <= ln_r,
                BlockMode::UpperRate => crate::simulate::window_max_distance(path, &origin, a, b)?.ln() >= ln_r,
            })
        })
        .collect()
}

/// Block-event estimates together with the per-replica indicators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEventRun {
    pub spec: BlockSpec,
    pub candidate: String,
    pub reports: Vec<McReport>,
    #[serde(skip)]
    pub flags: Vec<Vec<bool>>,
}

/// Estimates `P(A_n)` for every block.
///
/// LowerRate blocks carry a comparison: `1/|ln g(t_{n+1})|` for a critical
/// candidate, and the window lower bound `R(x0, c φ(t_{n+1}), t_n, base)`
/// for a subcritical candidate when `potential` is given.
pub fn estimate_block_events(
    model: &KernelModel,
    candidate: &RateCandidate,
    spec: &BlockSpec,
    n: usize,
    seed: u64,
    refinement: Refinement,
    potential: Option<&Potential>,
) -> Result<BlockEventRun> {
    require_replicas(n)?;
    spec.validate()?;
    let sampler = IncrementSampler::for_model(model)?;
    let radii = spec.ln_radii(candidate)?;
    let windows = spec.windows();
    let lookup = |w: usize, _s: f64| radii[w];
    let ev = WindowEvents {
        focus: vec![0.0; sampler.dim()],
        sampler,
        walk: model.walk()?,
        kinds: vec![spec.kind(); windows.len()],
        windows: windows.clone(),
        ln_reference: &lookup,
    };
    let (flags, delta) = ev.run(refinement, n, seed)?;
    let mut reports = Vec::with_capacity(windows.len());
    for (w, (&block, &(a, b))) in spec.indices().iter().zip(&windows).enumerate() {
        let params = BTreeMap::from([
            ("model".to_string(), json!(model.id)),
            ("candidate".to_string(), json!(candidate.description)),
            ("block".to_string(), json!(block)),
            ("window".to_string(), json!([a, b])),
            ("c".to_string(), json!(spec.c)),
            ("radius".to_string(), json!(radii[w].exp())),
            ("mode".to_string(), json!(spec.mode)),
        ]);
        let mut rep = McReport::fraction("block_event", params, count(&flags, w), n, seed);
        rep.grid_sensitivity = delta[w];
        if spec.mode == BlockMode::LowerRate {
            rep.comparison = block_comparison(candidate, potential, &rep, radii[w].exp(), a, b, spec.base)?;
        }
        reports.push(rep);
    }
    Ok(BlockEventRun {
        spec: *spec,
        candidate: candidate.description.clone(),
        reports,
        flags,
    })
}

fn block_comparison(
    candidate: &RateCandidate,
    potential: Option<&Potential>,
    rep: &McReport,
    radius: f64,
    a: f64,
    b: f64,
    theta: f64,
) -> Result<Option<Comparison>> {
    match (&candidate.recipe, potential) {
        (RateRecipe::Critical { g, .. }, _) => {
            let reference = 1.0 / g.ln_eval(b.ln()).abs();
            Ok(Some(Comparison {
                label: "1/|ln g(t_{n+1})|".into(),
                reference: Some(reference),
                lower: None,
                upper: None,
                ratio: Some(rep.estimate / reference),
                within: None,
            }))
        }
        (RateRecipe::Subcritical { .. }, Some(p)) => match p.r_window_lower(radius, a, theta) {
            Ok(w) => Ok(Some(Comparison {
                label: "window lower bound R(x0, c φ(t_{n+1}), t_n, θ)".into(),
                reference: None,
                lower: Some(w.value),
                upper: None,
                ratio: None,
                within: Some(rep.estimate >= w.value - 3.0 * rep.ci_halfwidth),
            })),
            Err(PotentialError::ThetaBelowMinimum { .. } | PotentialError::Precondition(_)) => Ok(None),
            Err(e) => Err(e.into()),
        },
        _ => Ok(None),
    }
}

/// `P̂(A_i ∩ A_j) / (P̂(A_i) P̂(A_j))` for `i >= j + 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseStatistic {
    pub blocks: Vec<i32>,
    /// `ratios[i][j]`, `None` when masked or not in `i >= j + 2`.
    pub ratios: Vec<Vec<Option<f64>>>,
    pub ci_halfwidths: Vec<Vec<Option<f64>>>,
    pub max_ratio: Option<f64>,
    pub argmax: Option<(i32, i32)>,
    /// Entries whose marginal counts fall below this are masked.
    pub min_count: usize,
}

/// Pairwise ratio matrix from per-replica block indicators. The interval
/// comes from the delta method on `ln R`, treating the three estimated
/// probabilities as independent.
pub fn pairwise_from_flags(flags: &[Vec<bool>], blocks: &[i32], min_count: usize) -> Result<PairwiseStatistic> {
    let n = flags.len();
    require_replicas(n)?;
    let k = blocks.len();
    if flags.iter().any(|f| f.len() != k) {
        return Err(McError::Precondition("indicator rows must match the block list".into()));
    }
    let nf = n as f64;
    let counts: Vec<usize> = (0..k).map(|w| count(flags, w)).collect();
    let mut ratios = vec![vec![None; k]; k];
    let mut cis = vec![vec![None; k]; k];
    let mut best: Option<(f64, (i32, i32))> = None;
    for i in 0..k {
        for j in 0..i.saturating_sub(1) {
            if counts[i] < min_count || counts[j] < min_count {
                continue;
            }
            let both = flags.iter().filter(|f| f[i] && f[j]).count();
            let (pi, pj, pij) = (counts[i] as f64 / nf, counts[j] as f64 / nf, both as f64 / nf);
            let ratio = pij / (pi * pj);
            let var_ln = |p: f64| if p > 0.0 { (1.0 - p) / (nf * p) } else { f64::INFINITY };
            let half = Z95 * ratio * (var_ln(pi) + var_ln(pj) + var_ln(pij)).sqrt();
            ratios[i][j] = Some(ratio);
            cis[i][j] = Some(if ratio > 0.0 { half } else { f64::INFINITY });
            if best.is_none_or(|(m, _)| ratio > m) {
                best = Some((ratio, (blocks[i], blocks[j])));
            }
        }
    }
    Ok(PairwiseStatistic {
        blocks: blocks.to_vec(),
        ratios,
        ci_halfwidths: cis,
        max_ratio: best.map(|b| b.0),
        argmax: best.map(|b| b.1),
        min_count,
    })
}

/// Default masking threshold for [`pairwise_independence_statistic`].
pub const PAIRWISE_MIN_COUNT: usize = 20;

/// Runs the block events and reduces them to the pairwise statistic.
pub fn pairwise_independence_statistic(
    model: &KernelModel,
    candidate: &RateCandidate,
    spec: &BlockSpec,
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<PairwiseStatistic> {
    let run = estimate_block_events(model, candidate, spec, n, seed, refinement, None)?;
    pairwise_from_flags(&run.flags, &spec.indices(), PAIRWISE_MIN_COUNT)
}

/// Which rate inequality is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateSide {
    /// Violation: `d(X_s, x0) >= φ(s)` somewhere in the window.
    Upper,
    /// Violation: `d(X_s, x0) <= φ(s)` somewhere in the window.
    Lower,
}

/// Violation fractions across windows and the trend read off them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub windows: Vec<(f64, f64)>,
    pub fractions: Vec<f64>,
    pub ci_halfwidths: Vec<f64>,
    /// Each fraction below the previous one.
    pub strictly_decreasing: bool,
    /// No fraction drops below its predecessor by more than `3` combined
    /// half-widths, and every fraction is positive and at least `5 ci`.
    pub bounded_away_from_zero: bool,
}

impl Trend {
    pub fn from_reports(windows: &[(f64, f64)], reports: &[McReport]) -> Self {
        let fractions: Vec<f64> = reports.iter().map(|r| r.estimate).collect();
        let ci: Vec<f64> = reports.iter().map(|r| r.ci_halfwidth).collect();
        let strictly_decreasing = fractions.windows(2).all(|w| w[1] < w[0]);
        let bounded_away_from_zero = fractions
            .iter()
            .zip(&ci)
            .all(|(&f, &c)| f > 0.0 && f >= 5.0 * c)
            && (1..fractions.len()).all(|k| {
                fractions[k] >= fractions[k - 1] - 3.0 * (ci[k] * ci[k] + ci[k - 1] * ci[k - 1]).sqrt()
            });
        Trend {
            windows: windows.to_vec(),
            fractions,
            ci_halfwidths: ci,
            strictly_decreasing,
            bounded_away_from_zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub quantity_id: String,
    pub note: String,
    pub side: RateSide,
    pub candidate: String,
    pub reports: Vec<McReport>,
    pub trend: Trend,
}

/// Fraction of paths violating the rate inequality somewhere in each
/// window `(T0, T]`, with all windows read off the same paths. Paths start
/// at the origin and distances are measured from `x0 = focus`.
#[allow(clippy::too_many_arguments)]
pub fn verify_rate_dichotomy_from(
    model: &KernelModel,
    candidate: &RateCandidate,
    side: RateSide,
    windows: &[(f64, f64)],
    focus: &[f64],
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<DichotomyReport> {
    require_replicas(n)?;
    if windows.is_empty() || windows.iter().any(|&(a, b)| !(a > 1.0 && b > a)) {
        return Err(McError::Precondition("windows must satisfy 1 < T0 < T".into()));
    }
    let sampler = IncrementSampler::for_model(model)?;
    // probe the candidate once so evaluation errors surface before sampling
    for &(a, b) in windows {
        candidate.ln_eval(a.ln())?;
        candidate.ln_eval(b.ln())?;
    }
    let phi = |_: usize, s: f64| candidate.ln_eval(s.ln()).unwrap_or(f64::NAN);
    let kind = match side {
        RateSide::Upper => EventKind::Exit,
        RateSide::Lower => EventKind::Enter,
    };
    let ev = WindowEvents {
        focus: focus.to_vec(),
        sampler,
        walk: model.walk()?,
        windows: windows.to_vec(),
        kinds: vec![kind; windows.len()],
        ln_reference: &phi,
    };
    let (flags, delta) = ev.run(refinement, n, seed)?;
    let reports: Vec<McReport> = windows
        .iter()
        .enumerate()
        .map(|(w, &(a, b))| {
            let params = BTreeMap::from([
                ("model".to_string(), json!(model.id)),
                ("candidate".to_string(), json!(candidate.description)),
                ("side".to_string(), json!(side)),
                ("window".to_string(), json!([a, b])),
                ("start_offset".to_string(), json!(focus)),
            ]);
            let mut rep = McReport::fraction("rate_violation", params, count(&flags, w), n, seed);
            rep.grid_sensitivity = delta[w];
            rep
        })
        .collect();
    let trend = Trend::from_reports(windows, &reports);
    Ok(DichotomyReport {
        quantity_id: "rate_dichotomy".into(),
        note: FINITE_HORIZON_NOTE.into(),
        side,
        candidate: candidate.description.clone(),
        reports,
        trend,
    })
}

/// [`verify_rate_dichotomy_from`] with the path started at `x0`.
pub fn verify_rate_dichotomy(
    model: &KernelModel,
    candidate: &RateCandidate,
    side: RateSide,
    windows: &[(f64, f64)],
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<DichotomyReport> {
    let dim = IncrementSampler::for_model(model)?.dim();
    verify_rate_dichotomy_from(model, candidate, side, windows, &vec![0.0; dim], n, seed, refinement)
}

/// Violation fractions from two starting points, which a zero-one law
/// forces to agree in the limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartPointCheck {
    pub near: DichotomyReport,
    pub far: DichotomyReport,
    /// Every window agrees within `3` combined half-widths.
    pub agree: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn start_point_agreement(
    model: &KernelModel,
    candidate: &RateCandidate,
    side: RateSide,
    windows: &[(f64, f64)],
    offset: &[f64],
    n: usize,
    seed: u64,
    refinement: Refinement,
) -> Result<StartPointCheck> {
    let near = verify_rate_dichotomy(model, candidate, side, windows, n, seed, refinement)?;
    let far = verify_rate_dichotomy_from(model, candidate, side, windows, offset, n, seed ^ 0x5eed, refinement)?;
    let agree = near.reports.iter().zip(&far.reports).all(|(a, b)| {
        (a.estimate - b.estimate).abs() <= 3.0 * (a.ci_halfwidth.powi(2) + b.ci_halfwidth.powi(2)).sqrt()
    });
    Ok(StartPointCheck { near, far, agree })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::parse_preset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ci_covers_known_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for &p in &[0.1, 0.5] {
            let n = 1000;
            let mut covered = 0;
            for _ in 0..500 {
                let hits = (0..n).filter(|_| rng.random::<f64>() < p).count();
                let est = hits as f64 / n as f64;
                if (est - p).abs() <= ci95(est, n) {
                    covered += 1;
                }
            }
            assert!(covered >= 465, "p = {p}: {covered}/500");
        }
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_statistic(&a, &a), 0.0);
        assert_eq!(ks_statistic(&a, &[10.0, 11.0]), 1.0);
        assert!((ks_statistic(&[1.0, 3.0], &[2.0, 4.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cauchy_tail_and_zero_radius() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let rep = estimate_tail(&m, 1.0, 1.0, 100_000, 3).unwrap();
        assert!((rep.estimate - 0.5).abs() < 3.0 * (0.25_f64 / 1e5).sqrt(), "{}", rep.estimate);
        assert_eq!(rep.comparison.as_ref().unwrap().within, Some(true));
        let zero = estimate_tail(&m, 1.0, 0.0, 1000, 3).unwrap();
        assert_eq!(zero.estimate, 1.0);
    }

    #[test]
    fn gaussian_tail_matches_normal_cdf() {
        use statrs::distribution::{ContinuousCDF, Normal};
        let m = KernelModel::parse("gaussian:1").unwrap();
        let n = 200_000;
        let rep = estimate_tail(&m, 1.0, 4.0, n, 5).unwrap();
        let want = 2.0 * Normal::new(0.0, 1.0).unwrap().sf(4.0 / 2f64.sqrt());
        let sd = (want * (1.0 - want) / n as f64).sqrt();
        assert!((rep.estimate - want).abs() < 3.0 * sd, "{} vs {want}", rep.estimate);
    }

    #[test]
    fn reports_are_reproducible() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let a = serde_json::to_string(&estimate_tail(&m, 4.0, 3.0, 5000, 17).unwrap()).unwrap();
        let b = serde_json::to_string(&estimate_tail(&m, 4.0, 3.0, 5000, 17).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pairwise_independent_coins_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let flags: Vec<Vec<bool>> = (0..20_000)
            .map(|_| (0..5).map(|_| rng.random::<f64>() < 0.3).collect())
            .collect();
        let st = pairwise_from_flags(&flags, &[1, 2, 3, 4, 5], 20).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let entry = st.ratios[i][j];
                if i >= j + 2 {
                    let r = entry.unwrap();
                    assert!((r - 1.0).abs() < 0.1, "({i},{j}) = {r}");
                } else {
                    assert!(entry.is_none());
                }
            }
        }
        assert!(st.max_ratio.unwrap() < 1.15);
    }

    #[test]
    fn pairwise_masks_rare_blocks() {
        let flags = vec![vec![true, false, false]; 100];
        let st = pairwise_from_flags(&flags, &[0, 1, 2], 20).unwrap();
        assert_eq!(st.ratios[2][0], None);
        assert_eq!(st.max_ratio, None);
    }

    #[test]
    fn empty_event_has_probability_zero() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let spec = BlockSpec {
            base: 2.0,
            first: 2,
            last: 5,
            c: 0.0,
            mode: BlockMode::LowerRate,
        };
        // radius c φ ≡ 0
        let cand = RateCandidate::direct(parse_preset("power:1").unwrap());
        let run = estimate_block_events(&m, &cand, &spec, 200, 1, Refinement::default(), None).unwrap();
        assert!(run.reports.iter().all(|r| r.estimate == 0.0));
    }

    #[test]
    fn critical_blocks_carry_log_comparison() {
        let m = KernelModel::parse("cauchy1d").unwrap();
        let g = parse_preset("powerlog:0,-1").unwrap();
        let cand = RateCandidate::critical(m.walk().unwrap(), g.clone());
        let spec = BlockSpec {
            base: 2.0,
            first: 4,
            last: 6,
            c: 0.5,
            mode: BlockMode::LowerRate,
        };
        let run = estimate_block_events(&m, &cand, &spec, 2000, 2, Refinement::default(), None).unwrap();
        for (rep, n) in run.reports.iter().zip(4..) {
            let cmp = rep.comparison.as_ref().unwrap();
            let want = 1.0 / g.ln_eval(2f64.powi(n + 1).ln()).abs();
            assert!((cmp.reference.unwrap() - want).abs() < 1e-12);
            assert!(rep.estimate > 0.0 && rep.estimate < 1.0);
            assert!(rep.grid_sensitivity.is_some());
        }
    }

    #[test]
    fn upper_violation_of_linear_rate_is_common() {
        // φ(t) = t/2 is below the typical Cauchy displacement at every scale
        let m = KernelModel::parse("cauchy1d").unwrap();
        let cand = RateCandidate::direct(parse_preset("power:1,0.5").unwrap());
        let windows = [(64.0, 1024.0), (256.0, 4096.0), (1024.0, 16384.0)];
        let rep = verify_rate_dichotomy(&m, &cand, RateSide::Upper, &windows, 2000, 4, Refinement::default()).unwrap();
        for f in &rep.trend.fractions {
            assert!(*f > 0.8, "{f}");
        }
        assert!(rep.trend.bounded_away_from_zero);
    }

    #[test]
    fn trend_flags() {
        let mk = |p: f64| McReport::fraction("x", BTreeMap::new(), (p * 1e4) as usize, 10_000, 0);
        let w = [(2.0, 4.0), (4.0, 8.0), (8.0, 16.0)];
        let dec = Trend::from_reports(&w, &[mk(0.3), mk(0.2), mk(0.1)]);
        assert!(dec.strictly_decreasing && !dec.bounded_away_from_zero);
        let flat = Trend::from_reports(&w, &[mk(0.3), mk(0.305), mk(0.298)]);
        assert!(!flat.strictly_decreasing && flat.bounded_away_from_zero);
        let zero = Trend::from_reports(&w, &[mk(0.0), mk(0.0), mk(0.0)]);
        assert!(!zero.bounded_away_from_zero);
    }
}
