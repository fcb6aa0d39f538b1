//! Scalar shape functions and the regularity checks run on them.
//!
//! A [`ScalingFunction`] is a positive monotone function on `(0, ∞)` with a
//! declared two-sided power envelope
//!
//! ```text
//! c_lo (R/r)^d_lo <= f(R)/f(r) <= c_hi (R/r)^d_hi,   R > r >= domain_floor
//! ```
//!
//! Exponents are signed, so a decreasing function simply declares negative
//! exponents. Functions are stored in log form, `ln f(x)` as a function of
//! `ln x`, which lets the classifier evaluate them at arguments such as
//! `exp(exp(40))` without overflow.
//!
//! Envelopes are data, not inference: the constructor evaluates the function
//! on a 64-point logarithmic grid over `[floor, floor * 1e8]` and rejects it
//! if positivity, monotonicity or any envelope inequality fails there.

use std::fmt;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Log-domain evaluator: maps `ln x` to `ln f(x)`.
pub type LnFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const GRID_POINTS: usize = 64;
const GRID_DECADES: f64 = 8.0;
const MAX_PAIRS: usize = 10_000;
const ENVELOPE_SLACK: f64 = 1e-9;
const INVERSE_ITERATIONS: usize = 200;
const INVERSE_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("{id}: non-finite evaluation at x = {x:e}")]
    NonFinite { id: String, x: f64 },
    #[error("{id}: declared monotonicity fails between x = {r:e} and x = {big_r:e}")]
    Monotonicity { id: String, r: f64, big_r: f64 },
    #[error("{id}: envelope fails for r = {r:e}, R = {big_r:e} (ln ratio {ln_ratio:.6})")]
    Envelope {
        id: String,
        r: f64,
        big_r: f64,
        ln_ratio: f64,
    },
    #[error("bracket [{lo:e}, {hi:e}] does not straddle y = {y:e}")]
    Bracket { lo: f64, hi: f64, y: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unknown function preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid preset `{id}`: {reason}")]
    InvalidPreset { id: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ScalingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
}

/// Two-sided power envelope `c_lo (R/r)^d_lo <= f(R)/f(r) <= c_hi (R/r)^d_hi`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Envelope {
    pub c_lo: f64,
    pub d_lo: f64,
    pub c_hi: f64,
    pub d_hi: f64,
}

impl Envelope {
    pub fn exact(d: f64) -> Self {
        Envelope {
            c_lo: 1.0,
            d_lo: d,
            c_hi: 1.0,
            d_hi: d,
        }
    }

    pub fn new(c_lo: f64, d_lo: f64, c_hi: f64, d_hi: f64) -> Self {
        Envelope {
            c_lo,
            d_lo,
            c_hi,
            d_hi,
        }
    }
}

/// Positive monotone function with a verified power envelope.
#[derive(Clone)]
pub struct ScalingFunction {
    id: String,
    ln_f: LnFn,
    ln_inv: Option<LnFn>,
    monotonicity: Monotonicity,
    envelope: Envelope,
    domain_floor: f64,
}

impl fmt::Debug for ScalingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalingFunction")
            .field("id", &self.id)
            .field("monotonicity", &self.monotonicity)
            .field("envelope", &self.envelope)
            .field("domain_floor", &self.domain_floor)
            .finish()
    }
}

impl ScalingFunction {
    /// Builds a function from its log-domain evaluator and validates it.
    pub fn new(
        id: impl Into<String>,
        ln_f: LnFn,
        monotonicity: Monotonicity,
        envelope: Envelope,
        domain_floor: f64,
    ) -> Result<Self> {
        let f = ScalingFunction {
            id: id.into(),
            ln_f,
            ln_inv: None,
            monotonicity,
            envelope,
            domain_floor,
        };
        f.validate()?;
        Ok(f)
    }

    /// Builds a function from a plain evaluator `x -> f(x)`.
    pub fn from_fn<F>(
        id: impl Into<String>,
        f: F,
        monotonicity: Monotonicity,
        envelope: Envelope,
        domain_floor: f64,
    ) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            id,
            Arc::new(move |lx: f64| f(lx.exp()).ln()),
            monotonicity,
            envelope,
            domain_floor,
        )
    }

    /// Attaches a closed-form log inverse `ln y -> ln f^{-1}(y)`.
    pub fn with_ln_inverse(mut self, inv: LnFn) -> Self {
        self.ln_inv = Some(inv);
        self
    }

    /// `c * x^p`.
    pub fn power(p: f64, c: f64) -> Self {
        let lc = c.ln();
        let mono = if p < 0.0 {
            Monotonicity::Decreasing
        } else {
            Monotonicity::Increasing
        };
        let id = if c == 1.0 {
            format!("power:{p}")
        } else {
            format!("power:{p},{c}")
        };
        let mut f = ScalingFunction {
            id,
            ln_f: Arc::new(move |lx| lc + p * lx),
            ln_inv: None,
            monotonicity: mono,
            envelope: Envelope::exact(p),
            domain_floor: 1e-6,
        };
        if p != 0.0 {
            f.ln_inv = Some(Arc::new(move |ly| (ly - lc) / p));
        }
        f
    }

    /// `exp(-c0 x^gamma)`; the envelope is declared over the validation window.
    pub fn exp_decay(c0: f64, gamma: f64) -> Self {
        let floor = 1e-6;
        let top = floor * 10f64.powf(GRID_DECADES);
        let d_lo = -c0 * gamma * top.powf(gamma) * (1.0 + 1e-9);
        ScalingFunction {
            id: format!("exp-decay:{c0},{gamma}"),
            ln_f: Arc::new(move |lx| -c0 * (gamma * lx).exp()),
            ln_inv: None,
            monotonicity: Monotonicity::Decreasing,
            envelope: Envelope::new(1.0, d_lo, 1.0, 0.0),
            domain_floor: floor,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn monotonicity(&self) -> Monotonicity {
        self.monotonicity
    }

    pub fn envelope(&self) -> Envelope {
        self.envelope
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    pub fn has_closed_inverse(&self) -> bool {
        self.ln_inv.is_some()
    }

    /// `ln f(x)` given `ln x`.
    pub fn ln_eval(&self, ln_x: f64) -> f64 {
        (self.ln_f)(ln_x)
    }

    /// `f(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.ln_eval(x.ln()).exp()
    }

    /// Evaluates and reports non-finite or non-positive values as errors.
    pub fn try_eval(&self, x: f64) -> Result<f64> {
        let v = self.eval(x);
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(ScalingError::NonFinite {
                id: self.id.clone(),
                x,
            })
        }
    }

    /// The 64-point logarithmic grid over `[floor, floor * 1e8]`.
    pub fn validation_grid(&self) -> Vec<f64> {
        log_grid(
            self.domain_floor,
            self.domain_floor * 10f64.powf(GRID_DECADES),
            GRID_POINTS,
        )
    }

    /// Re-runs the constructor checks.
    pub fn validate(&self) -> Result<()> {
        let grid = self.validation_grid();
        let mut ln_vals = Vec::with_capacity(grid.len());
        for &x in &grid {
            let v = self.ln_eval(x.ln());
            if !v.is_finite() {
                return Err(ScalingError::NonFinite {
                    id: self.id.clone(),
                    x,
                });
            }
            ln_vals.push(v);
        }
        for (i, j) in grid_pairs(grid.len(), MAX_PAIRS, 0x5ca1e) {
            let dx = grid[j].ln() - grid[i].ln();
            let dl = ln_vals[j] - ln_vals[i];
            let tol = ENVELOPE_SLACK * (1.0 + ln_vals[i].abs().max(ln_vals[j].abs()));
            let monotone_ok = match self.monotonicity {
                Monotonicity::Increasing => dl >= -tol,
                Monotonicity::Decreasing => dl <= tol,
            };
            if !monotone_ok {
                return Err(ScalingError::Monotonicity {
                    id: self.id.clone(),
                    r: grid[i],
                    big_r: grid[j],
                });
            }
            let e = &self.envelope;
            let lo = e.c_lo.ln() + e.d_lo * dx;
            let hi = e.c_hi.ln() + e.d_hi * dx;
            if dl < lo - tol || dl > hi + tol {
                return Err(ScalingError::Envelope {
                    id: self.id.clone(),
                    r: grid[i],
                    big_r: grid[j],
                    ln_ratio: dl,
                });
            }
        }
        Ok(())
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Index pairs `(i, j)` with `i < j`: all of them up to `max_pairs`, else a
/// deterministic random subsample.
pub fn grid_pairs(n: usize, max_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let all: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    if total <= max_pairs {
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, total, max_pairs).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| all[k]).collect()
}

/// Result of [`check_doubling`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingCheck {
    pub holds: bool,
    pub worst_ratio: f64,
    pub worst_at: f64,
}

/// Checks `f(factor * r) <= c * f(r)` at every grid point.
pub fn check_doubling(
    f: &ScalingFunction,
    factor: f64,
    c: f64,
    grid: &[f64],
) -> Result<DoublingCheck> {
    if grid.is_empty() {
        return Err(ScalingError::Precondition("grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(ScalingError::Precondition("grid is not sorted".into()));
    }
    if factor <= 1.0 {
        return Err(ScalingError::Precondition("factor must exceed 1".into()));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = grid[0];
    for &r in grid {
        let a = f.ln_eval(r.ln());
        let b = f.ln_eval((factor * r).ln());
        if !a.is_finite() {
            return Err(ScalingError::NonFinite {
                id: f.id.clone(),
                x: r,
            });
        }
        if !b.is_finite() {
            return Err(ScalingError::NonFinite {
                id: f.id.clone(),
                x: factor * r,
            });
        }
        if b - a > worst {
            worst = b - a;
            worst_at = r;
        }
    }
    let worst_ratio = worst.exp();
    Ok(DoublingCheck {
        holds: worst <= c.ln() + 1e-12,
        worst_ratio,
        worst_at,
    })
}

/// Which regularity condition on a decreasing `h` to verify.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HMode {
    /// `h(θ r) <= c0 h(r)` for `r > 1` with some `θ ∈ {2, 4, 8}`, `c0 < 1`.
    UpperDecay,
    /// `h(r) <= c0 h(2r)` for `r > 1` with the declared `c0 > 1`.
    LowerDoubling { c0: f64 },
}

/// Result of [`check_h_conditions`]; `c0` is the best constant found and
/// `witness` the grid point where it is attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HConditionCheck {
    pub holds: bool,
    pub theta: f64,
    pub c0: f64,
    pub witness: f64,
}

/// Verifies the decay (`UpperDecay`) or reverse doubling (`LowerDoubling`)
/// condition on the grid points above 1.
pub fn check_h_conditions(
    h: &ScalingFunction,
    mode: HMode,
    grid: &[f64],
) -> Result<HConditionCheck> {
    let pts: Vec<f64> = grid.iter().copied().filter(|&r| r > 1.0).collect();
    if pts.is_empty() {
        return Err(ScalingError::Precondition("no grid points above 1".into()));
    }
    for w in pts.windows(2) {
        if h.ln_eval(w[1].ln()) > h.ln_eval(w[0].ln()) + 1e-12 {
            return Err(ScalingError::Precondition(format!(
                "{} is not decreasing between {:e} and {:e}",
                h.id, w[0], w[1]
            )));
        }
    }
    let sup_ratio = |theta: f64| -> Result<(f64, f64)> {
        let mut worst = f64::NEG_INFINITY;
        let mut at = pts[0];
        for &r in &pts {
            let a = h.ln_eval(r.ln());
            let b = h.ln_eval((theta * r).ln());
            if !a.is_finite() || b.is_nan() {
                return Err(ScalingError::NonFinite {
                    id: h.id.clone(),
                    x: r,
                });
            }
            if b - a > worst {
                worst = b - a;
                at = r;
            }
        }
        Ok((worst.exp(), at))
    };
    match mode {
        HMode::UpperDecay => {
            let mut best = (f64::INFINITY, 2.0, pts[0]);
            for theta in [2.0, 4.0, 8.0] {
                let (c0, at) = sup_ratio(theta)?;
                if c0 < best.0 {
                    best = (c0, theta, at);
                }
            }
            Ok(HConditionCheck {
                holds: best.0 < 1.0,
                theta: best.1,
                c0: best.0,
                witness: best.2,
            })
        }
        HMode::LowerDoubling { c0 } => {
            if c0 <= 1.0 {
                return Err(ScalingError::Precondition("c0 must exceed 1".into()));
            }
            // sup h(r)/h(2r) = 1 / inf h(2r)/h(r)
            let mut worst = f64::NEG_INFINITY;
            let mut at = pts[0];
            for &r in &pts {
                let d = h.ln_eval(r.ln()) - h.ln_eval((2.0 * r).ln());
                if d.is_nan() {
                    return Err(ScalingError::NonFinite {
                        id: h.id.clone(),
                        x: r,
                    });
                }
                if d > worst {
                    worst = d;
                    at = r;
                }
            }
            let ratio = worst.exp();
            Ok(HConditionCheck {
                holds: worst <= c0.ln() + 1e-12,
                theta: 2.0,
                c0: ratio,
                witness: at,
            })
        }
    }
}

/// Solves `f(t) = y` for increasing `f` by bisection on `ln t`.
pub fn inverse(f: &ScalingFunction, y: f64, bracket: (f64, f64)) -> Result<f64> {
    if !(y > 0.0) {
        return Err(ScalingError::Precondition(format!("y = {y} must be positive")));
    }
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(ScalingError::Precondition(format!(
            "bracket [{lo:e}, {hi:e}] must satisfy 0 < lo < hi"
        )));
    }
    let ln_t = ln_inverse_bracketed(f, y.ln(), (lo.ln(), hi.ln())).map_err(|e| match e {
        ScalingError::Bracket { .. } => ScalingError::Bracket { lo, hi, y },
        other => other,
    })?;
    Ok(ln_t.exp())
}

/// Log-domain bisection: finds `ln t` with `ln f(t) = ln_y` inside
/// `[ln_lo, ln_hi]`.
pub fn ln_inverse_bracketed(f: &ScalingFunction, ln_y: f64, ln_bracket: (f64, f64)) -> Result<f64> {
    if f.monotonicity != Monotonicity::Increasing {
        return Err(ScalingError::Precondition(format!(
            "{} is not increasing",
            f.id
        )));
    }
    let (mut a, mut b) = ln_bracket;
    let fa = f.ln_eval(a);
    let fb = f.ln_eval(b);
    if fa.is_nan() || fb.is_nan() {
        return Err(ScalingError::NonFinite {
            id: f.id.clone(),
            x: if fa.is_nan() { a.exp() } else { b.exp() },
        });
    }
    if fa > ln_y || fb < ln_y {
        return Err(ScalingError::Bracket {
            lo: a.exp(),
            hi: b.exp(),
            y: ln_y.exp(),
        });
    }
    let tol = INVERSE_REL_TOL * 0.1;
    let mut best = 0.5 * (a + b);
    for _ in 0..INVERSE_ITERATIONS {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f.ln_eval(mid);
        best = mid;
        if (fm - ln_y).abs() <= tol {
            break;
        }
        if fm < ln_y {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(best)
}

/// `ln f^{-1}(e^{ln_y})`: closed form when available, else bisection with an
/// automatically expanded bracket.
pub fn ln_inverse(f: &ScalingFunction, ln_y: f64) -> Result<f64> {
    if let Some(inv) = &f.ln_inv {
        let v = inv(ln_y);
        if v.is_finite() {
            return Ok(v);
        }
    }
    // start inside the domain: log-log presets are NaN below their floor
    let start = if f.domain_floor > 1.0 { f.domain_floor.ln() } else { -1.0 };
    let (mut a, mut b) = (start, start + 2.0);
    let mut width = 2.0;
    while f.ln_eval(a) > ln_y {
        a -= width;
        width *= 2.0;
        if a < -1e6 {
            return Err(ScalingError::Bracket {
                lo: a.exp(),
                hi: b.exp(),
                y: ln_y.exp(),
            });
        }
    }
    width = 2.0;
    while f.ln_eval(b) < ln_y {
        b += width;
        width *= 2.0;
        if b > 1e6 {
            return Err(ScalingError::Bracket {
                lo: a.exp(),
                hi: b.exp(),
                y: ln_y.exp(),
            });
        }
    }
    ln_inverse_bracketed(f, ln_y, (a, b))
}

/// How a candidate rate function is built.
#[derive(Debug, Clone)]
pub enum RateRecipe {
    /// `φ(t)` given directly.
    Direct(ScalingFunction),
    /// `walk^{-1}(t) · g(t)`.
    Subcritical {
        walk: ScalingFunction,
        g: ScalingFunction,
    },
    /// `walk^{-1}(t · g(t))`.
    Critical {
        walk: ScalingFunction,
        g: ScalingFunction,
    },
}

/// A candidate rate function with its construction recipe.
#[derive(Debug, Clone)]
pub struct RateCandidate {
    pub recipe: RateRecipe,
    pub description: String,
}

impl RateCandidate {
    pub fn direct(phi: ScalingFunction) -> Self {
        let description = format!("direct {}", phi.id());
        RateCandidate {
            recipe: RateRecipe::Direct(phi),
            description,
        }
    }

    pub fn subcritical(walk: ScalingFunction, g: ScalingFunction) -> Self {
        let description = format!("inverse({}) * {}", walk.id(), g.id());
        RateCandidate {
            recipe: RateRecipe::Subcritical { walk, g },
            description,
        }
    }

    pub fn critical(walk: ScalingFunction, g: ScalingFunction) -> Self {
        let description = format!("inverse({})(t * {})", walk.id(), g.id());
        RateCandidate {
            recipe: RateRecipe::Critical { walk, g },
            description,
        }
    }

    /// `ln φ(t)` given `ln t`.
    pub fn ln_eval(&self, ln_t: f64) -> Result<f64> {
        match &self.recipe {
            RateRecipe::Direct(phi) => Ok(phi.ln_eval(ln_t)),
            RateRecipe::Subcritical { walk, g } => Ok(ln_inverse(walk, ln_t)? + g.ln_eval(ln_t)),
            RateRecipe::Critical { walk, g } => ln_inverse(walk, ln_t + g.ln_eval(ln_t)),
        }
    }

    /// Checks the recipe's invariants: finite positive values for `t > 1`
    /// and, for the two-scale recipes, `g` decreasing towards 0.
    pub fn validate(&self) -> Result<()> {
        let start = match &self.recipe {
            RateRecipe::Direct(phi) => phi.domain_floor().max(2.0),
            RateRecipe::Subcritical { g, .. } | RateRecipe::Critical { g, .. } => {
                g.domain_floor().max(2.0)
            }
        };
        for t in log_grid(start, start * 1e8, 33) {
            let v = self.ln_eval(t.ln())?;
            if !v.is_finite() {
                return Err(ScalingError::NonFinite {
                    id: self.description.clone(),
                    x: t,
                });
            }
        }
        if let RateRecipe::Subcritical { g, .. } | RateRecipe::Critical { g, .. } = &self.recipe {
            if g.monotonicity() != Monotonicity::Decreasing {
                return Err(ScalingError::Precondition(format!(
                    "{} must be decreasing",
                    g.id()
                )));
            }
            let near = g.ln_eval(start.ln());
            let far = g.ln_eval(1e6);
            if !(far < near - std::f64::consts::LN_10) {
                return Err(ScalingError::Precondition(format!(
                    "{} does not decrease towards 0",
                    g.id()
                )));
            }
        }
        Ok(())
    }
}

/// Evaluates a candidate rate function at `t > 1`.
pub fn evaluate_rate(candidate: &RateCandidate, t: f64) -> Result<f64> {
    if !(t > 1.0) {
        return Err(ScalingError::Precondition(format!("t = {t} must exceed 1")));
    }
    Ok(candidate.ln_eval(t.ln())?.exp())
}

/// `ln(e + e^lx)` without overflow.
pub fn ln_e_plus_exp(lx: f64) -> f64 {
    if lx > 1.0 {
        lx + (1.0 - lx).exp().ln_1p()
    } else {
        1.0 + (lx - 1.0).exp().ln_1p()
    }
}

fn parse_numbers(id: &str, args: &str, n: usize) -> Result<Vec<f64>> {
    let vals: std::result::Result<Vec<f64>, _> = args.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(ScalingError::InvalidPreset {
            id: id.to_string(),
            reason: format!("expected {n} comma-separated numbers"),
        }),
    }
}

/// Parses a function preset id.
///
/// | id | function |
/// |----|----------|
/// | `power:P` or `power:P,C` | `C x^P` |
/// | `powerlog:P,Q` | `x^P (ln(e + x))^Q` |
/// | `plll:C,P,Q,R` | `C x^P (ln x)^Q (ln ln x)^R`, floor 16 |
/// | `exp-decay:C0,G` | `exp(-C0 x^G)` |
/// | `iterated-log-g:E` | `exp(-(ln x)(ln ln x)^(1+E))`, floor 16 |
/// | `loglog-g:E` | `(ln ln x / ln x)^(1+E)`, floor 16 |
/// | `lil:C` | `sqrt(C ln ln x)`, floor 16 |
/// | `const:C` | `C` |
pub fn parse_preset(id: &str) -> Result<ScalingFunction> {
    let id = id.trim();
    let (name, args) = id.split_once(':').unwrap_or((id, ""));
    let invalid = |reason: &str| ScalingError::InvalidPreset {
        id: id.to_string(),
        reason: reason.to_string(),
    };
    let f = match name {
        "power" => {
            let n = args.split(',').count();
            let v = parse_numbers(id, args, n)?;
            match v.as_slice() {
                [p] => ScalingFunction::power(*p, 1.0),
                [p, c] if *c > 0.0 => ScalingFunction::power(*p, *c),
                _ => return Err(invalid("expected P or P,C with C > 0")),
            }
        }
        "powerlog" => {
            let v = parse_numbers(id, args, 2)?;
            let (p, q) = (v[0], v[1]);
            let mono = if p >= 0.0 && q >= 0.0 {
                Monotonicity::Increasing
            } else if p <= 0.0 && q <= 0.0 {
                Monotonicity::Decreasing
            } else {
                return Err(invalid("exponents of mixed sign are not monotone"));
            };
            // ln(e+x) grows more slowly than x, so the log factor contributes
            // an exponent between 0 and q.
            let env = if q >= 0.0 {
                Envelope::new(1.0, p, 1.0, p + q)
            } else {
                Envelope::new(1.0, p + q, 1.0, p)
            };
            ScalingFunction::new(
                id,
                Arc::new(move |lx| p * lx + q * ln_e_plus_exp(lx).ln()),
                mono,
                env,
                1e-6,
            )?
        }
        "plll" => {
            let v = parse_numbers(id, args, 4)?;
            let (c, p, q, r) = (v[0], v[1], v[2], v[3]);
            if c <= 0.0 {
                return Err(invalid("C must be positive"));
            }
            let floor = 16.0_f64;
            let l1 = floor.ln();
            let l1l2 = l1 * l1.ln();
            let d_lo = p + q.min(0.0) / l1 + r.min(0.0) / l1l2;
            let d_hi = p + q.max(0.0) / l1 + r.max(0.0) / l1l2;
            let mono = if d_lo >= 0.0 {
                Monotonicity::Increasing
            } else if d_hi <= 0.0 {
                Monotonicity::Decreasing
            } else {
                return Err(invalid("not monotone above the floor 16"));
            };
            let lc = c.ln();
            ScalingFunction::new(
                id,
                Arc::new(move |lx| {
                    let mut v = lc + p * lx;
                    if q != 0.0 {
                        v += q * lx.ln();
                    }
                    if r != 0.0 {
                        v += r * lx.ln().ln();
                    }
                    v
                }),
                mono,
                Envelope::new(1.0, d_lo, 1.0, d_hi),
                floor,
            )?
        }
        "exp-decay" => {
            let v = parse_numbers(id, args, 2)?;
            if v[0] <= 0.0 || v[1] <= 0.0 {
                return Err(invalid("C0 and GAMMA must be positive"));
            }
            let f = ScalingFunction::exp_decay(v[0], v[1]);
            f.validate()?;
            ScalingFunction { id: id.to_string(), ..f }
        }
        "iterated-log-g" => {
            let e = parse_numbers(id, args, 1)?[0];
            if e <= -1.0 {
                return Err(invalid("EPS must exceed -1"));
            }
            let floor = 16.0_f64;
            let l2_lo = floor.ln().ln();
            let l2_hi = (floor * 10f64.powf(GRID_DECADES)).ln().ln();
            let a = 1.0 + e;
            // local index is -(L2^a + a L2^(a-1)); bound each term at the window ends
            let t1 = [l2_lo.powf(a), l2_hi.powf(a)];
            let t2 = [a * l2_lo.powf(e), a * l2_hi.powf(e)];
            let max_sum = t1[0].max(t1[1]) + t2[0].max(t2[1]);
            let min_sum = t1[0].min(t1[1]) + t2[0].min(t2[1]);
            ScalingFunction::new(
                id,
                Arc::new(move |lx| -lx * (a * lx.ln().ln()).exp()),
                Monotonicity::Decreasing,
                Envelope::new(1.0, -max_sum * (1.0 + 1e-9), 1.0, -min_sum * (1.0 - 1e-9)),
                floor,
            )?
        }
        "loglog-g" => {
            let e = parse_numbers(id, args, 1)?[0];
            if e <= -1.0 {
                return Err(invalid("EPS must exceed -1"));
            }
            let floor = 16.0_f64;
            let a = 1.0 + e;
            ScalingFunction::new(
                id,
                Arc::new(move |lx| a * (lx.ln().ln() - lx.ln())),
                Monotonicity::Decreasing,
                Envelope::new(1.0, -a / floor.ln(), 1.0, 0.0),
                floor,
            )?
        }
        "lil" => {
            let c = parse_numbers(id, args, 1)?[0];
            if c <= 0.0 {
                return Err(invalid("C must be positive"));
            }
            let floor = 16.0_f64;
            let lc = c.ln();
            let d_hi = 1.0 / (2.0 * floor.ln() * floor.ln().ln());
            ScalingFunction::new(
                id,
                Arc::new(move |lx| 0.5 * (lc + lx.ln().ln())),
                Monotonicity::Increasing,
                Envelope::new(1.0, 0.0, 1.0, d_hi),
                floor,
            )?
        }
        "const" => {
            let c = parse_numbers(id, args, 1)?[0];
            if c <= 0.0 {
                return Err(invalid("C must be positive"));
            }
            let lc = c.ln();
            ScalingFunction::new(
                id,
                Arc::new(move |_| lc),
                Monotonicity::Increasing,
                Envelope::exact(0.0),
                1e-6,
            )?
        }
        _ => return Err(ScalingError::UnknownPreset(id.to_string())),
    };
    Ok(ScalingFunction {
        id: id.to_string(),
        ..f
    })
}
