//! Green-function, capacity, hitting and occupation bounds for a heat-kernel
//! model.
//!
//! Every two-sided estimate is returned as a [`BoundPair`]: a shape built
//! from `V` and `φ`, multiplied by a lower and an upper constant from
//! [`ModelConstants`]. Constants are either unit (shape only), derived from
//! the model's comparability bracket, or fitted to Monte Carlo estimates by
//! the calibration step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integral_tests::ClassifyError;
use crate::kernels::{classify_long_run, ConstantsSource, KernelError, KernelModel, LongRun};
use crate::quadrature::{ln_integral, ln_integral_with_fallback, QuadError};
use crate::scaling::{log_grid, ScalingFunction};

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("Green function infinite: model {0} is recurrent")]
    Recurrent(String),
    #[error("long-run behaviour of model {0} is undecided")]
    Undecided(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("θ = {theta} is below θ_min = {theta_min}")]
    ThetaBelowMinimum { theta: f64, theta_min: f64 },
    #[error("bound pair {formula_id} out of order or not finite: [{lower}, {upper}]")]
    Unordered { formula_id: String, lower: f64, upper: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

pub type Result<T> = std::result::Result<T, PotentialError>;

/// A lower and an upper bound on one quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
    pub formula_id: String,
    pub constants_source: ConstantsSource,
}

impl BoundPair {
    pub fn new(lower: f64, upper: f64, formula_id: impl Into<String>, constants_source: ConstantsSource) -> Result<Self> {
        let formula_id = formula_id.into();
        if !(lower.is_finite() && upper.is_finite() && lower >= 0.0 && lower <= upper) {
            return Err(PotentialError::Unordered { formula_id, lower, upper });
        }
        Ok(BoundPair {
            lower,
            upper,
            formula_id,
            constants_source,
        })
    }

    /// `lower - slack <= x <= upper + slack`.
    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lower - slack && x <= self.upper + slack
    }
}

/// Lower and upper multipliers of one formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantPair {
    pub lo: f64,
    pub hi: f64,
    pub source: ConstantsSource,
}

impl ConstantPair {
    pub const UNIT: ConstantPair = ConstantPair {
        lo: 1.0,
        hi: 1.0,
        source: ConstantsSource::Unit,
    };

    pub fn calibrated(lo: f64, hi: f64) -> Self {
        ConstantPair {
            lo,
            hi,
            source: ConstantsSource::Calibrated,
        }
    }
}

/// Constants of every sandwich, per model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    /// `u(d) / (φ(d)/V(d))`.
    pub green: ConstantPair,
    /// `Cap(B(r)) / (V(r)/φ(r))`.
    pub capacity: ConstantPair,
    /// Hitting probability from distance `D` over its shape.
    pub hit: ConstantPair,
    /// `Q(x, r, t)` over its shape.
    pub q: ConstantPair,
    /// Critical-case window hitting probability over its shape.
    pub occupation: ConstantPair,
}

impl ModelConstants {
    pub const UNIT: ModelConstants = ModelConstants {
        green: ConstantPair::UNIT,
        capacity: ConstantPair::UNIT,
        hit: ConstantPair::UNIT,
        q: ConstantPair::UNIT,
        occupation: ConstantPair::UNIT,
    };

    /// Constants that follow from the comparability bracket alone.
    ///
    /// With `C_lo E <= p <= C_hi E` for the envelope `E`, the Green function
    /// lies between `C_lo ∫E dt` and `C_hi ∫E dt`. The energy of the
    /// normalised ball measure then bounds the capacity from below, the
    /// equilibrium identity at the centre bounds it from above, and the
    /// hitting constants are the products. `q` and `occupation` stay unit.
    /// Recurrent models get unit constants throughout.
    pub fn derived(model: &KernelModel) -> Result<Self> {
        let (long_run, _) = classify_long_run(model)?;
        if long_run != LongRun::Transient {
            return Ok(ModelConstants::UNIT);
        }
        let source = model.comparability.source;
        let v = model.volume()?;
        let w = model.walk()?;
        let grid = log_grid(1e-2, 1e2, 9);
        let mut ratio_lo = f64::INFINITY;
        let mut ratio_hi = 0.0_f64;
        for &d in &grid {
            let ratio = envelope_time_integral(model, d)? / ln_phi_over_v(&v, &w, d).exp();
            ratio_lo = ratio_lo.min(ratio);
            ratio_hi = ratio_hi.max(ratio);
        }
        let green = ConstantPair {
            lo: model.comparability.c_lo * ratio_lo,
            hi: model.comparability.c_hi * ratio_hi,
            source,
        };
        let mut cap_lo = f64::INFINITY;
        let mut cap_hi = 0.0_f64;
        for &r in &grid {
            let lr = r.ln();
            let inner = ball_potential_integral(&v, &w, r)?;
            cap_lo = cap_lo.min(w.ln_eval(lr).exp() / (green.hi * inner));
            let inf_shape = log_grid(r * 1e-6, r, 61)
                .into_iter()
                .map(|s| ln_phi_over_v(&v, &w, s))
                .fold(f64::INFINITY, f64::min);
            cap_hi = cap_hi.max((-ln_phi_over_v(&v, &w, r) - inf_shape).exp() / green.lo);
        }
        let capacity = ConstantPair {
            lo: cap_lo,
            hi: cap_hi,
            source,
        };
        let hit = ConstantPair {
            lo: green.lo * capacity.lo,
            hi: green.hi * capacity.hi,
            source,
        };
        Ok(ModelConstants {
            green,
            capacity,
            hit,
            q: ConstantPair::UNIT,
            occupation: ConstantPair::UNIT,
        })
    }
}

/// `ln(φ(d) / V(d))`.
fn ln_phi_over_v(v: &ScalingFunction, w: &ScalingFunction, d: f64) -> f64 {
    let ld = d.ln();
    w.ln_eval(ld) - v.ln_eval(ld)
}

/// `∫_0^r φ(s)/V(s) dV(s)`, the potential of the ball at its centre up to
/// the Green constant.
fn ball_potential_integral(v: &ScalingFunction, w: &ScalingFunction, r: f64) -> Result<f64> {
    let dh = 1e-4;
    let lr = r.ln();
    let ln = ln_integral(
        |u| {
            let slope = (v.ln_eval(u + dh) - v.ln_eval(u - dh)) / (2.0 * dh);
            w.ln_eval(u) + slope.max(1e-300).ln()
        },
        lr - 40.0,
        lr,
        1e-9,
    )?;
    Ok(ln.exp())
}

/// `∫_0^∞ E(t, d) dt` for the envelope `E`, by log-domain quadrature over
/// `t ∈ φ(d) e^{±60}` plus the end pieces (linear growth below, power
/// decay `t^{-d1/d4}` above).
pub fn envelope_time_integral(model: &KernelModel, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(PotentialError::Precondition(format!("distance must be positive, got {d}")));
    }
    let w = model.walk()?;
    let u0 = w.ln_eval(d.ln());
    let (a, b) = (u0 - 60.0, u0 + 60.0);
    let ln_f = |u: f64| model.ln_envelope_density(u.exp(), d).map_or(f64::NAN, |le| le + u);
    let body = ln_integral(ln_f, a, b, 1e-9)?.exp();
    let e = model.exponents();
    let decay = e.d1 / e.d4;
    if decay <= 1.0 {
        return Err(PotentialError::Recurrent(model.id.clone()));
    }
    let head = 0.5 * ln_f(a).exp();
    let tail = ln_f(b).exp() / (decay - 1.0);
    Ok(head + body + tail)
}

/// Smallest `c` with `φ(r2)/V(r2) <= c φ(r1)/V(r1)` for all grid points
/// `r1 < r2`.
pub fn monotone_transfer_constant(model: &KernelModel, grid: &[f64]) -> Result<f64> {
    let v = model.volume()?;
    let w = model.walk()?;
    let vals: Vec<f64> = grid.iter().map(|&r| ln_phi_over_v(&v, &w, r)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut running_min = f64::INFINITY;
    for &x in &vals {
        worst = worst.max(x - running_min);
        running_min = running_min.min(x);
    }
    Ok(worst.exp().max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GreenMode {
    Envelope,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GreenValue {
    /// `center = φ(d)/V(d)` and the bracket around the Green function.
    Envelope { center: f64, bounds: BoundPair },
    /// `∫_0^∞ p(t, d) dt` from the exact law.
    Quadrature { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RWindow {
    pub value: f64,
    pub theta_min: f64,
}

/// A model together with its constants and long-run class.
#[derive(Debug, Clone)]
pub struct Potential {
    model: KernelModel,
    constants: ModelConstants,
    long_run: LongRun,
    volume: ScalingFunction,
    walk: ScalingFunction,
}

impl Potential {
    pub fn new(model: KernelModel, constants: ModelConstants) -> Result<Self> {
        let (long_run, _) = classify_long_run(&model)?;
        let volume = model.volume()?;
        let walk = model.walk()?;
        Ok(Potential {
            model,
            constants,
            long_run,
            volume,
            walk,
        })
    }

    pub fn model(&self) -> &KernelModel {
        &self.model
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.constants
    }

    pub fn long_run(&self) -> LongRun {
        self.long_run
    }

    fn require_transient(&self) -> Result<()> {
        match self.long_run {
            LongRun::Transient => Ok(()),
            LongRun::Recurrent => Err(PotentialError::Recurrent(self.model.id.clone())),
            LongRun::Inconclusive => Err(PotentialError::Undecided(self.model.id.clone())),
        }
    }

    fn positive(name: &str, x: f64) -> Result<()> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(PotentialError::Precondition(format!("{name} must be positive and finite, got {x}")))
        }
    }

    /// `ln(φ(d)/V(d))`, with `d` clamped to the domain floors.
    fn ln_shape(&self, d: f64) -> f64 {
        let floor = self.volume.domain_floor().max(self.walk.domain_floor());
        ln_phi_over_v(&self.volume, &self.walk, d.max(floor))
    }

    /// `ln(t / V(φ^{-1}(t)))`.
    fn ln_time_shape(&self, t: f64) -> Result<f64> {
        let lt = t.ln();
        Ok(lt - self.volume.ln_eval(self.model.ln_walk_inverse(lt)?))
    }

    pub fn green_function(&self, d: f64, mode: GreenMode) -> Result<GreenValue> {
        match mode {
            GreenMode::Envelope => {
                let (center, bounds) = self.green_envelope(d)?;
                Ok(GreenValue::Envelope { center, bounds })
            }
            GreenMode::Quadrature => Ok(GreenValue::Quadrature {
                value: self.green_quadrature(d)?,
            }),
        }
    }

    /// `φ(d)/V(d)` and the bracket `green.lo · φ/V <= u(d) <= green.hi · φ/V`.
    pub fn green_envelope(&self, d: f64) -> Result<(f64, BoundPair)> {
        self.require_transient()?;
        Self::positive("distance", d)?;
        let center = self.ln_shape(d).exp();
        let c = self.constants.green;
        Ok((center, BoundPair::new(c.lo * center, c.hi * center, "green", c.source)?))
    }

    /// `∫_0^∞ p(t, d) dt` for exact-law models, relative tolerance 1e-6.
    pub fn green_quadrature(&self, d: f64) -> Result<f64> {
        self.require_transient()?;
        Self::positive("distance", d)?;
        if self.model.exact_law.is_none() {
            return Err(PotentialError::Kernel(KernelError::UnsupportedModel {
                id: self.model.id.clone(),
                reason: "Green quadrature needs an exact law".into(),
            }));
        }
        let u0 = self.walk.ln_eval(d.ln());
        let (a, b) = (u0 - 40.0, u0 + 40.0);
        let ln_f = |u: f64| {
            let p = self.model.exact_density(u.exp(), d).unwrap_or(f64::NAN);
            if p > 0.0 {
                p.ln() + u
            } else if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                f64::NAN
            }
        };
        let body = ln_integral_with_fallback(ln_f, a, b, 1e-9, 1e-7, 4000)?.exp();
        let e = self.model.exponents();
        let decay = e.d1 / e.d4;
        let head = 0.5 * ln_f(a).exp();
        let tail = ln_f(b).exp() / (decay - 1.0);
        Ok(head + body + tail)
    }

    /// `capacity.lo · V(r)/φ(r)`.
    pub fn capacity_lower_bound(&self, r: f64) -> Result<f64> {
        Ok(self.capacity_bounds(r)?.lower)
    }

    /// Capacity of the closed ball of radius `r`, both sides.
    pub fn capacity_bounds(&self, r: f64) -> Result<BoundPair> {
        self.require_transient()?;
        Self::positive("radius", r)?;
        let shape = (-self.ln_shape(r)).exp();
        let c = self.constants.capacity;
        BoundPair::new(c.lo * shape, c.hi * shape, "capacity", c.source)
    }

    /// Probability of ever entering `B(x0, r)` from distance `D >= r`:
    /// `hit.lo (V/φ)(r) (φ/V)(D + r)` and `hit.hi (V/φ)(r) (φ/V)(D - r)`.
    /// At `D = r` the upper shape is evaluated at the domain floor.
    pub fn hit_ball_from_distance(&self, r: f64, big_d: f64) -> Result<BoundPair> {
        self.require_transient()?;
        Self::positive("radius", r)?;
        if !(big_d >= r) || !big_d.is_finite() {
            return Err(PotentialError::Precondition(format!("start distance D = {big_d} must be at least r = {r}")));
        }
        let base = -self.ln_shape(r);
        let c = self.constants.hit;
        let lower = c.lo * (base + self.ln_shape(big_d + r)).exp();
        let upper = c.hi * (base + self.ln_shape(big_d - r)).exp();
        BoundPair::new(lower, upper, "hit_ball", c.source)
    }

    /// One side of `Q(x, r, t) ≍ (V(r)/φ(r)) · t / V(φ^{-1}(t))` for
    /// `t >= φ(r)`, clamped to `[0, 1]`.
    pub fn q_bound(&self, r: f64, t: f64, side: Side) -> Result<f64> {
        self.require_transient()?;
        Self::positive("radius", r)?;
        let phi_r = self.walk.ln_eval(r.ln()).exp();
        if !(t >= phi_r * (1.0 - 1e-12)) || !t.is_finite() {
            return Err(PotentialError::Precondition(format!("need t >= φ(r) = {phi_r}, got t = {t}")));
        }
        let shape = (-self.ln_shape(r) + self.ln_time_shape(t)?).exp();
        let c = match side {
            Side::Lower => self.constants.q.lo,
            Side::Upper => self.constants.q.hi,
        };
        Ok((c * shape).clamp(0.0, 1.0))
    }

    pub fn q_bounds(&self, r: f64, t: f64) -> Result<BoundPair> {
        BoundPair::new(
            self.q_bound(r, t, Side::Lower)?,
            self.q_bound(r, t, Side::Upper)?,
            "q",
            self.constants.q.source,
        )
    }

    /// Smallest window ratio for which `Q(t) - Q(θt)` keeps half of the
    /// lower bound: `(q.hi / (c0 q.lo)) θ^{1 - d1/d4} <= 1/2`, where
    /// `V(φ^{-1}(θt)) >= c0 θ^{d1/d4} V(φ^{-1}(t))`.
    pub fn theta_min(&self) -> Result<f64> {
        let e = self.model.exponents();
        let k = e.d1 / e.d4;
        if !(k > 1.0) {
            return Err(PotentialError::UnsupportedRegime(format!(
                "window bound needs d1 > d4, got d1 = {}, d4 = {}",
                e.d1, e.d4
            )));
        }
        let c0 = e.c1 * e.c4.powf(-k);
        let q = self.constants.q;
        Ok((2.0 * q.hi / (c0 * q.lo)).powf(1.0 / (k - 1.0)).max(1.0))
    }

    /// Lower bound on `R(x, r, t, θ)`, the chance of visiting the ball in
    /// `(t, θt]`: half the lower `Q` value.
    pub fn r_window_lower(&self, r: f64, t: f64, theta: f64) -> Result<RWindow> {
        let theta_min = self.theta_min()?;
        if !(theta >= theta_min) {
            return Err(PotentialError::ThetaBelowMinimum { theta, theta_min });
        }
        let value = 0.5 * self.q_bound(r, t, Side::Lower)?;
        Ok(RWindow { value, theta_min })
    }

    /// Critical-case sandwich for visiting `B(x0, r)` during `(a, b]`,
    /// starting from `x0`.
    pub fn occupation_sandwich(&self, r: f64, a: f64, b: f64) -> Result<BoundPair> {
        if !self.model.is_critical() {
            return Err(PotentialError::UnsupportedRegime(format!(
                "model {} is not critical (needs d1 = d2 = d3 = d4)",
                self.model.id
            )));
        }
        Self::positive("radius", r)?;
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(PotentialError::Precondition(format!("need 0 < a < b, got a = {a}, b = {b}")));
        }
        let phi_r = self.walk.ln_eval(r.ln()).exp();
        if phi_r > b - a {
            return Err(PotentialError::UnsupportedRegime(format!(
                "φ(r) = {phi_r} exceeds b - a = {}",
                b - a
            )));
        }
        let (lo, hi) = occupation_shape(phi_r, a, b);
        let c = self.constants.occupation;
        BoundPair::new(c.lo * lo, c.hi * hi, "occupation", c.source)
    }
}

/// Lower and upper shapes of the critical window-hitting sandwich for
/// `φ(r) <= b - a`:
/// `((φ - a)₊ + φ ln(B / (a ∨ φ))) / (φ (1 + ln((b - a)/φ)))` with
/// `B = b - a` below and `B = 2b - a` above.
pub fn occupation_shape(phi_r: f64, a: f64, b: f64) -> (f64, f64) {
    let m = a.max(phi_r);
    let den = phi_r * (1.0 + ((b - a) / phi_r).ln());
    let head = (phi_r - a).max(0.0);
    let lo = (head + phi_r * ((b - a) / m).ln().max(0.0)) / den;
    let hi = (head + phi_r * ((2.0 * b - a) / m).ln()) / den;
    (lo, hi)
}
