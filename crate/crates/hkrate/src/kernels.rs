//! Heat-kernel models: envelope shapes, exact laws where one exists, and
//! the probabilities derived from them.
//!
//! A [`KernelModel`] pairs an envelope form with an optional exact law and
//! a comparability bracket `(C_lo, C_hi)` such that
//! `C_lo <= p(t, x, y) / envelope(t, d(x, y)) <= C_hi`. Fresh presets carry
//! the unit bracket; calibrated brackets come from the calibration table.
//!
//! Laws follow one convention: the isotropic α-stable law has
//! characteristic function `exp(-t |ξ|^α)`, so `α = 2` is Brownian motion
//! with per-coordinate variance `2t` and heat kernel
//! `(4πt)^{-d/2} exp(-|x|² / 4t)`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};
use thiserror::Error;

use crate::integral_tests::{classify_tail_integral, Class, LnIntegrand, LogPoint, Verdict, CEILING_CANCELLING};
use crate::quadrature::ln_integral;
use crate::scaling::{self, ln_inverse, log_grid, Envelope, Monotonicity, ScalingError, ScalingFunction};
use crate::stable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("unknown model preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid model preset `{id}`: {reason}")]
    InvalidPreset { id: String, reason: String },
    #[error("unsupported model {id}: {reason}")]
    UnsupportedModel { id: String, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[derive(Debug, Clone)]
pub enum KernelForm {
    /// `t^{-α/β} ∧ t d^{-(α+β)}` with `α = dv`, `β = dw`.
    StableLike { dv: f64, dw: f64 },
    /// `t^{-α/β} exp(-c0 (d / t^{1/β})^{β/(β-1)})`.
    SubGaussian { dv: f64, dw: f64, c0: f64 },
    /// `1/V(φ^{-1}(t)) ∧ t / (V(d) φ(d))`.
    TwoSidedJump {
        volume: ScalingFunction,
        walk: ScalingFunction,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExactLaw {
    Gaussian,
    Cauchy1d,
    StableNumeric { alpha: f64, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstantsSource {
    Calibrated,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub c_lo: f64,
    pub c_hi: f64,
    pub source: ConstantsSource,
}

impl Comparability {
    pub const UNIT: Comparability = Comparability {
        c_lo: 1.0,
        c_hi: 1.0,
        source: ConstantsSource::Unit,
    };
}

/// Exponents and constants of the volume and walk envelopes:
/// `c1 (R/r)^d1 <= V(R)/V(r) <= c2 (R/r)^d2` and
/// `c3 (R/r)^d3 <= φ(R)/φ(r) <= c4 (R/r)^d4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub c1: f64,
    pub d1: f64,
    pub c2: f64,
    pub d2: f64,
    pub c3: f64,
    pub d3: f64,
    pub c4: f64,
    pub d4: f64,
}

#[derive(Debug, Clone)]
pub struct KernelModel {
    pub id: String,
    pub form: KernelForm,
    pub exact_law: Option<ExactLaw>,
    /// Spatial dimension of Euclidean presets.
    pub dim: Option<usize>,
    pub comparability: Comparability,
}

fn invalid(id: &str, reason: impl Into<String>) -> KernelError {
    KernelError::InvalidPreset {
        id: id.to_string(),
        reason: reason.into(),
    }
}

fn numbers(id: &str, args: &str, n: usize) -> Result<Vec<f64>> {
    let v: std::result::Result<Vec<f64>, _> = args.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match v {
        Ok(v) if v.len() == n && v.iter().all(|x| x.is_finite()) => Ok(v),
        _ => Err(invalid(id, format!("expected {n} comma-separated numbers"))),
    }
}

fn integer_dim(x: f64) -> Option<usize> {
    if x.fract() == 0.0 && (1.0..=3.0).contains(&x) {
        Some(x as usize)
    } else {
        None
    }
}

impl KernelModel {
    /// Parses a model preset id (see the crate README for the grammar).
    pub fn parse(id: &str) -> Result<Self> {
        let id = id.trim();
        let (name, args) = id.split_once(':').unwrap_or((id, ""));
        let model = |form, law, dim| KernelModel {
            id: id.to_string(),
            form,
            exact_law: law,
            dim,
            comparability: Comparability::UNIT,
        };
        match name {
            "cauchy1d" if args.is_empty() => Ok(model(
                KernelForm::StableLike { dv: 1.0, dw: 1.0 },
                Some(ExactLaw::Cauchy1d),
                Some(1),
            )),
            "gaussian" => {
                let d = numbers(id, args, 1)?[0];
                let dim = integer_dim(d).ok_or_else(|| invalid(id, "dimension must be 1, 2 or 3"))?;
                Ok(model(
                    KernelForm::SubGaussian { dv: d, dw: 2.0, c0: 0.25 },
                    Some(ExactLaw::Gaussian),
                    Some(dim),
                ))
            }
            "stable" => {
                let v = numbers(id, args, 2)?;
                let (a, d) = (v[0], v[1]);
                let dim = integer_dim(d).ok_or_else(|| invalid(id, "dimension must be 1, 2 or 3"))?;
                if !(a > 0.0 && a <= 2.0) {
                    return Err(invalid(id, "index must lie in (0, 2]"));
                }
                if a == 2.0 {
                    Ok(model(
                        KernelForm::SubGaussian { dv: d, dw: 2.0, c0: 0.25 },
                        Some(ExactLaw::Gaussian),
                        Some(dim),
                    ))
                } else if a == 1.0 && dim == 1 {
                    Ok(model(
                        KernelForm::StableLike { dv: 1.0, dw: 1.0 },
                        Some(ExactLaw::Cauchy1d),
                        Some(1),
                    ))
                } else {
                    Ok(model(
                        KernelForm::StableLike { dv: d, dw: a },
                        Some(ExactLaw::StableNumeric { alpha: a, dim }),
                        Some(dim),
                    ))
                }
            }
            "stablelike" => {
                let v = numbers(id, args, 2)?;
                let (dv, dw) = (v[0], v[1]);
                if !(dv > 0.0 && dw > 0.0) {
                    return Err(invalid(id, "exponents must be positive"));
                }
                let law = match integer_dim(dv) {
                    Some(1) if dw == 1.0 => Some(ExactLaw::Cauchy1d),
                    Some(dim) if dw < 2.0 => Some(ExactLaw::StableNumeric { alpha: dw, dim }),
                    _ => None,
                };
                let dim = law.and(integer_dim(dv));
                Ok(model(KernelForm::StableLike { dv, dw }, law, dim))
            }
            "subgaussian" => {
                let v = numbers(id, args, 3)?;
                let (dv, dw, c0) = (v[0], v[1], v[2]);
                if !(dv > 0.0 && dw > 1.0 && c0 > 0.0) {
                    return Err(invalid(id, "need DV > 0, DW > 1, C0 > 0"));
                }
                Ok(model(KernelForm::SubGaussian { dv, dw, c0 }, None, None))
            }
            "jump" => {
                // function ids contain commas themselves; take the first split
                // where both halves parse
                let parts: Vec<&str> = args.split(',').collect();
                for k in 1..parts.len() {
                    let (a, b) = (parts[..k].join(","), parts[k..].join(","));
                    if let (Ok(volume), Ok(walk)) = (scaling::parse_preset(&a), scaling::parse_preset(&b)) {
                        if volume.monotonicity() != Monotonicity::Increasing
                            || walk.monotonicity() != Monotonicity::Increasing
                        {
                            return Err(invalid(id, "volume and walk functions must be increasing"));
                        }
                        return Ok(model(KernelForm::TwoSidedJump { volume, walk }, None, None));
                    }
                }
                Err(invalid(id, "expected V_ID,PHI_ID"))
            }
            _ => Err(KernelError::UnknownPreset(id.to_string())),
        }
    }

    pub fn with_comparability(mut self, c: Comparability) -> Self {
        self.comparability = c;
        self
    }

    /// Volume profile `V`.
    pub fn volume(&self) -> Result<ScalingFunction> {
        Ok(match &self.form {
            KernelForm::StableLike { dv, .. } | KernelForm::SubGaussian { dv, .. } => ScalingFunction::power(*dv, 1.0),
            KernelForm::TwoSidedJump { volume, .. } => volume.clone(),
        })
    }

    /// Walk scale `φ` (time needed to travel distance `r`).
    pub fn walk(&self) -> Result<ScalingFunction> {
        Ok(match &self.form {
            KernelForm::StableLike { dw, .. } | KernelForm::SubGaussian { dw, .. } => ScalingFunction::power(*dw, 1.0),
            KernelForm::TwoSidedJump { walk, .. } => walk.clone(),
        })
    }

    pub fn exponents(&self) -> Exponents {
        let v = self.volume().expect("volume").envelope();
        let w = self.walk().expect("walk").envelope();
        Exponents {
            c1: v.c_lo,
            d1: v.d_lo,
            c2: v.c_hi,
            d2: v.d_hi,
            c3: w.c_lo,
            d3: w.d_lo,
            c4: w.c_hi,
            d4: w.d_hi,
        }
    }

    /// Volume exponent strictly above the walk exponent.
    pub fn is_subcritical(&self) -> bool {
        let e = self.exponents();
        e.d1 > e.d4
    }

    /// All four exponents equal.
    pub fn is_critical(&self) -> bool {
        let e = self.exponents();
        let same = |a: f64, b: f64| (a - b).abs() < 1e-12;
        same(e.d1, e.d2) && same(e.d2, e.d3) && same(e.d3, e.d4)
    }

    /// `ln φ^{-1}(t)` given `ln t`; this is also `ln ρ(t)`.
    pub fn ln_walk_inverse(&self, ln_t: f64) -> Result<f64> {
        Ok(ln_inverse(&self.walk()?, ln_t)?)
    }

    /// `φ^{-1}(t)`.
    pub fn walk_inverse(&self, t: f64) -> Result<f64> {
        Ok(self.ln_walk_inverse(t.ln())?.exp())
    }

    /// Multiplier turning `V(r)` into the measure of a ball: the unit-ball
    /// volume for Euclidean presets, 1 otherwise.
    pub fn ball_volume_constant(&self) -> f64 {
        match (self.exact_law, self.dim) {
            (Some(_), Some(d)) => stable::ball_volume(d),
            _ => 1.0,
        }
    }

    /// `ln` of the envelope at time `t` and distance `d`.
    pub fn ln_envelope_density(&self, t: f64, d: f64) -> Result<f64> {
        if !(t > 0.0) || !(d >= 0.0) {
            return Err(KernelError::Precondition(format!("need t > 0 and d >= 0, got t = {t}, d = {d}")));
        }
        let lt = t.ln();
        Ok(match &self.form {
            KernelForm::StableLike { dv, dw } => {
                let diag = -(dv / dw) * lt;
                if d == 0.0 {
                    diag
                } else {
                    diag.min(lt - (dv + dw) * d.ln())
                }
            }
            KernelForm::SubGaussian { dv, dw, c0 } => {
                let s = d / t.powf(1.0 / dw);
                -(dv / dw) * lt - c0 * s.powf(dw / (dw - 1.0))
            }
            KernelForm::TwoSidedJump { volume, walk } => {
                let diag = -volume.ln_eval(ln_inverse(walk, lt)?);
                if d == 0.0 {
                    diag
                } else {
                    let ld = d.ln();
                    diag.min(lt - volume.ln_eval(ld) - walk.ln_eval(ld))
                }
            }
        })
    }

    /// Envelope value with constants folded to 1.
    pub fn envelope_density(&self, t: f64, d: f64) -> Result<f64> {
        Ok(self.ln_envelope_density(t, d)?.exp())
    }

    /// Exact transition density at time `t` and distance `d`, if the model
    /// has an exact law.
    pub fn exact_density(&self, t: f64, d: f64) -> Option<f64> {
        let law = self.exact_law?;
        let d = d.abs();
        Some(match law {
            ExactLaw::Cauchy1d => t / (PI * (d * d + t * t)),
            ExactLaw::Gaussian => {
                let dim = self.dim.unwrap_or(1) as f64;
                (4.0 * PI * t).powf(-dim / 2.0) * (-d * d / (4.0 * t)).exp()
            }
            ExactLaw::StableNumeric { alpha, dim } => stable::density(alpha, dim, t, d),
        })
    }

    /// Decreasing tail shape `h` with `p(t, x, y) <= C_hi / V(d) h(d / ρ(t))`
    /// for `d >= ρ(t)`.
    pub fn tail_shape(&self) -> Result<ScalingFunction> {
        match &self.form {
            KernelForm::StableLike { dw, .. } => Ok(ScalingFunction::power(-dw, 1.0)),
            KernelForm::TwoSidedJump { walk, .. } => {
                let e = walk.envelope();
                Ok(ScalingFunction::power(-e.d_lo, 1.0 / e.c_lo))
            }
            KernelForm::SubGaussian { dv, dw, c0 } => {
                // decreasing majorant of s^dv exp(-c0 s^γ): flat up to the peak
                let (dv, c0) = (*dv, *c0);
                let gamma = dw / (dw - 1.0);
                let ln_peak = (dv / (c0 * gamma)).ln() / gamma;
                let top = 1e8_f64;
                let d_lo = -c0 * gamma * top.powf(gamma) * (1.0 + 1e-9);
                Ok(ScalingFunction::new(
                    format!("subgaussian-tail:{dv},{dw},{c0}"),
                    Arc::new(move |lx: f64| {
                        let ls = lx.max(ln_peak);
                        dv * ls - c0 * (gamma * ls).exp()
                    }),
                    Monotonicity::Decreasing,
                    Envelope::new(1.0, d_lo, 1.0, 0.0),
                    1.0,
                )?)
            }
        }
    }

    /// Tail-bound constant from the annulus summation: with
    /// `c0(θ) = sup_{s>1} h(θs)/h(s) < 1`,
    /// `c1 = max(1/h(1), min_θ C_hi ω c2 θ^{d2} / (1 - c0(θ)))`.
    pub fn tail_constant(&self) -> Result<TailConstant> {
        let h = self.tail_shape()?;
        let e = self.exponents();
        let grid = log_grid(1.0, 1e6, 241);
        let mut best: Option<TailConstant> = None;
        for theta in [2.0, 4.0, 8.0] {
            let lt = f64::ln(theta);
            let c0 = grid
                .iter()
                .map(|&s| (h.ln_eval(s.ln() + lt) - h.ln_eval(s.ln())).exp())
                .fold(0.0_f64, f64::max);
            if c0 >= 1.0 {
                continue;
            }
            let sum = self.comparability.c_hi * self.ball_volume_constant() * e.c2 * theta.powf(e.d2) / (1.0 - c0);
            let c1 = sum.max(1.0 / h.eval(1.0));
            if best.as_ref().map_or(true, |b| c1 < b.c1) {
                best = Some(TailConstant { c1, theta, c0 });
            }
        }
        best.ok_or_else(|| KernelError::Precondition("tail shape has no decay factor below 1 for θ in {2, 4, 8}".into()))
    }

    fn require_law(&self) -> Result<ExactLaw> {
        self.exact_law.ok_or_else(|| KernelError::UnsupportedModel {
            id: self.id.clone(),
            reason: "no exact law".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConstant {
    pub c1: f64,
    pub theta: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProbability {
    pub estimate: f64,
    pub upper_bound: f64,
    /// True when the estimate comes from an exact law.
    pub exact: bool,
}

/// `P(d(X_t, x) >= r)` with the tail bound `c1 h(r / ρ(t))`.
pub fn tail_probability(model: &KernelModel, t: f64, r: f64) -> Result<TailProbability> {
    if !(t >= 1.0) || !(r >= 0.0) {
        return Err(KernelError::Precondition(format!("need t >= 1 and r >= 0, got t = {t}, r = {r}")));
    }
    let tc = model.tail_constant()?;
    let h = model.tail_shape()?;
    let ln_rho = model.ln_walk_inverse(t.ln())?;
    let upper_bound = if r == 0.0 {
        tc.c1 * h.eval(h.domain_floor())
    } else {
        tc.c1 * h.ln_eval(r.ln() - ln_rho).exp()
    };
    let (estimate, exact) = match model.exact_law {
        _ if r == 0.0 => (1.0, true),
        Some(ExactLaw::Cauchy1d) => (1.0 - 2.0 / PI * (r / t).atan(), true),
        Some(ExactLaw::Gaussian) => {
            let dim = model.dim.unwrap_or(1) as f64;
            (gamma_ur(dim / 2.0, r * r / (4.0 * t)), true)
        }
        Some(ExactLaw::StableNumeric { alpha, dim }) => (stable::tail_mass(alpha, dim, t, r), true),
        None => {
            let mid = 0.5 * (model.comparability.c_lo + model.comparability.c_hi);
            let mass = envelope_mass_beyond(model, t, r)?;
            ((mid * model.ball_volume_constant() * mass).min(1.0), false)
        }
    };
    Ok(TailProbability {
        estimate,
        upper_bound,
        exact,
    })
}

/// `∫_{s >= r} envelope(t, s) dV(s)`.
fn envelope_mass_beyond(model: &KernelModel, t: f64, r: f64) -> Result<f64> {
    let v = model.volume()?;
    let rho = model.walk_inverse(t)?;
    let a = r.ln();
    let b = r.max(rho).ln() + 80.0;
    let dh = 1e-4;
    let res = ln_integral(
        |u| {
            let slope = (v.ln_eval(u + dh) - v.ln_eval(u - dh)) / (2.0 * dh);
            match model.ln_envelope_density(t, u.exp()) {
                Ok(le) => le + v.ln_eval(u) + slope.max(1e-300).ln(),
                Err(_) => f64::NAN,
            }
        },
        a,
        b,
        1e-8,
    )
    .map_err(|e| KernelError::Precondition(format!("envelope mass quadrature failed: {e}")))?;
    Ok(res.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BallProbability {
    /// From the exact law, when there is one.
    pub probability: Option<f64>,
    /// `1 ∧ V(r) / V(φ^{-1}(t))`.
    pub envelope: f64,
}

/// `P(d(X_t, x) <= r)` against its envelope.
pub fn ball_probability(model: &KernelModel, t: f64, r: f64) -> Result<BallProbability> {
    if !(t > 0.0) || !(r > 0.0) {
        return Err(KernelError::Precondition(format!("need t > 0 and r > 0, got t = {t}, r = {r}")));
    }
    let v = model.volume()?;
    let ln_env = v.ln_eval(r.ln()) - v.ln_eval(model.ln_walk_inverse(t.ln())?);
    let envelope = ln_env.min(0.0).exp();
    let probability = model.exact_law.map(|law| match law {
        ExactLaw::Cauchy1d => 2.0 / PI * (r / t).atan(),
        ExactLaw::Gaussian => {
            let dim = model.dim.unwrap_or(1) as f64;
            gamma_lr(dim / 2.0, r * r / (4.0 * t))
        }
        ExactLaw::StableNumeric { alpha, dim } => 1.0 - stable::tail_mass(alpha, dim, t, r),
    });
    Ok(BallProbability { probability, envelope })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LongRun {
    Transient,
    Recurrent,
    Inconclusive,
}

/// Transience test: `∫_1^∞ dt / V(φ^{-1}(t))` finite means transient.
pub fn classify_long_run(model: &KernelModel) -> std::result::Result<(LongRun, Verdict), crate::integral_tests::ClassifyError> {
    let v = model.volume()?;
    let w = model.walk()?;
    let f = LnIntegrand {
        ln_tf: |p: &LogPoint| match ln_inverse(&w, p.l1) {
            Ok(li) => p.l1 - v.ln_eval(li),
            Err(_) => f64::NAN,
        },
        ceiling: CEILING_CANCELLING,
    };
    let verdict = classify_tail_integral(&f, 2.0)?;
    let class = match verdict.class {
        Class::Convergent => LongRun::Transient,
        Class::Divergent => LongRun::Recurrent,
        Class::Inconclusive => LongRun::Inconclusive,
    };
    Ok((class, verdict))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompHeat {
    /// `p(t, x, z) / p(t, y, z)`.
    pub ratio: f64,
    /// Contract constant `K`; the ratio lies in `[1/K, K]`.
    pub k_bound: f64,
    pub within: bool,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compares `p(t, x, z)` with `p(t, y, z)` for `d(x, y) <= φ^{-1}(t)`.
pub fn comp_heat_check(model: &KernelModel, t: f64, x: &[f64], y: &[f64], z: &[f64]) -> Result<CompHeat> {
    model.require_law()?;
    let dim = model.dim.unwrap_or(1);
    if x.len() != dim || y.len() != dim || z.len() != dim {
        return Err(KernelError::Precondition(format!("points must have dimension {dim}")));
    }
    let dxy = distance(x, y);
    let scale = model.walk_inverse(t)?;
    if dxy > scale * (1.0 + 1e-12) {
        return Err(KernelError::Precondition(format!(
            "d(x, y) = {dxy} exceeds φ^{{-1}}(t) = {scale}"
        )));
    }
    let px = model.exact_density(t, distance(x, z)).expect("law checked");
    let py = model.exact_density(t, distance(y, z)).expect("law checked");
    let ratio = px / py;
    let k_bound = match model.form {
        KernelForm::SubGaussian { .. } => f64::INFINITY,
        _ => {
            let e = model.exponents();
            let c = model.comparability;
            (c.c_hi / c.c_lo) * e.c2 * 2f64.powf(e.d2) * e.c4 * 2f64.powf(e.d4)
        }
    };
    let within = ratio <= k_bound && ratio >= 1.0 / k_bound;
    Ok(CompHeat { ratio, k_bound, within })
}

/// Grid on which comparability is swept: `t` in `[1, 1e3]`, `d` in
/// `{0, ρ(t)}` plus a log grid up to `10 ρ(t)`.
pub fn comparability_grid(model: &KernelModel, n_t: usize, n_d: usize) -> Result<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for t in log_grid(1.0, 1e3, n_t) {
        let rho = model.walk_inverse(t)?;
        pts.push((t, 0.0));
        pts.push((t, rho));
        for d in log_grid(rho * 1e-3, 10.0 * rho, n_d) {
            pts.push((t, d));
        }
    }
    Ok(pts)
}

/// Extremes of `density / envelope` over [`comparability_grid`], widened
/// by 2% on each side.
pub fn calibrate_comparability(model: &KernelModel) -> Result<Comparability> {
    model.require_law()?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for (t, d) in comparability_grid(model, 7, 48)? {
        let p = model.exact_density(t, d).expect("law checked");
        let ratio = p / model.envelope_density(t, d)?;
        if !ratio.is_finite() || ratio <= 0.0 {
            return Err(KernelError::Precondition(format!("density ratio {ratio} at t = {t}, d = {d}")));
        }
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(Comparability {
        c_lo: lo / 1.02,
        c_hi: hi * 1.02,
        source: ConstantsSource::Calibrated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn cauchy() -> KernelModel {
        KernelModel::parse("cauchy1d").unwrap()
    }

    #[test]
    fn envelope_values() {
        let m = KernelModel::parse("stablelike:1,1").unwrap();
        assert_eq!(m.envelope_density(1.0, 0.0).unwrap(), 1.0);
        assert!((m.envelope_density(1.0, 2.0).unwrap() - 0.25).abs() < 1e-15);
        let c = cauchy();
        let ratio = c.exact_density(1.0, 0.0).unwrap() / c.envelope_density(1.0, 0.0).unwrap();
        assert!((ratio - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn envelope_continuous_at_crossover() {
        for id in ["stablelike:3,1.5", "cauchy1d", "jump:power:2,powerlog:1.5,1"] {
            let m = KernelModel::parse(id).unwrap();
            for t in [1.0, 10.0, 1e3] {
                let rho = m.walk_inverse(t).unwrap();
                let a = m.envelope_density(t, rho * 0.999).unwrap();
                let b = m.envelope_density(t, rho * 1.001).unwrap();
                assert!(a / b < 2.0 && b / a < 2.0, "{id} at t = {t}");
            }
        }
    }

    #[test]
    fn tail_and_ball_examples() {
        let c = cauchy();
        let tp = tail_probability(&c, 1.0, 1.0).unwrap();
        assert!((tp.estimate - 0.5).abs() < 1e-15);
        assert!(tp.estimate <= tp.upper_bound);
        let g = KernelModel::parse("gaussian:1").unwrap();
        assert_eq!(tail_probability(&g, 1.0, 0.0).unwrap().estimate, 1.0);
        let b = ball_probability(&c, 1.0, 1.0).unwrap();
        assert!((b.probability.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(b.envelope, 1.0);
        let g3 = KernelModel::parse("gaussian:3").unwrap();
        let b3 = ball_probability(&g3, 1.0, 0.1).unwrap();
        assert!((b3.envelope - 1e-3).abs() < 1e-15);
        // chi-square with 3 degrees of freedom: |X|²/2 at 0.01/2
        let chi = statrs::distribution::ChiSquared::new(3.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        assert!((b3.probability.unwrap() - chi.cdf(0.01 / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn long_run_examples() {
        let s = KernelModel::parse("stablelike:3,1.5").unwrap();
        assert_eq!(classify_long_run(&s).unwrap().0, LongRun::Transient);
        assert_eq!(classify_long_run(&cauchy()).unwrap().0, LongRun::Recurrent);
        let b = KernelModel::parse("stablelike:1,2").unwrap();
        assert_eq!(classify_long_run(&b).unwrap().0, LongRun::Recurrent);
    }

    #[test]
    fn comp_heat_examples() {
        let c = cauchy().with_comparability(calibrate_comparability(&cauchy()).unwrap());
        let same = comp_heat_check(&c, 1.0, &[0.3], &[0.3], &[4.0]).unwrap();
        assert_eq!(same.ratio, 1.0);
        let r = comp_heat_check(&c, 1.0, &[0.0], &[0.5], &[10.0]).unwrap();
        assert!((r.ratio - (9.5f64.powi(2) + 1.0) / 101.0).abs() < 1e-14);
        assert!(r.within);
        assert!(comp_heat_check(&c, 1.0, &[0.0], &[2.0], &[10.0]).is_err());
    }

    #[test]
    fn cauchy_bracket_is_exact() {
        let c = calibrate_comparability(&cauchy()).unwrap();
        assert!((c.c_lo * 1.02 - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((c.c_hi / 1.02 - 1.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn gaussian_normalization_and_semigroup() {
        let g = KernelModel::parse("gaussian:1").unwrap();
        for t in [0.5, 1.0, 7.0] {
            let m = integrate(|x| g.exact_density(t, x).unwrap(), -60.0, 60.0, 1e-12, 0.0).unwrap();
            assert!((m - 1.0).abs() < 1e-6);
        }
        let (t, s) = (1.0, 2.5);
        for x in [0.0, 1.0, 3.0] {
            let conv = integrate(
                |y| g.exact_density(t, x - y).unwrap() * g.exact_density(s, y).unwrap(),
                -60.0,
                60.0,
                1e-12,
                0.0,
            )
            .unwrap();
            assert!((conv - g.exact_density(t + s, x).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_presets_and_errors() {
        assert!(KernelModel::parse("nope").is_err());
        assert!(KernelModel::parse("stable:2.5,1").is_err());
        assert!(KernelModel::parse("gaussian:4").is_err());
        let j = KernelModel::parse("jump:power:3,power:1.5").unwrap();
        assert!(j.is_subcritical());
        assert!(KernelModel::parse("cauchy1d").unwrap().is_critical());
    }
}
