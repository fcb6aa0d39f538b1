//! Adaptive Gauss–Kronrod quadrature (15-point rule, global bisection of
//! the worst interval) plus a log-domain wrapper for integrands that
//! overflow or underflow in `f64`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand is not finite at x = {x:e}")]
    NonFinite { x: f64 },
    #[error("subdivision limit reached (estimate {estimate:e}, error {error:e})")]
    MaxSubdivisions { estimate: f64, error: f64 },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One 15-point Kronrod panel: (estimate, error estimate).
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| -> Result<f64, QuadError> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite { x })
        }
    };
    let fc = eval(c)?;
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = eval(c - x)? + eval(c + x)?;
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    Ok((resk * h, ((resk - resg) * h).abs()))
}

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol` (with an
/// absolute floor `abs_tol`).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    integrate_with_limit(f, a, b, rel_tol, abs_tol, 2000)
}

pub fn integrate_with_limit<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (r0, e0) = qk15(&f, a, b)?;
    let mut panels = vec![(a, b, r0, e0)];
    let mut total = r0;
    let mut err = e0;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if panels.len() >= max_intervals {
            // Accept results whose error is dominated by rounding.
            if err <= 1e3 * f64::EPSILON * total.abs().max(abs_tol) {
                break;
            }
            return Err(QuadError::MaxSubdivisions {
                estimate: total,
                error: err,
            });
        }
        let (k, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (pa, pb, pr, pe) = panels.swap_remove(k);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            // interval cannot be split further
            panels.push((pa, pb, pr, 0.0));
            err -= pe;
            continue;
        }
        let (r1, e1) = qk15(&f, pa, m)?;
        let (r2, e2) = qk15(&f, m, pb)?;
        total += r1 + r2 - pr;
        err += e1 + e2 - pe;
        panels.push((pa, m, r1, e1));
        panels.push((m, pb, r2, e2));
        if panels.len() % 64 == 0 {
            // refresh sums to contain cancellation drift
            total = panels.iter().map(|p| p.2).sum();
            err = panels.iter().map(|p| p.3).sum();
        }
    }
    Ok(panels.iter().map(|p| p.2).sum())
}

/// `ln ∫_a^b exp(ln_f(x)) dx`. The integrand is shifted by its maximum over
/// a probe grid before integrating, so values like `exp(-800)` are fine.
/// Returns `-inf` when the integrand vanishes identically.
pub fn ln_integral<F: Fn(f64) -> f64>(ln_f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, QuadError> {
    ln_integral_with_fallback(ln_f, a, b, rel_tol, rel_tol, 2000)
}

/// As [`ln_integral`], but when the subdivision limit is reached the
/// estimate is still accepted if its error is within `fallback_rel`.
/// Meant for integrands carrying rounding noise above `rel_tol`.
///
/// A boundary layer at either end, narrower than the probe spacing, is
/// resolved on a mesh graded geometrically towards that end.
pub fn ln_integral_with_fallback<F: Fn(f64) -> f64>(
    ln_f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    fallback_rel: f64,
    max_intervals: usize,
) -> Result<f64, QuadError> {
    if b <= a {
        return Ok(f64::NEG_INFINITY);
    }
    let h = b - a;
    let near = |x: f64| ln_f(x);
    let (la, lb) = (near(a), near(b));
    let (lpa, lpb) = (near(a + h / PROBES as f64), near(b - h / PROBES as f64));
    let steep_a = la - lpa > BOUNDARY_DROP;
    let steep_b = lb - lpb > BOUNDARY_DROP;
    if !(steep_a || steep_b) || steep_a && steep_b {
        return ln_integral_single(&ln_f, a, b, rel_tol, fallback_rel, max_intervals);
    }
    // breakpoints end + s h 2^-k with s pointing into the interval
    let (end, s) = if steep_a { (a, 1.0) } else { (b, -1.0) };
    let mut cuts: Vec<f64> = (0..=GRADED_LEVELS).map(|k| end + s * h * 0.5f64.powi(k)).collect();
    cuts.push(end);
    let mut total = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        let (lo, hi) = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
        let piece = ln_integral_single(&ln_f, lo, hi, rel_tol, fallback_rel, max_intervals)?;
        total = log_add(total, piece);
    }
    Ok(total)
}

const PROBES: usize = 33;
/// Drop in `ln f` over the first probe spacing that marks a boundary layer.
const BOUNDARY_DROP: f64 = 30.0;
const GRADED_LEVELS: i32 = 80;

fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

fn ln_integral_single<F: Fn(f64) -> f64>(
    ln_f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    fallback_rel: f64,
    max_intervals: usize,
) -> Result<f64, QuadError> {
    if b <= a {
        return Ok(f64::NEG_INFINITY);
    }
    let mut shift = f64::NEG_INFINITY;
    for i in 0..PROBES {
        let x = a + (b - a) * (i as f64 + 0.5) / PROBES as f64;
        let v = ln_f(x);
        if v.is_nan() {
            return Err(QuadError::NonFinite { x });
        }
        shift = shift.max(v);
    }
    for x in [a, b] {
        let v = ln_f(x);
        if v.is_nan() {
            return Err(QuadError::NonFinite { x });
        }
        shift = shift.max(v);
    }
    if shift == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if shift == f64::INFINITY {
        return Err(QuadError::NonFinite { x: a });
    }
    let g = |x: f64| {
        let v = ln_f(x);
        if v.is_nan() {
            f64::NAN
        } else {
            (v - shift).exp()
        }
    };
    let val = match integrate_with_limit(g, a, b, rel_tol, 0.0, max_intervals) {
        Ok(v) => v,
        Err(QuadError::MaxSubdivisions { estimate, error }) if error <= fallback_rel * estimate.abs() => estimate,
        Err(e) => return Err(e),
    };
    if val <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(val.ln() + shift)
}
