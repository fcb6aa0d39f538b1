//! Isotropic α-stable densities in dimensions 1 to 3 for the characteristic
//! function `exp(-t |ξ|^α)`.
//!
//! The unit-time radial density `p_1(r)` is computed piecewise: a power
//! series near the origin (valid for `α >= 1`), the Hankel/Fourier integral
//! truncated where `exp(-k^α) < e^-40`, and the large-`r` asymptotic series
//! for `r >= 20`.

use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

use crate::quadrature::integrate;

const SERIES_R: f64 = 0.5;
const ASYMPTOTIC_R: f64 = 20.0;

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// Bessel `J0` by the classical rational/asymptotic approximation
/// (absolute error about 1e-8).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        let y = x * x;
        let a = 57_568_490_574.0
            + y * (-13_362_590_354.0
                + y * (651_619_640.7 + y * (-11_214_424.18 + y * (77_392.330_17 + y * (-184.905_245_6)))));
        let b = 57_568_490_411.0
            + y * (1_029_532_985.0 + y * (9_494_680.718 + y * (59_272.648_53 + y * (267.853_271_2 + y))));
        a / b
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785_398_164;
        let a = 1.0
            + y * (-0.109_862_862_7e-2 + y * (0.273_451_040_7e-4 + y * (-0.207_337_063_9e-5 + y * 0.209_388_721_1e-6)));
        let b = -0.156_249_999_5e-1
            + y * (0.143_048_876_5e-3 + y * (-0.691_114_765_1e-5 + y * (0.762_109_516_1e-6 - y * 0.934_935_152e-7)));
        (0.636_619_772 / ax).sqrt() * (xx.cos() * a - z * xx.sin() * b)
    }
}

fn series_density(alpha: f64, d: usize, r: f64) -> f64 {
    let h = d as f64 / 2.0;
    let pre = (2.0 * PI).powf(-h) * 2f64.powf(1.0 - h) / alpha;
    let lr = (r / 2.0).ln();
    let mut sum = 0.0;
    for m in 0..400 {
        let mf = m as f64;
        let ln_term = 2.0 * mf * lr + ln_gamma((2.0 * mf + d as f64) / alpha) - ln_gamma(mf + 1.0) - ln_gamma(mf + h);
        let term = if m % 2 == 0 { ln_term.exp() } else { -ln_term.exp() };
        sum += term;
        if m > 2 && term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    pre * sum
}

/// Coefficient `c_n` with `p_1(r) ~ Σ c_n r^{-d-nα}`.
fn asymptotic_coefficient(alpha: f64, d: usize, n: usize) -> f64 {
    let nf = n as f64;
    let h = d as f64 / 2.0;
    let s = (nf * PI * alpha / 2.0).sin();
    // sin(kπ) evaluates to about 1e-16, not 0
    if s.abs() < 1e-12 {
        return 0.0;
    }
    let ln_mag = ln_gamma(nf * alpha / 2.0 + 1.0) + ln_gamma((nf * alpha + d as f64) / 2.0) - ln_gamma(nf + 1.0)
        + nf * alpha * 2f64.ln()
        - (h + 1.0) * PI.ln();
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    sign * s * ln_mag.exp()
}

/// Sums `Σ c_n r^{-nα} w_n` until the terms stop shrinking.
fn asymptotic_sum(alpha: f64, d: usize, r: f64, weight: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for n in 1..=80 {
        let term = asymptotic_coefficient(alpha, d, n) * r.powf(-(n as f64) * alpha) * weight(n);
        if term == 0.0 {
            continue;
        }
        if term.abs() > prev && n > 2 {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn fourier_density(alpha: f64, d: usize, r: f64) -> f64 {
    let kmax = 40f64.powf(1.0 / alpha);
    let damp = |k: f64| (-k.powf(alpha)).exp();
    match d {
        1 => integrate(|k| (k * r).cos() * damp(k), 0.0, kmax, 1e-11, 1e-17).unwrap_or(f64::NAN) / PI,
        2 => integrate(|k| k * bessel_j0(k * r) * damp(k), 0.0, kmax, 1e-11, 1e-17).unwrap_or(f64::NAN) / (2.0 * PI),
        _ => {
            integrate(|k| k * (k * r).sin() * damp(k), 0.0, kmax, 1e-11, 1e-17).unwrap_or(f64::NAN)
                / (2.0 * PI * PI * r)
        }
    }
}

/// Radial density at unit time, `p_1(r)`, for `0 < alpha < 2`, `d` in 1..=3.
pub fn unit_density(alpha: f64, d: usize, r: f64) -> f64 {
    let r = r.abs();
    if r == 0.0 {
        // p_1(0) = Γ(d/α) / (α 2^{d-1} π^{d/2} Γ(d/2))
        let h = d as f64 / 2.0;
        gamma(d as f64 / alpha) / (alpha * 2f64.powf(d as f64 - 1.0) * PI.powf(h) * gamma(h))
    } else if r >= ASYMPTOTIC_R {
        asymptotic_sum(alpha, d, r, |_| 1.0) / r.powi(d as i32)
    } else if r <= SERIES_R && alpha >= 1.0 {
        series_density(alpha, d, r)
    } else {
        fourier_density(alpha, d, r)
    }
}

/// Density at time `t` and distance `r`.
pub fn density(alpha: f64, d: usize, t: f64, r: f64) -> f64 {
    let s = t.powf(1.0 / alpha);
    unit_density(alpha, d, r / s) / s.powi(d as i32)
}

/// `P(|X_1| >= u)` at unit time.
pub fn unit_tail_mass(alpha: f64, d: usize, u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    let area = sphere_area(d);
    let radial = |r: f64| area * r.powi(d as i32 - 1) * unit_density(alpha, d, r);
    let far = |x: f64| area * asymptotic_sum(alpha, d, x, |n| 1.0 / (n as f64 * alpha));
    if u >= ASYMPTOTIC_R {
        return far(u);
    }
    if u >= 1.0 {
        let mid = integrate(radial, u, ASYMPTOTIC_R, 1e-10, 1e-15).unwrap_or(f64::NAN);
        return far(ASYMPTOTIC_R) + mid;
    }
    let inner = integrate(radial, 0.0, u, 1e-10, 1e-15).unwrap_or(f64::NAN);
    (1.0 - inner).clamp(0.0, 1.0)
}

/// Probability that the process started at distance `dist > r` from the
/// centre ever enters the closed ball of radius `r`, for `d > alpha`:
/// the regularised incomplete beta `I_{r²/dist²}((d-α)/2, α/2)`.
pub fn ball_hitting_probability(alpha: f64, d: usize, r: f64, dist: f64) -> f64 {
    if dist <= r {
        return 1.0;
    }
    beta_reg((d as f64 - alpha) / 2.0, alpha / 2.0, (r / dist).powi(2))
}

/// `P(|X_t| >= r)`.
pub fn tail_mass(alpha: f64, d: usize, t: f64, r: f64) -> f64 {
    unit_tail_mass(alpha, d, r / t.powf(1.0 / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_case_matches_closed_form() {
        for &r in &[0.0, 0.3, 0.5, 1.0, 3.0, 19.0, 25.0, 100.0] {
            let want = 1.0 / (PI * (1.0 + r * r));
            let got = unit_density(1.0, 1, r);
            assert!((got / want - 1.0).abs() < 1e-7, "r = {r}: {got} vs {want}");
        }
        for &u in &[0.5_f64, 1.0, 5.0, 30.0] {
            let want = 1.0 - 2.0 / PI * u.atan();
            assert!((unit_tail_mass(1.0, 1, u) / want - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn three_d_cauchy_closed_form() {
        // α = 1, d = 3: p_1(r) = 1 / (π² (1 + r²)²)
        for &r in &[0.2_f64, 0.7, 2.0, 10.0, 40.0] {
            let want = 1.0 / (PI * PI * (1.0 + r * r).powi(2));
            assert!((unit_density(1.0, 3, r) / want - 1.0).abs() < 1e-7, "r = {r}");
        }
    }

    #[test]
    fn two_d_cauchy_closed_form() {
        // α = 1, d = 2: p_1(r) = 1 / (2π (1 + r²)^{3/2})
        for &r in &[0.2_f64, 1.5, 5.0, 30.0] {
            let want = 1.0 / (2.0 * PI * (1.0 + r * r).powf(1.5));
            assert!((unit_density(1.0, 2, r) / want - 1.0).abs() < 1e-5, "r = {r}");
        }
    }

    #[test]
    fn pieces_agree_at_switch_points() {
        for &a in &[1.2, 1.5, 1.8] {
            for d in 1..=3 {
                for &r in &[SERIES_R, ASYMPTOTIC_R] {
                    let f = fourier_density(a, d, r);
                    let other = if r == SERIES_R {
                        series_density(a, d, r)
                    } else {
                        asymptotic_sum(a, d, r, |_| 1.0) / r.powi(d as i32)
                    };
                    assert!((f / other - 1.0).abs() < 1e-5, "α {a} d {d} r {r}: {f} vs {other}");
                }
            }
        }
    }

    #[test]
    fn ball_hitting_special_cases() {
        // Brownian motion in 3d: r / dist
        for &x in &[1.5, 4.0, 30.0] {
            assert!((ball_hitting_probability(2.0 - 1e-12, 3, 1.0, x) - 1.0 / x).abs() < 1e-6);
        }
        // leading order (r/D)^{d-α} / ((d-α)/2 · B((d-α)/2, α/2))
        let p = ball_hitting_probability(1.2, 3, 1.0, 1e4);
        let lead = 1e-4_f64.powf(1.8) / (0.9 * statrs::function::beta::beta(0.9, 0.6));
        assert!((p / lead - 1.0).abs() < 1e-3);
        assert_eq!(ball_hitting_probability(1.5, 3, 1.0, 0.5), 1.0);
    }

    #[test]
    fn mass_is_one() {
        // near-field quadrature plus the integrated far-field series
        for &a in &[1.5, 1.8] {
            for d in 1..=3 {
                let radial = |r: f64| sphere_area(d) * r.powi(d as i32 - 1) * unit_density(a, d, r);
                let near = integrate(radial, 0.0, ASYMPTOTIC_R, 1e-10, 0.0).unwrap();
                let total = near + unit_tail_mass(a, d, ASYMPTOTIC_R);
                assert!((total - 1.0).abs() < 1e-6, "α {a} d {d}: {total}");
            }
        }
    }
}
