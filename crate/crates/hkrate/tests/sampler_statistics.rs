//! Statistical checks of the increment samplers against closed forms.

use std::f64::consts::PI;

use hkrate::kernels::KernelModel;
use hkrate::mc_verify::{ks_critical_1pct, ks_statistic};
use hkrate::quadrature::integrate;
use hkrate::simulate::{
    positive_stable, replica_rng, sample_path, window_max_distance, window_min_distance, IncrementSampler, Scheme,
};
use rand::Rng;

fn draws(sampler: IncrementSampler, dt: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = replica_rng(seed, 0);
    let mut out = [0.0];
    (0..n)
        .map(|_| {
            sampler.sample(&mut rng, dt, &mut out);
            out[0]
        })
        .collect()
}

#[test]
fn gaussian_increment_variance_is_two_dt() {
    let n = 100_000;
    let x = draws(IncrementSampler::Gaussian { dim: 1 }, 1.0, n, 1);
    let var = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    // sd of the sample variance is sqrt(2 σ⁴ / n) with σ² = 2
    let sd = (8.0 / n as f64).sqrt();
    assert!((var - 2.0).abs() < 3.0 * sd, "variance {var}");
}

#[test]
fn cauchy_median_absolute_increment_is_dt() {
    let n = 100_000;
    let mut x: Vec<f64> = draws(IncrementSampler::Cauchy, 1.0, n, 2).iter().map(|v| v.abs()).collect();
    x.sort_by(f64::total_cmp);
    let median = x[n / 2];
    // |X| has density 2/(π(1+x²)), so 1/π at the median
    let sd = 1.0 / (2.0 * (1.0 / PI) * (n as f64).sqrt());
    assert!((median - 1.0).abs() < 3.0 * sd, "median {median}");
}

#[test]
fn stable_self_similarity() {
    let alpha = 1.5;
    let s = IncrementSampler::Stable1d { alpha };
    let n = 10_000;
    let wide = draws(s, 2.0, n, 3);
    let scaled: Vec<f64> = draws(s, 1.0, n, 4).iter().map(|v| v * 2f64.powf(1.0 / alpha)).collect();
    let d = ks_statistic(&wide, &scaled);
    assert!(d < ks_critical_1pct(n, n), "KS {d}");
}

#[test]
fn positive_stable_laplace_transform() {
    let mut rng = replica_rng(5, 0);
    let n = 100_000;
    for &a in &[0.5, 0.75] {
        for &lambda in &[0.5, 1.0, 3.0] {
            let vals: Vec<f64> = (0..n).map(|_| (-lambda * positive_stable(&mut rng, a)).exp()).collect();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let want = (-(lambda as f64).powf(a)).exp();
            assert!((mean - want).abs() < 4.0 * (var / n as f64).sqrt(), "a {a} λ {lambda}: {mean} vs {want}");
        }
    }
}

#[test]
fn stationary_increments() {
    let m = KernelModel::parse("stable:1.5,1").unwrap();
    let n = 10_000;
    let (mut early, mut late) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for seed in 0..n as u64 {
        let p = sample_path(&m, 5.0, Scheme::UniformGrid { dt: 1.0 }, seed).unwrap();
        early.push(p.positions[2][0] - p.positions[1][0]);
        late.push(p.positions[5][0] - p.positions[4][0]);
    }
    let d = ks_statistic(&early, &late);
    assert!(d < ks_critical_1pct(n, n), "KS {d}");
}

#[test]
fn subordinated_increments_are_isotropic() {
    let s = IncrementSampler::Subordinated { alpha: 1.5, dim: 3 };
    let mut rng = replica_rng(6, 0);
    let n = 10_000;
    let mut counts = [0usize; 8];
    let mut x = [0.0; 3];
    for _ in 0..n {
        s.sample(&mut rng, 1.0, &mut x);
        let k = (x[0] > 0.0) as usize | ((x[1] > 0.0) as usize) << 1 | ((x[2] > 0.0) as usize) << 2;
        counts[k] += 1;
    }
    let e = n as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 1% critical value of chi-square with 7 degrees of freedom
    assert!(chi2 < 18.475, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn alpha_two_subordination_is_gaussian() {
    let n = 10_000;
    let sub = draws(IncrementSampler::Subordinated { alpha: 2.0, dim: 1 }, 1.5, n, 7);
    let gauss = draws(IncrementSampler::Gaussian { dim: 1 }, 1.5, n, 8);
    let d = ks_statistic(&sub, &gauss);
    assert!(d < ks_critical_1pct(n, n), "KS {d}");
}

/// `E sup_{[0,1]} |W|` for standard Brownian motion from the series for
/// `P(sup |W| < x)`.
fn expected_abs_max() -> f64 {
    let below = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        let mut s = 0.0;
        for k in 0..200 {
            let m = (2 * k + 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            s += sign / m * (-(m * m) * PI * PI / (8.0 * x * x)).exp();
        }
        4.0 / PI * s
    };
    integrate(|x| 1.0 - below(x), 0.0, 12.0, 1e-10, 1e-12).unwrap()
}

#[test]
fn brownian_window_max_matches_reflection_oracle() {
    let oracle = 2f64.sqrt() * expected_abs_max();
    let m = KernelModel::parse("gaussian:1").unwrap();
    let n = 10_000;
    let sum: f64 = (0..n as u64)
        .map(|seed| {
            let p = sample_path(&m, 1.0, Scheme::UniformGrid { dt: 1e-3 }, seed).unwrap();
            window_max_distance(&p, &[0.0], 0.0, 1.0).unwrap()
        })
        .sum();
    let mean = sum / n as f64;
    assert!((mean / oracle - 1.0).abs() < 0.05, "{mean} vs {oracle}");
    // the grid maximum underestimates the path supremum
    assert!(mean < oracle);
}

#[test]
fn finer_grids_do_not_raise_window_minima() {
    let m = KernelModel::parse("cauchy1d").unwrap();
    let n = 10_000;
    let stats = |dt: f64, offset: u64| {
        let v: Vec<f64> = (0..n as u64)
            .map(|i| {
                let p = sample_path(&m, 2.0, Scheme::UniformGrid { dt }, offset + i).unwrap();
                window_min_distance(&p, &[0.0], 1.0, 2.0).unwrap()
            })
            .collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var / n as f64)
    };
    let (coarse, vc) = stats(0.25, 0);
    let (fine, vf) = stats(0.0625, 1 << 32);
    assert!(fine <= coarse + 3.0 * (vc + vf).sqrt(), "fine {fine} coarse {coarse}");
}

#[test]
fn replica_streams_differ() {
    let a: f64 = replica_rng(1, 0).random();
    let b: f64 = replica_rng(1, 1).random();
    assert_ne!(a, b);
}
