use hkrate::calibration::{calibrate, CalibrateOptions};
use hkrate::kernels::KernelModel;
use hkrate::mc_verify::{verify_rate_dichotomy, RateSide};
use hkrate::potential::{monotone_transfer_constant, ModelConstants, Potential, Side};
use hkrate::scaling::{log_grid, parse_preset, RateCandidate};
use hkrate::simulate::Refinement;
use proptest::prelude::*;

const TRANSIENT: [&str; 4] = ["gaussian:3", "stable:1.5,3", "stablelike:3,1.5", "jump:power:3,powerlog:1.5,1"];

fn potential(id: &str) -> Potential {
    let m = KernelModel::parse(id).unwrap();
    Potential::new(m.clone(), ModelConstants::derived(&m).unwrap()).unwrap()
}

#[test]
fn bound_pairs_are_ordered_on_a_grid() {
    let axis = log_grid(0.01, 100.0, 10);
    for id in TRANSIENT {
        let p = potential(id);
        let walk = p.model().walk().unwrap();
        for &r in &axis {
            p.capacity_bounds(r).unwrap();
            for &k in &axis {
                p.green_envelope(r * k).unwrap();
                p.hit_ball_from_distance(r, r * (1.0 + k)).unwrap();
                let t = walk.eval(r) * (1.0 + k);
                for &m in &axis {
                    let pair = p.q_bounds(r, t * (1.0 + m)).unwrap();
                    assert!(pair.lower <= pair.upper, "{id}: {pair:?}");
                }
            }
        }
    }
}

#[test]
fn green_quadrature_lies_inside_the_envelope() {
    let opts = CalibrateOptions {
        models: vec!["gaussian:3".into(), "stable:1.5,3".into()],
        seed: 1,
        mc_replicas: 0,
        block_replicas: 0,
    };
    let table = calibrate(&opts).unwrap();
    for id in ["gaussian:3", "stable:1.5,3"] {
        let p = table.potential(id).unwrap();
        for d in log_grid(0.1, 100.0, 10) {
            let q = p.green_quadrature(d).unwrap();
            let (_, pair) = p.green_envelope(d).unwrap();
            assert!(pair.contains(q, 0.0), "{id} at d = {d}: {q} not in {pair:?}");
        }
    }
}

#[test]
fn occupation_sandwich_brackets_cauchy_simulation() {
    let m = KernelModel::parse("cauchy1d").unwrap();
    let p = potential("cauchy1d");
    // Windows stop at b = 1024: beyond that the walker grid misses short
    // visits and the estimate is biased low.
    let windows = [(4.0, 40.0), (8.0, 256.0), (16.0, 1024.0)];
    for (i, r) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let cand = RateCandidate::direct(parse_preset(&format!("const:{r}")).unwrap());
        let rep = verify_rate_dichotomy(&m, &cand, RateSide::Lower, &windows, 4000, 11 + i as u64, Refinement::default()).unwrap();
        for (k, &(a, b)) in windows.iter().enumerate() {
            let pair = p.occupation_sandwich(r, a, b).unwrap();
            let (est, ci) = (rep.trend.fractions[k], rep.trend.ci_halfwidths[k]);
            assert!(pair.contains(est, 3.0 * ci), "r = {r}, ({a}, {b}): {est} ± {ci} vs {pair:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn upper_q_bound_does_not_grow_in_time(id in prop::sample::select(TRANSIENT.to_vec()), r in 0.01f64..100.0, k in 1.0f64..1e3, m in 1.0f64..1e3) {
        let p = potential(id);
        let t = p.model().walk().unwrap().eval(r) * k;
        let q1 = p.q_bound(r, t, Side::Upper).unwrap();
        let q2 = p.q_bound(r, t * m, Side::Upper).unwrap();
        prop_assert!(q2 <= q1 * (1.0 + 1e-12), "{} at r = {}: {} then {}", id, r, q1, q2);
    }

    #[test]
    fn transfer_constant_covers_off_grid_pairs(
        id in prop::sample::select(vec!["cauchy1d", "gaussian:3", "stablelike:3,1.5", "jump:power:2,powerlog:1.5,1", "jump:power:3,powerlog:1.5,1"]),
        l1 in -2.0f64..2.0,
        span in 0.0f64..2.0,
    ) {
        let m = KernelModel::parse(id).unwrap();
        let c = monotone_transfer_constant(&m, &log_grid(1e-3, 1e3, 400)).unwrap();
        let (v, w) = (m.volume().unwrap(), m.walk().unwrap());
        let ratio = |r: f64| w.eval(r) / v.eval(r);
        let (r1, r2) = (10f64.powf(l1), 10f64.powf(l1 + span));
        prop_assert!(ratio(r2) <= c * ratio(r1) * (1.0 + 1e-6), "{}: c = {}, r1 = {}, r2 = {}", id, c, r1, r2);
    }
}
