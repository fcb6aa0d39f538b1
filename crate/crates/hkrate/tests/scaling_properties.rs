use hkrate::scaling::{
    evaluate_rate, inverse, ln_inverse, parse_preset, Monotonicity, RateCandidate, ScalingFunction,
};
use proptest::prelude::*;

/// Preset ids with random parameters; some combinations are rejected by
/// the constructor and skipped.
fn preset_ids() -> impl Strategy<Value = String> {
    prop_oneof![
        (-3.0f64..3.0, 0.1f64..10.0).prop_map(|(p, c)| format!("power:{p},{c}")),
        (0.0f64..3.0, 0.0f64..3.0).prop_map(|(p, q)| format!("powerlog:{p},{q}")),
        (0.0f64..3.0, 0.0f64..3.0).prop_map(|(p, q)| format!("powerlog:-{p},-{q}")),
        (0.1f64..5.0, 0.0f64..2.0, -1.0f64..2.0, -1.0f64..2.0).prop_map(|(c, p, q, r)| format!("plll:{c},{p},{q},{r}")),
        (0.1f64..2.0, 0.05f64..1.0).prop_map(|(c, g)| format!("exp-decay:{c},{g}")),
        (-0.9f64..2.0).prop_map(|e| format!("iterated-log-g:{e}")),
        (-0.9f64..2.0).prop_map(|e| format!("loglog-g:{e}")),
        (0.1f64..5.0).prop_map(|c| format!("lil:{c}")),
        (0.1f64..5.0).prop_map(|c| format!("const:{c}")),
    ]
}

fn walk_ids() -> impl Strategy<Value = String> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|p| format!("power:{p}")),
        (0.2f64..3.0, 0.0f64..2.0).prop_map(|(p, q)| format!("powerlog:{p},{q}")),
        (0.2f64..3.0, 0.0f64..2.0).prop_map(|(p, q)| format!("plll:1,{p},{q},0")),
    ]
}

fn envelope_holds_on_every_pair(f: &ScalingFunction) -> Result<(), String> {
    let grid = f.validation_grid();
    assert_eq!(grid.len(), 64);
    let ln_vals: Vec<f64> = grid.iter().map(|x| f.ln_eval(x.ln())).collect();
    let e = f.envelope();
    for i in 0..grid.len() {
        for j in i + 1..grid.len() {
            let dx = (grid[j] / grid[i]).ln();
            let dl = ln_vals[j] - ln_vals[i];
            let tol = 1e-9 * (1.0 + ln_vals[i].abs().max(ln_vals[j].abs()));
            let lo = e.c_lo.ln() + e.d_lo * dx;
            let hi = e.c_hi.ln() + e.d_hi * dx;
            if dl < lo - tol || dl > hi + tol {
                return Err(format!("{} at ({}, {}): {dl} not in [{lo}, {hi}]", f.id(), grid[i], grid[j]));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_presets_satisfy_their_envelope(id in preset_ids()) {
        let f = parse_preset(&id);
        prop_assume!(f.is_ok());
        let f = f.unwrap();
        prop_assert!(f.ln_eval(f.domain_floor().ln()).is_finite());
        if let Err(msg) = envelope_holds_on_every_pair(&f) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn inverse_round_trips(id in walk_ids(), us in prop::collection::vec(0.0f64..1.0, 100)) {
        let f = parse_preset(&id).unwrap();
        prop_assert_eq!(f.monotonicity(), Monotonicity::Increasing);
        let (lo, hi) = (16.0f64, 1e6f64);
        for u in us {
            let x = lo * (hi / lo).powf(u);
            let y = f.eval(x);
            let t = inverse(&f, y, (lo, hi)).unwrap();
            prop_assert!((f.eval(t) - y).abs() <= 1e-12 * y, "{} at y = {}: f(t) = {}", id, y, f.eval(t));
        }
    }

    #[test]
    fn unit_g_subcritical_rate_is_the_walk_inverse(id in walk_ids(), t in 1.5f64..1e12) {
        let walk = parse_preset(&id).unwrap();
        let cand = RateCandidate::subcritical(walk.clone(), parse_preset("const:1").unwrap());
        let got = evaluate_rate(&cand, t).unwrap();
        let want = ln_inverse(&walk, t.ln()).unwrap().exp();
        prop_assert!((got - want).abs() <= 1e-12 * want, "{} vs {}", got, want);
    }
}
