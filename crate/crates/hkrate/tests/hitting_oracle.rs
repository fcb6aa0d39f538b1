//! Monte Carlo ball-hitting frequencies against the closed-form law for
//! isotropic stable processes.

use hkrate::kernels::KernelModel;
use hkrate::mc_verify::estimate_hit_from_distance;
use hkrate::potential::{ModelConstants, Potential};
use hkrate::simulate::Refinement;
use hkrate::stable::ball_hitting_probability;

#[test]
fn stable_hit_frequency_matches_closed_form() {
    let model = KernelModel::parse("stable:1.5,3").unwrap();
    let pot = Potential::new(model, ModelConstants::UNIT).unwrap();
    let horizon = 2f64.powi(14);
    for (d, seed) in [(4.0, 11), (10.0, 12)] {
        let rep = estimate_hit_from_distance(&pot, 1.0, d, horizon, 10_000, seed, Refinement::default()).unwrap();
        let exact = ball_hitting_probability(1.5, 3, 1.0, d);
        // a path still unhit at the horizon sits at distance ~ horizon^(2/3)
        // and hits later with probability of order (1 / that)^(3/2)
        let late = ball_hitting_probability(1.5, 3, 1.0, horizon.powf(1.0 / 1.5));
        let slack = 3.0 * rep.ci_halfwidth;
        assert!(
            rep.estimate >= exact - late - slack && rep.estimate <= exact + slack,
            "D {d}: {} ± {} vs {exact}",
            rep.estimate,
            rep.ci_halfwidth
        );
    }
}
