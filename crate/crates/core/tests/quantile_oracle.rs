mod common;

use common::{brute_force_quantile, random_simplex, Oracle};
use proptest::prelude::*;
use rand::Rng;
use wtqa_core::conformal::{calibrate, uniform_weights, weighted_quantile, AugmentedScores, Provenance};
use wtqa_core::rng::{self, Domain};

fn matches(provenance: Provenance, value: f64, oracle: Oracle) -> bool {
    match oracle {
        Oracle::Empty => provenance == Provenance::EmptySet && value == f64::NEG_INFINITY,
        Oracle::Score(q) => provenance == Provenance::Finite && value == q,
        Oracle::Sentinel => provenance == Provenance::Sentinel && value == f64::INFINITY,
        Oracle::WholeLine => provenance == Provenance::FullLine && value == f64::INFINITY,
    }
}

fn random_scores(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // integer-valued scores half of the time so ties are common
    if rng.random_bool(0.5) {
        (0..n).map(|_| rng.random_range(0..6) as f64).collect()
    } else {
        (0..n).map(|_| rng.random_range(0.0..10.0)).collect()
    }
}

#[test]
fn thousand_random_instances_match_the_scan() {
    let mut rng = rng::stream(11, Domain::Test, 1, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let calib = random_scores(&mut rng, n);
        let weights = random_simplex(&mut rng, n + 1);
        let level = rng.random_range(-0.2..1.2);
        let scores = AugmentedScores::new(calib.clone()).unwrap();
        let got = weighted_quantile(&scores, &weights, level).unwrap();
        let want = brute_force_quantile(&calib, &weights, level);
        assert!(matches(got.provenance, got.value, want), "{calib:?} {weights:?} {level}: {got:?} vs {want:?}");
    }
}

#[test]
fn uniform_weights_pick_the_order_statistic() {
    let mut rng = rng::stream(12, Domain::Test, 1, 0);
    for _ in 0..1000 {
        let n = rng.random_range(1..=40);
        let calib = random_scores(&mut rng, n);
        let alpha: f64 = rng.random_range(0.01..0.99);
        let k = ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize;
        let scores = AugmentedScores::new(calib.clone()).unwrap();
        let got = weighted_quantile(&scores, &uniform_weights(n), 1.0 - alpha).unwrap();
        if k > n {
            assert_eq!(got.provenance, Provenance::Sentinel);
        } else {
            let mut sorted = calib.clone();
            sorted.sort_by(f64::total_cmp);
            assert_eq!(got.value, sorted[k - 1], "n={n} alpha={alpha}");
        }
    }
}

proptest! {
    #[test]
    fn threshold_is_monotone_in_level(
        calib in prop::collection::vec(0.0f64..5.0, 1..15),
        a in -0.3f64..1.3,
        b in -0.3f64..1.3,
    ) {
        let n = calib.len();
        let scores = AugmentedScores::new(calib).unwrap();
        let w = uniform_weights(n);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let q_lo = weighted_quantile(&scores, &w, lo).unwrap().value;
        let q_hi = weighted_quantile(&scores, &w, hi).unwrap().value;
        prop_assert!(q_lo <= q_hi);
    }

    #[test]
    fn deployment_is_always_finite(
        calib in prop::collection::vec(0.0f64..5.0, 1..15),
        alpha_t in -0.5f64..1.5,
        seed in 0u64..1000,
    ) {
        let n = calib.len();
        let scores = AugmentedScores::new(calib).unwrap();
        let mut rng = rng::stream(seed, Domain::Test, 2, 0);
        let w = random_simplex(&mut rng, n + 1);
        let (raw, deployed) = calibrate(&scores, &w, alpha_t).unwrap();
        prop_assert!(deployed.half_width.is_finite());
        prop_assert!(deployed.half_width <= scores.max_calib());
        prop_assert!((0.01..=0.99).contains(&deployed.deployed_level));
        // a finite raw threshold inside the projection range passes through
        if raw.provenance == Provenance::Finite && (0.01..=0.99).contains(&alpha_t) {
            prop_assert_eq!(deployed.half_width, raw.value);
        }
    }
}
