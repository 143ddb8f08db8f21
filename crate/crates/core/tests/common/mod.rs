#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};
use wtqa_core::panel::{random_unit_split, Panel, UnitSplit};
use wtqa_core::rng::{self, Domain};

/// Outcome of the brute-force scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Empty,
    Score(f64),
    Sentinel,
    WholeLine,
}

/// Brute-force weighted quantile over the augmented support. Every
/// candidate threshold is tried in increasing order and the mass at or
/// below it is summed from scratch. Same tolerance as the library (1e-12).
pub fn brute_force_quantile(calib: &[f64], weights: &[f64], level: f64) -> Oracle {
    if level <= 1e-12 {
        return Oracle::Empty;
    }
    if level > 1.0 {
        return Oracle::WholeLine;
    }
    let mut support: Vec<f64> = calib.to_vec();
    support.sort_by(f64::total_cmp);
    support.dedup();
    for q in support {
        let mass: f64 = calib.iter().zip(weights).filter(|(s, _)| **s <= q).map(|(_, w)| w).sum();
        if mass >= level - 1e-12 {
            return Oracle::Score(q);
        }
    }
    Oracle::Sentinel
}

/// Random point on the simplex with `n` coordinates, some possibly zero.
pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { -rng.random::<f64>().max(1e-300).ln() })
        .collect();
    if w.iter().all(|&v| v == 0.0) {
        w[n - 1] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Small heteroscedastic linear panel with a random split.
pub struct RandomPanel {
    pub panel: Panel,
    pub split: UnitSplit,
}

pub fn random_panel(seed: u64) -> RandomPanel {
    let mut rng = rng::stream(seed, Domain::Test, 7, 0);
    let n_calib = rng.random_range(4..25);
    let n_test = rng.random_range(1..4);
    let n_units = n_calib + n_test;
    let burn_in = rng.random_range(6..15);
    let horizon = burn_in + rng.random_range(5..60);
    let d = rng.random_range(1..4);
    let beta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut features = Vec::with_capacity(n_units * horizon * d);
    let mut outcomes = Vec::with_capacity(n_units * horizon);
    for i in 0..n_units {
        let scale = 0.2 + (i % 5) as f64 * 0.4;
        let offset = rng.random_range(-1.0..1.0);
        for _ in 0..horizon {
            let x: Vec<f64> = (0..d).map(|_| offset + normal.sample(&mut rng)).collect();
            let y = x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + scale * normal.sample(&mut rng);
            features.extend_from_slice(&x);
            outcomes.push(y);
        }
    }
    let panel = Panel::new(n_units, horizon, d, features, outcomes, burn_in).unwrap();
    let split = random_unit_split(&panel, n_calib, n_test, seed).unwrap();
    RandomPanel { panel, split }
}
