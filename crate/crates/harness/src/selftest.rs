//! Quick invariant suite behind `wtqa selftest`.

use rand::Rng;
use wtqa_core::conformal::{uniform_weights, weighted_quantile, AugmentedScores, Provenance};
use wtqa_core::engine::{default_methods, fit_burn_in_predictor, run_online, SpatialScaling};
use wtqa_core::feedback::mcar_schedule;
use wtqa_core::methods::MethodKind;
use wtqa_core::panel::stratified_unit_split;
use wtqa_core::predictor::RidgeMode;
use wtqa_core::rng::{self, Domain};
use wtqa_core::spatial::gibbs_map;
use wtqa_core::synth::{make_structure, simulate_panel, Scenario, ScenarioSpec, MAJORITY_TAG};
use wtqa_core::temporal::{audit_observed_bound, audit_telescoping};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Threshold by summing the mass below every candidate value from scratch.
fn scan(calib: &[f64], weights: &[f64], level: f64) -> f64 {
    if level <= 1e-12 {
        return f64::NEG_INFINITY;
    }
    if level > 1.0 {
        return f64::INFINITY;
    }
    let mut support = calib.to_vec();
    support.sort_by(f64::total_cmp);
    support
        .into_iter()
        .find(|&q| calib.iter().zip(weights).filter(|(s, _)| **s <= q).map(|(_, w)| w).sum::<f64>() >= level - 1e-12)
        .unwrap_or(f64::INFINITY)
}

fn quantile_oracle() -> Check {
    let mut rng = rng::stream(1, Domain::Probe, 100, 0);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let calib: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.5).collect();
        let mut w: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let level = rng.random_range(-0.2..1.2);
        let got = weighted_quantile(&AugmentedScores::new(calib.clone()).unwrap(), &w, level).unwrap();
        if got.value != scan(&calib, &w, level) {
            bad += 1;
        }
    }
    Check { name: "weighted quantile vs brute-force scan", passed: bad == 0, detail: format!("{bad}/1000 mismatches") }
}

fn uniform_reduction() -> Check {
    let mut rng = rng::stream(2, Domain::Probe, 100, 0);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=30);
        let mut calib: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let alpha: f64 = rng.random_range(0.01..0.99);
        let got = weighted_quantile(&AugmentedScores::new(calib.clone()).unwrap(), &uniform_weights(n), 1.0 - alpha).unwrap();
        calib.sort_by(f64::total_cmp);
        let k = ((n + 1) as f64 * (1.0 - alpha)).ceil() as usize;
        let ok = if k > n { got.provenance == Provenance::Sentinel } else { got.value == calib[k - 1] };
        bad += usize::from(!ok);
    }
    Check { name: "uniform weights give the conformal order statistic", passed: bad == 0, detail: format!("{bad}/1000 mismatches") }
}

fn gibbs_lipschitz() -> Check {
    let mut rng = rng::stream(3, Domain::Probe, 100, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let h = rng.random_range(0.05..3.0);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let lhs: f64 = gibbs_map(&a, h).iter().zip(gibbs_map(&b, h)).map(|(x, y)| (x - y).abs()).sum();
        let rhs: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / (h * h);
        worst = worst.max(lhs / rhs);
    }
    Check { name: "Gibbs map Lipschitz bound", passed: worst <= 1.0, detail: format!("max ratio {worst:.4}") }
}

fn small_spec() -> ScenarioSpec {
    ScenarioSpec {
        n_units: 80,
        horizon: 45,
        feature_dim: 10,
        burn_in: 15,
        ..ScenarioSpec::new(Scenario::Medium)
    }
}

fn engine_checks() -> Vec<Check> {
    let spec = small_spec();
    let templates = make_structure(5, &spec).unwrap();
    let mut rng = rng::stream(4, Domain::Probe, 100, 0);
    let (mut telescoping, mut range, mut bound, mut equal, mut finite) = (0.0f64, true, true, true, true);
    for rep in 0..20u64 {
        let (panel, _) = simulate_panel(&templates, &spec, rep).unwrap();
        let split = stratified_unit_split(&panel, MAJORITY_TAG, 4, rep).unwrap();
        let predictor = fit_burn_in_predictor(&panel, &split, 10.0, RidgeMode::SyntheticFactor).unwrap();
        let gamma = rng.random_range(0.005..0.2);
        let methods = default_methods(&MethodKind::ALL, 0.1, 0.6, gamma);
        let p = rng.random_range(0.0..1.0);
        let fb = mcar_schedule(p, panel.conformal_len(), rep).unwrap();
        let traces = run_online(&panel, &split, &predictor, &fb, &methods, SpatialScaling::BurnIn).unwrap();
        for trace in traces.iter().filter(|t| matches!(t.config.kind, MethodKind::TqaOnly | MethodKind::Wtqa)) {
            for target in &trace.targets {
                let losses = target.loss_trace(&fb);
                let closing = target.closing_alpha.unwrap();
                telescoping = telescoping.max(audit_telescoping(&losses, closing, 0.1, gamma).abs());
                range &= target.records.iter().all(|r| r.alpha_t >= -gamma - 1e-12 && r.alpha_t <= 1.0 + gamma + 1e-12);
                if losses.iter().any(|(r, _)| *r) {
                    bound &= audit_observed_bound(&losses, 0.1, gamma).unwrap().holds;
                }
            }
        }
        finite &= traces.iter().flat_map(|t| &t.targets).flat_map(|t| &t.records).all(|r| r.width().is_finite());
        let none = mcar_schedule(0.0, panel.conformal_len(), rep).unwrap();
        let traces = run_online(&panel, &split, &predictor, &none, &methods, SpatialScaling::BurnIn).unwrap();
        let get = |k: MethodKind| traces.iter().find(|t| t.config.kind == k).map(|t| t.targets.clone()).unwrap();
        let records = |k: MethodKind| get(k).into_iter().map(|t| t.records).collect::<Vec<_>>();
        equal &= records(MethodKind::Wtqa) == records(MethodKind::WOnly);
        equal &= records(MethodKind::TqaOnly) == records(MethodKind::SplitCp);
    }
    vec![
        Check { name: "telescoping identity", passed: telescoping <= 1e-9, detail: format!("max residual {telescoping:.2e}") },
        Check { name: "adaptive level stays in [-gamma, 1 + gamma]", passed: range, detail: String::new() },
        Check { name: "observed-feedback coverage bound", passed: bound, detail: String::new() },
        Check { name: "no feedback: W-TQA = W-only, TQA-only = Split CP", passed: equal, detail: String::new() },
        Check { name: "deployed widths finite", passed: finite, detail: String::new() },
    ]
}

pub fn run_all() -> Vec<Check> {
    let mut checks = vec![quantile_oracle(), uniform_reduction(), gibbs_lipschitz()];
    checks.extend(engine_checks());
    checks
}
