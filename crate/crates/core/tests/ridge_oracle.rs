use rand::Rng;
use wtqa_core::predictor::{fit_pinball, fit_ridge, PinballConfig, RidgeMode, Row};
use wtqa_core::rng::{self, Domain};

/// Gauss-Jordan with partial pivoting on a small dense system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

fn population_sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn five_by_three_system_matches_normal_equations() {
    let mut rng = rng::stream(41, Domain::Test, 5, 0);
    for _ in 0..20 {
        let x: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let rows: Vec<Row> = x.iter().zip(&y).map(|(x, &y)| Row { x, context: None, y }).collect();
        let fit = fit_ridge(&rows, 10.0, RidgeMode::RealData).unwrap();

        // centered, sd-scaled design; intercept is the mean response
        let cols: Vec<Vec<f64>> = (0..3).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / 5.0).collect();
        let sds: Vec<f64> = cols.iter().map(|c| population_sd(c)).collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..3).map(|j| (r[j] - means[j]) / sds[j]).collect()).collect();
        let ybar = y.iter().sum::<f64>() / 5.0;
        let gram: Vec<Vec<f64>> = (0..3)
            .map(|a| (0..3).map(|b| z.iter().map(|r| r[a] * r[b]).sum::<f64>() + if a == b { 10.0 } else { 0.0 }).collect())
            .collect();
        let rhs: Vec<f64> = (0..3).map(|a| z.iter().zip(&y).map(|(r, yy)| r[a] * (yy - ybar)).sum()).collect();
        let beta = solve(gram, rhs);
        for (got, want) in fit.coefficients().iter().zip(&beta) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        let probe = [0.3, -1.1, 0.7];
        let manual = ybar + (0..3).map(|j| (probe[j] - means[j]) / sds[j] * beta[j]).sum::<f64>();
        assert!((fit.predict(&probe, None).unwrap() - manual).abs() < 1e-8);
    }
}

#[test]
fn factor_mode_matches_normal_equations_on_the_interaction_design() {
    let mut rng = rng::stream(42, Domain::Test, 5, 0);
    let n = 12;
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let f: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let rows: Vec<Row> = (0..n).map(|i| Row { x: &x[i], context: Some(&f[i]), y: y[i] }).collect();
    let fit = fit_ridge(&rows, 10.0, RidgeMode::SyntheticFactor).unwrap();

    // scaled without centering; design [z, z f1, z f2, z f3]
    let sx: Vec<f64> = (0..2).map(|j| population_sd(&x.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
    let sf: Vec<f64> = (0..3).map(|k| population_sd(&f.iter().map(|r| r[k]).collect::<Vec<_>>())).collect();
    let design: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let z: Vec<f64> = (0..2).map(|j| x[i][j] / sx[j]).collect();
            let mut row = z.clone();
            for k in 0..3 {
                row.extend(z.iter().map(|v| v * f[i][k] / sf[k]));
            }
            row
        })
        .collect();
    let p = design[0].len();
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| design.iter().map(|r| r[a] * r[b]).sum::<f64>() + if a == b { 10.0 } else { 0.0 }).collect())
        .collect();
    let rhs: Vec<f64> = (0..p).map(|a| design.iter().zip(&y).map(|(r, yy)| r[a] * yy).sum()).collect();
    let beta = solve(gram, rhs);
    for (got, want) in fit.coefficients().iter().zip(&beta) {
        assert!((got - want).abs() < 1e-8);
    }
    let manual: f64 = design[0].iter().zip(&beta).map(|(a, b)| a * b).sum();
    assert!((fit.predict(&x[0], Some(&f[0])).unwrap() - manual).abs() < 1e-8);
}

#[test]
fn feature_free_tails_of_symmetric_unit_residuals() {
    let targets: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let cfg = PinballConfig::default();
    let lo = fit_pinball(&[], 0, &targets, 0.05, cfg).unwrap();
    let hi = fit_pinball(&[], 0, &targets, 0.95, cfg).unwrap();
    assert!((lo.predict(&[]) + 1.0).abs() <= 0.05, "{}", lo.predict(&[]));
    assert!((hi.predict(&[]) - 1.0).abs() <= 0.05, "{}", hi.predict(&[]));
}
