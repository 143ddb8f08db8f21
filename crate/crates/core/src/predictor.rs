//! Fixed burn-in point predictors: standardized ridge regression and linear
//! pinball (quantile) regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeMode {
    /// Linear conditional-factor form `x'w + sum_j f_j x'W_j` on inputs scaled
    /// (not centered) by their training sd; no intercept.
    SyntheticFactor,
    /// Centered and scaled features with an unpenalized intercept.
    RealData,
}

/// One training row: features, optional shared context (factor values), response.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub x: &'a [f64],
    pub context: Option<&'a [f64]>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    mode: RidgeMode,
    x_means: Vec<f64>,
    x_scales: Vec<f64>,
    context_scales: Vec<f64>,
    /// `[w_alpha | W_beta column 0 | ... ]` in synthetic mode, `w` otherwise.
    coefficients: Vec<f64>,
    intercept: f64,
    ridge_lambda: f64,
}

fn column_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / n as f64).sqrt();
    if sd > 0.0 && sd.is_finite() {
        sd
    } else {
        1.0
    }
}

impl Predictor {
    pub fn mode(&self) -> RidgeMode {
        self.mode
    }

    pub fn feature_dim(&self) -> usize {
        self.x_scales.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    /// Identity-scaled synthetic predictor with given coefficients (testing and tooling).
    pub fn from_parts(
        mode: RidgeMode,
        x_means: Vec<f64>,
        x_scales: Vec<f64>,
        context_scales: Vec<f64>,
        coefficients: Vec<f64>,
        intercept: f64,
    ) -> Result<Self> {
        let d = x_scales.len();
        let expected = match mode {
            RidgeMode::SyntheticFactor => d * (1 + context_scales.len()),
            RidgeMode::RealData => d,
        };
        if coefficients.len() != expected || x_means.len() != d {
            return Err(Error::Dimension { expected, got: coefficients.len() });
        }
        if x_scales.iter().chain(&context_scales).any(|s| !(*s > 0.0)) {
            return Err(invalid("scales must be positive"));
        }
        Ok(Self {
            mode,
            x_means,
            x_scales,
            context_scales,
            coefficients,
            intercept,
            ridge_lambda: 0.0,
        })
    }

    fn design_width(&self) -> usize {
        self.coefficients.len()
    }

    /// Write the standardized design row for `(x, context)` into `out`.
    fn design_row(&self, x: &[f64], context: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let d = self.x_scales.len();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        for j in 0..d {
            out[j] = (x[j] - self.x_means[j]) / self.x_scales[j];
        }
        if self.mode == RidgeMode::SyntheticFactor {
            let f = context.ok_or_else(|| invalid("synthetic-factor predictor needs the factor context"))?;
            if f.len() != self.context_scales.len() {
                return Err(Error::Dimension { expected: self.context_scales.len(), got: f.len() });
            }
            for (k, (fk, sk)) in f.iter().zip(&self.context_scales).enumerate() {
                let fs = fk / sk;
                let block = (k + 1) * d;
                for j in 0..d {
                    out[block + j] = out[j] * fs;
                }
            }
        }
        Ok(())
    }

    /// Point prediction. `context` is required in synthetic-factor mode.
    pub fn predict(&self, x: &[f64], context: Option<&[f64]>) -> Result<f64> {
        let d = self.x_scales.len();
        if x.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len() });
        }
        let z = |j: usize| (x[j] - self.x_means[j]) / self.x_scales[j];
        let mut value = self.intercept;
        value += (0..d).map(|j| z(j) * self.coefficients[j]).sum::<f64>();
        if self.mode == RidgeMode::SyntheticFactor {
            let f = context.ok_or_else(|| invalid("synthetic-factor predictor needs the factor context"))?;
            if f.len() != self.context_scales.len() {
                return Err(Error::Dimension { expected: self.context_scales.len(), got: f.len() });
            }
            for (k, (fk, sk)) in f.iter().zip(&self.context_scales).enumerate() {
                let block = &self.coefficients[(k + 1) * d..(k + 2) * d];
                value += fk / sk * (0..d).map(|j| z(j) * block[j]).sum::<f64>();
            }
        }
        Ok(value)
    }
}

/// Ridge fit by the normal equations `(Z'Z + lambda I) b = Z'y` on the
/// standardized design, solved with a Cholesky factorization.
pub fn fit_ridge(rows: &[Row<'_>], lambda: f64, mode: RidgeMode) -> Result<Predictor> {
    if rows.is_empty() {
        return Err(invalid("ridge fit needs at least one row"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("ridge lambda {lambda} must be >= 0")));
    }
    let d = rows[0].x.len();
    if let Some(r) = rows.iter().find(|r| r.x.len() != d) {
        return Err(Error::Dimension { expected: d, got: r.x.len() });
    }
    let x_scales: Vec<f64> = (0..d).map(|j| column_sd(rows.iter().map(move |r| r.x[j]))).collect();
    let (x_means, context_scales, y_offset) = match mode {
        RidgeMode::SyntheticFactor => {
            let k = rows[0]
                .context
                .ok_or_else(|| invalid("synthetic-factor fit needs the factor context"))?
                .len();
            let mut scales = Vec::with_capacity(k);
            for j in 0..k {
                if rows.iter().any(|r| r.context.map(|c| c.len()) != Some(k)) {
                    return Err(invalid("every row needs a factor context of the same length"));
                }
                scales.push(column_sd(rows.iter().map(move |r| r.context.map_or(0.0, |c| c[j]))));
            }
            (vec![0.0; d], scales, 0.0)
        }
        RidgeMode::RealData => {
            let n = rows.len() as f64;
            let means = (0..d).map(|j| rows.iter().map(|r| r.x[j]).sum::<f64>() / n).collect();
            (means, Vec::new(), rows.iter().map(|r| r.y).sum::<f64>() / n)
        }
    };
    let mut predictor = Predictor {
        mode,
        x_means,
        x_scales,
        coefficients: vec![0.0; d * (1 + context_scales.len())],
        context_scales,
        intercept: y_offset,
        ridge_lambda: lambda,
    };
    let p = predictor.design_width();
    let mut design = DMatrix::<f64>::zeros(rows.len(), p);
    let mut buf = vec![0.0; p];
    for (i, r) in rows.iter().enumerate() {
        predictor.design_row(r.x, r.context, &mut buf)?;
        for (j, v) in buf.iter().enumerate() {
            design[(i, j)] = *v;
        }
    }
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.y - y_offset));
    let mut gram = design.tr_mul(&design);
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = design.tr_mul(&y);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular("normal equations are not positive definite; use ridge lambda > 0".into())
    })?;
    predictor.coefficients = chol.solve(&rhs).iter().copied().collect();
    Ok(predictor)
}

/// Pinball loss `rho_tau(r)` of a residual `r = y - q`.
pub fn pinball_loss(residual: f64, tau: f64) -> f64 {
    if residual > 0.0 {
        tau * residual
    } else {
        (tau - 1.0) * residual
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(values: &[f64], tau: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let pos = tau * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinballConfig {
    pub iters: usize,
    pub step: f64,
    pub l2: f64,
    /// Only the most recent `max_rows` rows are used.
    pub max_rows: usize,
}

impl Default for PinballConfig {
    fn default() -> Self {
        Self {
            iters: 300,
            step: 0.05,
            l2: 1e-4,
            max_rows: 25_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinballModel {
    pub tau: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub config: PinballConfig,
    pub initial_objective: f64,
    pub final_objective: f64,
}

impl PinballModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
    }
}

/// Linear quantile regression by subgradient descent on the mean pinball
/// loss plus `l2/2 |w|^2`.
///
/// `features` is row-major with `dim` columns (`dim = 0` fits an intercept
/// only). The intercept starts at the empirical `tau` quantile of the
/// targets, slopes at zero; steps are `step / sqrt(k + 1)` and the iterate
/// with the smallest objective is returned. At a zero residual the
/// subgradient of the non-positive side is used.
pub fn fit_pinball(features: &[f64], dim: usize, targets: &[f64], tau: f64, config: PinballConfig) -> Result<PinballModel> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(invalid(format!("tau {tau} outside (0, 1)")));
    }
    if targets.is_empty() {
        return Err(invalid("pinball fit needs at least one row"));
    }
    if features.len() != targets.len() * dim {
        return Err(Error::Dimension { expected: targets.len() * dim, got: features.len() });
    }
    let skip = targets.len().saturating_sub(config.max_rows.max(1));
    let targets = &targets[skip..];
    let features = &features[skip * dim..];
    let n = targets.len() as f64;

    let mut weights = vec![0.0; dim];
    let mut intercept = empirical_quantile(targets, tau);
    let mut grad = vec![0.0; dim];
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut initial_objective = f64::NAN;

    for k in 0..=config.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            let x = &features[i * dim..(i + 1) * dim];
            let pred = intercept + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            let r = y - pred;
            loss += pinball_loss(r, tau);
            // derivative of rho_tau(y - pred) with respect to pred
            let g = if r > 0.0 { -tau } else { 1.0 - tau };
            grad_b += g;
            for (gj, v) in grad.iter_mut().zip(x) {
                *gj += g * v;
            }
        }
        let objective = loss / n + 0.5 * config.l2 * weights.iter().map(|w| w * w).sum::<f64>();
        if k == 0 {
            initial_objective = objective;
        }
        if best.as_ref().is_none_or(|(obj, _, _)| objective < *obj) {
            best = Some((objective, weights.clone(), intercept));
        }
        if k == config.iters {
            break;
        }
        let eta = config.step / ((k + 1) as f64).sqrt();
        intercept -= eta * grad_b / n;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= eta * (g / n + config.l2 * *w);
        }
    }
    let (final_objective, weights, intercept) = best.expect("at least one iterate");
    Ok(PinballModel {
        tau,
        weights,
        intercept,
        config,
        initial_objective,
        final_objective,
    })
}
