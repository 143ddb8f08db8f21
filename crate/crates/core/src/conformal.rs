//! Nonconformity scores, the weighted quantile with a `+inf` sentinel, and
//! finite-width deployment of the resulting intervals.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::predictor::Predictor;

/// Slack used when comparing cumulative weight with the requested level.
///
/// Cumulative sums of weights such as `1/(N+1)` are not exact in floating
/// point; without slack `9 * 0.1` would fall short of `0.9`.
pub const LEVEL_TOLERANCE: f64 = 1e-12;

/// Simplex sums within this distance of one are renormalized; further off is an error.
pub const SIMPLEX_RENORM_TOLERANCE: f64 = 1e-9;

/// Lower and upper projection bounds for deployed miscoverage levels.
pub const DEPLOY_LEVEL_MIN: f64 = 0.01;
pub const DEPLOY_LEVEL_MAX: f64 = 0.99;

/// Absolute residual `|y - yhat|`.
pub fn abs_residual(y: f64, prediction: f64) -> f64 {
    (y - prediction).abs()
}

/// Absolute residual score of `(x, y)` under a fitted predictor.
pub fn abs_residual_score(
    predictor: &Predictor,
    x: &[f64],
    context: Option<&[f64]>,
    y: f64,
) -> Result<f64> {
    Ok(abs_residual(y, predictor.predict(x, context)?))
}

/// Calibration scores of one round. The unobserved target score is the
/// implicit `+inf` sentinel in slot `N + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScores {
    calib: Vec<f64>,
}

impl AugmentedScores {
    pub fn new(calib: Vec<f64>) -> Result<Self> {
        if calib.is_empty() {
            return Err(invalid("need at least one calibration score"));
        }
        if let Some(bad) = calib.iter().find(|s| !s.is_finite()) {
            return Err(invalid(format!("calibration score {bad} is not finite")));
        }
        Ok(Self { calib })
    }

    pub fn calib(&self) -> &[f64] {
        &self.calib
    }

    /// Number of calibration scores `N` (the augmented vector has `N + 1` slots).
    pub fn len(&self) -> usize {
        self.calib.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calib.is_empty()
    }

    pub fn max_calib(&self) -> f64 {
        self.calib.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Where a threshold came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// A finite calibration score.
    Finite,
    /// Only the sentinel's mass attains the level; raw value `+inf`.
    Sentinel,
    /// Deployed stand-in for [`Provenance::Sentinel`]: the largest calibration score.
    SentinelFallback,
    /// Level at or below zero (`alpha_t >= 1`); raw value `-inf`, empty set.
    EmptySet,
    /// Level above one (`alpha_t < 0`); raw value `+inf`, the whole line.
    FullLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub provenance: Provenance,
}

impl Threshold {
    /// Raw set membership of a score: `s <= q` with the `±inf` conventions.
    pub fn admits(&self, score: f64) -> bool {
        score <= self.value
    }
}

/// Check that `weights` lie on the simplex, renormalizing tiny drift.
pub fn validate_simplex(weights: &[f64]) -> Result<std::borrow::Cow<'_, [f64]>> {
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(invalid(format!("weight {w} is negative or not finite")));
    }
    let total: f64 = weights.iter().sum();
    let drift = (total - 1.0).abs();
    if drift <= LEVEL_TOLERANCE {
        Ok(std::borrow::Cow::Borrowed(weights))
    } else if drift <= SIMPLEX_RENORM_TOLERANCE {
        Ok(std::borrow::Cow::Owned(weights.iter().map(|w| w / total).collect()))
    } else {
        Err(invalid(format!("weights sum to {total}, not 1")))
    }
}

/// `inf { q : sum_k w_k 1[s_k <= q] >= level }` over the augmented scores.
///
/// `weights` has `N + 1` entries, the last belonging to the sentinel. Equal
/// scores are merged before the comparison, so ties resolve to the shared value.
pub fn weighted_quantile(scores: &AugmentedScores, weights: &[f64], level: f64) -> Result<Threshold> {
    if weights.len() != scores.len() + 1 {
        return Err(Error::Dimension {
            expected: scores.len() + 1,
            got: weights.len(),
        });
    }
    if level.is_nan() {
        return Err(invalid("level is NaN"));
    }
    let weights = validate_simplex(weights)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores.calib[a].total_cmp(&scores.calib[b]));
    Ok(scan_sorted(&scores.calib, &weights, &order, level))
}

fn attains(cumulative: f64, level: f64) -> bool {
    cumulative >= level - LEVEL_TOLERANCE
}

/// Cumulative scan over calibration indices sorted by score.
fn scan_sorted(calib: &[f64], weights: &[f64], order: &[usize], level: f64) -> Threshold {
    if attains(0.0, level) {
        return Threshold {
            value: f64::NEG_INFINITY,
            provenance: Provenance::EmptySet,
        };
    }
    if level > 1.0 {
        return Threshold {
            value: f64::INFINITY,
            provenance: Provenance::FullLine,
        };
    }
    let mut cumulative = 0.0;
    let mut k = 0;
    while k < order.len() {
        let value = calib[order[k]];
        while k < order.len() && calib[order[k]] == value {
            cumulative += weights[order[k]];
            k += 1;
        }
        if attains(cumulative, level) {
            return Threshold {
                value,
                provenance: Provenance::Finite,
            };
        }
    }
    Threshold {
        value: f64::INFINITY,
        provenance: Provenance::Sentinel,
    }
}

/// Which projection bound a deployed level hit, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Lower,
    Upper,
}

/// A finite interval ready to report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deployment {
    pub deployed_level: f64,
    pub half_width: f64,
    pub provenance: Provenance,
    pub boundary: Option<Boundary>,
}

/// Finite-width deployment: project `alpha_t` to `[0.01, 0.99]`, recompute
/// the threshold there and replace a sentinel selection by the largest
/// calibration score.
pub fn deploy_finite(
    raw: &Threshold,
    scores: &AugmentedScores,
    weights: &[f64],
    alpha_t: f64,
) -> Result<Deployment> {
    let deployed_level = alpha_t.clamp(DEPLOY_LEVEL_MIN, DEPLOY_LEVEL_MAX);
    let boundary = if alpha_t < DEPLOY_LEVEL_MIN {
        Some(Boundary::Lower)
    } else if alpha_t > DEPLOY_LEVEL_MAX {
        Some(Boundary::Upper)
    } else {
        None
    };
    let threshold = if boundary.is_none() && raw.provenance == Provenance::Finite {
        *raw
    } else {
        weighted_quantile(scores, weights, 1.0 - deployed_level)?
    };
    let (half_width, provenance) = match threshold.provenance {
        Provenance::Finite => (threshold.value, Provenance::Finite),
        _ => (scores.max_calib(), Provenance::SentinelFallback),
    };
    Ok(Deployment {
        deployed_level,
        half_width,
        provenance,
        boundary,
    })
}

/// One deployed interval and its later evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    /// One-based conformal round.
    pub round: usize,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    /// Miscoverage level the method queried before projection.
    pub alpha_t: f64,
    pub deployed_level: f64,
    /// Threshold of the unprojected symmetric construction; `None` for
    /// intervals that are not a score threshold around `center`.
    pub raw: Option<Threshold>,
    pub provenance: Provenance,
    pub boundary: Option<Boundary>,
    /// Label inside the deployed interval (filled offline).
    pub covered: Option<bool>,
    /// Label inside the raw, possibly empty or unbounded, set.
    pub raw_covered: Option<bool>,
}

impl PredictionRecord {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership in the deployed interval.
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    /// Membership in the raw set `{y : |y - center| <= q_raw}`; the deployed
    /// interval when there is no raw threshold.
    pub fn raw_contains(&self, y: f64) -> bool {
        match &self.raw {
            Some(raw) => raw.admits(abs_residual(y, self.center)),
            None => self.contains(y),
        }
    }

    /// Loss fed to the level update: miscoverage of the raw set.
    pub fn raw_loss(&self, y: f64) -> bool {
        !self.raw_contains(y)
    }

    /// Record both coverage flags for a now-known label.
    pub fn resolve(&mut self, y: f64) {
        self.covered = Some(self.contains(y));
        self.raw_covered = Some(self.raw_contains(y));
    }
}

/// Symmetric record `center ± deployed.half_width`.
pub fn build_record(round: usize, center: f64, alpha_t: f64, raw: Threshold, deployed: Deployment) -> PredictionRecord {
    PredictionRecord {
        round,
        center,
        lower: center - deployed.half_width,
        upper: center + deployed.half_width,
        alpha_t,
        deployed_level: deployed.deployed_level,
        raw: Some(raw),
        provenance: deployed.provenance,
        boundary: deployed.boundary,
        covered: None,
        raw_covered: None,
    }
}

/// Uniform weights over the `N + 1` augmented slots.
pub fn uniform_weights(n_calib: usize) -> Vec<f64> {
    vec![1.0 / (n_calib + 1) as f64; n_calib + 1]
}

/// Weighted threshold plus finite deployment in one call.
pub fn calibrate(
    scores: &AugmentedScores,
    weights: &[f64],
    alpha_t: f64,
) -> Result<(Threshold, Deployment)> {
    let raw = weighted_quantile(scores, weights, 1.0 - alpha_t)?;
    let deployed = deploy_finite(&raw, scores, weights, alpha_t)?;
    Ok((raw, deployed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(v: &[f64]) -> AugmentedScores {
        AugmentedScores::new(v.to_vec()).unwrap()
    }

    #[test]
    fn residual_score_basics() {
        assert_eq!(abs_residual(2.0, 2.0), 0.0);
        assert_eq!(abs_residual(3.0, 1.5), 1.5);
        assert_eq!(abs_residual(1.5 + 0.5, 1.5), abs_residual(1.5 - 0.5, 1.5));
    }

    #[test]
    fn cumulative_scan_example() {
        let q = weighted_quantile(&scores(&[1.0, 2.0, 3.0]), &[0.25; 4], 0.75).unwrap();
        assert_eq!(q, Threshold { value: 3.0, provenance: Provenance::Finite });
    }

    #[test]
    fn sentinel_selected_when_finite_mass_falls_short() {
        let w = [1.0 / 3.0; 3];
        let q = weighted_quantile(&scores(&[1.0, 2.0]), &w, 0.8).unwrap();
        assert_eq!(q.provenance, Provenance::Sentinel);
        assert_eq!(q.value, f64::INFINITY);
    }

    #[test]
    fn out_of_range_levels() {
        let s = scores(&[1.0, 2.0]);
        let w = [1.0 / 3.0; 3];
        let q = weighted_quantile(&s, &w, 1.2).unwrap();
        assert_eq!((q.value, q.provenance), (f64::INFINITY, Provenance::FullLine));
        let q = weighted_quantile(&s, &w, -0.1).unwrap();
        assert_eq!((q.value, q.provenance), (f64::NEG_INFINITY, Provenance::EmptySet));
        let q = weighted_quantile(&s, &w, 0.0).unwrap();
        assert_eq!(q.provenance, Provenance::EmptySet);
    }

    #[test]
    fn nine_uniform_scores_reach_ninety_percent_at_the_last() {
        let s: Vec<f64> = (1..=9).map(f64::from).collect();
        let q = weighted_quantile(&scores(&s), &uniform_weights(9), 0.9).unwrap();
        assert_eq!(q.value, 9.0);
    }

    #[test]
    fn level_sixty_percent_with_two_scores() {
        let q = weighted_quantile(&scores(&[1.0, 2.0]), &uniform_weights(2), 1.0 - 0.4).unwrap();
        assert_eq!(q.value, 2.0);
    }

    #[test]
    fn ties_are_merged() {
        // mass 0.2 at 1.0, 0.4 at 2.0 (two tied slots), 0.4 on the sentinel
        let q = weighted_quantile(&scores(&[2.0, 1.0, 2.0]), &[0.2, 0.2, 0.2, 0.4], 0.5).unwrap();
        assert_eq!(q.value, 2.0);
    }

    #[test]
    fn rejects_nan_and_off_simplex() {
        assert!(AugmentedScores::new(vec![f64::NAN]).is_err());
        assert!(AugmentedScores::new(vec![]).is_err());
        let s = scores(&[1.0]);
        assert!(weighted_quantile(&s, &[0.5, f64::NAN], 0.5).is_err());
        assert!(weighted_quantile(&s, &[0.6, 0.6], 0.5).is_err());
        assert!(weighted_quantile(&s, &[0.5, 0.5], f64::NAN).is_err());
        assert!(weighted_quantile(&s, &[1.0], 0.5).is_err());
        // tiny drift is renormalized
        assert!(weighted_quantile(&s, &[0.5, 0.5 + 5e-10], 0.4).is_ok());
    }

    #[test]
    fn deploy_projects_low_levels() {
        let s = scores(&[1.0, 2.0, 3.0]);
        let w = uniform_weights(3);
        let raw = weighted_quantile(&s, &w, 1.0 - 0.005).unwrap();
        let d = deploy_finite(&raw, &s, &w, 0.005).unwrap();
        assert_eq!(d.deployed_level, 0.01);
        assert_eq!(d.boundary, Some(Boundary::Lower));
        assert_eq!(d.provenance, Provenance::SentinelFallback);
        assert_eq!(d.half_width, 3.0);
    }

    #[test]
    fn deploy_passes_finite_through() {
        let s = scores(&[2.7, 5.1]);
        let raw = Threshold { value: 2.7, provenance: Provenance::Finite };
        let d = deploy_finite(&raw, &s, &uniform_weights(2), 0.3).unwrap();
        assert_eq!((d.half_width, d.provenance, d.boundary), (2.7, Provenance::Finite, None));
    }

    #[test]
    fn deploy_replaces_sentinel_with_max_score() {
        let s = scores(&[0.4, 5.1, 2.0]);
        let w = uniform_weights(3);
        let raw = weighted_quantile(&s, &w, 0.9).unwrap();
        assert_eq!(raw.provenance, Provenance::Sentinel);
        let d = deploy_finite(&raw, &s, &w, 0.1).unwrap();
        assert_eq!((d.half_width, d.provenance), (5.1, Provenance::SentinelFallback));
    }

    #[test]
    fn deploy_full_line_becomes_finite() {
        let s = scores(&[1.0, 2.0, 3.0, 4.0]);
        let w = uniform_weights(4);
        let (raw, d) = calibrate(&s, &w, -0.02).unwrap();
        assert_eq!(raw.provenance, Provenance::FullLine);
        assert!(d.half_width.is_finite());
        assert_eq!(d.deployed_level, 0.01);
    }

    #[test]
    fn record_interval_and_coverage() {
        let d = Deployment { deployed_level: 0.1, half_width: 1.0, provenance: Provenance::Finite, boundary: None };
        let raw = Threshold { value: 1.0, provenance: Provenance::Finite };
        let mut r = build_record(1, 0.0, 0.1, raw, d);
        assert_eq!((r.lower, r.upper), (-1.0, 1.0));
        assert!(r.covered.is_none());
        r.resolve(1.0);
        assert_eq!(r.covered, Some(true));
        r.resolve(1.0 + 1e-9);
        assert_eq!(r.covered, Some(false));

        let point = Deployment { half_width: 0.0, ..d };
        let r = build_record(1, 2.0, 0.1, raw, point);
        assert_eq!((r.lower, r.upper), (2.0, 2.0));
        assert!(r.contains(2.0));
    }

    #[test]
    fn raw_semantics_for_infinite_thresholds() {
        let d = Deployment { deployed_level: 0.99, half_width: 1.0, provenance: Provenance::Finite, boundary: None };
        let empty = build_record(1, 0.0, 1.005, Threshold { value: f64::NEG_INFINITY, provenance: Provenance::EmptySet }, d);
        assert!(empty.raw_loss(0.0));
        let full = build_record(1, 0.0, -0.005, Threshold { value: f64::INFINITY, provenance: Provenance::FullLine }, d);
        assert!(!full.raw_loss(1e300));
    }
}
