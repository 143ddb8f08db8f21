//! Rank-budgeted quantile adjustment: the target's decayed mean absolute
//! residual is ranked against the calibration units and the rank moves the
//! queried level around the nominal one.

use serde::{Deserialize, Serialize};

use super::{BurnIn, CalibRound, MethodConfig, MethodKind, MethodState};
use crate::conformal::{self, build_record, PredictionRecord};
use crate::error::{invalid, Result};
use crate::panel::RoundBatch;
use crate::predictor::Predictor;

/// Bounds of the queried TQA-B level.
pub const LEVEL_MIN: f64 = 0.01;
pub const LEVEL_MAX: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TqaBConfig {
    /// Weight kept by the decayed mean at each update.
    pub decay: f64,
    /// Level budget `b`; `None` means `alpha / 2`.
    pub budget: Option<f64>,
}

impl Default for TqaBConfig {
    fn default() -> Self {
        Self { decay: 0.8, budget: None }
    }
}

impl TqaBConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay >= 0.0 && self.decay < 1.0) {
            return Err(invalid(format!("TQA-B decay {} outside [0, 1)", self.decay)));
        }
        if let Some(b) = self.budget {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(invalid(format!("TQA-B budget {b} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn budget_for(&self, alpha: f64) -> f64 {
        self.budget.unwrap_or(alpha / 2.0)
    }
}

/// `alpha_q = clamp(alpha + b (1 - 2 rank), 0.01, 0.999)`.
pub fn budgeted_level(alpha: f64, budget: f64, rank: f64) -> f64 {
    (alpha + budget * (1.0 - 2.0 * rank)).clamp(LEVEL_MIN, LEVEL_MAX)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TqaBState {
    decay: f64,
    /// Decayed mean absolute residual per calibration unit; empty until seeded.
    calib_m: Vec<f64>,
    /// `None` until seeded (median of the calibration values).
    target_m: Option<f64>,
}

impl TqaBState {
    /// Seed the calibration values from burn-in residuals when available.
    pub fn new(cfg: &TqaBConfig, burn_in: Option<&BurnIn>) -> Self {
        let mut state = Self {
            decay: cfg.decay,
            calib_m: Vec::new(),
            target_m: None,
        };
        if let Some(b) = burn_in.filter(|b| !b.calib_signed.is_empty() && b.calib_signed.iter().all(|s| !s.is_empty())) {
            state.calib_m = b
                .calib_signed
                .iter()
                .map(|seq| {
                    let mut m = seq[0].abs();
                    for r in &seq[1..] {
                        m = state.decay * m + (1.0 - state.decay) * r.abs();
                    }
                    m
                })
                .collect();
            state.target_m = Some(median(&state.calib_m));
        }
        state
    }

    pub fn calib_m(&self) -> &[f64] {
        &self.calib_m
    }

    pub fn target_m(&self) -> Option<f64> {
        self.target_m
    }

    fn observe_calibration(&mut self, abs_residuals: &[f64]) -> Result<()> {
        if self.calib_m.is_empty() {
            self.calib_m = abs_residuals.to_vec();
        } else if self.calib_m.len() != abs_residuals.len() {
            return Err(invalid("calibration panel size changed between rounds"));
        } else {
            for (m, r) in self.calib_m.iter_mut().zip(abs_residuals) {
                *m = self.decay * *m + (1.0 - self.decay) * r;
            }
        }
        if self.target_m.is_none() {
            self.target_m = Some(median(&self.calib_m));
        }
        Ok(())
    }

    /// Revealed target residual magnitude.
    pub fn observe_target(&mut self, abs_residual: f64) {
        self.target_m = Some(match self.target_m {
            Some(m) => self.decay * m + (1.0 - self.decay) * abs_residual,
            None => abs_residual,
        });
    }

    /// Fraction of calibration units whose decayed mean is at most the target's.
    pub fn rank(&self) -> f64 {
        let Some(target) = self.target_m else { return 0.5 };
        if self.calib_m.is_empty() {
            return 0.5;
        }
        self.calib_m.iter().filter(|&&m| m <= target).count() as f64 / self.calib_m.len() as f64
    }
}

pub(super) fn step(
    state: &mut MethodState,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    calib: &CalibRound,
    center: f64,
) -> Result<PredictionRecord> {
    let tqa_b = state
        .tqa_b
        .as_mut()
        .ok_or_else(|| invalid("TQA-B state missing"))?;
    tqa_b.observe_calibration(calib.scores.calib())?;
    let level = budgeted_level(cfg.alpha, cfg.tqa_b.budget_for(cfg.alpha), tqa_b.rank());
    let weights = conformal::uniform_weights(calib.scores.len());
    let (raw, deployed) = conformal::calibrate(&calib.scores, &weights, level)?;
    Ok(build_record(batch.round, center, level, raw, deployed))
}

/// One TQA-B round.
pub fn tqa_b_step(
    state: &mut MethodState,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    predictor: &Predictor,
) -> Result<PredictionRecord> {
    if cfg.kind != MethodKind::TqaB {
        return Err(invalid(format!("tqa_b_step called with {}", cfg.kind)));
    }
    super::method_step(state, cfg, batch, predictor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_map_examples() {
        assert_eq!(budgeted_level(0.1, 0.05, 0.5), 0.1);
        assert!((budgeted_level(0.1, 0.05, 1.0) - 0.05).abs() < 1e-15);
        assert!((budgeted_level(0.1, 0.05, 0.0) - 0.15).abs() < 1e-15);
        assert_eq!(budgeted_level(0.005, 0.0, 0.5), LEVEL_MIN);
        assert_eq!(budgeted_level(0.9, 0.5, 0.0), LEVEL_MAX);
    }

    #[test]
    fn burn_in_seeding_and_median_prior() {
        let burn = BurnIn {
            calib_signed: vec![vec![1.0, -1.0], vec![2.0, 2.0], vec![-5.0, 0.0]],
        };
        let s = TqaBState::new(&TqaBConfig::default(), Some(&burn));
        assert_eq!(s.calib_m(), &[1.0, 2.0, 4.0]);
        assert_eq!(s.target_m(), Some(2.0));
        assert!((s.rank() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unrevealed_target_keeps_its_prior() {
        let mut s = TqaBState::new(&TqaBConfig::default(), None);
        s.observe_calibration(&[1.0, 3.0]).unwrap();
        assert_eq!(s.target_m(), Some(2.0));
        s.observe_calibration(&[2.0, 5.0]).unwrap();
        assert_eq!(s.target_m(), Some(2.0));
        s.observe_target(7.0);
        assert!((s.target_m().unwrap() - (0.8 * 2.0 + 0.2 * 7.0)).abs() < 1e-15);
    }
}
