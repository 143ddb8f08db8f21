//! Lightweight lagged-residual quantile intervals.
//!
//! Each unit keeps its signed residual history. Lag features are the EWMA of
//! the history evaluated `k = 1..lags` steps back; a unit's rolling mean
//! residual is subtracted from features and response before fitting and added
//! back to the predicted quantiles. One pair of linear pinball models (lower
//! and upper tail) is fitted on a rolling window of rows pooled over the
//! calibration units and the revealed target rows, and refitted on a fixed
//! cadence.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{absorb_lagged, score_calibration, BurnIn, CalibRound, MethodConfig, MethodKind, MethodState};
use crate::conformal::{self, build_record, PredictionRecord, Provenance};
use crate::error::{invalid, Result};
use crate::panel::RoundBatch;
use crate::predictor::{fit_pinball, PinballConfig, PinballModel, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpciConfig {
    pub refit_every: usize,
    /// Rolling window, in time points, for the fitting rows and the unit mean.
    pub window: usize,
    pub ewm_alpha: f64,
    pub lags: usize,
    /// Lower tail level; `None` means `alpha / 2`.
    pub beta: Option<f64>,
    pub pinball: PinballConfig,
}

impl Default for LpciConfig {
    fn default() -> Self {
        Self {
            refit_every: 10,
            window: 30,
            ewm_alpha: 0.2,
            lags: 6,
            beta: None,
            pinball: PinballConfig::default(),
        }
    }
}

impl LpciConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refit_every == 0 || self.window == 0 || self.lags == 0 {
            return Err(invalid("LPCI refit_every, window and lags must be positive"));
        }
        if !(self.ewm_alpha > 0.0 && self.ewm_alpha <= 1.0) {
            return Err(invalid(format!("LPCI ewm_alpha {} outside (0, 1]", self.ewm_alpha)));
        }
        Ok(())
    }

    /// Lower and upper pinball levels `(beta, 1 - alpha + beta)`.
    pub fn tails(&self, alpha: f64) -> Result<(f64, f64)> {
        let beta = self.beta.unwrap_or(alpha / 2.0);
        if !(beta > 0.0 && beta < alpha) {
            return Err(invalid(format!("LPCI beta {beta} outside (0, alpha)")));
        }
        Ok((beta, 1.0 - alpha + beta))
    }
}

/// Signed residual sequence with its running EWMA.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualHistory {
    decay: f64,
    values: Vec<f64>,
    /// `ewma[j]` smooths `values[..=j]`, bias-corrected by the weight total.
    ewma: Vec<f64>,
    num: f64,
    den: f64,
}

impl ResidualHistory {
    pub fn new(ewm_alpha: f64) -> Self {
        Self {
            decay: 1.0 - ewm_alpha,
            values: Vec::new(),
            ewma: Vec::new(),
            num: 0.0,
            den: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ewma(&self) -> &[f64] {
        &self.ewma
    }

    pub fn push(&mut self, r: f64) {
        self.num = r + self.decay * self.num;
        self.den = 1.0 + self.decay * self.den;
        self.values.push(r);
        self.ewma.push(self.num / self.den);
    }

    /// Mean of the last `window` values before position `pos`.
    fn rolling_mean(&self, pos: usize, window: usize) -> f64 {
        let start = pos.saturating_sub(window);
        let slice = &self.values[start..pos];
        slice.iter().sum::<f64>() / slice.len() as f64
    }

    /// Demeaned lag features at position `pos` (`pos <= len`) and the unit mean.
    fn features_at(&self, pos: usize, lags: usize, window: usize) -> Option<(Vec<f64>, f64)> {
        if pos < lags || pos > self.values.len() {
            return None;
        }
        let mean = self.rolling_mean(pos, window);
        Some(((1..=lags).map(|k| self.ewma[pos - k] - mean).collect(), mean))
    }

    /// Training row for the value at `pos`: demeaned features and response.
    fn row(&self, pos: usize, lags: usize, window: usize) -> Option<(Vec<f64>, f64)> {
        let (features, mean) = self.features_at(pos, lags, window)?;
        self.values.get(pos).map(|r| (features, r - mean))
    }

    /// Features for the next, not yet observed value.
    fn query(&self, lags: usize, window: usize) -> Option<(Vec<f64>, f64)> {
        self.features_at(self.values.len(), lags, window)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PoolRow {
    round: i64,
    features: Vec<f64>,
    response: f64,
}

/// Per-target LPCI memory: the revealed residual history and rows not yet
/// handed to the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LpciTarget {
    lags: usize,
    window: usize,
    history: ResidualHistory,
    pending: Vec<PoolRow>,
}

impl LpciTarget {
    pub fn new(cfg: &LpciConfig) -> Self {
        Self {
            lags: cfg.lags,
            window: cfg.window,
            history: ResidualHistory::new(cfg.ewm_alpha),
            pending: Vec::new(),
        }
    }

    pub fn history(&self) -> &ResidualHistory {
        &self.history
    }

    /// Revealed residual of the interval deployed at `round`.
    pub fn observe(&mut self, residual: f64, round: usize) {
        self.history.push(residual);
        let pos = self.history.len() - 1;
        if let Some((features, response)) = self.history.row(pos, self.lags, self.window) {
            self.pending.push(PoolRow {
                round: round as i64,
                features,
                response,
            });
        }
    }
}

/// Shared residual layer of one replication.
#[derive(Debug, Clone)]
pub struct LpciPool {
    cfg: LpciConfig,
    tails: (f64, f64),
    calib: Vec<ResidualHistory>,
    rows: VecDeque<PoolRow>,
    /// Lower and upper tail models; `None` until the pool has a row.
    models: Option<(PinballModel, PinballModel)>,
    fits: usize,
}

impl LpciPool {
    /// Initial design from the calibration units' burn-in residuals. Burn-in
    /// rows are numbered so that the last burn-in time is round 0.
    pub fn new(cfg: &LpciConfig, alpha: f64, burn_in: &BurnIn) -> Result<Self> {
        cfg.validate()?;
        let tails = cfg.tails(alpha)?;
        let len = burn_in.calib_signed.first().map_or(0, Vec::len);
        if burn_in.calib_signed.is_empty() || burn_in.calib_signed.iter().any(|s| s.len() != len) {
            return Err(invalid("LPCI needs equal-length burn-in residuals for every calibration unit"));
        }
        let mut calib = Vec::with_capacity(burn_in.calib_signed.len());
        let mut rows = VecDeque::new();
        for seq in &burn_in.calib_signed {
            let mut history = ResidualHistory::new(cfg.ewm_alpha);
            for (j, &r) in seq.iter().enumerate() {
                history.push(r);
                let round = j as i64 - len as i64 + 1;
                if round > -(cfg.window as i64) {
                    if let Some((features, response)) = history.row(j, cfg.lags, cfg.window) {
                        rows.push_back(PoolRow { round, features, response });
                    }
                }
            }
            calib.push(history);
        }
        let models = fit_pair(cfg, tails, &rows)?;
        Ok(Self {
            cfg: cfg.clone(),
            tails,
            calib,
            rows,
            fits: usize::from(models.is_some()),
            models,
        })
    }

    pub fn fits(&self) -> usize {
        self.fits
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn models(&self) -> Option<&(PinballModel, PinballModel)> {
        self.models.as_ref()
    }

    /// Close `round`: append the calibration residuals and the targets'
    /// revealed rows, slide the window and refit on schedule.
    pub fn absorb_round<'a>(
        &mut self,
        round: usize,
        calib: &CalibRound,
        targets: impl IntoIterator<Item = &'a mut LpciTarget>,
    ) -> Result<()> {
        if calib.signed.len() != self.calib.len() {
            return Err(invalid("calibration panel size changed between rounds"));
        }
        let (lags, window) = (self.cfg.lags, self.cfg.window);
        for (history, &r) in self.calib.iter_mut().zip(&calib.signed) {
            history.push(r);
            if let Some((features, response)) = history.row(history.len() - 1, lags, window) {
                self.rows.push_back(PoolRow {
                    round: round as i64,
                    features,
                    response,
                });
            }
        }
        for target in targets {
            self.rows.extend(target.pending.drain(..));
        }
        let oldest = round as i64 - window as i64;
        self.rows.retain(|row| row.round > oldest);
        if round % self.cfg.refit_every == 0 {
            if let Some(models) = fit_pair(&self.cfg, self.tails, &self.rows)? {
                self.models = Some(models);
                self.fits += 1;
            }
        }
        Ok(())
    }

    /// Residual quantiles `(q_lo, q_hi)` for a target, or `None` during cold
    /// start (short target history or an empty pool).
    pub fn quantiles(&self, target: &LpciTarget) -> Option<(f64, f64)> {
        let (lower, upper) = self.models.as_ref()?;
        let (features, mean) = target.history.query(self.cfg.lags, self.cfg.window)?;
        let lo = mean + lower.predict(&features);
        let hi = mean + upper.predict(&features);
        Some((lo.min(hi), lo.max(hi)))
    }
}

fn fit_pair(cfg: &LpciConfig, tails: (f64, f64), rows: &VecDeque<PoolRow>) -> Result<Option<(PinballModel, PinballModel)>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let mut features = Vec::with_capacity(rows.len() * cfg.lags);
    let mut targets = Vec::with_capacity(rows.len());
    for row in rows {
        features.extend_from_slice(&row.features);
        targets.push(row.response);
    }
    Ok(Some((
        fit_pinball(&features, cfg.lags, &targets, tails.0, cfg.pinball)?,
        fit_pinball(&features, cfg.lags, &targets, tails.1, cfg.pinball)?,
    )))
}

/// One LPCI round from precomputed calibration residuals.
pub fn lpci_step_scored(
    state: &mut MethodState,
    pool: &LpciPool,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    calib: &CalibRound,
    center: f64,
) -> Result<PredictionRecord> {
    if cfg.kind != MethodKind::LpciLite || state.kind != MethodKind::LpciLite {
        return Err(invalid(format!("LPCI step called with {}", cfg.kind)));
    }
    absorb_lagged(state, batch)?;
    let target = state.lpci.as_ref().ok_or_else(|| invalid("LPCI state missing"))?;
    let record = match pool.quantiles(target) {
        Some((lo, hi)) => PredictionRecord {
            round: batch.round,
            center,
            lower: center + lo,
            upper: center + hi,
            alpha_t: cfg.alpha,
            deployed_level: cfg.alpha,
            raw: None,
            provenance: Provenance::Finite,
            boundary: None,
            covered: None,
            raw_covered: None,
        },
        None => {
            let weights = conformal::uniform_weights(calib.scores.len());
            let (raw, deployed) = conformal::calibrate(&calib.scores, &weights, cfg.alpha)?;
            build_record(batch.round, center, cfg.alpha, raw, deployed)
        }
    };
    state.last_record = Some(record.clone());
    Ok(record)
}

/// One LPCI round. The caller closes the round on the pool afterwards with
/// [`LpciPool::absorb_round`].
pub fn lpci_lite_step(
    state: &mut MethodState,
    pool: &LpciPool,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    predictor: &Predictor,
) -> Result<PredictionRecord> {
    let calib = score_calibration(batch, predictor)?;
    let center = predictor.predict(batch.target_x, batch.context)?;
    lpci_step_scored(state, pool, cfg, batch, &calib, center)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_of_constant_is_constant() {
        let mut h = ResidualHistory::new(0.2);
        for _ in 0..20 {
            h.push(1.7);
        }
        assert!(h.ewma().iter().all(|e| (e - 1.7).abs() < 1e-12));
        let (features, mean) = h.query(6, 30).unwrap();
        assert!((mean - 1.7).abs() < 1e-12);
        assert!(features.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn ewma_matches_normalized_weights() {
        let r = [1.0, -2.0, 0.5, 3.0];
        let mut h = ResidualHistory::new(0.2);
        r.iter().for_each(|&v| h.push(v));
        // oracle: sum 0.8^i r_{j-i} / sum 0.8^i
        let j = 3;
        let num: f64 = (0..=j).map(|i| 0.8f64.powi(i as i32) * r[j - i]).sum();
        let den: f64 = (0..=j).map(|i| 0.8f64.powi(i as i32)).sum();
        assert!((h.ewma()[j] - num / den).abs() < 1e-14);
    }

    #[test]
    fn lag_features_look_back() {
        let mut h = ResidualHistory::new(1.0);
        for v in [1.0, 2.0, 3.0, 4.0] {
            h.push(v);
        }
        // ewm_alpha = 1 makes the EWMA the raw value; window 1 makes the mean the last value
        let (features, mean) = h.query(2, 1).unwrap();
        assert_eq!(mean, 4.0);
        assert_eq!(features, vec![0.0, -1.0]);
        assert!(h.query(5, 1).is_none());
    }

    #[test]
    fn constant_residuals_give_a_point_interval() {
        let cfg = LpciConfig::default();
        let burn = BurnIn { calib_signed: vec![vec![0.4; 40]; 5] };
        let pool = LpciPool::new(&cfg, 0.1, &burn).unwrap();
        let mut target = LpciTarget::new(&cfg);
        assert!(pool.quantiles(&target).is_none());
        for round in 1..=6 {
            target.observe(0.4, round);
        }
        let (lo, hi) = pool.quantiles(&target).unwrap();
        assert!((lo - 0.4).abs() < 1e-9 && (hi - 0.4).abs() < 1e-9);
    }

    #[test]
    fn window_slides_and_refits_on_schedule() {
        let cfg = LpciConfig::default();
        let burn = BurnIn { calib_signed: vec![vec![0.0; 40]; 3] };
        let mut pool = LpciPool::new(&cfg, 0.1, &burn).unwrap();
        assert_eq!(pool.n_rows(), 3 * 30);
        let calib = CalibRound::from_signed(vec![1.0, -1.0, 0.5]).unwrap();
        for round in 1..=10 {
            pool.absorb_round(round, &calib, std::iter::empty()).unwrap();
            assert_eq!(pool.n_rows(), 3 * 30);
        }
        assert_eq!(pool.fits(), 2);
    }

    #[test]
    fn tails_default_to_half_alpha() {
        let (lo, hi) = LpciConfig::default().tails(0.1).unwrap();
        assert!((lo - 0.05).abs() < 1e-15 && (hi - 0.95).abs() < 1e-15);
        let bad = LpciConfig { beta: Some(0.2), ..LpciConfig::default() };
        assert!(bad.tails(0.1).is_err());
    }
}
