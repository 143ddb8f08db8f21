//! The online methods behind one per-round interface.
//!
//! | kind       | weights          | level            |
//! |------------|------------------|------------------|
//! | `wtqa`     | kernel           | adaptive         |
//! | `w_only`   | kernel           | fixed            |
//! | `tqa_only` | uniform          | adaptive         |
//! | `split_cp` | uniform          | fixed            |
//! | `tqa_b`    | uniform          | rank-budgeted    |
//! | `lpci_lite`| lagged-residual pinball quantiles |  |

pub mod lpci;
pub mod tqa_b;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::conformal::{self, build_record, AugmentedScores, PredictionRecord};
use crate::error::{invalid, Error, Result};
use crate::panel::RoundBatch;
use crate::predictor::Predictor;
use crate::spatial::{SpatialState, Standardizer};
use crate::temporal::TemporalState;

pub use lpci::{lpci_lite_step, LpciConfig, LpciPool, LpciTarget};
pub use tqa_b::{tqa_b_step, TqaBConfig, TqaBState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    SplitCp,
    TqaB,
    LpciLite,
    TqaOnly,
    WOnly,
    Wtqa,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::SplitCp,
        MethodKind::TqaB,
        MethodKind::LpciLite,
        MethodKind::TqaOnly,
        MethodKind::WOnly,
        MethodKind::Wtqa,
    ];

    /// Identifier used in configs and file names.
    pub fn id(self) -> &'static str {
        match self {
            MethodKind::SplitCp => "split_cp",
            MethodKind::TqaB => "tqa_b",
            MethodKind::LpciLite => "lpci_lite",
            MethodKind::TqaOnly => "tqa_only",
            MethodKind::WOnly => "w_only",
            MethodKind::Wtqa => "wtqa",
        }
    }

    /// Display name for tables and figures.
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::SplitCp => "Split CP",
            MethodKind::TqaB => "TQA-B",
            MethodKind::LpciLite => "LPCI-lite",
            MethodKind::TqaOnly => "TQA-only",
            MethodKind::WOnly => "W-only",
            MethodKind::Wtqa => "W-TQA",
        }
    }

    pub fn uses_kernel_weights(self) -> bool {
        matches!(self, MethodKind::Wtqa | MethodKind::WOnly)
    }

    pub fn uses_adaptive_level(self) -> bool {
        matches!(self, MethodKind::Wtqa | MethodKind::TqaOnly)
    }

    /// Whether the method's state depends on target feedback at all.
    pub fn uses_feedback(self) -> bool {
        !matches!(self, MethodKind::SplitCp | MethodKind::WOnly)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        MethodKind::ALL
            .into_iter()
            .find(|k| k.id() == key || k.label().to_ascii_lowercase().replace('-', "_") == key)
            .ok_or_else(|| invalid(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub kind: MethodKind,
    pub alpha: f64,
    pub h: f64,
    pub gamma: f64,
    pub tqa_b: TqaBConfig,
    pub lpci: LpciConfig,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            kind: MethodKind::Wtqa,
            alpha: 0.10,
            h: 0.60,
            gamma: 0.01,
            tqa_b: TqaBConfig::default(),
            lpci: LpciConfig::default(),
        }
    }
}

impl MethodConfig {
    pub fn new(kind: MethodKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid(format!("bandwidth {} must be positive", self.h)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma {} must be positive", self.gamma)));
        }
        self.tqa_b.validate()?;
        self.lpci.validate()
    }
}

/// Calibration residuals of one round, shared by every target and method.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibRound {
    /// `y - yhat` per calibration unit.
    pub signed: Vec<f64>,
    pub scores: AugmentedScores,
}

impl CalibRound {
    pub fn from_signed(signed: Vec<f64>) -> Result<Self> {
        let scores = AugmentedScores::new(signed.iter().map(|r| r.abs()).collect())?;
        Ok(Self { signed, scores })
    }
}

/// Score the calibration slice of a round under the fixed predictor.
pub fn score_calibration(batch: &RoundBatch<'_>, predictor: &Predictor) -> Result<CalibRound> {
    let signed = batch
        .calib_pairs
        .iter()
        .map(|(x, y)| Ok(y - predictor.predict(x, batch.context)?))
        .collect::<Result<Vec<f64>>>()?;
    CalibRound::from_signed(signed)
}

/// Burn-in residuals of the calibration units, one sequence per unit in
/// calibration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BurnIn {
    pub calib_signed: Vec<Vec<f64>>,
}

/// Per-(method, target) online memory.
#[derive(Debug, Clone)]
pub struct MethodState {
    pub kind: MethodKind,
    /// Own spatial state; `None` when kernel weights are supplied externally
    /// (a shared peer panel) or unused.
    pub spatial: Option<SpatialState>,
    pub temporal: Option<TemporalState>,
    pub tqa_b: Option<TqaBState>,
    pub lpci: Option<LpciTarget>,
    pub last_record: Option<PredictionRecord>,
    pending_loss: Option<f64>,
    settled_round: usize,
}

impl MethodState {
    /// Fresh state. With `own_spatial` the kernel methods carry their own
    /// peer means; otherwise the caller passes weights to [`step_scored`].
    pub fn new(cfg: &MethodConfig, n_calib: usize, dim: usize, own_spatial: bool, burn_in: Option<&BurnIn>) -> Result<Self> {
        cfg.validate()?;
        let kind = cfg.kind;
        let spatial = if kind.uses_kernel_weights() && own_spatial {
            Some(SpatialState::new(n_calib, dim, cfg.h, Standardizer::CurrentRound)?)
        } else {
            None
        };
        let temporal = if kind.uses_adaptive_level() {
            Some(TemporalState::new(cfg.alpha, cfg.gamma)?)
        } else {
            None
        };
        let tqa_b = (kind == MethodKind::TqaB).then(|| TqaBState::new(&cfg.tqa_b, burn_in));
        let lpci = (kind == MethodKind::LpciLite).then(|| LpciTarget::new(&cfg.lpci));
        Ok(Self {
            kind,
            spatial,
            temporal,
            tqa_b,
            lpci,
            last_record: None,
            pending_loss: None,
            settled_round: 0,
        })
    }

    /// Current adaptive level, if the method has one.
    pub fn alpha_t(&self) -> Option<f64> {
        self.temporal.as_ref().map(|t| t.alpha_t)
    }

    /// Apply a pending lagged loss without starting a new round, so that
    /// `alpha_t` becomes the post-horizon level `alpha_{T+1}`.
    pub fn close(&mut self) -> Result<()> {
        if let (Some(temporal), Some(loss)) = (self.temporal.as_mut(), self.pending_loss.take()) {
            temporal.update_level(true, Some(loss))?;
        }
        Ok(())
    }
}

/// Absorb the revealed label of the previously deployed `record`.
///
/// The loss is taken against the raw set: a full-line set never misses, an
/// empty set always does. Without a label nothing changes.
pub fn settle_feedback(state: &mut MethodState, record: &PredictionRecord, revealed_label: Option<f64>) {
    let Some(y) = revealed_label else { return };
    if state.settled_round >= record.round {
        return;
    }
    state.settled_round = record.round;
    if state.temporal.is_some() {
        state.pending_loss = Some(if record.raw_loss(y) { 1.0 } else { 0.0 });
    }
    let residual = y - record.center;
    if let Some(tqa_b) = state.tqa_b.as_mut() {
        tqa_b.observe_target(residual.abs());
    }
    if let Some(lpci) = state.lpci.as_mut() {
        lpci.observe(residual, record.round);
    }
}

/// Step (i): settle lagged feedback if needed and update the level.
pub(crate) fn absorb_lagged(state: &mut MethodState, batch: &RoundBatch<'_>) -> Result<()> {
    if batch.lagged_reveal {
        let label = batch
            .lagged_label
            .ok_or_else(|| invalid("revealed round without a lagged label"))?;
        if let Some(prev) = state.last_record.take() {
            settle_feedback(state, &prev, Some(label));
            state.last_record = Some(prev);
        }
    }
    if let Some(temporal) = state.temporal.as_mut() {
        let loss = state.pending_loss.take();
        match (batch.lagged_reveal, loss) {
            (true, None) => return Err(invalid(format!("round {}: revealed feedback without a previous record", batch.round))),
            (reveal, loss) => temporal.update_level(reveal, loss)?,
        }
    }
    Ok(())
}

/// One round of a threshold method from precomputed calibration residuals.
///
/// `center` is the point prediction for the target. `weights` supplies the
/// kernel simplex for kernel methods without their own spatial state.
pub fn step_scored(
    state: &mut MethodState,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    calib: &CalibRound,
    center: f64,
    weights: Option<&[f64]>,
) -> Result<PredictionRecord> {
    if state.kind != cfg.kind {
        return Err(invalid(format!("state is {} but config is {}", state.kind, cfg.kind)));
    }
    if cfg.kind == MethodKind::LpciLite {
        return Err(invalid("LPCI-lite steps need the shared residual pool; use lpci_lite_step"));
    }
    absorb_lagged(state, batch)?;
    let record = if cfg.kind == MethodKind::TqaB {
        tqa_b::step(state, cfg, batch, calib, center)?
    } else {
        let alpha_t = state.alpha_t().unwrap_or(cfg.alpha);
        let own;
        let w: &[f64] = if cfg.kind.uses_kernel_weights() {
            match (&state.spatial, weights) {
                (Some(spatial), _) => {
                    own = spatial.kernel_weights();
                    &own
                }
                (None, Some(w)) => w,
                (None, None) => return Err(invalid("kernel method needs spatial state or supplied weights")),
            }
        } else {
            own = conformal::uniform_weights(calib.scores.len());
            &own
        };
        let (raw, deployed) = conformal::calibrate(&calib.scores, w, alpha_t)?;
        build_record(batch.round, center, alpha_t, raw, deployed)
    };
    if let Some(spatial) = state.spatial.as_mut() {
        spatial.update_running_mean(batch.calib_pairs.iter().map(|(x, _)| *x).chain(std::iter::once(batch.target_x)))?;
    }
    state.last_record = Some(record.clone());
    Ok(record)
}

/// One round of Split CP, W-only, TQA-only, W-TQA or TQA-B.
pub fn method_step(
    state: &mut MethodState,
    cfg: &MethodConfig,
    batch: &RoundBatch<'_>,
    predictor: &Predictor,
) -> Result<PredictionRecord> {
    let calib = score_calibration(batch, predictor)?;
    let center = predictor.predict(batch.target_x, batch.context)?;
    step_scored(state, cfg, batch, &calib, center, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_from_ids_and_labels() {
        for kind in MethodKind::ALL {
            assert_eq!(kind.id().parse::<MethodKind>().unwrap(), kind);
            assert_eq!(kind.label().parse::<MethodKind>().unwrap(), kind);
        }
        assert!("aci".parse::<MethodKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(MethodConfig::default().validate().is_ok());
        assert!(MethodConfig { alpha: 1.0, ..MethodConfig::default() }.validate().is_err());
        assert!(MethodConfig { h: 0.0, ..MethodConfig::default() }.validate().is_err());
        assert!(MethodConfig { gamma: -0.1, ..MethodConfig::default() }.validate().is_err());
    }
}
