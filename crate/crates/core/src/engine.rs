//! Runs every configured method over the conformal period of a split panel.
//!
//! Rounds are processed in time order. Within a round each target gets its
//! own batch and its own method states; calibration residuals, the target's
//! point prediction and the peer running means are computed once and shared.

use crate::conformal::PredictionRecord;
use crate::error::{invalid, Result};
use crate::feedback::FeedbackSchedule;
use crate::methods::{
    lpci::lpci_step_scored, settle_feedback, step_scored, BurnIn, CalibRound, LpciPool, MethodConfig, MethodKind,
    MethodState,
};
use crate::panel::{stream_round, Panel, UnitSplit};
use crate::predictor::{fit_ridge, Predictor, RidgeMode, Row};
use crate::spatial::{kernel_simplex, PeerMeans, Standardizer, TargetMean};

/// Fit the point predictor on the calibration units' burn-in rows.
pub fn fit_burn_in_predictor(panel: &Panel, split: &UnitSplit, lambda: f64, mode: RidgeMode) -> Result<Predictor> {
    let rows: Vec<Row> = split
        .calib_ids
        .iter()
        .flat_map(|&i| {
            (0..panel.burn_in_end()).map(move |t| Row {
                x: panel.x(i, t),
                context: panel.context(t),
                y: panel.y(i, t),
            })
        })
        .collect();
    fit_ridge(&rows, lambda, mode)
}

/// Signed burn-in residuals of the calibration units.
pub fn burn_in_residuals(panel: &Panel, split: &UnitSplit, predictor: &Predictor) -> Result<BurnIn> {
    let calib_signed = split
        .calib_ids
        .iter()
        .map(|&i| {
            (0..panel.burn_in_end())
                .map(|t| Ok(panel.y(i, t) - predictor.predict(panel.x(i, t), panel.context(t))?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BurnIn { calib_signed })
}

/// Mean absolute test-unit residual per conformal round (the difficulty
/// signal of the informative feedback mechanism).
pub fn test_difficulties(panel: &Panel, split: &UnitSplit, predictor: &Predictor) -> Result<Vec<f64>> {
    if split.test_ids.is_empty() {
        return Err(invalid("no test units"));
    }
    (panel.burn_in_end()..panel.horizon())
        .map(|t| {
            let total = split
                .test_ids
                .iter()
                .map(|&i| Ok((panel.y(i, t) - predictor.predict(panel.x(i, t), panel.context(t))?).abs()))
                .sum::<Result<f64>>()?;
            Ok(total / split.test_ids.len() as f64)
        })
        .collect()
}

/// How running means are standardized before measuring kernel distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialScaling {
    /// Cross-unit sd of the running means at the current round.
    CurrentRound,
    /// Per-coordinate sd of the calibration units' burn-in features, fixed.
    #[default]
    BurnIn,
}

/// Per-coordinate population sd of the calibration units' burn-in features.
pub fn burn_in_feature_scales(panel: &Panel, split: &UnitSplit) -> Vec<f64> {
    let d = panel.feature_dim();
    let n = (split.calib_ids.len() * panel.burn_in_end()) as f64;
    let mut mean = vec![0.0; d];
    for &i in &split.calib_ids {
        for t in 0..panel.burn_in_end() {
            for (m, v) in mean.iter_mut().zip(panel.x(i, t)) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for &i in &split.calib_ids {
        for t in 0..panel.burn_in_end() {
            for ((s, v), m) in var.iter_mut().zip(panel.x(i, t)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    var.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// Records of one method on one target, resolved against the hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrace {
    pub unit: usize,
    pub records: Vec<PredictionRecord>,
    pub labels: Vec<f64>,
    /// Post-horizon level `alpha_{T+1}` for adaptive methods.
    pub closing_alpha: Option<f64>,
}

impl TargetTrace {
    /// `(R_t, loss_t)` pairs of the level recursion, losses on the raw sets.
    pub fn loss_trace(&self, feedback: &FeedbackSchedule) -> Vec<(bool, f64)> {
        self.records
            .iter()
            .zip(&self.labels)
            .map(|(r, &y)| (feedback.revealed(r.round), if r.raw_loss(y) { 1.0 } else { 0.0 }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodTrace {
    pub config: MethodConfig,
    pub targets: Vec<TargetTrace>,
}

/// Run `methods` over the conformal period. Every record comes back
/// resolved (`covered`, `raw_covered`).
pub fn run_online(
    panel: &Panel,
    split: &UnitSplit,
    predictor: &Predictor,
    feedback: &FeedbackSchedule,
    methods: &[MethodConfig],
    scaling: SpatialScaling,
) -> Result<Vec<MethodTrace>> {
    if methods.is_empty() {
        return Err(invalid("no methods to run"));
    }
    if feedback.horizon() != panel.conformal_len() {
        return Err(invalid(format!(
            "feedback horizon {} does not match {} conformal rounds",
            feedback.horizon(),
            panel.conformal_len()
        )));
    }
    if split.calib_ids.is_empty() || split.test_ids.is_empty() {
        return Err(invalid("split needs calibration and test units"));
    }
    for cfg in methods {
        cfg.validate()?;
    }
    let n_calib = split.calib_ids.len();
    let dim = panel.feature_dim();
    let n_targets = split.test_ids.len();
    let needs_burn_in = methods.iter().any(|m| matches!(m.kind, MethodKind::TqaB | MethodKind::LpciLite));
    let burn_in = if needs_burn_in {
        Some(burn_in_residuals(panel, split, predictor)?)
    } else {
        None
    };

    let mut states: Vec<Vec<MethodState>> = methods
        .iter()
        .map(|cfg| {
            (0..n_targets)
                .map(|_| MethodState::new(cfg, n_calib, dim, false, burn_in.as_ref()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut pools: Vec<Option<LpciPool>> = methods
        .iter()
        .map(|cfg| match (cfg.kind, burn_in.as_ref()) {
            (MethodKind::LpciLite, Some(b)) => LpciPool::new(&cfg.lpci, cfg.alpha, b).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_>>()?;

    // distinct bandwidths among the kernel methods
    let mut bandwidths: Vec<f64> = Vec::new();
    for cfg in methods.iter().filter(|m| m.kind.uses_kernel_weights()) {
        if !bandwidths.contains(&cfg.h) {
            bandwidths.push(cfg.h);
        }
    }
    let mut peers = PeerMeans::new(n_calib, dim);
    let mut target_means: Vec<TargetMean> = (0..n_targets).map(|_| TargetMean::new(dim)).collect();
    let standardizer = match scaling {
        SpatialScaling::CurrentRound => Standardizer::CurrentRound,
        SpatialScaling::BurnIn => Standardizer::Frozen(burn_in_feature_scales(panel, split)),
    };

    let mut traces: Vec<Vec<TargetTrace>> = methods
        .iter()
        .map(|_| {
            split
                .test_ids
                .iter()
                .map(|&unit| TargetTrace {
                    unit,
                    records: Vec::with_capacity(panel.conformal_len()),
                    labels: Vec::with_capacity(panel.conformal_len()),
                    closing_alpha: None,
                })
                .collect()
        })
        .collect();

    for t in panel.burn_in_end()..panel.horizon() {
        let context = panel.context(t);
        let signed = split
            .calib_ids
            .iter()
            .map(|&i| Ok(panel.y(i, t) - predictor.predict(panel.x(i, t), context)?))
            .collect::<Result<Vec<f64>>>()?;
        let calib = CalibRound::from_signed(signed)?;
        for (j, &unit) in split.test_ids.iter().enumerate() {
            let batch = stream_round(panel, split, unit, feedback, t)?;
            let center = predictor.predict(batch.target_x, context)?;
            let kernel: Vec<Vec<f64>> = if bandwidths.is_empty() {
                Vec::new()
            } else if peers.t_count() == 0 {
                bandwidths.iter().map(|_| vec![1.0 / (n_calib + 1) as f64; n_calib + 1]).collect()
            } else {
                let sq = peers.sq_distances(target_means[j].get(), &standardizer);
                bandwidths.iter().map(|&h| kernel_simplex(&sq, h)).collect()
            };
            for (m, cfg) in methods.iter().enumerate() {
                let state = &mut states[m][j];
                let record = match cfg.kind {
                    MethodKind::LpciLite => {
                        let pool = pools[m].as_ref().ok_or_else(|| invalid("LPCI pool missing"))?;
                        lpci_step_scored(state, pool, cfg, &batch, &calib, center)?
                    }
                    kind => {
                        let weights = kind
                            .uses_kernel_weights()
                            .then(|| kernel[bandwidths.iter().position(|&h| h == cfg.h).expect("bandwidth listed")].as_slice());
                        step_scored(state, cfg, &batch, &calib, center, weights)?
                    }
                };
                traces[m][j].records.push(record);
                traces[m][j].labels.push(panel.y(unit, t));
            }
        }
        if !bandwidths.is_empty() {
            peers.update(split.calib_ids.iter().map(|&i| panel.x(i, t)))?;
            for (j, &unit) in split.test_ids.iter().enumerate() {
                target_means[j].update(panel.x(unit, t))?;
            }
        }
        let round = t - panel.burn_in_end() + 1;
        for (m, pool) in pools.iter_mut().enumerate() {
            if let Some(pool) = pool {
                pool.absorb_round(round, &calib, states[m].iter_mut().filter_map(|s| s.lpci.as_mut()))?;
            }
        }
    }

    // settle the last round's feedback so adaptive levels reach alpha_{T+1}
    let last_round = panel.conformal_len();
    let last_t = panel.horizon() - 1;
    for (m, method_states) in states.iter_mut().enumerate() {
        for (j, state) in method_states.iter_mut().enumerate() {
            if feedback.revealed(last_round) {
                if let Some(record) = state.last_record.clone() {
                    settle_feedback(state, &record, Some(panel.y(split.test_ids[j], last_t)));
                }
            }
            state.close()?;
            traces[m][j].closing_alpha = state.alpha_t();
        }
    }

    Ok(methods
        .iter()
        .zip(traces)
        .map(|(cfg, mut targets)| {
            for target in &mut targets {
                for (record, &y) in target.records.iter_mut().zip(&target.labels) {
                    record.resolve(y);
                }
            }
            MethodTrace { config: cfg.clone(), targets }
        })
        .collect())
}

/// Convenience: one configuration per kind with shared `alpha`, `h`, `gamma`.
pub fn default_methods(kinds: &[MethodKind], alpha: f64, h: f64, gamma: f64) -> Vec<MethodConfig> {
    kinds
        .iter()
        .map(|&kind| MethodConfig {
            kind,
            alpha,
            h,
            gamma,
            ..MethodConfig::default()
        })
        .collect()
}
