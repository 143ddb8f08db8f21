//! Experiment configuration, stored as TOML.
//!
//! Every field has a default, so an empty file is a valid configuration;
//! `wtqa run --print-config` dumps the resolved values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wtqa_core::engine::SpatialScaling;
use wtqa_core::feedback::InformativeDirection;
use wtqa_core::methods::{LpciConfig, MethodConfig, MethodKind, TqaBConfig};
use wtqa_core::synth::Scenario;

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    Full,
    Mcar,
    Informative,
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    P,
    H,
    Gamma,
}

impl SweepAxis {
    pub fn id(self) -> &'static str {
        match self {
            SweepAxis::P => "p",
            SweepAxis::H => "h",
            SweepAxis::Gamma => "gamma",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "p" => Ok(SweepAxis::P),
            "h" => Ok(SweepAxis::H),
            "gamma" | "γ" => Ok(SweepAxis::Gamma),
            other => Err(HarnessError::Config(format!("unknown sweep axis {other:?} (p, h or gamma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic scenario; ignored when `panel` is set.
    pub scenario: Scenario,
    /// Panel CSV (`unit_id,time_id,y,x_0..`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panel: Option<PathBuf>,
    /// First conformal time index of a CSV panel; half the horizon if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in_end: Option<usize>,
    /// Ridge penalty of the burn-in predictor.
    pub ridge_lambda: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Easy,
            panel: None,
            burn_in_end: None,
            ridge_lambda: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub mode: FeedbackKind,
    /// Reveal probability of `run` under MCAR.
    pub p: f64,
    pub direction: InformativeDirection,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            mode: FeedbackKind::Full,
            p: 1.0,
            direction: InformativeDirection::HardVisible,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Held-out targets per replication.
    pub n_test: usize,
    /// Calibration units for CSV panels; all remaining units if unset.
    /// Synthetic panels always calibrate on every non-target unit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_calib: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { n_test: 30, n_calib: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub structure_seed: u64,
    /// Replication `r` uses seed `base_rep_seed + r`.
    pub base_rep_seed: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            structure_seed: 20240501,
            base_rep_seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub p_grid: Vec<f64>,
    pub h_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            p_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            h_grid: vec![0.30, 0.45, 0.60, 0.90, 1.20],
            gamma_grid: vec![0.005, 0.010, 0.020, 0.040, 0.080],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<MethodKind>,
    pub alpha: f64,
    pub h: f64,
    pub gamma: f64,
    pub reps: usize,
    pub tail_fraction: f64,
    pub spatial_scaling: SpatialScaling,
    /// Write per-round traces (needed by `wtqa report`).
    pub save_traces: bool,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub data: DataConfig,
    pub feedback: FeedbackConfig,
    pub split: SplitConfig,
    pub seeds: SeedConfig,
    pub sweep: SweepConfig,
    pub tqa_b: TqaBConfig,
    pub lpci: LpciConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: MethodKind::ALL.to_vec(),
            alpha: 0.10,
            h: 0.60,
            gamma: 0.01,
            reps: 30,
            tail_fraction: 0.1,
            spatial_scaling: SpatialScaling::BurnIn,
            save_traces: true,
            out: PathBuf::from("results"),
            threads: 0,
            data: DataConfig::default(),
            feedback: FeedbackConfig::default(),
            split: SplitConfig::default(),
            seeds: SeedConfig::default(),
            sweep: SweepConfig::default(),
            tqa_b: TqaBConfig::default(),
            lpci: LpciConfig::default(),
        }
    }
}

fn check_grid(name: &str, grid: &[f64], ok: impl Fn(f64) -> bool) -> Result<(), HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Config(format!("{name} is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !ok(**v)) {
        return Err(HarnessError::Config(format!("{name} has invalid value {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short dataset name used in output file names.
    pub fn dataset_name(&self) -> String {
        match &self.data.panel {
            Some(path) => path.file_stem().map_or("panel".into(), |s| s.to_string_lossy().into_owned()),
            None => self.data.scenario.id().to_string(),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.data.panel.is_none()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("method list is empty".into()));
        }
        if self.reps == 0 {
            return Err(HarnessError::Config("reps must be at least 1".into()));
        }
        if self.split.n_test == 0 {
            return Err(HarnessError::Config("split.n_test must be at least 1".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(HarnessError::Config(format!("tail_fraction {} outside (0, 1]", self.tail_fraction)));
        }
        if !(0.0..=1.0).contains(&self.feedback.p) {
            return Err(HarnessError::Config(format!("feedback.p {} outside [0, 1]", self.feedback.p)));
        }
        if !(self.data.ridge_lambda >= 0.0 && self.data.ridge_lambda.is_finite()) {
            return Err(HarnessError::Config("data.ridge_lambda must be >= 0".into()));
        }
        check_grid("sweep.p_grid", &self.sweep.p_grid, |p| (0.0..=1.0).contains(&p))?;
        check_grid("sweep.h_grid", &self.sweep.h_grid, |h| h > 0.0 && h.is_finite())?;
        check_grid("sweep.gamma_grid", &self.sweep.gamma_grid, |g| g > 0.0 && g.is_finite())?;
        for cfg in self.method_configs(self.h, self.gamma) {
            cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn method_configs(&self, h: f64, gamma: f64) -> Vec<MethodConfig> {
        self.methods
            .iter()
            .map(|&kind| MethodConfig {
                kind,
                alpha: self.alpha,
                h,
                gamma,
                tqa_b: self.tqa_b.clone(),
                lpci: self.lpci.clone(),
            })
            .collect()
    }
}

/// Parse `0.2`, `0.1,0.2,0.4` or `0:1:0.2` (start:stop:step, inclusive).
pub fn parse_grid(text: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = || HarnessError::Config(format!("cannot parse grid {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let (start, stop, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // round to the step's precision so 0.2*3 prints as 0.6
        return Ok((0..=n).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|g| if g.is_empty() { Err(bad()) } else { Ok(g) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn customized_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![MethodKind::Wtqa, MethodKind::SplitCp];
        cfg.data.panel = Some("data/x.csv".into());
        cfg.data.burn_in_end = Some(12);
        cfg.feedback.mode = FeedbackKind::Informative;
        cfg.feedback.direction = InformativeDirection::EasyVisible;
        cfg.split.n_calib = Some(40);
        cfg.sweep.h_grid = vec![0.1, 0.3];
        cfg.alpha = 0.05;
        cfg.tqa_b.budget = Some(0.02);
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.dataset_name(), "x");
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.methods.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.p_grid = vec![1.5];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml("nonsense = 3").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.5").unwrap(), vec![0.5]);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert_eq!(parse_grid("0:1:0.2").unwrap(), vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
        assert!(parse_grid("a,b").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
    }
}
