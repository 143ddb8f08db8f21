//! Replications and sweeps.
//!
//! A replication draws (or loads) one panel, splits it, fits the burn-in
//! predictor and runs every method for each grid cell. Sweeps over `p` reuse
//! one panel per replication and draw every reveal schedule from the same
//! uniforms, so schedules for larger `p` reveal a superset of rounds.

use std::borrow::Cow;

use rayon::prelude::*;
use wtqa_core::engine::{fit_burn_in_predictor, run_online, test_difficulties, TargetTrace};
use wtqa_core::feedback::{informative_schedule, mcar_schedule, rank_to_z, FeedbackSchedule};
use wtqa_core::methods::MethodKind;
use wtqa_core::metrics::{coverage_stats, MetricsReport};
use wtqa_core::panel::{load_panel_csv, random_unit_split, stratified_unit_split, Panel, PanelCsvSchema, UnitSplit};
use wtqa_core::predictor::{Predictor, RidgeMode};
use wtqa_core::synth::{make_structure, simulate_panel, ScenarioSpec, StructureTemplates, MAJORITY_TAG};

use crate::config::{ExperimentConfig, FeedbackKind, SweepAxis};
use crate::error::HarnessError;

/// Source of the per-replication panels.
pub enum Dataset {
    Synthetic { spec: ScenarioSpec, templates: StructureTemplates },
    Csv { panel: Panel },
}

impl Dataset {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        match &cfg.data.panel {
            None => {
                let spec = ScenarioSpec::new(cfg.data.scenario);
                let templates = make_structure(cfg.seeds.structure_seed, &spec)?;
                Ok(Dataset::Synthetic { spec, templates })
            }
            Some(path) => {
                let schema = PanelCsvSchema {
                    burn_in_end: cfg.data.burn_in_end,
                    ..PanelCsvSchema::default()
                };
                let panel = load_panel_csv(path, &schema)
                    .map_err(|e| HarnessError::Config(format!("cannot load panel {}: {e}", path.display())))?;
                Ok(Dataset::Csv { panel })
            }
        }
    }
}

/// One replication's panel, split and fixed predictor.
pub struct Replication<'a> {
    pub rep: usize,
    pub seed: u64,
    pub panel: Cow<'a, Panel>,
    pub split: UnitSplit,
    pub predictor: Predictor,
}

impl<'a> Replication<'a> {
    pub fn new(cfg: &ExperimentConfig, dataset: &'a Dataset, rep: usize) -> Result<Self, HarnessError> {
        let seed = cfg.seeds.base_rep_seed + rep as u64;
        let (panel, split, mode) = match dataset {
            Dataset::Synthetic { spec, templates } => {
                let (panel, _) = simulate_panel(templates, spec, seed)?;
                let split = stratified_unit_split(&panel, MAJORITY_TAG, cfg.split.n_test, seed)?;
                (Cow::Owned(panel), split, RidgeMode::SyntheticFactor)
            }
            Dataset::Csv { panel } => {
                let n_calib = cfg
                    .split
                    .n_calib
                    .unwrap_or_else(|| panel.n_units().saturating_sub(cfg.split.n_test));
                let split = random_unit_split(panel, n_calib, cfg.split.n_test, seed)?;
                (Cow::Borrowed(panel), split, RidgeMode::RealData)
            }
        };
        let predictor = fit_burn_in_predictor(&panel, &split, cfg.data.ridge_lambda, mode)?;
        Ok(Self {
            rep,
            seed,
            panel,
            split,
            predictor,
        })
    }

    /// Reveal schedule for reveal probability `p` (MCAR) or the configured
    /// mechanism. The schedule seed is the replication seed, which couples
    /// MCAR schedules across `p`.
    pub fn schedule(&self, mode: FeedbackKind, p: f64, cfg: &ExperimentConfig) -> Result<Schedule, HarnessError> {
        let horizon = self.panel.conformal_len();
        Ok(match mode {
            FeedbackKind::Full => Schedule {
                schedule: FeedbackSchedule::full(horizon),
                correlation: None,
            },
            FeedbackKind::Mcar => Schedule {
                schedule: mcar_schedule(p, horizon, self.seed)?,
                correlation: None,
            },
            FeedbackKind::Informative => {
                let difficulties = test_difficulties(&self.panel, &self.split, &self.predictor)?;
                let schedule = informative_schedule(&difficulties, cfg.feedback.direction, self.seed)?;
                let correlation = pearson(&schedule.probabilities, &rank_to_z(&difficulties));
                Schedule { schedule, correlation }
            }
        })
    }
}

pub struct Schedule {
    pub schedule: FeedbackSchedule,
    /// Correlation of reveal probability with the difficulty score.
    pub correlation: Option<f64>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mode: FeedbackKind,
    pub p: f64,
    pub h: f64,
    pub gamma: f64,
}

/// Grid of a plain run (one cell) or of a one-axis sweep.
pub fn cells(cfg: &ExperimentConfig, axis: Option<SweepAxis>) -> Vec<Cell> {
    let base = Cell {
        mode: cfg.feedback.mode,
        p: cfg.feedback.p,
        h: cfg.h,
        gamma: cfg.gamma,
    };
    match axis {
        None => vec![base],
        Some(SweepAxis::P) => cfg
            .sweep
            .p_grid
            .iter()
            .map(|&p| Cell {
                mode: FeedbackKind::Mcar,
                p,
                ..base
            })
            .collect(),
        Some(SweepAxis::H) => cfg.sweep.h_grid.iter().map(|&h| Cell { h, ..base }).collect(),
        Some(SweepAxis::Gamma) => cfg.sweep.gamma_grid.iter().map(|&gamma| Cell { gamma, ..base }).collect(),
    }
}

pub fn axis_value(axis: Option<SweepAxis>, cell: &Cell) -> f64 {
    match axis {
        None | Some(SweepAxis::P) => cell.p,
        Some(SweepAxis::H) => cell.h,
        Some(SweepAxis::Gamma) => cell.gamma,
    }
}

pub struct MethodOutcome {
    pub kind: MethodKind,
    pub metrics: MetricsReport,
    /// Kept only when traces are saved.
    pub traces: Option<Vec<TargetTrace>>,
}

pub struct CellOutcome {
    pub cell: Cell,
    pub reveal_rate: f64,
    pub correlation: Option<f64>,
    pub schedule: FeedbackSchedule,
    pub methods: Vec<MethodOutcome>,
}

pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub cells: Vec<CellOutcome>,
}

/// Run every cell on replication `rep`. Deterministic in `(cfg, rep)`.
pub fn run_replication(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    rep: usize,
    cells: &[Cell],
) -> Result<RepOutcome, HarnessError> {
    let replication = Replication::new(cfg, dataset, rep)?;
    let mut outcomes = Vec::with_capacity(cells.len());
    for cell in cells {
        let Schedule { schedule, correlation } = replication.schedule(cell.mode, cell.p, cfg)?;
        let methods = cfg.method_configs(cell.h, cell.gamma);
        let traces = run_online(
            &replication.panel,
            &replication.split,
            &replication.predictor,
            &schedule,
            &methods,
            cfg.spatial_scaling,
        )?;
        let methods = traces
            .into_iter()
            .map(|trace| {
                Ok(MethodOutcome {
                    kind: trace.config.kind,
                    metrics: coverage_stats(&trace.targets, cfg.tail_fraction)?,
                    traces: cfg.save_traces.then_some(trace.targets),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        outcomes.push(CellOutcome {
            cell: *cell,
            reveal_rate: schedule.reveal_count() as f64 / schedule.horizon() as f64,
            correlation,
            schedule,
            methods,
        });
    }
    Ok(RepOutcome {
        rep,
        seed: replication.seed,
        cells: outcomes,
    })
}

/// Run all replications over `cells`, handing outcomes to `sink` in
/// replication order. Replications run in parallel batches; the result does
/// not depend on the thread count.
pub fn run_cells(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    mut sink: impl FnMut(RepOutcome) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    cfg.validate()?;
    if cells.is_empty() {
        return Err(HarnessError::Config("empty grid".into()));
    }
    let dataset = Dataset::prepare(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let batch = pool.current_num_threads().max(1);
    let reps: Vec<usize> = (0..cfg.reps).collect();
    for chunk in reps.chunks(batch) {
        let outcomes: Vec<Result<RepOutcome, HarnessError>> =
            pool.install(|| chunk.par_iter().map(|&rep| run_replication(cfg, &dataset, rep, cells)).collect());
        for outcome in outcomes {
            sink(outcome?)?;
        }
    }
    Ok(())
}
