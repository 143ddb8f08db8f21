//! Result tables, curves, summaries and figures.
//!
//! Files are named `{dataset}_{axis}_...` where the axis is `run` for a
//! single-cell experiment. Figures are drawn from the aggregated tables only,
//! so `wtqa report` can redraw them from stored traces.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use wtqa_core::conformal::{Boundary, Provenance};
use wtqa_core::methods::MethodKind;
use wtqa_core::metrics::{summarize, MetricsReport};

use crate::config::SweepAxis;
use crate::error::HarnessError;
use crate::experiment::{axis_value, RepOutcome};
use crate::svg::{line_chart, Series};

pub fn axis_id(axis: Option<SweepAxis>) -> &'static str {
    axis.map_or("run", SweepAxis::id)
}

/// One `(cell, replication, method)` row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub axis: String,
    pub axis_value: f64,
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub avg_coverage: f64,
    pub tail_coverage: f64,
    pub avg_width: f64,
    pub width_cov: f64,
    pub lower_boundary_rate: f64,
    pub upper_boundary_rate: f64,
    pub sentinel_fallback_rate: f64,
    pub reveal_rate: f64,
}

const METRICS: [&str; 7] = [
    "avg_coverage",
    "tail_coverage",
    "avg_width",
    "width_cov",
    "lower_boundary_rate",
    "upper_boundary_rate",
    "sentinel_fallback_rate",
];

impl ResultRow {
    fn metric(&self, name: &str) -> f64 {
        match name {
            "avg_coverage" => self.avg_coverage,
            "tail_coverage" => self.tail_coverage,
            "avg_width" => self.avg_width,
            "width_cov" => self.width_cov,
            "lower_boundary_rate" => self.lower_boundary_rate,
            "upper_boundary_rate" => self.upper_boundary_rate,
            "sentinel_fallback_rate" => self.sentinel_fallback_rate,
            _ => unreachable!("unknown metric {name}"),
        }
    }
}

/// One prediction of one method on one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub dataset: String,
    pub axis: String,
    pub axis_value: f64,
    pub rep: usize,
    pub seed: u64,
    pub method: String,
    pub unit: usize,
    pub round: usize,
    pub revealed: bool,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha_t: f64,
    pub deployed_level: f64,
    pub provenance: Provenance,
    pub boundary: Option<Boundary>,
    pub y: f64,
    pub covered: bool,
    pub raw_covered: bool,
}

/// Accumulates per-replication metrics (and optionally traces) in order.
pub struct Collector {
    pub dataset: String,
    pub axis: Option<SweepAxis>,
    pub rows: Vec<ResultRow>,
    /// `(axis_value, method) -> (sum of cumulative tail curves, count)`.
    curves: Vec<(f64, MethodKind, Vec<f64>, usize)>,
    /// `(axis_value, correlation)` of informative schedules.
    correlations: Vec<(f64, f64)>,
    traces: Option<csv::Writer<BufWriter<File>>>,
    trace_path: Option<PathBuf>,
}

impl Collector {
    pub fn new(dataset: &str, axis: Option<SweepAxis>) -> Self {
        Self {
            dataset: dataset.to_string(),
            axis,
            rows: Vec::new(),
            curves: Vec::new(),
            correlations: Vec::new(),
            traces: None,
            trace_path: None,
        }
    }

    pub fn stem(&self) -> String {
        format!("{}_{}", self.dataset, axis_id(self.axis))
    }

    /// Stream traces to `{out}/{stem}_traces.csv`.
    pub fn with_traces(mut self, out: &Path) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(out).map_err(|e| HarnessError::output(out, e))?;
        let path = out.join(format!("{}_traces.csv", self.stem()));
        let file = File::create(&path).map_err(|e| HarnessError::output(&path, e))?;
        self.traces = Some(csv::Writer::from_writer(BufWriter::new(file)));
        self.trace_path = Some(path);
        Ok(self)
    }

    pub fn add_metrics(&mut self, value: f64, rep: usize, seed: u64, kind: MethodKind, m: &MetricsReport, reveal_rate: f64) {
        self.rows.push(ResultRow {
            dataset: self.dataset.clone(),
            axis: axis_id(self.axis).into(),
            axis_value: value,
            rep,
            seed,
            method: kind.id().into(),
            avg_coverage: m.avg_coverage,
            tail_coverage: m.tail_coverage,
            avg_width: m.avg_width,
            width_cov: m.width_cov,
            lower_boundary_rate: m.lower_boundary_rate,
            upper_boundary_rate: m.upper_boundary_rate,
            sentinel_fallback_rate: m.sentinel_fallback_rate,
            reveal_rate,
        });
        match self.curves.iter_mut().find(|(v, k, _, _)| *v == value && *k == kind) {
            Some((_, _, sum, n)) => {
                for (s, c) in sum.iter_mut().zip(&m.cumulative_tail_curve) {
                    *s += c;
                }
                *n += 1;
            }
            None => self.curves.push((value, kind, m.cumulative_tail_curve.clone(), 1)),
        }
    }

    pub fn add_correlation(&mut self, value: f64, correlation: f64) {
        self.correlations.push((value, correlation));
    }

    pub fn absorb(&mut self, outcome: RepOutcome) -> Result<(), HarnessError> {
        for cell in &outcome.cells {
            let value = axis_value(self.axis, &cell.cell);
            if let Some(c) = cell.correlation {
                self.add_correlation(value, c);
            }
            for method in &cell.methods {
                self.add_metrics(value, outcome.rep, outcome.seed, method.kind, &method.metrics, cell.reveal_rate);
                if let (Some(writer), Some(targets)) = (self.traces.as_mut(), method.traces.as_ref()) {
                    for target in targets {
                        for (record, &y) in target.records.iter().zip(&target.labels) {
                            writer.serialize(TraceRow {
                                dataset: self.dataset.clone(),
                                axis: axis_id(self.axis).into(),
                                axis_value: value,
                                rep: outcome.rep,
                                seed: outcome.seed,
                                method: method.kind.id().into(),
                                unit: target.unit,
                                round: record.round,
                                revealed: cell.schedule.revealed(record.round),
                                center: record.center,
                                lower: record.lower,
                                upper: record.upper,
                                alpha_t: record.alpha_t,
                                deployed_level: record.deployed_level,
                                provenance: record.provenance,
                                boundary: record.boundary,
                                y,
                                covered: record.covered.unwrap_or(false),
                                raw_covered: record.raw_covered.unwrap_or(false),
                            })?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn methods(&self) -> Vec<MethodKind> {
        let mut kinds: Vec<MethodKind> = Vec::new();
        for (_, k, _, _) in &self.curves {
            if !kinds.contains(k) {
                kinds.push(*k);
            }
        }
        kinds
    }

    fn values(&self) -> Vec<f64> {
        let mut values: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !values.contains(&r.axis_value) {
                values.push(r.axis_value);
            }
        }
        values
    }

    /// Mean and sd of `metric` for one cell and method.
    pub fn cell_summary(&self, value: f64, kind: MethodKind, metric: &str) -> wtqa_core::metrics::Summary {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.axis_value == value && r.method == kind.id())
            .map(|r| r.metric(metric))
            .collect();
        summarize(&v)
    }

    pub fn summary_json(&self) -> Value {
        let mut cells = Vec::new();
        for value in self.values() {
            let mut methods = Map::new();
            for kind in self.methods() {
                let mut metrics = Map::new();
                for name in METRICS {
                    let s = self.cell_summary(value, kind, name);
                    metrics.insert(name.into(), json!({ "mean": s.mean, "sd": s.sd, "n": s.n }));
                }
                methods.insert(kind.id().into(), Value::Object(metrics));
            }
            let reveal: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.axis_value == value)
                .map(|r| r.reveal_rate)
                .collect();
            let corr: Vec<f64> = self.correlations.iter().filter(|(v, _)| *v == value).map(|(_, c)| *c).collect();
            let reveal = summarize(&reveal);
            let mut cell = json!({
                "axis_value": value,
                "reveal_rate": reveal.mean,
                "methods": methods,
            });
            if !corr.is_empty() {
                let c = summarize(&corr);
                cell["reveal_difficulty_correlation"] = json!({ "mean": c.mean, "sd": c.sd, "n": c.n });
            }
            cells.push(cell);
        }
        json!({
            "dataset": self.dataset,
            "axis": axis_id(self.axis),
            "cells": cells,
        })
    }

    /// Write tables, summary and figures; returns the written paths.
    pub fn finish(mut self, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        if self.rows.is_empty() {
            return Err(HarnessError::Report("no results to write".into()));
        }
        std::fs::create_dir_all(out).map_err(|e| HarnessError::output(out, e))?;
        let mut written = Vec::new();
        if let (Some(mut w), Some(path)) = (self.traces.take(), self.trace_path.take()) {
            w.flush().map_err(|e| HarnessError::output(&path, e))?;
            written.push(path);
        }
        let stem = self.stem();
        for kind in self.methods() {
            let path = out.join(format!("{stem}_{}.csv", kind.id()));
            let mut w = csv::Writer::from_path(&path)?;
            for row in self.rows.iter().filter(|r| r.method == kind.id()) {
                w.serialize(row)?;
            }
            w.flush().map_err(|e| HarnessError::output(&path, e))?;
            written.push(path);
        }

        let path = out.join(format!("{stem}_curves.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["axis_value", "method", "round", "cumulative_tail"])?;
        for (value, kind, sum, n) in &self.curves {
            for (r, s) in sum.iter().enumerate() {
                w.write_record([value.to_string(), kind.id().into(), (r + 1).to_string(), (s / *n as f64).to_string()])?;
            }
        }
        w.flush().map_err(|e| HarnessError::output(&path, e))?;
        written.push(path);

        let path = out.join(format!("{stem}_summary.json"));
        let text = serde_json::to_string_pretty(&self.summary_json()).expect("summary serializes");
        std::fs::write(&path, text + "\n").map_err(|e| HarnessError::output(&path, e))?;
        written.push(path);

        for value in self.values() {
            let series: Vec<Series> = self
                .curves
                .iter()
                .filter(|(v, _, _, _)| *v == value)
                .map(|(_, kind, sum, n)| Series {
                    label: kind.label().into(),
                    points: sum.iter().enumerate().map(|(r, s)| ((r + 1) as f64, s / *n as f64)).collect(),
                })
                .collect();
            let (name, title) = match self.axis {
                None => (format!("{stem}_cumulative_tail.svg"), format!("{}: cumulative tail coverage", self.dataset)),
                Some(axis) => (
                    format!("{stem}_cumulative_tail_{}{}.svg", axis.id(), value),
                    format!("{}: cumulative tail coverage, {} = {value}", self.dataset, axis.id()),
                ),
            };
            let path = out.join(name);
            std::fs::write(&path, line_chart(&title, "round", "tail coverage", &series))
                .map_err(|e| HarnessError::output(&path, e))?;
            written.push(path);
        }
        if let Some(axis) = self.axis {
            let series: Vec<Series> = self
                .methods()
                .into_iter()
                .map(|kind| Series {
                    label: kind.label().into(),
                    points: self
                        .values()
                        .into_iter()
                        .map(|v| (v, self.cell_summary(v, kind, "tail_coverage").mean))
                        .collect(),
                })
                .collect();
            let path = out.join(format!("{stem}_tail_vs_{}.svg", axis.id()));
            let title = format!("{}: tail coverage vs {}", self.dataset, axis.id());
            std::fs::write(&path, line_chart(&title, axis.id(), "tail coverage", &series))
                .map_err(|e| HarnessError::output(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
