//! Recompute metrics and figures from a stored traces file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use wtqa_core::conformal::PredictionRecord;
use wtqa_core::engine::TargetTrace;
use wtqa_core::methods::MethodKind;
use wtqa_core::metrics::coverage_stats;

use crate::config::SweepAxis;
use crate::error::HarnessError;
use crate::output::{Collector, TraceRow};

/// Group key of one method trace set.
type Key = (u64, usize, String); // axis value bits, rep, method

fn record(row: &TraceRow) -> PredictionRecord {
    PredictionRecord {
        round: row.round,
        center: row.center,
        lower: row.lower,
        upper: row.upper,
        alpha_t: row.alpha_t,
        deployed_level: row.deployed_level,
        raw: None,
        provenance: row.provenance,
        boundary: row.boundary,
        covered: Some(row.covered),
        raw_covered: Some(row.raw_covered),
    }
}

/// Rebuild the results tables and figures of `traces` into `out`.
pub fn report_from_traces(traces: &Path, out: &Path, tail_fraction: f64) -> Result<Vec<PathBuf>, HarnessError> {
    let mut rdr = csv::Reader::from_path(traces)?;
    let mut groups: Vec<(Key, u64, Vec<TargetTrace>, usize, usize)> = Vec::new(); // key, seed, traces, revealed, rounds
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut header: Option<(String, String)> = None;
    for row in rdr.deserialize::<TraceRow>() {
        let row = row?;
        if header.is_none() {
            header = Some((row.dataset.clone(), row.axis.clone()));
        }
        let key = (row.axis_value.to_bits(), row.rep, row.method.clone());
        let idx = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, row.seed, Vec::new(), 0, 0));
            groups.len() - 1
        });
        let group = &mut groups[idx];
        let target = match group.2.iter_mut().position(|t| t.unit == row.unit) {
            Some(i) => &mut group.2[i],
            None => {
                group.2.push(TargetTrace {
                    unit: row.unit,
                    records: Vec::new(),
                    labels: Vec::new(),
                    closing_alpha: None,
                });
                group.2.last_mut().unwrap()
            }
        };
        target.records.push(record(&row));
        target.labels.push(row.y);
        if group.2.len() == 1 {
            group.3 += usize::from(row.revealed);
            group.4 += 1;
        }
    }
    let (dataset, axis) = header.ok_or_else(|| HarnessError::Report(format!("{} has no rows", traces.display())))?;
    let axis = match axis.as_str() {
        "run" => None,
        other => Some(other.parse::<SweepAxis>()?),
    };
    let mut collector = Collector::new(&dataset, axis);
    for ((value, rep, method), seed, targets, revealed, rounds) in groups {
        let kind: MethodKind = method.parse().map_err(|e: wtqa_core::Error| HarnessError::Report(e.to_string()))?;
        let metrics = coverage_stats(&targets, tail_fraction)?;
        collector.add_metrics(f64::from_bits(value), rep, seed, kind, &metrics, revealed as f64 / rounds.max(1) as f64);
    }
    collector.finish(out)
}

/// Locate the single `*_traces.csv` file in `dir`.
pub fn find_traces(dir: &Path) -> Result<PathBuf, HarnessError> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::output(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_traces.csv")))
        .collect();
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(HarnessError::Report(format!("no *_traces.csv in {}", dir.display()))),
        _ => Err(HarnessError::Report(format!(
            "several traces files in {}; pass one with --traces",
            dir.display()
        ))),
    }
}
