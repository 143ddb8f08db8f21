//! Coverage, tail coverage, width and deployment diagnostics over resolved traces.

use serde::{Deserialize, Serialize};

use crate::conformal::{Boundary, PredictionRecord, Provenance};
use crate::engine::TargetTrace;
use crate::error::{invalid, Result};

pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

/// Mean of the worst `ceil(frac * n)` per-unit coverages.
pub fn tail_coverage(per_unit: &[f64], frac: f64) -> Result<f64> {
    if per_unit.is_empty() {
        return Err(invalid("tail coverage of an empty vector"));
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(invalid(format!("tail fraction {frac} outside (0, 1]")));
    }
    let mut sorted = per_unit.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    // guard against frac * n landing a hair above an integer
    let k = ((frac * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Population sd over mean.
pub fn width_cov(widths: &[f64]) -> Result<f64> {
    if widths.is_empty() {
        return Err(invalid("width CoV of an empty vector"));
    }
    let n = widths.len() as f64;
    let mean = widths.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(invalid(format!("width CoV needs a positive mean width, got {mean}")));
    }
    let var = widths.iter().map(|w| (w - mean) * (w - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// Mean and sample sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, sd: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary { mean, sd, n }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_coverage: f64,
    pub tail_coverage: f64,
    pub avg_width: f64,
    pub width_cov: f64,
    pub lower_boundary_rate: f64,
    pub upper_boundary_rate: f64,
    pub sentinel_fallback_rate: f64,
    pub per_unit_coverage: Vec<f64>,
    /// Tail coverage over rounds `1..=r`, one entry per round.
    pub cumulative_tail_curve: Vec<f64>,
}

fn covered(record: &PredictionRecord) -> Result<bool> {
    record
        .covered
        .ok_or_else(|| invalid(format!("round {} has no resolved coverage", record.round)))
}

/// Metrics over the traces of one method (one trace per test unit).
pub fn coverage_stats(traces: &[TargetTrace], tail_frac: f64) -> Result<MetricsReport> {
    if traces.is_empty() || traces.iter().any(|t| t.records.is_empty()) {
        return Err(invalid("coverage stats need at least one record per unit"));
    }
    let rounds = traces[0].records.len();
    if traces.iter().any(|t| t.records.len() != rounds) {
        return Err(invalid("units have different numbers of rounds"));
    }
    let mut hits = vec![vec![false; rounds]; traces.len()];
    let mut widths = Vec::with_capacity(traces.len() * rounds);
    let (mut lower, mut upper, mut sentinel) = (0usize, 0usize, 0usize);
    for (u, trace) in traces.iter().enumerate() {
        for (r, record) in trace.records.iter().enumerate() {
            hits[u][r] = covered(record)?;
            widths.push(record.width());
            match record.boundary {
                Some(Boundary::Lower) => lower += 1,
                Some(Boundary::Upper) => upper += 1,
                None => {}
            }
            if record.provenance == Provenance::SentinelFallback {
                sentinel += 1;
            }
        }
    }
    let total = (traces.len() * rounds) as f64;
    let per_unit: Vec<f64> = hits
        .iter()
        .map(|h| h.iter().filter(|&&c| c).count() as f64 / rounds as f64)
        .collect();
    let mut prefix_hits = vec![0usize; traces.len()];
    let mut curve = Vec::with_capacity(rounds);
    for r in 0..rounds {
        for (u, h) in hits.iter().enumerate() {
            prefix_hits[u] += usize::from(h[r]);
        }
        let prefix: Vec<f64> = prefix_hits.iter().map(|&c| c as f64 / (r + 1) as f64).collect();
        curve.push(tail_coverage(&prefix, tail_frac)?);
    }
    let hits_total: usize = hits.iter().flatten().filter(|&&c| c).count();
    let mean_width = widths.iter().sum::<f64>() / total;
    Ok(MetricsReport {
        avg_coverage: hits_total as f64 / total,
        tail_coverage: tail_coverage(&per_unit, tail_frac)?,
        avg_width: mean_width,
        width_cov: if mean_width > 0.0 { width_cov(&widths)? } else { 0.0 },
        lower_boundary_rate: lower as f64 / total,
        upper_boundary_rate: upper as f64 / total,
        sentinel_fallback_rate: sentinel as f64 / total,
        per_unit_coverage: per_unit,
        cumulative_tail_curve: curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_examples() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(tail_coverage(&v, 0.1).unwrap(), 0.0);
        assert_eq!(tail_coverage(&[0.7; 5], 0.1).unwrap(), 0.7);
        let v: Vec<f64> = (0..30).rev().map(|i| i as f64).collect();
        assert_eq!(tail_coverage(&v, 0.1).unwrap(), 1.0);
        assert!(tail_coverage(&[], 0.1).is_err());
        assert!(tail_coverage(&[1.0], 0.0).is_err());
    }

    #[test]
    fn width_cov_examples() {
        assert_eq!(width_cov(&[2.0; 4]).unwrap(), 0.0);
        assert!((width_cov(&[1.0, 3.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(width_cov(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn summary_uses_sample_sd() {
        let s = summarize(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[5.0]).sd, 0.0);
    }
}
