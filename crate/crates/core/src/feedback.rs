//! Target-feedback reveal mechanisms.
//!
//! A schedule holds one reveal indicator per conformal round, shared by every
//! held-out target. `revealed(r)` says whether the outcome of round `r`
//! (one-based) is released after prediction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformativeDirection {
    HardVisible,
    EasyVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Full,
    Mcar { p: f64 },
    Informative { direction: InformativeDirection },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSchedule {
    pub mode: FeedbackMode,
    /// Per-round reveal probability used to draw `reveals`.
    pub probabilities: Vec<f64>,
    pub reveals: Vec<bool>,
    pub seed: u64,
}

impl FeedbackSchedule {
    pub fn full(horizon: usize) -> Self {
        Self {
            mode: FeedbackMode::Full,
            probabilities: vec![1.0; horizon],
            reveals: vec![true; horizon],
            seed: 0,
        }
    }

    /// MCAR with `p = 0`.
    pub fn none(horizon: usize) -> Self {
        Self {
            mode: FeedbackMode::Mcar { p: 0.0 },
            probabilities: vec![0.0; horizon],
            reveals: vec![false; horizon],
            seed: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.reveals.len()
    }

    /// Reveal flag for one-based `round`; rounds outside the schedule are hidden.
    pub fn revealed(&self, round: usize) -> bool {
        round >= 1 && self.reveals.get(round - 1).copied().unwrap_or(false)
    }

    pub fn reveal_count(&self) -> usize {
        self.reveals.iter().filter(|&&r| r).count()
    }
}

/// One uniform per round from the feedback stream of `seed`. Every MCAR
/// schedule with the same seed reuses these draws, so schedules for
/// different `p` are nested: `p1 <= p2` implies `reveals(p1) ⊆ reveals(p2)`.
fn round_uniforms(seed: u64, which: u64, horizon: usize) -> Vec<f64> {
    let mut rng = rng::stream(seed, Domain::Feedback, which, 0);
    (0..horizon).map(|_| rng.random::<f64>()).collect()
}

pub fn mcar_schedule(p: f64, horizon: usize, seed: u64) -> Result<FeedbackSchedule> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("reveal probability {p} outside [0, 1]")));
    }
    let reveals = round_uniforms(seed, 0, horizon)
        .into_iter()
        .map(|u| u < p)
        .collect();
    Ok(FeedbackSchedule {
        mode: FeedbackMode::Mcar { p },
        probabilities: vec![p; horizon],
        reveals,
        seed,
    })
}

pub fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Outcome-informative schedule: `p_t = sigmoid(±2 z_t)` with `z_t` the
/// centered rank of the per-round difficulty.
pub fn informative_schedule(
    difficulties: &[f64],
    direction: InformativeDirection,
    seed: u64,
) -> Result<FeedbackSchedule> {
    if difficulties.is_empty() {
        return Err(invalid("informative schedule needs at least one difficulty"));
    }
    let sign = match direction {
        InformativeDirection::HardVisible => 2.0,
        InformativeDirection::EasyVisible => -2.0,
    };
    let probabilities: Vec<f64> = rank_to_z(difficulties)
        .into_iter()
        .map(|z| sigmoid(sign * z))
        .collect();
    let reveals = round_uniforms(seed, 1, difficulties.len())
        .into_iter()
        .zip(&probabilities)
        .map(|(u, &p)| u < p)
        .collect();
    Ok(FeedbackSchedule {
        mode: FeedbackMode::Informative { direction },
        probabilities,
        reveals,
        seed,
    })
}

/// Centered rank score in `[-1, 1]`: `2 (rank - 1) / (n - 1) - 1` with
/// average ranks for ties; a single value maps to 0.
pub fn rank_to_z(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n <= 1 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // one-based ranks i+1..=j+1 share their average
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
        .into_iter()
        .map(|r| 2.0 * (r - 1.0) / (n - 1) as f64 - 1.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mcar_extremes() {
        assert!(mcar_schedule(1.0, 50, 3).unwrap().reveals.iter().all(|&r| r));
        assert!(mcar_schedule(0.0, 50, 3).unwrap().reveals.iter().all(|&r| !r));
        assert!(mcar_schedule(1.5, 5, 3).is_err());
        assert!(mcar_schedule(-0.1, 5, 3).is_err());
    }

    #[test]
    fn mcar_half_concentrates() {
        let s = mcar_schedule(0.5, 10_000, 11).unwrap();
        let mean = s.reveal_count() as f64 / 10_000.0;
        // sd of the mean is 0.005; 0.02 is four sd
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn mcar_schedules_are_nested_across_p() {
        let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
        let schedules: Vec<_> = grid.iter().map(|&p| mcar_schedule(p, 300, 5).unwrap()).collect();
        for w in schedules.windows(2) {
            for (a, b) in w[0].reveals.iter().zip(&w[1].reveals) {
                assert!(!a || *b);
            }
        }
    }

    #[test]
    fn rank_endpoints_and_ties() {
        assert_eq!(rank_to_z(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(rank_to_z(&[4.0, 4.0, 4.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(rank_to_z(&[7.0]), vec![0.0]);
        assert_eq!(rank_to_z(&[3.0, 1.0, 3.0]), vec![0.5, -1.0, 0.5]);
    }

    #[test]
    fn rank_matches_counting_oracle() {
        let mut rng = rng::stream(1, Domain::Test, 0, 0);
        let values: Vec<f64> = (0..40).map(|_| (rng.random::<f64>() * 10.0).floor()).collect();
        let z = rank_to_z(&values);
        let n = values.len() as f64;
        for (i, &v) in values.iter().enumerate() {
            let below = values.iter().filter(|&&w| w < v).count() as f64;
            let equal = values.iter().filter(|&&w| w == v).count() as f64;
            let rank = below + (equal + 1.0) / 2.0;
            assert!((z[i] - (2.0 * (rank - 1.0) / (n - 1.0) - 1.0)).abs() < 1e-12);
        }
        let mean = z.iter().sum::<f64>() / n;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn sigmoid_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn informative_direction_sets_sign() {
        let d: Vec<f64> = (0..200).map(|k| ((k * 37) % 200) as f64).collect();
        let hard = informative_schedule(&d, InformativeDirection::HardVisible, 1).unwrap();
        let easy = informative_schedule(&d, InformativeDirection::EasyVisible, 1).unwrap();
        let hardest = d.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((hard.probabilities[hardest] - sigmoid(2.0)).abs() < 1e-15);
        assert!((easy.probabilities[hardest] - sigmoid(-2.0)).abs() < 1e-15);
        let mean: f64 = hard.probabilities.iter().sum::<f64>() / 200.0;
        assert!((mean - 0.5).abs() < 1e-12);
        assert!(informative_schedule(&[], InformativeDirection::HardVisible, 1).is_err());
    }
}
