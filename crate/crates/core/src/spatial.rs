//! History-based similarity weights.
//!
//! Each unit keeps a running mean of its features. Peers whose standardized
//! running mean sits close to the target's get more calibration mass through
//! a Gaussian kernel; the target slot always carries unnormalized mass 1.
//!
//! Peer means do not depend on the target, so [`PeerMeans`] can be shared by
//! every target of a panel; [`SpatialState`] bundles one peer set with one
//! target for the single-target case. Both produce identical weights.

use crate::error::{invalid, Error, Result};

/// Floor on per-coordinate spread before standardizing.
pub const SPREAD_FLOOR: f64 = 1e-8;

/// Per-coordinate scale used before measuring distances.
#[derive(Debug, Clone, PartialEq)]
pub enum Standardizer {
    /// Cross-unit population sd of the running means at the current round.
    CurrentRound,
    /// Fixed scales supplied up front (e.g. burn-in spread).
    Frozen(Vec<f64>),
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("bandwidth {bandwidth} must be positive")))
    }
}

/// `mu <- (1 - 1/t) mu + x / t`
fn absorb(row: &mut [f64], x: &[f64], t: f64) {
    let keep = 1.0 - 1.0 / t;
    for (m, &v) in row.iter_mut().zip(x) {
        *m = keep * *m + v / t;
    }
}

/// Running feature means of the calibration peers.
#[derive(Debug, Clone)]
pub struct PeerMeans {
    n_calib: usize,
    dim: usize,
    /// `N x d`, row-major.
    means: Vec<f64>,
    /// Coordinatewise sum of the peer rows, accumulated in row order.
    sums: Vec<f64>,
    t_count: usize,
}

impl PeerMeans {
    pub fn new(n_calib: usize, dim: usize) -> Self {
        Self {
            n_calib,
            dim,
            means: vec![0.0; n_calib * dim],
            sums: vec![0.0; dim],
            t_count: 0,
        }
    }

    pub fn n_calib(&self) -> usize {
        self.n_calib
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn mean(&self, unit: usize) -> &[f64] {
        &self.means[unit * self.dim..(unit + 1) * self.dim]
    }

    /// Absorb one round of peer features, in calibration order.
    pub fn update<'a, I>(&mut self, peers: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let t = (self.t_count + 1) as f64;
        let mut count = 0;
        for (unit, x) in peers.into_iter().enumerate() {
            if unit >= self.n_calib {
                return Err(Error::Dimension { expected: self.n_calib, got: unit + 1 });
            }
            if x.len() != self.dim {
                return Err(Error::Dimension { expected: self.dim, got: x.len() });
            }
            absorb(&mut self.means[unit * self.dim..(unit + 1) * self.dim], x, t);
            count += 1;
        }
        if count != self.n_calib {
            return Err(Error::Dimension { expected: self.n_calib, got: count });
        }
        self.sums.iter_mut().for_each(|s| *s = 0.0);
        for row in self.means.chunks_exact(self.dim.max(1)) {
            for (s, v) in self.sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        self.t_count += 1;
        Ok(())
    }

    fn scales(&self, target: &[f64], standardizer: &Standardizer) -> Vec<f64> {
        match standardizer {
            Standardizer::Frozen(s) => s.iter().map(|v| v.max(SPREAD_FLOOR)).collect(),
            Standardizer::CurrentRound => {
                let n = (self.n_calib + 1) as f64;
                let mean: Vec<f64> = self.sums.iter().zip(target).map(|(s, t)| (s + t) / n).collect();
                let mut var = vec![0.0; self.dim];
                for row in self.means.chunks_exact(self.dim.max(1)).chain(std::iter::once(target)) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.into_iter().map(|s| (s / n).sqrt().max(SPREAD_FLOOR)).collect()
            }
        }
    }

    /// Squared standardized distance of every peer to `target`, divided by `d`.
    pub fn sq_distances(&self, target: &[f64], standardizer: &Standardizer) -> Vec<f64> {
        let inv: Vec<f64> = self.scales(target, standardizer).into_iter().map(|s| 1.0 / s).collect();
        let d = self.dim as f64;
        (0..self.n_calib)
            .map(|k| {
                self.mean(k)
                    .iter()
                    .zip(target)
                    .zip(&inv)
                    .map(|((a, b), s)| {
                        let z = (a - b) * s;
                        z * z
                    })
                    .sum::<f64>()
                    / d
            })
            .collect()
    }

    /// Simplex weights of length `N + 1` for a target whose running mean is
    /// `target`. Uniform before any round has been absorbed.
    pub fn kernel_weights(&self, target: &[f64], bandwidth: f64, standardizer: &Standardizer) -> Vec<f64> {
        if self.t_count == 0 {
            return vec![1.0 / (self.n_calib + 1) as f64; self.n_calib + 1];
        }
        kernel_simplex(&self.sq_distances(target, standardizer), bandwidth)
    }
}

/// Running mean of one target unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMean {
    mean: Vec<f64>,
    t_count: usize,
}

impl TargetMean {
    pub fn new(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], t_count: 0 }
    }

    pub fn get(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.mean.len() {
            return Err(Error::Dimension { expected: self.mean.len(), got: x.len() });
        }
        self.t_count += 1;
        absorb(&mut self.mean, x, self.t_count as f64);
        Ok(())
    }
}

/// Peers plus one target, with bandwidth and standardization.
#[derive(Debug, Clone)]
pub struct SpatialState {
    peers: PeerMeans,
    target: TargetMean,
    bandwidth: f64,
    standardizer: Standardizer,
}

impl SpatialState {
    /// State for `n_calib` peers plus the target.
    pub fn new(n_calib: usize, dim: usize, bandwidth: f64, standardizer: Standardizer) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if let Standardizer::Frozen(scales) = &standardizer {
            if scales.len() != dim {
                return Err(Error::Dimension { expected: dim, got: scales.len() });
            }
        }
        Ok(Self {
            peers: PeerMeans::new(n_calib, dim),
            target: TargetMean::new(dim),
            bandwidth,
            standardizer,
        })
    }

    pub fn t_count(&self) -> usize {
        self.peers.t_count
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n_calib(&self) -> usize {
        self.peers.n_calib
    }

    pub fn mean(&self, unit: usize) -> &[f64] {
        if unit == self.peers.n_calib {
            self.target.get()
        } else {
            self.peers.mean(unit)
        }
    }

    pub fn target_mean(&self) -> &[f64] {
        self.target.get()
    }

    /// Absorb one round. `x_all` yields the peers in calibration order
    /// followed by the target.
    pub fn update_running_mean<'a, I>(&mut self, x_all: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = x_all.into_iter().collect();
        let n = self.peers.n_calib + 1;
        if rows.len() != n {
            return Err(Error::Dimension { expected: n, got: rows.len() });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != self.peers.dim) {
            return Err(Error::Dimension { expected: self.peers.dim, got: bad.len() });
        }
        self.peers.update(rows[..n - 1].iter().copied())?;
        self.target.update(rows[n - 1])
    }

    /// Squared standardized distance of every peer to the target, divided by `d`.
    pub fn sq_distances(&self) -> Vec<f64> {
        self.peers.sq_distances(self.target.get(), &self.standardizer)
    }

    /// Simplex weights of length `N + 1` for the next round. Before any
    /// round has been absorbed the weights are uniform.
    pub fn kernel_weights(&self) -> Vec<f64> {
        self.peers.kernel_weights(self.target.get(), self.bandwidth, &self.standardizer)
    }
}

/// Full `N + 1` simplex vector from peer squared distances; the target slot is last.
pub fn kernel_simplex(sq_distances: &[f64], h: f64) -> Vec<f64> {
    let scale = 1.0 / (2.0 * h * h);
    let mut w: Vec<f64> = sq_distances.iter().map(|a| (-a * scale).exp()).collect();
    w.push(1.0);
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Peer coordinates of the Gibbs map:
/// `exp(-a_k / 2h^2) / (1 + sum_j exp(-a_j / 2h^2))`.
pub fn gibbs_map(sq_distances: &[f64], h: f64) -> Vec<f64> {
    let mut w = kernel_simplex(sq_distances, h);
    w.pop();
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;

    #[test]
    fn first_round_mean_is_the_observation() {
        let mut s = SpatialState::new(1, 2, 0.6, Standardizer::CurrentRound).unwrap();
        s.update_running_mean([&[1.0, 2.0][..], &[3.0, 4.0][..]]).unwrap();
        assert_eq!(s.mean(0), &[1.0, 2.0]);
        assert_eq!(s.target_mean(), &[3.0, 4.0]);
    }

    #[test]
    fn constant_stream_is_a_fixed_point() {
        let mut s = SpatialState::new(0, 1, 0.6, Standardizer::CurrentRound).unwrap();
        for _ in 0..25 {
            s.update_running_mean([&[0.3][..]]).unwrap();
        }
        assert!((s.target_mean()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn running_mean_matches_batch_average() {
        let mut rng = rng::stream(2, Domain::Test, 0, 0);
        let mut s = SpatialState::new(2, 3, 0.6, Standardizer::CurrentRound).unwrap();
        let mut history: Vec<Vec<Vec<f64>>> = Vec::new();
        for _ in 0..50 {
            let round: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
            s.update_running_mean(round.iter().map(|v| v.as_slice())).unwrap();
            history.push(round);
        }
        for unit in 0..3 {
            for j in 0..3 {
                let batch: f64 = history.iter().map(|r| r[unit][j]).sum::<f64>() / 50.0;
                assert!((s.mean(unit)[j] - batch).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn update_rejects_mismatched_shapes() {
        let mut s = SpatialState::new(1, 2, 0.6, Standardizer::CurrentRound).unwrap();
        assert!(s.update_running_mean([&[1.0, 2.0][..]]).is_err());
        assert!(s.update_running_mean([&[1.0][..], &[1.0][..]]).is_err());
        assert!(SpatialState::new(1, 2, 0.0, Standardizer::CurrentRound).is_err());
    }

    #[test]
    fn uniform_before_first_round() {
        let s = SpatialState::new(3, 2, 0.6, Standardizer::CurrentRound).unwrap();
        assert_eq!(s.kernel_weights(), vec![0.25; 4]);
    }

    #[test]
    fn identical_peer_shares_mass_with_target() {
        let mut s = SpatialState::new(1, 2, 0.6, Standardizer::CurrentRound).unwrap();
        s.update_running_mean([&[1.0, -1.0][..], &[1.0, -1.0][..]]).unwrap();
        assert_eq!(s.kernel_weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn equidistant_peers_get_equal_weight() {
        let mut s = SpatialState::new(2, 1, 0.6, Standardizer::CurrentRound).unwrap();
        s.update_running_mean([&[-1.0][..], &[1.0][..], &[0.0][..]]).unwrap();
        let w = s.kernel_weights();
        assert!((w[0] - w[1]).abs() < 1e-15);
        assert!(w[2] > w[0]);
    }

    #[test]
    fn direct_formula_example() {
        let w = kernel_simplex(&[0.36, 1.44], 0.6);
        let raw = [(-0.5f64).exp(), (-2.0f64).exp(), 1.0];
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / total).abs() < 1e-15);
        }
    }

    #[test]
    fn standardization_divides_by_cross_unit_sd_and_dim() {
        // coordinate 0 spread sd = 1 (values -1, 1, ... ), coordinate 1 constant
        let mut s = SpatialState::new(1, 2, 1.0, Standardizer::CurrentRound).unwrap();
        s.update_running_mean([&[-1.0, 5.0][..], &[1.0, 5.0][..]]).unwrap();
        // sd over {-1, 1} = 1; squared diff 4; constant coordinate contributes 0; / d = 2
        assert!((s.sq_distances()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn frozen_scales_are_used() {
        let mut s = SpatialState::new(1, 1, 1.0, Standardizer::Frozen(vec![2.0])).unwrap();
        s.update_running_mean([&[0.0][..], &[1.0][..]]).unwrap();
        assert!((s.sq_distances()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn far_peers_vanish() {
        let w = gibbs_map(&[1e6, 1e6], 0.6);
        assert!(w.iter().all(|&v| v == 0.0));
        let a = [0.2, 1.1, 0.4];
        assert_eq!(gibbs_map(&a, 0.9), gibbs_map(&a, 0.9));
    }

    #[test]
    fn bandwidth_limits() {
        let a = [0.3, 1.0, 2.5];
        let wide = kernel_simplex(&a, 1e4);
        assert!(wide.iter().all(|w| (w - 0.25).abs() < 1e-6));
        let narrow = kernel_simplex(&a, 0.05);
        // every peer sits at positive distance, so the target slot takes the mass
        assert!(narrow[1] + narrow[2] < 1e-30);
        assert!(narrow[0] < narrow[3] && narrow[3] > 0.999);
        let tie = kernel_simplex(&[0.0, 2.0], 0.05);
        assert!((tie[0] - 0.5).abs() < 1e-12 && (tie[2] - 0.5).abs() < 1e-12);
    }
}
