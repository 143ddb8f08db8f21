//! Adaptive miscoverage level driven by intermittent lagged feedback, and
//! audits of the pathwise guarantees of that recursion.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalState {
    pub alpha_t: f64,
    pub alpha_target: f64,
    pub gamma: f64,
    /// Number of revealed rounds absorbed so far.
    pub s_count: usize,
    /// Sum of revealed losses.
    pub loss_sum: f64,
}

impl TemporalState {
    pub fn new(alpha_target: f64, gamma: f64) -> Result<Self> {
        if !(alpha_target > 0.0 && alpha_target < 1.0) {
            return Err(invalid(format!("alpha {alpha_target} outside (0, 1)")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma {gamma} must be positive")));
        }
        Ok(Self {
            alpha_t: alpha_target,
            alpha_target,
            gamma,
            s_count: 0,
            loss_sum: 0.0,
        })
    }

    /// `alpha <- alpha + gamma (alpha_target - loss)` on revealed rounds;
    /// unchanged otherwise.
    pub fn update_level(&mut self, lagged_reveal: bool, lagged_loss: Option<f64>) -> Result<()> {
        match (lagged_reveal, lagged_loss) {
            (false, None) => Ok(()),
            (true, Some(loss)) => {
                if loss != 0.0 && loss != 1.0 {
                    return Err(invalid(format!("loss {loss} is not binary")));
                }
                self.alpha_t += self.gamma * (self.alpha_target - loss);
                self.s_count += 1;
                self.loss_sum += loss;
                Ok(())
            }
            (true, None) => Err(invalid("revealed round without a loss")),
            (false, Some(_)) => Err(invalid("loss supplied for a hidden round")),
        }
    }
}

/// `sum_t R_t (loss_t - alpha) - (alpha - alpha_final) / gamma`; zero up to
/// rounding for any trace produced by [`TemporalState::update_level`].
pub fn audit_telescoping(trace: &[(bool, f64)], alpha_final: f64, alpha_target: f64, gamma: f64) -> f64 {
    let revealed: f64 = trace
        .iter()
        .filter(|(r, _)| *r)
        .map(|(_, loss)| loss - alpha_target)
        .sum();
    revealed - (alpha_target - alpha_final) / gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedBound {
    pub lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Observed-feedback average control:
/// `|S_T^{-1} sum R_t loss_t - alpha| <= (max(alpha, 1 - alpha) + gamma) / (S_T gamma)`.
pub fn audit_observed_bound(trace: &[(bool, f64)], alpha_target: f64, gamma: f64) -> Result<ObservedBound> {
    let s = trace.iter().filter(|(r, _)| *r).count();
    if s == 0 {
        return Err(Error::NotApplicable("no revealed rounds (S_T = 0)".into()));
    }
    let losses: f64 = trace.iter().filter(|(r, _)| *r).map(|(_, l)| l).sum();
    let s = s as f64;
    let lhs = (losses / s - alpha_target).abs();
    let bound = (alpha_target.max(1.0 - alpha_target) + gamma) / (s * gamma);
    Ok(ObservedBound { lhs, bound, holds: lhs <= bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;

    #[test]
    fn update_examples() {
        let mut s = TemporalState::new(0.1, 0.01).unwrap();
        s.update_level(true, Some(1.0)).unwrap();
        assert!((s.alpha_t - 0.091).abs() < 1e-15);
        let mut s = TemporalState::new(0.1, 0.01).unwrap();
        s.update_level(true, Some(0.0)).unwrap();
        assert!((s.alpha_t - 0.101).abs() < 1e-15);
        let before = s.clone();
        s.update_level(false, None).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn update_rejects_inconsistent_feedback() {
        let mut s = TemporalState::new(0.1, 0.01).unwrap();
        assert!(s.update_level(true, Some(0.5)).is_err());
        assert!(s.update_level(true, None).is_err());
        assert!(s.update_level(false, Some(1.0)).is_err());
        assert!(TemporalState::new(1.0, 0.01).is_err());
        assert!(TemporalState::new(0.1, 0.0).is_err());
    }

    #[test]
    fn telescoping_trivial_traces() {
        assert_eq!(audit_telescoping(&[], 0.1, 0.1, 0.01), 0.0);
        let mut s = TemporalState::new(0.1, 0.01).unwrap();
        s.update_level(true, Some(1.0)).unwrap();
        assert!(audit_telescoping(&[(true, 1.0)], s.alpha_t, 0.1, 0.01).abs() < 1e-12);
    }

    #[test]
    fn telescoping_long_random_trace() {
        let mut rng = rng::stream(4, Domain::Test, 0, 0);
        let mut s = TemporalState::new(0.1, 0.01).unwrap();
        let mut trace = Vec::new();
        for _ in 0..10_000 {
            let reveal = rng.random_bool(0.6);
            let loss = if rng.random_bool(0.15) { 1.0 } else { 0.0 };
            s.update_level(reveal, reveal.then_some(loss)).unwrap();
            trace.push((reveal, loss));
        }
        assert!(audit_telescoping(&trace, s.alpha_t, 0.1, 0.01).abs() <= 1e-9);
    }

    #[test]
    fn bound_substitution() {
        let trace = vec![(true, 0.0); 100];
        let b = audit_observed_bound(&trace, 0.1, 0.01).unwrap();
        assert!((b.bound - 0.91).abs() < 1e-12);
        // all covered: lhs = alpha
        assert!((b.lhs - 0.1).abs() < 1e-15);
        assert!(b.holds);
        assert!(matches!(
            audit_observed_bound(&[(false, 0.0)], 0.1, 0.01),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn all_covered_bound_threshold() {
        // lhs = alpha holds iff S_T gamma <= (max(alpha, 1 - alpha) + gamma) / alpha = 9.1
        let ok = vec![(true, 0.0); 900];
        assert!(audit_observed_bound(&ok, 0.1, 0.01).unwrap().holds);
        let too_long = vec![(true, 0.0); 920];
        assert!(!audit_observed_bound(&too_long, 0.1, 0.01).unwrap().holds);
    }
}
