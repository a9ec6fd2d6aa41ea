//! Learning-rate shape, batch size and staleness as functions of time.
//!
//! The learning rate is split as `eta_k = h * psi_k` with `psi_k = psi(h k)`,
//! so the discrete algorithms and their continuous models read the same
//! adjustment function on the grid `t = h k`. `phi(t)` integrates `psi` and
//! acts as the warped clock; `phi_inverse` undoes the warp.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Result};

/// Shape of the adjustment function `psi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "psi", rename_all = "lowercase")]
pub enum Adjustment {
    /// `psi(t) = 1`.
    Constant,
    /// `psi(t) = (1 + t)^{-a}` with `a` in `(0, 1]`.
    Power { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdjustmentSchedule {
    h: f64,
    family: Adjustment,
}

impl AdjustmentSchedule {
    pub fn new(h: f64, family: Adjustment) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(precondition(format!("stepsize h must be positive, got {h}")));
        }
        if let Adjustment::Power { a } = family {
            if !(a > 0.0 && a <= 1.0) {
                return Err(precondition(format!("power exponent a must lie in (0, 1], got {a}")));
            }
        }
        Ok(AdjustmentSchedule { h, family })
    }

    pub fn constant(h: f64) -> Result<Self> {
        Self::new(h, Adjustment::Constant)
    }

    pub fn power(h: f64, a: f64) -> Result<Self> {
        Self::new(h, Adjustment::Power { a })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn family(&self) -> Adjustment {
        self.family
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.family, Adjustment::Constant)
    }

    pub fn psi(&self, t: f64) -> f64 {
        match self.family {
            Adjustment::Constant => 1.0,
            Adjustment::Power { a } => (1.0 + t.max(0.0)).powf(-a),
        }
    }

    /// `psi_k = psi(h k)`, the factor used by the discrete algorithms.
    pub fn psi_k(&self, k: usize) -> f64 {
        self.psi(self.h * k as f64)
    }

    pub(crate) fn phi_unchecked(&self, t: f64) -> f64 {
        match self.family {
            Adjustment::Constant => t,
            Adjustment::Power { a: 1.0 } => t.ln_1p(),
            Adjustment::Power { a } => ((1.0 - a) * t.ln_1p()).exp_m1() / (1.0 - a),
        }
    }

    /// `phi(t) = int_0^t psi(s) ds`.
    pub fn phi(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(precondition(format!("phi needs t >= 0, got {t}")));
        }
        Ok(self.phi_unchecked(t))
    }

    pub(crate) fn phi_inverse_unchecked(&self, s: f64) -> f64 {
        match self.family {
            Adjustment::Constant => s,
            Adjustment::Power { a: 1.0 } => s.exp_m1(),
            Adjustment::Power { a } => (((1.0 - a) * s).ln_1p() / (1.0 - a)).exp_m1(),
        }
    }

    /// `tau(s) = phi^{-1}(s)`.
    pub fn phi_inverse(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(precondition(format!("phi_inverse needs s >= 0, got {s}")));
        }
        Ok(self.phi_inverse_unchecked(s))
    }

    /// `phi_{k+1} = sum_{i=0}^{k} psi_i`.
    pub fn discrete_phi(&self, k: usize) -> f64 {
        (0..=k).map(|i| self.psi_k(i)).sum()
    }

    /// Index `j` in `0..=k` drawn with probability `psi_j / phi_{k+1}`.
    pub fn randomized_index<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        if self.is_constant() {
            return rng.random_range(0..=k);
        }
        let total = self.discrete_phi(k);
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for j in 0..=k {
            acc += self.psi_k(j);
            if target < acc {
                return j;
            }
        }
        k
    }

    /// Time in `[0, t]` with density `psi(s) / phi(t)`, by inverse CDF.
    pub fn randomized_time<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> Result<f64> {
        if !(t > 0.0) {
            return Err(precondition(format!("randomized_time needs t > 0, got {t}")));
        }
        let u: f64 = rng.random();
        Ok(self.phi_inverse_unchecked(u * self.phi_unchecked(t)).min(t))
    }
}

/// Mini-batch size as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "batch", rename_all = "lowercase")]
pub enum BatchSchedule {
    Constant { b: usize },
    /// `b(t) = b0 + rate * t`.
    Linear { b0: f64, rate: f64 },
}

impl BatchSchedule {
    pub fn constant(b: usize) -> Result<Self> {
        let s = BatchSchedule::Constant { b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BatchSchedule::Constant { b: 0 } => Err(precondition("batch size must be at least 1")),
            BatchSchedule::Linear { b0, rate } if !(b0 >= 1.0 && rate >= 0.0 && rate.is_finite()) => Err(
                precondition(format!("linear batch needs b0 >= 1 and rate >= 0, got b0={b0}, rate={rate}")),
            ),
            _ => Ok(()),
        }
    }

    /// Continuous (unrounded) batch size used by the diffusion models.
    pub fn b(&self, t: f64) -> f64 {
        match *self {
            BatchSchedule::Constant { b } => b as f64,
            BatchSchedule::Linear { b0, rate } => b0 + rate * t.max(0.0),
        }
    }

    /// Integer batch at step `k`: `b(h k)` rounded half up, at least 1.
    pub fn b_k(&self, k: usize, h: f64) -> usize {
        match *self {
            BatchSchedule::Constant { b } => b,
            _ => ((self.b(h * k as f64) + 0.5).floor() as usize).max(1),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            BatchSchedule::Constant { b } => Some(b as f64),
            BatchSchedule::Linear { .. } => None,
        }
    }
}

/// Sawtooth staleness of the variance-reduced pivot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StalenessSchedule {
    epoch_steps: usize,
    h: f64,
}

impl StalenessSchedule {
    pub fn new(epoch_steps: usize, h: f64) -> Result<Self> {
        if epoch_steps == 0 {
            return Err(precondition("epoch length m must be at least 1"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(precondition(format!("stepsize h must be positive, got {h}")));
        }
        Ok(StalenessSchedule { epoch_steps, h })
    }

    pub fn epoch_steps(&self) -> usize {
        self.epoch_steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Epoch duration `m h`.
    pub fn epoch_time(&self) -> f64 {
        self.epoch_steps as f64 * self.h
    }

    /// `xi(t) = t mod (m h)`.
    pub fn xi(&self, t: f64) -> f64 {
        let period = self.epoch_time();
        let r = t.rem_euclid(period);
        if period - r <= 1e-12 * period.max(t.abs()) {
            0.0
        } else {
            r
        }
    }

    pub fn xi_k(&self, k: usize) -> usize {
        k % self.epoch_steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;

    #[test]
    fn phi_known_values() {
        let c = AdjustmentSchedule::constant(0.1).unwrap();
        let p1 = AdjustmentSchedule::power(0.1, 1.0).unwrap();
        let ph = AdjustmentSchedule::power(0.1, 0.5).unwrap();
        for s in [c, p1, ph] {
            assert_eq!(s.phi(0.0).unwrap(), 0.0);
            assert_eq!(s.phi_inverse(0.0).unwrap(), 0.0);
        }
        assert_eq!(c.phi(2.5).unwrap(), 2.5);
        assert!((p1.phi(3.0).unwrap() - 4.0f64.ln()).abs() < 1e-15);
        assert!((ph.phi(3.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((p1.phi_inverse(2.0).unwrap() - (2.0f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        let s = AdjustmentSchedule::power(0.1, 0.5).unwrap();
        assert!(s.phi(-1.0).is_err());
        assert!(s.phi_inverse(-0.5).is_err());
        assert!(s.randomized_time(0.0, &mut path_rng(0, 0)).is_err());
    }

    #[test]
    fn invalid_schedules() {
        assert!(AdjustmentSchedule::constant(0.0).is_err());
        assert!(AdjustmentSchedule::power(0.1, 1.5).is_err());
        assert!(AdjustmentSchedule::power(0.1, 0.0).is_err());
        assert!(BatchSchedule::constant(0).is_err());
        assert!(BatchSchedule::Linear { b0: 0.5, rate: 1.0 }.validate().is_err());
        assert!(StalenessSchedule::new(0, 0.1).is_err());
    }

    #[test]
    fn discrete_phi_values() {
        let c = AdjustmentSchedule::constant(0.3).unwrap();
        assert_eq!(c.discrete_phi(9), 10.0);
        let p = AdjustmentSchedule::power(1.0, 1.0).unwrap();
        assert_eq!(p.discrete_phi(1), 1.5);
    }

    #[test]
    fn psi_grid_matches_continuous() {
        let s = AdjustmentSchedule::power(0.01, 0.7).unwrap();
        for k in 0..1000 {
            assert_eq!(s.psi_k(k), s.psi(0.01 * k as f64));
        }
        assert_eq!(s.psi_k(0), 1.0);
    }

    #[test]
    fn batch_rounding() {
        let b = BatchSchedule::Linear { b0: 1.0, rate: 0.25 };
        let h = 1.0;
        assert_eq!(b.b_k(0, h), 1);
        assert_eq!(b.b_k(1, h), 1); // 1.25
        assert_eq!(b.b_k(2, h), 2); // 1.5 rounds up
        assert_eq!(b.b_k(5, h), 2); // 2.25
        assert_eq!(b.b(2.0), 1.5);
    }

    #[test]
    fn sawtooth() {
        let s = StalenessSchedule::new(10, 0.1).unwrap();
        let period = s.epoch_time();
        for j in 1..=5 {
            let t = j as f64 * period;
            assert_eq!(s.xi(t), 0.0);
            assert!((s.xi(t - 1e-9) - period).abs() < 1e-8);
        }
        assert_eq!(s.xi_k(23), 3);
        assert!((s.xi(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn randomized_index_two_point() {
        let s = AdjustmentSchedule::power(1.0, 1.0).unwrap();
        let mut rng = path_rng(11, 0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| s.randomized_index(1, &mut rng) == 0).count() as f64;
        let p = 2.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((zeros - n as f64 * p).abs() < 4.0 * sd, "{zeros}");
    }
}
