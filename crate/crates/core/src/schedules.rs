//! Noise-variance and step-size schedules indexed by iteration.

use core::f64::consts::FRAC_PI_2;

use num_traits::Float;

use crate::error::{check_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// σ² fixed at `sigma2_max`.
    Constant,
    /// σ²(t) = σ²_max · cos(πt/2) on t ∈ [0, t_max], reaching σ²_min at the
    /// final step.
    Cosine { sigma2_min: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    kind: NoiseKind,
    sigma2_max: f64,
    eta: f64,
    total_steps: usize,
}

impl ScheduleSpec {
    pub fn constant(sigma2: f64, eta: f64, total_steps: usize) -> Result<Self> {
        Self::new(NoiseKind::Constant, sigma2, eta, total_steps)
    }

    pub fn cosine(sigma2_max: f64, sigma2_min: f64, eta: f64, total_steps: usize) -> Result<Self> {
        Self::new(NoiseKind::Cosine { sigma2_min }, sigma2_max, eta, total_steps)
    }

    pub fn new(kind: NoiseKind, sigma2_max: f64, eta: f64, total_steps: usize) -> Result<Self> {
        check_positive("sigma2_max", sigma2_max)?;
        check_positive("eta", eta)?;
        if total_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "total_steps",
                reason: "must be at least 1",
            });
        }
        if let NoiseKind::Cosine { sigma2_min } = kind {
            check_positive("sigma2_min", sigma2_min)?;
            if sigma2_min > sigma2_max {
                return Err(Error::InvalidParameter {
                    name: "sigma2_min",
                    reason: "must not exceed sigma2_max",
                });
            }
        }
        Ok(Self {
            kind,
            sigma2_max,
            eta,
            total_steps,
        })
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn sigma2_max(&self) -> f64 {
        self.sigma2_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// Endpoint of the continuous cosine time axis,
    /// `t_max = (2/π) · acos(σ²_min / σ²_max)`.
    pub fn t_max(&self) -> f64 {
        match self.kind {
            NoiseKind::Constant => 0.0,
            NoiseKind::Cosine { sigma2_min } => Float::acos(sigma2_min / self.sigma2_max) / FRAC_PI_2,
        }
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step < self.total_steps {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "step",
                reason: "outside [0, total_steps)",
            })
        }
    }

    /// Noise variance σ²(t) at a discrete step. Step 0 maps to t = 0 and the
    /// last step to t = t_max.
    pub fn noise_at(&self, step: usize) -> Result<f64> {
        self.check_step(step)?;
        match self.kind {
            NoiseKind::Constant => Ok(self.sigma2_max),
            NoiseKind::Cosine { sigma2_min } => {
                if step == 0 {
                    return Ok(self.sigma2_max);
                }
                if step + 1 == self.total_steps {
                    return Ok(sigma2_min);
                }
                let frac = step as f64 / (self.total_steps - 1) as f64;
                let t = frac * self.t_max();
                let v = self.sigma2_max * Float::cos(FRAC_PI_2 * t);
                Ok(v.clamp(sigma2_min, self.sigma2_max))
            }
        }
    }

    /// Step size η(t); constant in this toolkit.
    pub fn step_at(&self, step: usize) -> Result<f64> {
        self.check_step(step)?;
        Ok(self.eta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cosine_endpoints() {
        let s = ScheduleSpec::cosine(10.0, 0.5, 0.1, 1000).unwrap();
        assert_eq!(s.noise_at(0).unwrap(), 10.0);
        assert_eq!(s.noise_at(999).unwrap(), 0.5);
        assert!(s.noise_at(1000).is_err());
    }

    #[test]
    fn cosine_midpoint_value() {
        // Oracle: direct evaluation at t = t_max / 2.
        let t_max = (2.0 / core::f64::consts::PI) * (0.05f64).acos();
        assert_relative_eq!(t_max, 0.9682, epsilon = 1e-4);
        let expected = 10.0 * (core::f64::consts::PI * (t_max / 2.0) / 2.0).cos();
        assert_relative_eq!(expected, 7.2457, epsilon = 1e-4);

        // With 3 steps the middle step sits exactly at t_max / 2.
        let s = ScheduleSpec::cosine(10.0, 0.5, 0.1, 3).unwrap();
        assert_relative_eq!(s.t_max(), t_max, max_relative = 1e-14);
        assert_relative_eq!(s.noise_at(1).unwrap(), expected, max_relative = 1e-13);
    }

    #[test]
    fn cosine_is_monotone_and_bounded() {
        for &(hi, lo, n) in &[(10.0, 0.5, 1000), (4.0, 0.5, 17), (2.0, 2.0, 5), (3.0, 0.1, 2)] {
            let s = ScheduleSpec::cosine(hi, lo, 0.1, n).unwrap();
            let mut prev = f64::INFINITY;
            for k in 0..n {
                let v = s.noise_at(k).unwrap();
                assert!(v <= prev && v >= lo && v <= hi);
                prev = v;
            }
            assert!((s.noise_at(0).unwrap() - hi).abs() <= 1e-12);
            assert!((s.noise_at(n - 1).unwrap() - lo).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_step_cosine_starts_at_max() {
        let s = ScheduleSpec::cosine(4.0, 0.5, 0.1, 1).unwrap();
        assert_eq!(s.noise_at(0).unwrap(), 4.0);
    }

    #[test]
    fn constant_and_step_sizes() {
        let s = ScheduleSpec::constant(0.8, 0.1, 50).unwrap();
        assert!((0..50).all(|k| s.noise_at(k).unwrap() == 0.8));
        assert!((0..50).all(|k| s.step_at(k).unwrap() == 0.1));
        let s = ScheduleSpec::constant(700.0, 1.0, 10).unwrap();
        assert_eq!(s.step_at(3).unwrap(), 1.0);
        assert!(s.step_at(10).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(ScheduleSpec::cosine(1.0, 2.0, 0.1, 10).is_err());
        assert!(ScheduleSpec::cosine(1.0, 0.0, 0.1, 10).is_err());
        assert!(ScheduleSpec::constant(1.0, 0.0, 10).is_err());
        assert!(ScheduleSpec::constant(1.0, 0.1, 0).is_err());
    }
}
