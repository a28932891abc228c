//! Plain gradient steps and AdaGrad for moving particles along a direction.
//!
//! AdaGrad state is keyed to particle index, so particles must never be
//! reordered during a run.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::ParticleSet;

pub const DEFAULT_ADAGRAD_EPSILON: f64 = 1e-6;
/// Averaging weight of the reference SVGD accumulator.
pub const DEFAULT_ADAGRAD_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `y ← y + η·g`.
    Sgd,
    /// `G ← G + g²`, `y ← y + η·g/(√G + ε)`.
    AdaGrad,
    /// Exponentially averaged accumulator as in the reference SVGD code:
    /// `G ← g²` on the first step, then `G ← αG + (1 − α)g²`.
    AdaGradDecay { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    epsilon: f64,
    accumulator: Vec<f64>,
    seen: Vec<bool>,
}

impl OptimizerState {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            epsilon: DEFAULT_ADAGRAD_EPSILON,
            accumulator: Vec::new(),
            seen: Vec::new(),
        }
    }

    pub fn adagrad(count: usize, dim: usize) -> Self {
        Self::new(OptimizerKind::AdaGrad, count, dim, DEFAULT_ADAGRAD_EPSILON)
            .expect("default epsilon is positive")
    }

    pub fn new(kind: OptimizerKind, count: usize, dim: usize, epsilon: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        if let OptimizerKind::AdaGradDecay { alpha } = kind {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    reason: "must lie in [0, 1)",
                });
            }
        }
        let size = match kind {
            OptimizerKind::Sgd => 0,
            _ => count * dim,
        };
        Ok(Self {
            kind,
            epsilon,
            accumulator: vec![0.0; size],
            seen: vec![false; if size == 0 { 0 } else { count }],
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Squared-gradient accumulator, row-major per particle (empty for SGD).
    pub fn accumulator(&self) -> &[f64] {
        &self.accumulator
    }

    /// Moves every particle: `Y ← Y + η·step(direction)`.
    pub fn apply_step(
        &mut self,
        particles: &mut ParticleSet,
        direction: &ParticleSet,
        eta: f64,
    ) -> Result<()> {
        particles.check_same_shape(direction)?;
        let dim = particles.dim();
        for i in 0..particles.len() {
            let g = direction.row(i);
            let y = &mut particles.as_flat_mut()[i * dim..(i + 1) * dim];
            self.update_row(i, y, g, eta)?;
        }
        particles.ensure_finite()
    }

    /// Moves only the particles at `indices`; row `k` of `direction` belongs
    /// to particle `indices[k]`.
    pub fn apply_rows(
        &mut self,
        particles: &mut ParticleSet,
        indices: &[usize],
        direction: &ParticleSet,
        eta: f64,
    ) -> Result<()> {
        check_dim(particles.dim(), direction.dim())?;
        if indices.len() != direction.len() {
            return Err(Error::ShapeMismatch {
                expected: indices.len(),
                found: direction.len(),
            });
        }
        let dim = particles.dim();
        for (k, &i) in indices.iter().enumerate() {
            if i >= particles.len() {
                return Err(Error::InvalidParameter {
                    name: "indices",
                    reason: "particle index out of range",
                });
            }
            let y = &mut particles.as_flat_mut()[i * dim..(i + 1) * dim];
            self.update_row(i, y, direction.row(k), eta)?;
        }
        particles.ensure_finite()
    }

    fn update_row(&mut self, index: usize, y: &mut [f64], g: &[f64], eta: f64) -> Result<()> {
        let dim = y.len();
        match self.kind {
            OptimizerKind::Sgd => {
                for (yv, gv) in y.iter_mut().zip(g) {
                    *yv += eta * gv;
                }
            }
            OptimizerKind::AdaGrad | OptimizerKind::AdaGradDecay { .. } => {
                let acc = self
                    .accumulator
                    .get_mut(index * dim..(index + 1) * dim)
                    .ok_or(Error::ShapeMismatch {
                        expected: self.seen.len(),
                        found: index + 1,
                    })?;
                let first = !self.seen[index];
                for ((yv, gv), a) in y.iter_mut().zip(g).zip(acc.iter_mut()) {
                    let g2 = gv * gv;
                    *a = match self.kind {
                        OptimizerKind::AdaGradDecay { alpha } if !first => alpha * *a + (1.0 - alpha) * g2,
                        _ => *a + g2,
                    };
                    *yv += eta * gv / (Float::sqrt(*a) + self.epsilon);
                }
                self.seen[index] = true;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one(v: f64) -> ParticleSet {
        ParticleSet::from_rows(&[[v]]).unwrap()
    }

    #[test]
    fn zero_direction_is_identity() {
        let mut y = ParticleSet::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let before = y.clone();
        let zero = ParticleSet::zeros(2, 2);
        let mut opt = OptimizerState::adagrad(2, 2);
        opt.apply_step(&mut y, &zero, 0.1).unwrap();
        assert_eq!(y, before);
        assert!(opt.accumulator().iter().all(|&a| a == 0.0));
        OptimizerState::sgd().apply_step(&mut y, &zero, 0.1).unwrap();
        assert_eq!(y, before);
    }

    #[test]
    fn sgd_step() {
        let mut y = one(1.0);
        OptimizerState::sgd().apply_step(&mut y, &one(-2.0), 0.25).unwrap();
        assert_eq!(y.row(0)[0], 0.5);
    }

    #[test]
    fn adagrad_first_and_second_steps() {
        let g = -3.7;
        let mut y = one(0.0);
        let mut opt = OptimizerState::adagrad(1, 1);
        opt.apply_step(&mut y, &one(g), 0.1).unwrap();
        assert_relative_eq!(y.row(0)[0], -0.1, epsilon = 1e-6);
        let before = y.row(0)[0];
        opt.apply_step(&mut y, &one(g), 0.1).unwrap();
        assert_relative_eq!(y.row(0)[0] - before, -0.1 / 2.0f64.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn adagrad_displacements_shrink_for_constant_gradient() {
        let mut y = one(0.0);
        let mut opt = OptimizerState::adagrad(1, 1);
        let mut prev_step = f64::INFINITY;
        let mut prev_acc = 0.0;
        for _ in 0..50 {
            let before = y.row(0)[0];
            opt.apply_step(&mut y, &one(2.0), 0.1).unwrap();
            let step = (y.row(0)[0] - before).abs();
            assert!(step <= 0.1 + 1e-12);
            assert!(step <= prev_step);
            assert!(opt.accumulator()[0] >= prev_acc);
            prev_step = step;
            prev_acc = opt.accumulator()[0];
        }
    }

    #[test]
    fn decayed_adagrad_keeps_unit_steps() {
        let mut y = one(0.0);
        let mut opt = OptimizerState::new(OptimizerKind::AdaGradDecay { alpha: 0.9 }, 1, 1, 1e-6).unwrap();
        for _ in 0..5 {
            let before = y.row(0)[0];
            opt.apply_step(&mut y, &one(4.0), 0.1).unwrap();
            assert_relative_eq!(y.row(0)[0] - before, 0.1, epsilon = 1e-6);
        }
    }

    #[test]
    fn eta_zero_is_identity() {
        let mut y = ParticleSet::from_rows(&[[1.0, -1.0]]).unwrap();
        let before = y.clone();
        let dir = ParticleSet::from_rows(&[[5.0, 7.0]]).unwrap();
        OptimizerState::adagrad(1, 2).apply_step(&mut y, &dir, 0.0).unwrap();
        OptimizerState::sgd().apply_step(&mut y, &dir, 0.0).unwrap();
        assert_eq!(y, before);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut y = ParticleSet::zeros(2, 2);
        let dir = ParticleSet::zeros(3, 2);
        assert!(OptimizerState::sgd().apply_step(&mut y, &dir, 0.1).is_err());
        assert!(OptimizerState::sgd()
            .apply_rows(&mut y, &[0], &ParticleSet::zeros(2, 2), 0.1)
            .is_err());
    }

    #[test]
    fn rows_update_only_selected_particles() {
        let mut y = ParticleSet::zeros(3, 1);
        let mut opt = OptimizerState::adagrad(3, 1);
        let dir = ParticleSet::from_rows(&[[1.0], [-1.0]]).unwrap();
        opt.apply_rows(&mut y, &[2, 0], &dir, 0.5).unwrap();
        assert_relative_eq!(y.row(2)[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(y.row(0)[0], -0.5, epsilon = 1e-6);
        assert_eq!(y.row(1)[0], 0.0);
        assert_eq!(opt.accumulator(), &[1.0, 0.0, 1.0]);
    }
}
