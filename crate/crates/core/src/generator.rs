//! Model optimization: a linear generator `y = B̂ξ + μ̂` fit by regressing
//! flow-perturbed copies of its own output on its latent inputs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::experiment::flow_direction;
use crate::flows::{FlowMethod, ScoreFunction};
use crate::matrix::Matrix;
use crate::metrics::{cfd, FrequencySet};
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::schedules::ScheduleSpec;
use crate::ParticleSet;

/// Standard deviation of the initial entries of `B̂`.
pub const INIT_STD: f64 = 0.1;

/// How per-sample regression gradients are combined over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Reduction {
    /// Average over the batch; the learning rate does not depend on batch size.
    #[default]
    Mean,
    /// Sum over the batch.
    Sum,
}

impl Reduction {
    fn factor(self, m: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / m as f64,
            Reduction::Sum => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGenerator {
    b_hat: Matrix,
    mu_hat: Vec<f64>,
}

impl LinearGenerator {
    pub fn new(b_hat: Matrix, mu_hat: Vec<f64>) -> Result<Self> {
        check_dim(b_hat.rows(), mu_hat.len())?;
        if !b_hat.is_finite() || mu_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "generator",
                reason: "parameters must be finite",
            });
        }
        Ok(Self { b_hat, mu_hat })
    }

    /// `B̂` entries from N(0, 0.01), `μ̂ = 0`.
    pub fn init(d_out: usize, d_in: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let b: Vec<f64> = (0..d_out * d_in)
            .map(|_| INIT_STD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            b_hat: Matrix::from_vec(d_out, d_in, b).expect("shape by construction"),
            mu_hat: vec![0.0; d_out],
        }
    }

    pub fn b_hat(&self) -> &Matrix {
        &self.b_hat
    }

    pub fn mu_hat(&self) -> &[f64] {
        &self.mu_hat
    }

    pub fn latent_dim(&self) -> usize {
        self.b_hat.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.b_hat.rows()
    }

    /// `B̂ξ + μ̂` for every row of `xi`.
    pub fn generate(&self, xi: &ParticleSet) -> Result<ParticleSet> {
        check_dim(self.latent_dim(), xi.dim())?;
        let d = self.output_dim();
        let mut out = vec![0.0; xi.len() * d];
        for (o, latent) in out.chunks_exact_mut(d.max(1)).zip(xi.rows()) {
            self.b_hat.mul_vec_into(latent, o);
            for (v, m) in o.iter_mut().zip(&self.mu_hat) {
                *v += m;
            }
        }
        ParticleSet::from_flat(d, out)
    }

    /// Half the squared regression error, reduced over the batch.
    pub fn regression_loss(
        &self,
        xi: &ParticleSet,
        target: &ParticleSet,
        reduction: Reduction,
    ) -> Result<f64> {
        let residual = self.residual(xi, target)?;
        let sum: f64 = residual.as_flat().iter().map(|r| r * r).sum();
        Ok(0.5 * sum * reduction.factor(xi.len()))
    }

    /// Gradient of [`regression_loss`](Self::regression_loss) with respect to
    /// `(B̂, μ̂)`.
    pub fn regression_gradient(
        &self,
        xi: &ParticleSet,
        target: &ParticleSet,
        reduction: Reduction,
    ) -> Result<(Matrix, Vec<f64>)> {
        let residual = self.residual(xi, target)?;
        let (d, l) = (self.output_dim(), self.latent_dim());
        let scale = reduction.factor(xi.len());
        let mut grad_b = Matrix::zeros(d, l);
        let mut grad_mu = vec![0.0; d];
        for (r, latent) in residual.rows().zip(xi.rows()) {
            let gb = grad_b.as_mut_slice();
            for (i, &ri) in r.iter().enumerate() {
                grad_mu[i] += ri;
                for (g, &x) in gb[i * l..(i + 1) * l].iter_mut().zip(latent) {
                    *g += ri * x;
                }
            }
        }
        grad_b.as_mut_slice().iter_mut().for_each(|g| *g *= scale);
        grad_mu.iter_mut().for_each(|g| *g *= scale);
        Ok((grad_b, grad_mu))
    }

    /// One gradient step on the regression of `target` on `xi`.
    pub fn regress_step(
        &self,
        xi: &ParticleSet,
        target: &ParticleSet,
        lambda: f64,
        reduction: Reduction,
    ) -> Result<Self> {
        check_positive("lambda", lambda)?;
        let (grad_b, grad_mu) = self.regression_gradient(xi, target, reduction)?;
        let mut next = self.clone();
        for (p, g) in next.b_hat.as_mut_slice().iter_mut().zip(grad_b.as_slice()) {
            *p -= lambda * g;
        }
        for (p, g) in next.mu_hat.iter_mut().zip(&grad_mu) {
            *p -= lambda * g;
        }
        if !next.b_hat.is_finite() || next.mu_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("generator parameters diverged"));
        }
        Ok(next)
    }

    fn residual(&self, xi: &ParticleSet, target: &ParticleSet) -> Result<ParticleSet> {
        if xi.len() != target.len() {
            return Err(Error::ShapeMismatch {
                expected: xi.len(),
                found: target.len(),
            });
        }
        check_dim(self.output_dim(), target.dim())?;
        self.generate(xi)?.add_scaled(target, -1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelOptConfig {
    pub method: FlowMethod,
    pub schedule: ScheduleSpec,
    pub lambda: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub reduction: Reduction,
    /// Seed for per-step batches, latent draws and injected noise.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelStepRecord {
    pub step: usize,
    /// CFD between the generated batch and the target batch, before the update.
    pub cfd: f64,
    pub sigma2: f64,
    pub eta: f64,
    /// Mean length of the flow move applied to the generated batch.
    pub mean_displacement: f64,
    /// Mean squared distance between generated points and their regression targets.
    pub regression_loss: f64,
}

/// Trains `g0` against samples of `target_data`.
///
/// Each step draws a target batch (without replacement) and fresh latent
/// inputs, generates `y`, perturbs `z = y + σε`, moves `y` along the flow
/// evaluated at `z` and regresses the moved points on the latent inputs.
pub fn model_opt_loop(
    target_data: &ParticleSet,
    target_score: Option<&dyn ScoreFunction>,
    g0: LinearGenerator,
    config: &ModelOptConfig,
    freqs: &FrequencySet,
) -> Result<(LinearGenerator, Vec<ModelStepRecord>)> {
    let m = config.batch_size;
    if m == 0 || m > target_data.len() {
        return Err(Error::Config(format!(
            "batch_size must be in 1..={}",
            target_data.len()
        )));
    }
    if config.method == FlowMethod::DiffusionStep {
        return Err(Error::Config(
            "the diffusion step is a particle sampler, not a regression target".into(),
        ));
    }
    if config.method.needs_target_score() && target_score.is_none() {
        return Err(Error::Config(format!(
            "method `{}` needs an analytic target score",
            config.method
        )));
    }
    check_dim(g0.output_dim(), target_data.dim())?;
    check_dim(target_data.dim(), freqs.dim())?;
    check_positive("lambda", config.lambda)?;

    let schedule = &config.schedule;
    let (d, l) = (g0.output_dim(), g0.latent_dim());
    let mut g = g0;
    if config.steps > schedule.total_steps() {
        return Err(Error::Config("steps exceed the schedule length".into()));
    }
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let sigma2 = schedule.noise_at(step)?;
        let eta = schedule.step_at(step)?;
        let mut rng = seeded(derive_seed(config.seed, step as u64));
        let x = if m == target_data.len() {
            target_data.clone()
        } else {
            target_data.select(&index::sample(&mut rng, target_data.len(), m).into_vec())
        };
        let xi = standard_normal(&mut rng, m, l);
        let y = g.generate(&xi)?;
        let eps = standard_normal(&mut rng, m, d);
        let z = y.add_scaled(&eps, Float::sqrt(sigma2))?;

        let direction = flow_direction(config.method, &z, &x, &y, sigma2, target_score)?;
        let moved = y.add_scaled(&direction, eta)?;
        let mean_displacement =
            eta * direction.rows().map(|r| Float::sqrt(r.iter().map(|v| v * v).sum::<f64>())).sum::<f64>()
                / m as f64;
        trace.push(ModelStepRecord {
            step,
            cfd: cfd(&y, &x, freqs)?,
            sigma2,
            eta,
            mean_displacement,
            regression_loss: 2.0 * g.regression_loss(&xi, &moved, Reduction::Mean)?,
        });
        g = g.regress_step(&xi, &moved, config.lambda, config.reduction)?;
    }
    Ok((g, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::DiagonalGaussianScore;

    fn gen1(b: f64, mu: f64) -> LinearGenerator {
        LinearGenerator::new(Matrix::from_vec(1, 1, vec![b]).unwrap(), vec![mu]).unwrap()
    }

    fn set1(v: &[f64]) -> ParticleSet {
        ParticleSet::from_flat(1, v.to_vec()).unwrap()
    }

    #[test]
    fn generate_examples() {
        assert_eq!(gen1(2.0, 3.0).generate(&set1(&[5.0])).unwrap().as_flat(), &[13.0]);
        let xi = ParticleSet::from_flat(3, vec![1.0, -2.0, 0.5, 4.0, 0.0, 1.0]).unwrap();
        let id = LinearGenerator::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(id.generate(&xi).unwrap(), xi);
        let zero = LinearGenerator::new(Matrix::zeros(2, 3), vec![0.0; 2]).unwrap();
        assert!(zero.generate(&xi).unwrap().as_flat().iter().all(|&v| v == 0.0));
        assert!(zero.generate(&set1(&[1.0])).is_err());
    }

    #[test]
    fn regress_step_examples() {
        let g = gen1(0.0, 0.0).regress_step(&set1(&[1.0]), &set1(&[1.0]), 1.0, Reduction::Mean).unwrap();
        assert_eq!((g.b_hat().get(0, 0), g.mu_hat()[0]), (1.0, 1.0));
        let g = gen1(0.0, 0.0).regress_step(&set1(&[1.0]), &set1(&[1.0]), 1.0, Reduction::Sum).unwrap();
        assert_eq!((g.b_hat().get(0, 0), g.mu_hat()[0]), (1.0, 1.0));

        let g0 = LinearGenerator::init(4, 2, 1);
        let xi = standard_normal(&mut seeded(2), 8, 2);
        let y = g0.generate(&xi).unwrap();
        assert_eq!(g0.regress_step(&xi, &y, 0.5, Reduction::Mean).unwrap(), g0);
        assert!(g0.regress_step(&xi, &y, 0.0, Reduction::Mean).is_err());
        assert!(g0.regress_step(&xi, &y.select(&[0, 1]), 0.5, Reduction::Mean).is_err());
    }

    #[test]
    fn sum_is_batch_times_mean() {
        let g0 = LinearGenerator::init(3, 2, 4);
        let xi = standard_normal(&mut seeded(5), 6, 2);
        let y = standard_normal(&mut seeded(6), 6, 3);
        let (bm, mm) = g0.regression_gradient(&xi, &y, Reduction::Mean).unwrap();
        let (bs, ms) = g0.regression_gradient(&xi, &y, Reduction::Sum).unwrap();
        for (a, b) in bm.as_slice().iter().chain(&mm).zip(bs.as_slice().iter().chain(&ms)) {
            assert!((6.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_steps_leave_generator_unchanged() {
        let data = standard_normal(&mut seeded(1), 16, 2);
        let g0 = LinearGenerator::init(2, 2, 3);
        let config = ModelOptConfig {
            method: FlowMethod::KernelSd,
            schedule: ScheduleSpec::constant(1.0, 1.0, 1).unwrap(),
            lambda: 0.1,
            batch_size: 8,
            steps: 0,
            reduction: Reduction::Mean,
            seed: 0,
        };
        let freqs = FrequencySet::standard_normal(8, 2, 0);
        let (g, trace) = model_opt_loop(&data, None, g0.clone(), &config, &freqs).unwrap();
        assert_eq!(g, g0);
        assert!(trace.is_empty());
    }

    #[test]
    fn analytic_flow_fits_one_dimensional_gaussian() {
        let p = DiagonalGaussianScore::isotropic(vec![5.0], 1.0).unwrap();
        let data = {
            let mut d = standard_normal(&mut seeded(7), 512, 1);
            d.translate(&[5.0]).unwrap();
            d
        };
        let config = ModelOptConfig {
            method: FlowMethod::AnalyticSd,
            schedule: ScheduleSpec::constant(0.01, 0.1, 2000).unwrap(),
            lambda: 1.0,
            batch_size: 256,
            steps: 2000,
            reduction: Reduction::Mean,
            seed: 11,
        };
        let freqs = FrequencySet::standard_normal(16, 1, 0);
        let (g, trace) =
            model_opt_loop(&data, Some(&p), LinearGenerator::init(1, 1, 2), &config, &freqs).unwrap();
        assert_eq!(trace.len(), 2000);
        assert!((g.mu_hat()[0] - 5.0).abs() < 0.1, "mu_hat = {}", g.mu_hat()[0]);
        assert!((g.b_hat().get(0, 0).abs() - 1.0).abs() < 0.1);
    }
}
