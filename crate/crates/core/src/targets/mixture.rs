use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::flows::ScoreFunction;
use crate::particles::sq_dist;
use crate::rng::seeded;
use crate::targets::Sampler;
use crate::ParticleSet;

/// Mixture of isotropic Gaussians `Σₖ wₖ N(μₖ, σ²ₖ I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixtureSpec {
    weights: Vec<f64>,
    means: ParticleSet,
    variances: Vec<f64>,
}

impl GaussianMixtureSpec {
    pub fn new(weights: Vec<f64>, means: ParticleSet, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::ShapeMismatch {
                expected: weights.len(),
                found: means.len().min(variances.len()),
            });
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "must be non-negative",
            });
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "weights",
                reason: "must sum to 1",
            });
        }
        for &v in &variances {
            check_positive("variances", v)?;
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Equal weights and a shared variance.
    pub fn uniform(means: ParticleSet, variance: f64) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        Self::new(vec![1.0 / k as f64; k], means, vec![variance; k])
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &ParticleSet {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Mixture mean `Σₖ wₖ μₖ`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(self.means.rows()) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }

    /// Largest distance from the mixture mean to a component center.
    pub fn extent(&self) -> f64 {
        let m = self.mean();
        self.means
            .rows()
            .map(|mu| Float::sqrt(sq_dist(mu, &m)))
            .fold(0.0, f64::max)
    }

    /// Component index for a uniform draw `u ∈ [0, 1)` by inverse CDF.
    pub fn component_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    /// Per-component log of `wₖ N(z; μₖ, σ²ₖ I)`.
    fn log_terms(&self, z: &[f64], out: &mut Vec<f64>) {
        let d = self.dim() as f64;
        out.clear();
        for ((w, mu), v) in self.weights.iter().zip(self.means.rows()).zip(&self.variances) {
            let log_norm = -0.5 * d * Float::ln(2.0 * PI * v);
            out.push(Float::ln(*w) + log_norm - sq_dist(z, mu) / (2.0 * v));
        }
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.dim(), z.len())?;
        let mut terms = Vec::with_capacity(self.components());
        self.log_terms(z, &mut terms);
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| Float::exp(t - max)).sum();
        Ok(max + Float::ln(sum))
    }
}

impl ScoreFunction for GaussianMixtureSpec {
    fn dim(&self) -> usize {
        self.means.dim()
    }

    /// `Σₖ rₖ(z)(μₖ − z)/σ²ₖ` with responsibilities from a log-sum-exp.
    fn score_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), z.len())?;
        let mut terms = Vec::with_capacity(self.components());
        self.log_terms(z, &mut terms);
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for t in terms.iter_mut() {
            *t = Float::exp(*t - max);
            total += *t;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for ((r, mu), v) in terms.iter().zip(self.means.rows()).zip(&self.variances) {
            let scale = r / (total * v);
            for ((o, m), zi) in out.iter_mut().zip(mu).zip(z) {
                *o += scale * (m - zi);
            }
        }
        Ok(())
    }
}

impl Sampler for GaussianMixtureSpec {
    fn dim(&self) -> usize {
        self.means.dim()
    }

    /// One uniform draw picks the component, then `d` standard normals.
    fn sample(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let mut rng = seeded(seed);
        let d = self.dim();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let u: f64 = rng.random();
            let k = self.component_for(u);
            let sd = Float::sqrt(self.variances[k]);
            for &m in self.means.row(k) {
                let e: f64 = rng.sample(StandardNormal);
                data.push(m + sd * e);
            }
        }
        ParticleSet::from_flat(d, data)
    }
}
