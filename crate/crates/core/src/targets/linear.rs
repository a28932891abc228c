use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};
use crate::targets::Sampler;
use crate::ParticleSet;

/// Standard deviation of the entries of the random mixing matrix.
pub const MIXING_STD: f64 = 0.5;
/// Mean and standard deviation of the entries of the random offset.
pub const OFFSET_MEAN: f64 = 10.0;
pub const OFFSET_STD: f64 = 1.0;

/// `x = Bξ + μ` with `ξ ~ N(0, I)`; rank-deficient when `B` is tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianSpec {
    b: Matrix,
    mu: Vec<f64>,
}

impl LinearGaussianSpec {
    pub fn new(b: Matrix, mu: Vec<f64>) -> Result<Self> {
        check_dim(b.rows(), mu.len())?;
        if b.cols() == 0 {
            return Err(Error::InvalidParameter {
                name: "b",
                reason: "latent dimension must be at least 1",
            });
        }
        Ok(Self { b, mu })
    }

    /// Entries of `B` from N(0, 0.25), entries of `μ` from N(10, 1).
    pub fn random(d_out: usize, d_in: usize, seed: u64) -> Self {
        let mut rng = seeded(derive_seed(seed, 0));
        let b: Vec<f64> = (0..d_out * d_in)
            .map(|_| MIXING_STD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut rng = seeded(derive_seed(seed, 1));
        let mu: Vec<f64> = (0..d_out)
            .map(|_| OFFSET_MEAN + OFFSET_STD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            b: Matrix::from_vec(d_out, d_in, b).expect("shape by construction"),
            mu,
        }
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn latent_dim(&self) -> usize {
        self.b.cols()
    }

    /// `B Bᵀ`.
    pub fn covariance(&self) -> Matrix {
        self.b.gram()
    }
}

impl Sampler for LinearGaussianSpec {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn sample(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let mut rng = seeded(seed);
        let d = self.mu.len();
        let mut latent = alloc::vec![0.0; self.latent_dim()];
        let mut data = alloc::vec![0.0; n * d];
        for out in data.chunks_exact_mut(d) {
            latent
                .iter_mut()
                .for_each(|v| *v = rng.sample(StandardNormal));
            self.b.mul_vec_into(&latent, out);
            for (o, m) in out.iter_mut().zip(&self.mu) {
                *o += m;
            }
        }
        ParticleSet::from_flat(d, data)
    }
}
