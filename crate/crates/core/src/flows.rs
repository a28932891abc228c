//! Particle update directions.
//!
//! Every function returns an unscaled direction with the same shape as the
//! query set `Z`; step sizes, optimizers and the choice of query points
//! (clean or noise-injected) belong to the caller. The σ²/2 prefactor of the
//! continuous SD flow and the 1/σ² of the noisy score are folded into the
//! caller's step size, so the kernel SD direction is simply a difference of
//! two kernel-weighted means.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::fastmath::{exp_nonpos, lane_dot, lane_min, lane_sum, Columns};
use crate::kernel::weighted_mean_into;
use crate::ParticleSet;

/// Update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowMethod {
    /// Difference of kernel-weighted means of target and source.
    KernelSd,
    /// Raw MMD gradient flow (unnormalized kernel weights).
    Mmd,
    /// MMD gradient flow with weights normalized to ½ per distribution.
    MmdNormalized,
    /// Stein variational gradient descent; needs the target score.
    Svgd,
    /// Difference of analytic scores.
    AnalyticSd,
    /// Denoise-and-interpolate reverse diffusion step.
    DiffusionStep,
}

impl FlowMethod {
    pub const ALL: [FlowMethod; 6] = [
        FlowMethod::KernelSd,
        FlowMethod::Mmd,
        FlowMethod::MmdNormalized,
        FlowMethod::Svgd,
        FlowMethod::AnalyticSd,
        FlowMethod::DiffusionStep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FlowMethod::KernelSd => "sd",
            FlowMethod::Mmd => "mmd",
            FlowMethod::MmdNormalized => "mmd-normalized",
            FlowMethod::Svgd => "svgd",
            FlowMethod::AnalyticSd => "analytic-sd",
            FlowMethod::DiffusionStep => "diffusion",
        }
    }

    /// Whether the method needs the analytic target score.
    pub fn needs_target_score(self) -> bool {
        matches!(self, FlowMethod::Svgd | FlowMethod::AnalyticSd)
    }
}

impl fmt::Display for FlowMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        FlowMethod::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::Config(alloc::format!("unknown flow method `{s}`")))
    }
}

/// Gradient of a log-density.
pub trait ScoreFunction {
    fn dim(&self) -> usize;

    /// Writes ∇ log p(z) into `out`.
    fn score_into(&self, z: &[f64], out: &mut [f64]) -> Result<()>;

    fn score(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.score_into(z, &mut out)?;
        Ok(out)
    }
}

impl<S: ScoreFunction + ?Sized> ScoreFunction for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).score_into(z, out)
    }
}

/// Score of a Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussianScore {
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl DiagonalGaussianScore {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        check_dim(mean.len(), variance.len())?;
        for &v in &variance {
            check_positive("variance", v)?;
        }
        Ok(Self { mean, variance })
    }

    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![variance; d])
    }

    /// Moment fit (per-coordinate mean and population variance).
    pub fn fit(points: &ParticleSet) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Degenerate("Gaussian fit needs at least two points"));
        }
        let mean = points.mean();
        let mut var = vec![0.0; points.dim()];
        for row in points.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let n = points.len() as f64;
        var.iter_mut().for_each(|v| *v /= n);
        if var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Degenerate("zero variance along some coordinate"));
        }
        Self::new(mean, var)
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }
}

impl ScoreFunction for DiagonalGaussianScore {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn score_into(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.mean.len(), z.len())?;
        for (((o, zi), m), v) in out.iter_mut().zip(z).zip(&self.mean).zip(&self.variance) {
            *o = -(zi - m) / v;
        }
        Ok(())
    }
}

fn check_sets(z: &ParticleSet, x: &ParticleSet, y: &ParticleSet, sigma2: f64) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty("target set"));
    }
    if y.is_empty() {
        return Err(Error::Empty("source set"));
    }
    check_dim(x.dim(), y.dim())?;
    check_dim(x.dim(), z.dim())?;
    check_positive("sigma2", sigma2)
}

/// Empirical optimal denoiser: the kernel-weighted mean of `data` at every
/// query point.
pub fn denoiser(z: &ParticleSet, data: &ParticleSet, sigma2: f64) -> Result<ParticleSet> {
    if data.is_empty() {
        return Err(Error::Empty("denoiser data"));
    }
    check_dim(data.dim(), z.dim())?;
    check_positive("sigma2", sigma2)?;
    let inv = 1.0 / (2.0 * sigma2);
    let mut out = ParticleSet::zeros(z.len(), z.dim());
    let cols = Columns::of(data);
    let mut scratch = Vec::with_capacity(data.len());
    for (zi, oi) in z.rows().zip(out.rows_mut()) {
        weighted_mean_into(zi, &cols, inv, &mut scratch, oi);
    }
    Ok(out)
}

/// Kernel SD direction: `D_X(z) − D_Y(z)` where `D` is the kernel-weighted
/// mean at bandwidth σ².
pub fn sd_update(
    z: &ParticleSet,
    target: &ParticleSet,
    source: &ParticleSet,
    sigma2: f64,
) -> Result<ParticleSet> {
    check_sets(z, target, source, sigma2)?;
    let inv = 1.0 / (2.0 * sigma2);
    let mut out = ParticleSet::zeros(z.len(), z.dim());
    let (cx, cy) = (Columns::of(target), Columns::of(source));
    let mut scratch = Vec::with_capacity(target.len().max(source.len()));
    let mut mean_q = vec![0.0; z.dim()];
    for (zi, oi) in z.rows().zip(out.rows_mut()) {
        weighted_mean_into(zi, &cx, inv, &mut scratch, oi);
        weighted_mean_into(zi, &cy, inv, &mut scratch, &mut mean_q);
        for (o, q) in oi.iter_mut().zip(&mean_q) {
            *o -= q;
        }
    }
    Ok(out)
}

/// Accumulates `Σ wᵢ xᵢ` and `Σ wᵢ` for one side of the weighted MMD dynamics.
fn weighted_side(
    z: &[f64],
    data: &Columns,
    sigma2: f64,
    normalized: bool,
    kernel: &mut Vec<f64>,
    acc: &mut [f64],
) -> f64 {
    let inv = 1.0 / (2.0 * sigma2);
    data.sq_dists_into(z, kernel);
    if normalized {
        // Weights are normalized, so a common shift of the exponent cancels.
        let min_d2 = lane_min(kernel);
        kernel
            .iter_mut()
            .for_each(|k| *k = exp_nonpos((min_d2 - *k) * inv));
        let scale = 0.5 / lane_sum(kernel);
        kernel.iter_mut().for_each(|k| *k *= scale);
    } else {
        let scale = 1.0 / (data.len() as f64 * sigma2);
        kernel
            .iter_mut()
            .for_each(|k| *k = exp_nonpos(-*k * inv) * scale);
    }
    for (k, a) in acc.iter_mut().enumerate() {
        *a = lane_dot(kernel, data.col(k));
    }
    lane_sum(kernel)
}

/// MMD gradient flow direction in weighted form:
/// `Σ wᵢᵖ xᵢ − Σ wⱼ^q yⱼ + (Σ wⱼ^q − Σ wᵢᵖ) z`.
///
/// Raw weights are `K(z, ·) / (n σ²)`. Normalized weights are
/// `½ K(z, ·) / Σ K(z, ·)`, which cancels the `z` term and makes the direction
/// half the kernel SD direction.
pub fn mmd_update(
    z: &ParticleSet,
    target: &ParticleSet,
    source: &ParticleSet,
    sigma2: f64,
    normalized: bool,
) -> Result<ParticleSet> {
    check_sets(z, target, source, sigma2)?;
    let d = z.dim();
    let mut out = ParticleSet::zeros(z.len(), d);
    let (cx, cy) = (Columns::of(target), Columns::of(source));
    let mut kernel = Vec::with_capacity(target.len().max(source.len()));
    let mut acc_p = vec![0.0; d];
    let mut acc_q = vec![0.0; d];
    for (zi, oi) in z.rows().zip(out.rows_mut()) {
        let wp = weighted_side(zi, &cx, sigma2, normalized, &mut kernel, &mut acc_p);
        let wq = weighted_side(zi, &cy, sigma2, normalized, &mut kernel, &mut acc_q);
        let zc = wq - wp;
        for k in 0..d {
            oi[k] = acc_p[k] - acc_q[k] + zc * zi[k];
        }
    }
    Ok(out)
}

/// SVGD direction using the query set itself as the expectation sample:
/// `φ(z) = (1/N) Σⱼ [K(z, zⱼ) ∇log p(zⱼ) + K(z, zⱼ)(z − zⱼ)/σ²]`.
pub fn svgd_update<S: ScoreFunction + ?Sized>(
    z: &ParticleSet,
    score_p: &S,
    sigma2: f64,
) -> Result<ParticleSet> {
    if z.is_empty() {
        return Err(Error::Empty("particle set"));
    }
    check_dim(score_p.dim(), z.dim())?;
    check_positive("sigma2", sigma2)?;
    let d = z.dim();
    let n = z.len();
    let mut scores = ParticleSet::zeros(n, d);
    for (zi, si) in z.rows().zip(scores.rows_mut()) {
        score_p.score_into(zi, si)?;
    }
    if let Err(e) = scores.ensure_finite() {
        return Err(Error::Score(e.to_string()));
    }
    let inv = 1.0 / (2.0 * sigma2);
    let inv_s2 = 1.0 / sigma2;
    let (cz, cs) = (Columns::of(z), Columns::of(&scores));
    let mut kernel = Vec::with_capacity(n);
    let mut out = ParticleSet::zeros(n, d);
    for (zi, oi) in z.rows().zip(out.rows_mut()) {
        cz.sq_dists_into(zi, &mut kernel);
        kernel.iter_mut().for_each(|k| *k = exp_nonpos(-*k * inv));
        let total = lane_sum(&kernel);
        for c in 0..d {
            // Σⱼ K (sⱼ + (z − zⱼ)/σ²) = Σ K sⱼ + (z Σ K − Σ K zⱼ)/σ²
            let drive = lane_dot(&kernel, cs.col(c));
            let repulse = (zi[c] * total - lane_dot(&kernel, cz.col(c))) * inv_s2;
            oi[c] = (drive + repulse) / n as f64;
        }
    }
    Ok(out)
}

/// `∇log p(z) − ∇log q(z)` at every query point.
pub fn analytic_sd_update<P, Q>(z: &ParticleSet, score_p: &P, score_q: &Q) -> Result<ParticleSet>
where
    P: ScoreFunction + ?Sized,
    Q: ScoreFunction + ?Sized,
{
    check_dim(score_p.dim(), z.dim())?;
    check_dim(score_q.dim(), z.dim())?;
    let mut out = ParticleSet::zeros(z.len(), z.dim());
    let mut sq = vec![0.0; z.dim()];
    for (zi, oi) in z.rows().zip(out.rows_mut()) {
        score_p.score_into(zi, oi)?;
        score_q.score_into(zi, &mut sq)?;
        for (o, q) in oi.iter_mut().zip(&sq) {
            *o -= q;
        }
    }
    if let Err(e) = out.ensure_finite() {
        return Err(Error::Score(e.to_string()));
    }
    Ok(out)
}

/// Interpolation weight `ρ = 1 − σ²_s/σ²_t` of a reverse step from noise
/// variance σ²_t down to σ²_s.
pub fn diffusion_rho(sigma2_t: f64, sigma2_s: f64) -> Result<f64> {
    check_positive("sigma2_t", sigma2_t)?;
    if sigma2_s.is_nan() || sigma2_s < 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma2_s",
            reason: "must be non-negative",
        });
    }
    if sigma2_s > sigma2_t {
        return Err(Error::InvalidParameter {
            name: "sigma2_s",
            reason: "reverse step requires sigma2_s <= sigma2_t",
        });
    }
    Ok(1.0 - sigma2_s / sigma2_t)
}

/// Noise variance carried by `(1 − ρ)y + ρD(z) + √ρ σ_s ε_s` when
/// `z = y + σ_t ε_t`: `ρσ²_s + (1 − ρ)²σ²_t`. Equals σ²_s for the ρ above.
pub fn diffusion_noise_variance(sigma2_t: f64, sigma2_s: f64) -> Result<f64> {
    let rho = diffusion_rho(sigma2_t, sigma2_s)?;
    Ok(rho * sigma2_s + (1.0 - rho) * (1.0 - rho) * sigma2_t)
}

/// One denoise-and-interpolate step for a single point:
/// `y ← (1 − ρ) y + ρ D_X(y + σ_t ε; σ_t)`.
pub fn diffusion_step(
    y: &[f64],
    data: &ParticleSet,
    sigma2_t: f64,
    sigma2_s: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    check_dim(y.len(), noise.len())?;
    check_dim(data.dim(), y.len())?;
    if data.is_empty() {
        return Err(Error::Empty("denoiser data"));
    }
    let rho = diffusion_rho(sigma2_t, sigma2_s)?;
    let sigma_t = Float::sqrt(sigma2_t);
    let z: Vec<f64> = y.iter().zip(noise).map(|(a, e)| a + sigma_t * e).collect();
    let mut denoised = vec![0.0; y.len()];
    let mut scratch = Vec::with_capacity(data.len());
    let cols = Columns::of(data);
    weighted_mean_into(&z, &cols, 1.0 / (2.0 * sigma2_t), &mut scratch, &mut denoised);
    Ok(y.iter()
        .zip(&denoised)
        .map(|(a, dn)| (1.0 - rho) * a + rho * dn)
        .collect())
}

/// Row-wise [`diffusion_step`] for a whole set with per-row noise.
pub fn diffusion_step_set(
    y: &ParticleSet,
    data: &ParticleSet,
    sigma2_t: f64,
    sigma2_s: f64,
    noise: &ParticleSet,
) -> Result<ParticleSet> {
    y.check_same_shape(noise)?;
    let mut out = Vec::with_capacity(y.as_flat().len());
    for (yi, ei) in y.rows().zip(noise.rows()) {
        out.extend(diffusion_step(yi, data, sigma2_t, sigma2_s, ei)?);
    }
    ParticleSet::from_flat(y.dim(), out)
}
