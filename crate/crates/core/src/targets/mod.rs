//! Toy target and source distributions.
//!
//! Geometry that is not pinned down elsewhere is fixed here and versioned by
//! [`GEOMETRY_VERSION`]: the grid uses centers `{−4, −2, 0, 2, 4}²` with
//! component σ = 0.2; the question-mark mixture uses the 30-row
//! [`MYSTERY_CENTERS`] table (σ = 0.2); the Swiss roll uses scale 0.5; the
//! offset base is displaced by 1.5× the target extent along the first axis.
//! Calibrated thresholds are only comparable across runs that share a
//! geometry version.

mod linear;
mod mixture;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_traits::Float;
use rand::Rng;

pub use linear::LinearGaussianSpec;
pub use mixture::GaussianMixtureSpec;

use crate::error::{Error, Result};
use crate::flows::ScoreFunction;
use crate::particles::sq_dist;
use crate::rng::{seeded, standard_normal};
use crate::ParticleSet;

/// Bumped whenever a built-in geometry changes.
pub const GEOMETRY_VERSION: u32 = 1;

/// Component standard deviation of the grid and question-mark mixtures.
pub const COMPONENT_SIGMA: f64 = 0.2;

pub const GRID_SPACING: f64 = 2.0;

pub const SWISS_ROLL_SCALE: f64 = 0.5;

/// Displacement of the offset base, as a multiple of the target extent.
pub const OFFSET_FACTOR: f64 = 1.5;

/// Centers of the 30-component question mark in ℝ³: a 240° hook of radius
/// 1.5 that rises and falls in the third coordinate, a five-component stem
/// and a three-component dot. Centered so the mixture mean is near zero.
pub const MYSTERY_CENTERS: [[f64; 3]; 30] = [
    [-1.6521, 1.3461, -0.2719],
    [-1.4778, 1.5887, -0.1825],
    [-1.2588, 1.7918, -0.0950],
    [-1.0039, 1.9476, -0.0116],
    [-0.7232, 2.0498, 0.0661],
    [-0.4279, 2.0943, 0.1362],
    [-0.1295, 2.0794, 0.1972],
    [0.1599, 2.0057, 0.2477],
    [0.4290, 1.8761, 0.2866],
    [0.6672, 1.6957, 0.3131],
    [0.8648, 1.4717, 0.3264],
    [1.0142, 1.2131, 0.3264],
    [1.1093, 0.9299, 0.3131],
    [1.1464, 0.6335, 0.2866],
    [1.1241, 0.3357, 0.2477],
    [1.0432, 0.0481, 0.1972],
    [0.9069, -0.2177, 0.1362],
    [0.7207, -0.4512, 0.0661],
    [0.4919, -0.6432, -0.0116],
    [0.2295, -0.7861, -0.0950],
    [-0.0559, -0.8741, -0.1825],
    [-0.3531, -0.9039, -0.2719],
    [-0.3531, -1.2039, -0.2719],
    [-0.3531, -1.5039, -0.2719],
    [-0.3531, -1.8039, -0.2719],
    [-0.3531, -2.1039, -0.2719],
    [-0.3531, -2.4039, -0.2719],
    [-0.5031, -3.4039, -0.2719],
    [-0.2031, -3.4039, -0.2719],
    [-0.3531, -3.4039, -0.1219],
];

/// Seeded sampling access to a distribution.
pub trait Sampler {
    fn dim(&self) -> usize;

    /// `n` points; identical for identical `(n, seed)`.
    fn sample(&self, n: usize, seed: u64) -> Result<ParticleSet>;
}

/// Equal-weight 5×5 grid of isotropic Gaussians in ℝ².
pub fn grid25_spec() -> GaussianMixtureSpec {
    let ticks = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|t| t * GRID_SPACING);
    let mut rows = Vec::with_capacity(25);
    for &x in &ticks {
        for &y in &ticks {
            rows.push([x, y]);
        }
    }
    let means = ParticleSet::from_rows(&rows).expect("finite grid");
    GaussianMixtureSpec::uniform(means, COMPONENT_SIGMA * COMPONENT_SIGMA).expect("valid grid spec")
}

/// Equal-weight 30-component question mark in ℝ³.
pub fn mystery30_spec() -> GaussianMixtureSpec {
    let means = ParticleSet::from_rows(&MYSTERY_CENTERS).expect("finite table");
    GaussianMixtureSpec::uniform(means, COMPONENT_SIGMA * COMPONENT_SIGMA).expect("valid mystery spec")
}

pub fn gaussian_grid_25(n: usize, seed: u64) -> Result<(ParticleSet, GaussianMixtureSpec)> {
    let spec = grid25_spec();
    Ok((spec.sample(n, seed)?, spec))
}

pub fn mystery_mixture_30(n: usize, seed: u64) -> Result<(ParticleSet, GaussianMixtureSpec)> {
    let spec = mystery30_spec();
    Ok((spec.sample(n, seed)?, spec))
}

/// Swiss roll `s·(t cos t, h, t sin t)` with `t ~ U[1.5π, 4.5π]` and
/// `h ~ U[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwissRollSpec {
    pub scale: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub height: f64,
}

impl Default for SwissRollSpec {
    fn default() -> Self {
        Self {
            scale: SWISS_ROLL_SCALE,
            t_min: 1.5 * PI,
            t_max: 4.5 * PI,
            height: 10.0,
        }
    }
}

impl Sampler for SwissRollSpec {
    fn dim(&self) -> usize {
        3
    }

    fn sample(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        let mut rng = seeded(seed);
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            let t = self.t_min + (self.t_max - self.t_min) * rng.random::<f64>();
            let h = self.height * rng.random::<f64>();
            let (s, c) = Float::sin_cos(t);
            data.extend_from_slice(&[self.scale * t * c, self.scale * h, self.scale * t * s]);
        }
        ParticleSet::from_flat(3, data)
    }
}

pub fn swiss_roll(n: usize, seed: u64) -> Result<ParticleSet> {
    SwissRollSpec::default().sample(n, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Mixture(GaussianMixtureSpec),
    SwissRoll(SwissRollSpec),
    Linear(LinearGaussianSpec),
}

/// A named distribution with seeded sampling and, when available, an exact
/// score.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    name: String,
    kind: TargetKind,
}

/// Seed of the fixed reference sample used for the center and extent of
/// targets without closed forms.
const REFERENCE_SEED: u64 = 0x5eed;
const REFERENCE_SIZE: usize = 4096;

impl TargetModel {
    pub fn new(name: impl Into<String>, kind: TargetKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }

    pub fn grid25() -> Self {
        Self::new("grid25", TargetKind::Mixture(grid25_spec()))
    }

    pub fn mystery30() -> Self {
        Self::new("mystery30", TargetKind::Mixture(mystery30_spec()))
    }

    pub fn swiss_roll() -> Self {
        Self::new("swiss-roll", TargetKind::SwissRoll(SwissRollSpec::default()))
    }

    /// The 50×25 linear Gaussian with parameters drawn from `seed`.
    pub fn linear50(seed: u64) -> Self {
        Self::new("linear50", TargetKind::Linear(LinearGaussianSpec::random(50, 25, seed)))
    }

    /// Built-in targets: `grid25`, `mystery30`, `swiss-roll`, `linear50`
    /// (the latter parameterized by `seed`).
    pub fn by_name(name: &str, seed: u64) -> Result<Self> {
        match name {
            "grid25" => Ok(Self::grid25()),
            "mystery30" | "mystery" => Ok(Self::mystery30()),
            "swiss-roll" | "swiss_roll" => Ok(Self::swiss_roll()),
            "linear50" => Ok(Self::linear50(seed)),
            other => Err(Error::Config(format!("unknown target `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn mixture(&self) -> Option<&GaussianMixtureSpec> {
        match &self.kind {
            TargetKind::Mixture(m) => Some(m),
            _ => None,
        }
    }

    /// Exact score when the log-density is available in closed form.
    pub fn score(&self) -> Option<&dyn ScoreFunction> {
        match &self.kind {
            TargetKind::Mixture(m) => Some(m),
            _ => None,
        }
    }

    /// Center and spatial extent: the mixture mean and the largest
    /// center-to-component distance for mixtures, otherwise the mean and the
    /// largest distance to the mean over a fixed reference sample.
    pub fn center_and_extent(&self) -> Result<(Vec<f64>, f64)> {
        match &self.kind {
            TargetKind::Mixture(m) => Ok((m.mean(), m.extent())),
            TargetKind::Linear(l) => {
                let reference = l.sample(REFERENCE_SIZE, REFERENCE_SEED)?;
                let extent = max_distance(&reference, l.mean());
                Ok((l.mean().to_vec(), extent))
            }
            TargetKind::SwissRoll(s) => {
                let reference = s.sample(REFERENCE_SIZE, REFERENCE_SEED)?;
                let mean = reference.mean();
                let extent = max_distance(&reference, &mean);
                Ok((mean, extent))
            }
        }
    }
}

fn max_distance(points: &ParticleSet, center: &[f64]) -> f64 {
    points
        .rows()
        .map(|p| Float::sqrt(sq_dist(p, center)))
        .fold(0.0, f64::max)
}

impl Sampler for TargetModel {
    fn dim(&self) -> usize {
        match &self.kind {
            TargetKind::Mixture(m) => Sampler::dim(m),
            TargetKind::SwissRoll(s) => s.dim(),
            TargetKind::Linear(l) => Sampler::dim(l),
        }
    }

    fn sample(&self, n: usize, seed: u64) -> Result<ParticleSet> {
        match &self.kind {
            TargetKind::Mixture(m) => m.sample(n, seed),
            TargetKind::SwissRoll(s) => s.sample(n, seed),
            TargetKind::Linear(l) => l.sample(n, seed),
        }
    }
}

impl TargetKind {
    pub fn label(&self) -> &'static str {
        match self {
            TargetKind::Mixture(_) => "mixture",
            TargetKind::SwissRoll(_) => "swiss-roll",
            TargetKind::Linear(_) => "linear-gaussian",
        }
    }
}

/// Spherical unit-variance Gaussian base, centered at the target center or,
/// with `offset`, displaced by `1.5 × extent` along the first axis.
pub fn offset_gaussian_base(target: &TargetModel, offset: bool, n: usize, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "must be at least 1",
        });
    }
    let (mut center, extent) = target.center_and_extent()?;
    if offset {
        center[0] += OFFSET_FACTOR * extent;
    }
    let mut base = standard_normal(&mut seeded(seed), n, center.len());
    base.translate(&center)?;
    Ok(base)
}

/// Displacement vector used by [`offset_gaussian_base`].
pub fn offset_vector(target: &TargetModel) -> Result<Vec<f64>> {
    let (center, extent) = target.center_and_extent()?;
    let mut v = vec![0.0; center.len()];
    v[0] = OFFSET_FACTOR * extent;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_determinism() {
        let (a, spec) = gaussian_grid_25(1024, 11).unwrap();
        assert_eq!((a.len(), a.dim(), spec.components()), (1024, 2, 25));
        let (b, _) = gaussian_grid_25(1024, 11).unwrap();
        assert_eq!(a, b);
        let (c, _) = gaussian_grid_25(1024, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mystery_has_thirty_components() {
        let (pts, spec) = mystery_mixture_30(100, 3).unwrap();
        assert_eq!(spec.components(), 30);
        assert_eq!(pts.dim(), 3);
        assert_eq!(pts, mystery_mixture_30(100, 3).unwrap().0);
    }

    #[test]
    fn swiss_roll_radii() {
        let pts = swiss_roll(1024, 5).unwrap();
        assert_eq!((pts.len(), pts.dim()), (1024, 3));
        let s = SWISS_ROLL_SCALE;
        for p in pts.rows() {
            let r = (p[0] * p[0] + p[2] * p[2]).sqrt();
            assert!(r >= s * 1.5 * PI - 1e-9 && r <= s * 4.5 * PI + 1e-9);
            assert!(p[1] >= 0.0 && p[1] <= s * 10.0);
        }
        assert_eq!(pts, swiss_roll(1024, 5).unwrap());
    }

    #[test]
    fn base_offset() {
        let t = TargetModel::mystery30();
        let (center, extent) = t.center_and_extent().unwrap();
        let centered = offset_gaussian_base(&t, false, 4000, 2).unwrap();
        let shifted = offset_gaussian_base(&t, true, 4000, 2).unwrap();
        let m0 = centered.mean();
        let m1 = shifted.mean();
        // 5 standard errors of a unit-variance mean over 4000 draws.
        let tol = 5.0 / (4000.0f64).sqrt();
        for k in 0..3 {
            assert!((m0[k] - center[k]).abs() < tol);
        }
        let disp = sq_dist(&m1, &center).sqrt();
        assert!(disp > extent);
        assert_eq!(shifted, offset_gaussian_base(&t, true, 4000, 2).unwrap());
        assert!(offset_gaussian_base(&t, true, 0, 2).is_err());
    }

    #[test]
    fn registry() {
        for name in ["grid25", "mystery30", "swiss-roll", "linear50"] {
            let t = TargetModel::by_name(name, 1).unwrap();
            assert_eq!(t.sample(4, 0).unwrap().len(), 4);
        }
        assert!(TargetModel::by_name("moons", 0).is_err());
        assert!(TargetModel::grid25().score().is_some());
        assert!(TargetModel::swiss_roll().score().is_none());
    }
}
