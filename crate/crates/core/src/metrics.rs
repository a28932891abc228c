//! Convergence measurement.
//!
//! The characteristic function distance (CFD) between two samples is the mean
//! modulus of the difference of their empirical characteristic functions
//! over a fixed set of random frequencies:
//!
//! ```text
//! CFD(X, Y) = (1/K) Σₖ | (1/N) Σᵢ exp(i ωₖ·xᵢ) − (1/M) Σⱼ exp(i ωₖ·yⱼ) |
//! ```
//!
//! A run is judged converged when its minimum CFD to the target sample drops
//! below a threshold calibrated from independent draws of the target itself.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{check_dim, Error, Result};
use crate::fastmath::{sin_cos, Columns};
use crate::particles::sq_dist;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::targets::Sampler;
use crate::ParticleSet;

/// Number of frequencies used by default.
pub const DEFAULT_FREQUENCIES: usize = 256;

/// Frequencies ωₖ drawn once from N(0, scale²·I) and shared by every method
/// and condition being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySet {
    omegas: ParticleSet,
    columns: Columns,
}

impl FrequencySet {
    pub fn standard_normal(count: usize, dim: usize, seed: u64) -> Self {
        Self::gaussian(count, dim, 1.0, seed)
    }

    pub fn gaussian(count: usize, dim: usize, scale: f64, seed: u64) -> Self {
        let omegas = standard_normal(&mut seeded(seed), count, dim).scaled(scale);
        let columns = Columns::of(&omegas);
        Self { omegas, columns }
    }

    pub fn from_omegas(omegas: ParticleSet) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Empty("frequency set"));
        }
        let columns = Columns::of(&omegas);
        Ok(Self { omegas, columns })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.omegas.dim()
    }

    pub fn omegas(&self) -> &ParticleSet {
        &self.omegas
    }
}

/// Empirical characteristic function evaluated at a [`FrequencySet`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCf {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl EmpiricalCf {
    pub fn of(points: &ParticleSet, freqs: &FrequencySet) -> Result<Self> {
        Ok(PhaseCache::new(points, freqs)?.cf())
    }

    fn normalize(mut re: Vec<f64>, mut im: Vec<f64>, n: usize) -> Self {
        let inv = 1.0 / n as f64;
        re.iter_mut().for_each(|v| *v *= inv);
        im.iter_mut().for_each(|v| *v *= inv);
        Self { re, im }
    }

    /// Mean modulus of the pointwise difference.
    pub fn distance(&self, other: &EmpiricalCf) -> f64 {
        let k = self.re.len();
        let total: f64 = (0..k)
            .map(|j| Float::hypot(self.re[j] - other.re[j], self.im[j] - other.im[j]))
            .sum();
        total / k as f64
    }
}

/// CFD between two samples.
pub fn cfd(x: &ParticleSet, y: &ParticleSet, freqs: &FrequencySet) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    Ok(EmpiricalCf::of(x, freqs)?.distance(&EmpiricalCf::of(y, freqs)?))
}

/// Per-particle phase terms `(cos ωₖ·yᵢ, sin ωₖ·yᵢ)` kept so that only moved
/// particles need re-evaluation. Sums are accumulated in particle order, so
/// the result is bit-identical to [`EmpiricalCf::of`].
#[derive(Debug, Clone)]
pub struct PhaseCache {
    k: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl PhaseCache {
    pub fn new(points: &ParticleSet, freqs: &FrequencySet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("sample"));
        }
        check_dim(freqs.dim(), points.dim())?;
        let k = freqs.len();
        let mut cache = Self {
            k,
            cos: vec![0.0; points.len() * k],
            sin: vec![0.0; points.len() * k],
        };
        for i in 0..points.len() {
            cache.refresh_row(points, i, freqs);
        }
        Ok(cache)
    }

    fn refresh_row(&mut self, points: &ParticleSet, i: usize, freqs: &FrequencySet) {
        let x = points.row(i);
        let range = i * self.k..(i + 1) * self.k;
        let (cos, sin) = (&mut self.cos[range.clone()], &mut self.sin[range]);
        // The phase ωₖ·x is accumulated in `sin` before being overwritten.
        sin.iter_mut().for_each(|p| *p = 0.0);
        for (d, &xd) in x.iter().enumerate() {
            for (p, &w) in sin.iter_mut().zip(freqs.columns.col(d)) {
                *p += w * xd;
            }
        }
        for (s, c) in sin.iter_mut().zip(cos.iter_mut()) {
            (*s, *c) = sin_cos(*s);
        }
    }

    /// Re-evaluates the listed rows of `points`.
    pub fn refresh(&mut self, points: &ParticleSet, indices: &[usize], freqs: &FrequencySet) {
        for &i in indices {
            self.refresh_row(points, i, freqs);
        }
    }

    pub fn refresh_all(&mut self, points: &ParticleSet, freqs: &FrequencySet) {
        for i in 0..points.len() {
            self.refresh_row(points, i, freqs);
        }
    }

    pub fn cf(&self) -> EmpiricalCf {
        let mut re = vec![0.0; self.k];
        let mut im = vec![0.0; self.k];
        for (cr, sr) in self.cos.chunks_exact(self.k).zip(self.sin.chunks_exact(self.k)) {
            for j in 0..self.k {
                re[j] += cr[j];
                im[j] += sr[j];
            }
        }
        let n = self.cos.len() / self.k;
        EmpiricalCf::normalize(re, im, n)
    }
}

/// Largest CFD between pairs of independent `n`-point target draws over
/// `trials` repetitions.
pub fn calibrate_threshold<S: Sampler + ?Sized>(
    target: &S,
    n: usize,
    trials: usize,
    freqs: &FrequencySet,
    seed: u64,
) -> Result<f64> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidParameter {
            name: "n/trials",
            reason: "must be at least 1",
        });
    }
    check_dim(freqs.dim(), target.dim())?;
    let mut worst: f64 = 0.0;
    for t in 0..trials as u64 {
        let a = target.sample(n, derive_seed(seed, 2 * t))?;
        let b = target.sample(n, derive_seed(seed, 2 * t + 1))?;
        worst = worst.max(cfd(&a, &b, freqs)?);
    }
    Ok(worst)
}

/// Euclidean distance from every point of `a` to its nearest point of `b`.
/// With `exclude_self`, `a` and `b` must be the same set and each point's own
/// index is skipped.
pub fn nn_distances(a: &ParticleSet, b: &ParticleSet, exclude_self: bool) -> Result<Vec<f64>> {
    check_dim(a.dim(), b.dim())?;
    if b.is_empty() {
        return Err(Error::Empty("reference set"));
    }
    if exclude_self {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        if a.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "exclude_self",
                reason: "needs at least two points",
            });
        }
    }
    Ok(a.rows()
        .enumerate()
        .map(|(i, x)| {
            let best = b
                .rows()
                .enumerate()
                .filter(|&(j, _)| !(exclude_self && i == j))
                .map(|(_, y)| sq_dist(x, y))
                .fold(f64::INFINITY, f64::min);
            Float::sqrt(best)
        })
        .collect())
}

/// Median of a list (mean of the central pair for even lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceVerdict {
    pub min_cfd: f64,
    pub threshold: f64,
    pub converged: bool,
    pub step_of_min: usize,
}

impl ConvergenceVerdict {
    /// Verdict for a CFD trajectory; ties keep the earliest step.
    pub fn from_trajectory(cfds: &[f64], threshold: f64) -> Result<Self> {
        let (step_of_min, min_cfd) = cfds
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, b)) if b <= v => best,
                _ => Some((i, v)),
            })
            .ok_or(Error::Empty("CFD trajectory"))?;
        Ok(Self {
            min_cfd,
            threshold,
            converged: min_cfd < threshold,
            step_of_min,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn set(rows: &[&[f64]]) -> ParticleSet {
        ParticleSet::from_rows(rows).unwrap()
    }

    #[test]
    fn identical_samples_have_zero_cfd() {
        let x = set(&[&[0.1, 2.0], &[-1.0, 0.5], &[3.0, 3.0]]);
        let f = FrequencySet::standard_normal(64, 2, 5);
        assert_eq!(cfd(&x, &x.clone(), &f).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_single_frequency() {
        let f = FrequencySet::from_omegas(set(&[&[1.0]])).unwrap();
        let d = cfd(&set(&[&[0.0]]), &set(&[&[PI]]), &f).unwrap();
        assert_relative_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_frequencies_give_zero() {
        let f = FrequencySet::from_omegas(ParticleSet::zeros(8, 2)).unwrap();
        let d = cfd(&set(&[&[0.0, 1.0]]), &set(&[&[7.0, -3.0], &[2.0, 2.0]]), &f).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn cfd_rejects_bad_input() {
        let f = FrequencySet::standard_normal(4, 2, 1);
        let x = set(&[&[0.0, 0.0]]);
        assert!(cfd(&x, &ParticleSet::zeros(0, 2), &f).is_err());
        assert!(cfd(&x, &set(&[&[0.0]]), &f).is_err());
        assert!(cfd(&set(&[&[0.0]]), &set(&[&[0.0]]), &f).is_err());
    }

    #[test]
    fn phase_cache_matches_direct() {
        let f = FrequencySet::standard_normal(16, 2, 9);
        let mut x = set(&[&[0.0, 1.0], &[2.0, -1.0], &[0.3, 0.7]]);
        let mut cache = PhaseCache::new(&x, &f).unwrap();
        assert_eq!(cache.cf(), EmpiricalCf::of(&x, &f).unwrap());
        x.row_mut(1)[0] = 5.0;
        cache.refresh(&x, &[1], &f);
        assert_eq!(cache.cf(), EmpiricalCf::of(&x, &f).unwrap());
    }

    #[test]
    fn nn_examples() {
        assert_eq!(nn_distances(&set(&[&[0.0]]), &set(&[&[1.0], &[3.0]]), false).unwrap(), vec![1.0]);
        let a = set(&[&[0.0], &[1.0], &[5.0]]);
        assert_eq!(nn_distances(&a, &a, false).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(nn_distances(&a, &a, true).unwrap(), vec![1.0, 1.0, 4.0]);
        let single = set(&[&[0.0]]);
        assert!(nn_distances(&single, &single, true).is_err());
    }

    #[test]
    fn verdict_from_trajectory() {
        let v = ConvergenceVerdict::from_trajectory(&[0.5, 0.2, 0.3, 0.2], 0.25).unwrap();
        assert_eq!((v.min_cfd, v.step_of_min, v.converged), (0.2, 1, true));
        let v = ConvergenceVerdict::from_trajectory(&[0.5], 0.5).unwrap();
        assert!(!v.converged);
        assert!(ConvergenceVerdict::from_trajectory(&[], 0.5).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    fn sample(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-4.0..4.0f64, dim), 1..10)
    }

    proptest! {
        #[test]
        fn cfd_symmetric_bounded_and_triangle(a in sample(2), b in sample(2), c in sample(2), seed in 0u64..100) {
            let f = FrequencySet::standard_normal(32, 2, seed);
            let (x, y, z) = (ParticleSet::from_rows(&a).unwrap(), ParticleSet::from_rows(&b).unwrap(), ParticleSet::from_rows(&c).unwrap());
            let xy = cfd(&x, &y, &f).unwrap();
            prop_assert_eq!(xy, cfd(&y, &x, &f).unwrap());
            prop_assert!((0.0..=2.0).contains(&xy));
            let xz = cfd(&x, &z, &f).unwrap();
            let yz = cfd(&y, &z, &f).unwrap();
            prop_assert!(xz <= xy + yz + 1e-12);
        }

        #[test]
        fn cfd_permutation_invariant(a in sample(3), b in sample(3), rot in 0usize..10) {
            let f = FrequencySet::standard_normal(32, 3, 4);
            let x = ParticleSet::from_rows(&a).unwrap();
            let y = ParticleSet::from_rows(&b).unwrap();
            let mut permuted = a.clone();
            let len = permuted.len();
            permuted.rotate_left(rot % len);
            permuted.reverse();
            let xp = ParticleSet::from_rows(&permuted).unwrap();
            let d1 = cfd(&x, &y, &f).unwrap();
            let d2 = cfd(&xp, &y, &f).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-12);
        }
    }
}
