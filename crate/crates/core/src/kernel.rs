//! Gaussian kernel, squared distances and bandwidth selection.

use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{check_dim, check_positive, Error, Result};
use crate::fastmath::{exp_nonpos, lane_dot, lane_min, lane_sum, Columns};
use crate::particles::sq_dist;
use crate::ParticleSet;

/// Squared bandwidth σ² of the Gaussian kernel (also the injected noise
/// variance when annealing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    sigma2: f64,
}

impl KernelConfig {
    pub fn new(sigma2: f64) -> Result<Self> {
        check_positive("sigma2", sigma2)?;
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        Float::sqrt(self.sigma2)
    }
}

/// `exp(-‖z − x‖² / (2σ²))`.
pub fn gaussian_kernel(z: &[f64], x: &[f64], sigma2: f64) -> Result<f64> {
    check_dim(z.len(), x.len())?;
    check_positive("sigma2", sigma2)?;
    Ok(Float::exp(-sq_dist(z, x) / (2.0 * sigma2)))
}

/// Dense matrix of squared distances between two point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SqDistances {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SqDistances {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn pairwise_sq_dists(a: &ParticleSet, b: &ParticleSet) -> Result<SqDistances> {
    check_dim(a.dim(), b.dim())?;
    let mut data = Vec::with_capacity(a.len() * b.len());
    for ra in a.rows() {
        data.extend(b.rows().map(|rb| sq_dist(ra, rb)));
    }
    Ok(SqDistances {
        rows: a.len(),
        cols: b.len(),
        data,
    })
}

/// Logarithm used in the `log(N + 1)` denominator of the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn log(self, v: f64) -> f64 {
        match self {
            LogBase::Natural => Float::ln(v),
            LogBase::Two => Float::log2(v),
            LogBase::Ten => Float::log10(v),
        }
    }
}

/// Median heuristic with natural log: `2 · median D²(y, y′) / ln(N + 1)`.
pub fn median_bandwidth(points: &ParticleSet) -> Result<f64> {
    median_bandwidth_with(points, LogBase::Natural)
}

/// Median heuristic over off-diagonal pairs; an even count of pairs takes the
/// mean of the two central values.
pub fn median_bandwidth_with(points: &ParticleSet, base: LogBase) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Degenerate("median bandwidth needs at least two points"));
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(sq_dist(points.row(i), points.row(j)));
        }
    }
    // Each unordered pair appears twice in the off-diagonal list, which leaves
    // the median unchanged.
    d2.sort_unstable_by(f64::total_cmp);
    let m = d2.len();
    let median = if m % 2 == 1 {
        d2[m / 2]
    } else {
        0.5 * (d2[m / 2 - 1] + d2[m / 2])
    };
    if median <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero"));
    }
    Ok(2.0 * median / base.log(n as f64 + 1.0))
}

/// Kernel-weighted mean of `data` at `z`:
/// `Σ K(z, xᵢ) xᵢ / Σ K(z, xᵢ)`.
///
/// Exponents are shifted by the smallest squared distance so the largest
/// weight is exactly one. `scratch` holds per-point squared distances.
pub(crate) fn weighted_mean_into(
    z: &[f64],
    data: &Columns,
    inv_two_sigma2: f64,
    scratch: &mut Vec<f64>,
    out: &mut [f64],
) {
    data.sq_dists_into(z, scratch);
    let min_d2 = lane_min(scratch);
    for w in scratch.iter_mut() {
        *w = exp_nonpos((min_d2 - *w) * inv_two_sigma2);
    }
    let total = lane_sum(scratch);
    for (k, o) in out.iter_mut().enumerate() {
        *o = lane_dot(scratch, data.col(k)) / total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        assert_eq!(gaussian_kernel(&[1.5, -2.0], &[1.5, -2.0], 3.0).unwrap(), 1.0);
        // ‖z − x‖² = 2σ² gives e⁻¹.
        let k = gaussian_kernel(&[0.0], &[2.0], 2.0).unwrap();
        assert_relative_eq!(k, (-1.0f64).exp(), max_relative = 1e-15);
        let k = gaussian_kernel(&[0.0, 0.0], &[3.0, 4.0], 25.0).unwrap();
        assert_relative_eq!(k, 0.606_530_659_712_633_4, max_relative = 1e-12);
    }

    #[test]
    fn kernel_rejects_bad_input() {
        assert!(matches!(
            gaussian_kernel(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gaussian_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[1.0], -1.0).is_err());
    }

    #[test]
    fn pairwise_examples() {
        let p = ParticleSet::from_rows(&[[0.5, 0.25]]).unwrap();
        let d = pairwise_sq_dists(&p, &p).unwrap();
        assert_eq!((d.rows(), d.cols(), d.get(0, 0)), (1, 1, 0.0));

        let a = ParticleSet::from_rows(&[[0.0]]).unwrap();
        let b = ParticleSet::from_rows(&[[1.0], [3.0]]).unwrap();
        assert_eq!(pairwise_sq_dists(&a, &b).unwrap().row(0), &[1.0, 9.0]);

        let a = ParticleSet::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let b = ParticleSet::from_rows(&[[2.0, 0.0]]).unwrap();
        let d = pairwise_sq_dists(&a, &b).unwrap();
        assert_eq!((d.get(0, 0), d.get(1, 0)), (4.0, 2.0));

        let c = ParticleSet::from_rows(&[[0.0, 0.0, 0.0]]).unwrap();
        assert!(pairwise_sq_dists(&a, &c).is_err());
    }

    #[test]
    fn median_bandwidth_examples() {
        let two = ParticleSet::from_rows(&[[0.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_relative_eq!(
            median_bandwidth(&two).unwrap(),
            8.0 / 3.0f64.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(median_bandwidth(&two).unwrap(), 7.2819, epsilon = 1e-4);

        let three = ParticleSet::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        assert_relative_eq!(
            median_bandwidth(&three).unwrap(),
            2.0 / 4.0f64.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(median_bandwidth(&three).unwrap(), 2.0 / 4.0f64.ln(), epsilon = 1e-12);

        let base2 = median_bandwidth_with(&three, LogBase::Two).unwrap();
        assert_relative_eq!(base2, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn median_bandwidth_degenerate() {
        let same = ParticleSet::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(median_bandwidth(&same), Err(Error::Degenerate(_))));
        let one = ParticleSet::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(median_bandwidth(&one), Err(Error::Degenerate(_))));
    }

    #[test]
    fn even_pair_count_uses_central_mean() {
        // Four collinear points give six pairs: 1,1,1,4,4,9 → median 2.5.
        let pts = ParticleSet::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        assert_relative_eq!(
            median_bandwidth(&pts).unwrap(),
            5.0 / 5.0f64.ln(),
            max_relative = 1e-14
        );
    }

    fn points(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0..10.0f64, dim), 2..12)
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(z in prop::collection::vec(-5.0..5.0f64, 3),
                               x in prop::collection::vec(-5.0..5.0f64, 3),
                               s in 0.01..10.0f64) {
            prop_assert_eq!(gaussian_kernel(&z, &x, s).unwrap(), gaussian_kernel(&x, &z, s).unwrap());
        }

        #[test]
        fn kernel_decreases_with_distance(r1 in 0.0..5.0f64, dr in 0.001..5.0f64, s in 0.1..5.0f64) {
            let near = gaussian_kernel(&[0.0], &[r1], s).unwrap();
            let far = gaussian_kernel(&[0.0], &[r1 + dr], s).unwrap();
            prop_assert!(far <= near);
        }

        #[test]
        fn self_distances_symmetric_with_zero_diagonal(rows in points(3)) {
            let p = ParticleSet::from_rows(&rows).unwrap();
            let d = pairwise_sq_dists(&p, &p).unwrap();
            for i in 0..p.len() {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..p.len() {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    prop_assert!(d.get(i, j) >= 0.0);
                }
            }
        }

        #[test]
        fn median_bandwidth_rigid_invariance(rows in points(2),
                                             angle in 0.0..6.2f64,
                                             shift in prop::collection::vec(-50.0..50.0f64, 2)) {
            let p = ParticleSet::from_rows(&rows).unwrap();
            prop_assume!(median_bandwidth(&p).is_ok());
            let (s, c) = angle.sin_cos();
            let moved: Vec<Vec<f64>> = rows.iter()
                .map(|r| vec![c * r[0] - s * r[1] + shift[0], s * r[0] + c * r[1] + shift[1]])
                .collect();
            let q = ParticleSet::from_rows(&moved).unwrap();
            let a = median_bandwidth(&p).unwrap();
            let b = median_bandwidth(&q).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
