//! Branch-free `exp` and `sin_cos` plus fixed-order lane reductions.
//!
//! The platform math routines are scalar calls, which keeps the kernel and
//! characteristic-function loops from vectorizing. These versions are plain
//! arithmetic so the compiler can widen them, and the reductions use a fixed
//! number of partial sums so results do not depend on the vector width.

// Polynomial and splitting constants are the fdlibm digits, kept verbatim.
#![allow(clippy::excessive_precision)]

use alloc::vec::Vec;

use crate::ParticleSet;

const LANES: usize = 8;
// 1.5 · 2⁵²: adding it rounds to the nearest integer.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

const LOG2_E: f64 = core::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
const E2: f64 = 0.500_000_000_000_001_9;
const E3: f64 = 0.166_666_666_666_666_82;
const E4: f64 = 0.041_666_666_666_483_93;
const E5: f64 = 0.008_333_333_333_319_28;
const E6: f64 = 0.001_388_888_895_342_145_7;
const E7: f64 = 0.000_198_412_698_908_981_3;
const E8: f64 = 2.480_148_430_110_454_2e-5;
const E9: f64 = 2.755_724_001_024_349e-6;
const E10: f64 = 2.763_307_546_557_511e-7;
const E11: f64 = 2.511_037_274_625_010_2e-8;
/// Below this the result is reported as zero.
const EXP_FLOOR: f64 = -708.0;

/// `eˣ` for `x ≤ 0`, flushed to zero below `-708`.
#[inline(always)]
pub(crate) fn exp_nonpos(x: f64) -> f64 {
    let xc = if x < EXP_FLOOR { EXP_FLOOR } else { x };
    let t = xc * LOG2_E + ROUND_MAGIC;
    let n = t - ROUND_MAGIC;
    let r = (xc - n * LN2_HI) - n * LN2_LO;
    // Degree-11 Chebyshev fit to eʳ on |r| ≤ ln2/2 (relative error < 1e-17),
    // evaluated in Estrin form to shorten the dependency chain.
    let r2 = r * r;
    let r4 = r2 * r2;
    let r8 = r4 * r4;
    let p01 = 1.0 + r;
    let p23 = E2 + E3 * r;
    let p45 = E4 + E5 * r;
    let p67 = E6 + E7 * r;
    let p89 = E8 + E9 * r;
    let p1011 = E10 + E11 * r;
    let p03 = p01 + p23 * r2;
    let p47 = p45 + p67 * r2;
    let p811 = p89 + p1011 * r2;
    let p = (p03 + p47 * r4) + p811 * r8;
    let k = t.to_bits().wrapping_sub(ROUND_MAGIC.to_bits()) as i64;
    let scale = f64::from_bits(((k + 1023) as u64) << 52);
    if x < EXP_FLOOR {
        0.0
    } else {
        p * scale
    }
}

const FRAC_2_PI: f64 = core::f64::consts::FRAC_2_PI;
// π/2 split into three pieces with 33 significant bits in the first two.
const PIO2_1: f64 = 1.570_796_326_734_125_614_17;
const PIO2_2: f64 = 6.077_100_506_303_965_976_6e-11;
const PIO2_3: f64 = 2.022_266_248_711_166_455_8e-21;

const S1: f64 = -1.666_666_666_666_663_243_48e-1;
const S2: f64 = 8.333_333_333_322_489_461_24e-3;
const S3: f64 = -1.984_126_982_985_794_931_34e-4;
const S4: f64 = 2.755_731_370_707_006_767_89e-6;
const S5: f64 = -2.505_076_025_340_686_341_95e-8;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-2;
const C2: f64 = -1.388_888_888_887_410_957_49e-3;
const C3: f64 = 2.480_158_728_947_672_941_78e-5;
const C4: f64 = -2.755_731_435_139_066_330_35e-7;
const C5: f64 = 2.087_572_321_298_174_827_90e-9;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

/// `(sin x, cos x)` for `|x| < 2²⁰·π/2`; absolute error below 1e-15.
#[inline(always)]
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    let t = x * FRAC_2_PI + ROUND_MAGIC;
    let n = t - ROUND_MAGIC;
    let q = t.to_bits().wrapping_sub(ROUND_MAGIC.to_bits());
    let r = ((x - n * PIO2_1) - n * PIO2_2) - n * PIO2_3;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let (sv, cv) = if q & 1 == 0 { (s, c) } else { (c, s) };
    let sin = if q & 2 == 0 { sv } else { -sv };
    let cos = if q.wrapping_add(1) & 2 == 0 { cv } else { -cv };
    (sin, cos)
}

/// Minimum of a non-empty slice.
pub(crate) fn lane_min(v: &[f64]) -> f64 {
    let mut acc = [f64::INFINITY; LANES];
    let chunks = v.chunks_exact(LANES);
    let tail = chunks.remainder();
    for c in chunks {
        for l in 0..LANES {
            acc[l] = if c[l] < acc[l] { c[l] } else { acc[l] };
        }
    }
    let mut m = tail.iter().fold(f64::INFINITY, |m, &x| if x < m { x } else { m });
    for a in acc {
        m = if a < m { a } else { m };
    }
    m
}

fn combine(acc: [f64; LANES], tail: f64) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    let chunks = v.chunks_exact(LANES);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for l in 0..LANES {
            acc[l] += c[l];
        }
    }
    combine(acc, tail)
}

pub(crate) fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    combine(acc, tail)
}

/// Column-major copy of a point set: coordinate `k` of every point is
/// contiguous.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Columns {
    n: usize,
    data: Vec<f64>,
}

impl Columns {
    pub(crate) fn of(set: &ParticleSet) -> Self {
        let (n, dim) = (set.len(), set.dim());
        let mut data = alloc::vec![0.0; n * dim];
        for (j, row) in set.rows().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                data[k * n + j] = v;
            }
        }
        Self { n, data }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn col(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    /// Squared distances from `z` to every point, written to `out`.
    pub(crate) fn sq_dists_into(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.n, 0.0);
        for (k, &zk) in z.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.col(k)) {
                let d = zk - x;
                *o += d * d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn exp_edges() {
        assert_eq!(exp_nonpos(0.0), 1.0);
        assert_eq!(exp_nonpos(-1000.0), 0.0);
        assert_eq!(exp_nonpos(f64::NEG_INFINITY), 0.0);
        assert!(ulps(exp_nonpos(-1.0), (-1.0f64).exp()) <= 2);
        assert!(ulps(exp_nonpos(-700.0), (-700.0f64).exp()) <= 4);
    }

    #[test]
    fn sin_cos_quadrants() {
        for k in -8..=8 {
            let x = k as f64 * core::f64::consts::FRAC_PI_4;
            let (s, c) = sin_cos(x);
            assert!((s - x.sin()).abs() < 1e-15 && (c - x.cos()).abs() < 1e-15, "{x}");
        }
    }

    #[test]
    fn reductions() {
        let v: Vec<f64> = (0..19).map(|i| (i as f64 - 7.5) * 0.25).collect();
        assert_eq!(lane_min(&v), -1.875);
        assert_eq!(lane_sum(&v), v.iter().sum::<f64>());
        assert_eq!(lane_dot(&v, &v), v.iter().map(|x| x * x).sum::<f64>());
        let p = ParticleSet::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let cols = Columns::of(&p);
        assert_eq!(cols.col(1), &[2.0, 4.0, 6.0]);
        let mut d = Vec::new();
        cols.sq_dists_into(&[1.0, 2.0], &mut d);
        assert_eq!(d, [0.0, 8.0, 32.0]);
    }

    proptest! {
        #[test]
        fn exp_matches_platform(x in -708.0..0.0f64) {
            let e = x.exp();
            prop_assert!(ulps(exp_nonpos(x), e) <= 4, "{} vs {}", exp_nonpos(x), e);
        }

        #[test]
        fn sin_cos_matches_platform(x in -2000.0..2000.0f64) {
            let (s, c) = sin_cos(x);
            prop_assert!((s - x.sin()).abs() < 1e-15);
            prop_assert!((c - x.cos()).abs() < 1e-15);
        }
    }
}
