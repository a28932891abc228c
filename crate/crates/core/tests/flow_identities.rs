use proptest::prelude::*;
use rand::Rng;
use sdflow_core::flows::{
    denoiser, diffusion_noise_variance, diffusion_rho, diffusion_step_set, mmd_update, sd_update,
};
use sdflow_core::rng::{derive_seed, seeded, standard_normal};
use sdflow_core::ParticleSet;

fn random_set(seed: u64, n: usize, d: usize, scale: f64, shift: f64) -> ParticleSet {
    let mut s = standard_normal(&mut seeded(seed), n, d).scaled(scale);
    s.translate(&vec![shift; d]).unwrap();
    s
}

/// Random sizes, dimension, spread and bandwidth per instance.
fn instance(i: u64) -> (ParticleSet, ParticleSet, ParticleSet, f64) {
    let mut rng = seeded(derive_seed(77, i));
    let d = rng.random_range(1..=4);
    let (n, m, k) = (rng.random_range(1..40), rng.random_range(1..40), rng.random_range(1..20));
    let sigma2 = 10f64.powf(rng.random_range(-2.0..1.5));
    let x = random_set(derive_seed(i, 1), n, d, rng.random_range(0.1..3.0), rng.random_range(-2.0..2.0));
    let y = random_set(derive_seed(i, 2), m, d, rng.random_range(0.1..3.0), rng.random_range(-2.0..2.0));
    let z = random_set(derive_seed(i, 3), k, d, 2.0, 0.0);
    (z, x, y, sigma2)
}

#[test]
fn normalized_mmd_is_half_sd_on_random_instances() {
    for i in 0..100 {
        let (z, x, y, s2) = instance(i);
        let sd = sd_update(&z, &x, &y, s2).unwrap();
        let mmd = mmd_update(&z, &x, &y, s2, true).unwrap();
        // Rounding scales with the coordinates being averaged.
        let scale = x.as_flat().iter().chain(y.as_flat()).fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in mmd.as_flat().iter().zip(sd.as_flat()) {
            assert!((a - 0.5 * b).abs() <= 16.0 * f64::EPSILON * scale, "instance {i}: {a} vs {}", 0.5 * b);
        }
    }
}

#[test]
fn sd_update_is_the_denoiser_difference() {
    for i in 0..100 {
        let (z, x, y, s2) = instance(i);
        let expected = denoiser(&z, &x, s2).unwrap().add_scaled(&denoiser(&z, &y, s2).unwrap(), -1.0).unwrap();
        assert_eq!(sd_update(&z, &x, &y, s2).unwrap(), expected, "instance {i}");
    }
}

#[test]
fn diffusion_variance_identity() {
    let mut rng = seeded(5);
    for _ in 0..1000 {
        let s_t: f64 = rng.random_range(0.01..10.0);
        let s_s: f64 = rng.random_range(0.0..s_t);
        let (t2, s2) = (s_t * s_t, s_s * s_s);
        let v = diffusion_noise_variance(t2, s2).unwrap();
        assert!((v - s2).abs() < 1e-12 * t2.max(1.0), "{t2} {s2}: {v}");
    }
}

#[test]
fn diffusion_step_interpolates_toward_the_denoiser() {
    for i in 0..20 {
        let (y, x, _, s2t) = instance(i);
        let s2s = 0.3 * s2t;
        let noise = standard_normal(&mut seeded(i), y.len(), y.dim());
        let rho = diffusion_rho(s2t, s2s).unwrap();
        let z = y.add_scaled(&noise, s2t.sqrt()).unwrap();
        let d = denoiser(&z, &x, s2t).unwrap();
        let expected = y.add_scaled(&d.add_scaled(&y, -1.0).unwrap(), rho).unwrap();
        let got = diffusion_step_set(&y, &x, s2t, s2s, &noise).unwrap();
        for (a, b) in got.as_flat().iter().zip(expected.as_flat()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }
}

fn diameter(s: &ParticleSet) -> f64 {
    let mut best: f64 = 0.0;
    for a in s.rows() {
        for b in s.rows() {
            best = best.max(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt());
        }
    }
    best
}

/// Translated copy.
fn shifted(s: &ParticleSet, c: &[f64]) -> ParticleSet {
    let mut out = s.clone();
    out.translate(c).unwrap();
    out
}

fn max_abs_diff(a: &ParticleSet, b: &ParticleSet) -> f64 {
    a.as_flat().iter().zip(b.as_flat()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn translation_equivariance(i in 0u64..10_000, c in prop::collection::vec(-50.0..50.0f64, 4)) {
        let (z, x, y, s2) = instance(i);
        let c = &c[..z.dim()];
        let (zs, xs, ys) = (shifted(&z, c), shifted(&x, c), shifted(&y, c));
        let tol = 1e-9;
        let d0 = shifted(&denoiser(&z, &x, s2).unwrap(), c);
        prop_assert!(max_abs_diff(&denoiser(&zs, &xs, s2).unwrap(), &d0) < tol);
        prop_assert!(max_abs_diff(&sd_update(&zs, &xs, &ys, s2).unwrap(), &sd_update(&z, &x, &y, s2).unwrap()) < tol);
        for normalized in [false, true] {
            let a = mmd_update(&zs, &xs, &ys, s2, normalized).unwrap();
            let b = mmd_update(&z, &x, &y, s2, normalized).unwrap();
            let scale = b.as_flat().iter().fold(1.0f64, |m, v| m.max(v.abs()));
            prop_assert!(max_abs_diff(&a, &b) < tol * scale);
        }
    }

    #[test]
    fn weighted_means_stay_in_the_hull(i in 0u64..10_000) {
        let (z, x, y, s2) = instance(i);
        let d = denoiser(&z, &x, s2).unwrap();
        for row in d.rows() {
            for (k, &v) in row.iter().enumerate() {
                let lo = x.rows().map(|r| r[k]).fold(f64::INFINITY, f64::min);
                let hi = x.rows().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        let bound = diameter(&x) + diameter(&y) + (x.row(0).iter().zip(y.row(0)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sqrt();
        for row in sd_update(&z, &x, &y, s2).unwrap().rows() {
            prop_assert!(row.iter().map(|v| v * v).sum::<f64>().sqrt() <= bound + 1e-9);
        }
    }
}

fn mean_cosine_with_noise(update: &ParticleSet, noise: &ParticleSet) -> f64 {
    let mut total = 0.0;
    for (u, e) in update.rows().zip(noise.rows()) {
        let dot: f64 = u.iter().zip(e).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let ne = e.iter().map(|a| a * a).sum::<f64>().sqrt();
        total += dot / (nu * ne);
    }
    total / update.len() as f64
}

#[test]
fn raw_mmd_follows_the_injected_noise_but_sd_does_not() {
    let x = random_set(1, 256, 2, 1.0, 10.0);
    let y = random_set(2, 256, 2, 1.0, 0.0);
    let sigma2: f64 = 1e-4;
    let eps = standard_normal(&mut seeded(3), 256, 2);
    let z = y.add_scaled(&eps, sigma2.sqrt()).unwrap();
    let mmd = mean_cosine_with_noise(&mmd_update(&z, &x, &y, sigma2, false).unwrap(), &eps);
    let sd = mean_cosine_with_noise(&sd_update(&z, &x, &y, sigma2).unwrap(), &eps);
    assert!(mmd > 0.9, "raw MMD cosine {mmd}");
    assert!(sd < 0.5, "SD cosine {sd}");
}
