//! Particle optimization: evolve a base sample toward a target sample.
//!
//! Each iteration draws (optionally batched) target and source points,
//! optionally injects noise `z = y + σ(t)ε`, evaluates the configured flow at
//! `z` and moves the clean particles `y` by the resulting direction. The CFD
//! is always measured on the full clean particle set, before the update of
//! that step, against the fixed target sample.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::flows::{
    analytic_sd_update, denoiser, diffusion_rho, mmd_update, sd_update, svgd_update,
    DiagonalGaussianScore, FlowMethod, ScoreFunction,
};
use crate::kernel::{median_bandwidth_with, LogBase};
use crate::metrics::{ConvergenceVerdict, EmpiricalCf, FrequencySet, PhaseCache};
use crate::optimizers::{OptimizerKind, OptimizerState, DEFAULT_ADAGRAD_ALPHA, DEFAULT_ADAGRAD_EPSILON};
use crate::particles::sq_dist;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::schedules::ScheduleSpec;
use crate::ParticleSet;

/// Experimental condition flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Conditions {
    /// AdaGrad instead of plain gradient steps.
    pub adagrad: bool,
    /// Per-iteration subsampling of target and source.
    pub batch: bool,
    /// σ² frozen at the median-heuristic bandwidth of the initial base.
    pub const_noise: bool,
    /// Evaluate the flow at noise-injected points.
    pub anneal: bool,
    /// Start the base away from the target center.
    pub offset: bool,
}

impl Conditions {
    /// All `2^k` combinations of the first `k` flags in the order
    /// adagrad, batch, const, anneal, offset; the first flag varies slowest.
    pub fn grid(with_offset: bool) -> Vec<Conditions> {
        let bits = if with_offset { 5 } else { 4 };
        (0..1u32 << bits)
            .map(|code| {
                let flag = |i: u32| code >> (bits - 1 - i) & 1 == 1;
                Conditions {
                    adagrad: flag(0),
                    batch: flag(1),
                    const_noise: flag(2),
                    anneal: flag(3),
                    offset: with_offset && flag(4),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRunConfig {
    pub method: FlowMethod,
    pub iterations: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub sigma2_max: f64,
    pub sigma2_min: f64,
    pub conditions: Conditions,
    /// Accumulator rule used when `conditions.adagrad` is set.
    pub adagrad: OptimizerKind,
    pub adagrad_epsilon: f64,
    pub log_base: LogBase,
    pub noise_seed: u64,
}

impl Default for ParticleRunConfig {
    fn default() -> Self {
        Self {
            method: FlowMethod::KernelSd,
            iterations: 1000,
            batch_size: 128,
            eta: 0.1,
            sigma2_max: 10.0,
            sigma2_min: 0.5,
            conditions: Conditions::default(),
            adagrad: OptimizerKind::AdaGradDecay { alpha: DEFAULT_ADAGRAD_ALPHA },
            adagrad_epsilon: DEFAULT_ADAGRAD_EPSILON,
            log_base: LogBase::Natural,
            noise_seed: 0,
        }
    }
}

/// Inputs shared by every method and condition of a comparison.
#[derive(Clone, Copy)]
pub struct ParticleProblem<'a> {
    pub target_sample: &'a ParticleSet,
    pub target_score: Option<&'a dyn ScoreFunction>,
    pub freqs: &'a FrequencySet,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub cfd: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub mean_displacement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub rows: Vec<StepRecord>,
    pub verdict: ConvergenceVerdict,
    pub final_particles: ParticleSet,
    /// CFD of the particles after the last update.
    pub final_cfd: f64,
    /// `(step, particles before that step's update)`; a step equal to the
    /// iteration count captures the final state.
    pub snapshots: Vec<(usize, ParticleSet)>,
}

impl ParticleRunConfig {
    /// Rejects inconsistent settings before any computation.
    pub fn validate(&self, problem: &ParticleProblem<'_>, base: &ParticleSet) -> Result<()> {
        let cfg = |msg: &str| Err(Error::Config(msg.into()));
        if self.iterations == 0 {
            return cfg("iterations must be at least 1");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return cfg("eta must be positive");
        }
        if base.is_empty() || problem.target_sample.is_empty() {
            return cfg("base and target samples must be non-empty");
        }
        if base.dim() != problem.target_sample.dim() || problem.freqs.dim() != base.dim() {
            return cfg("base, target and frequency dimensions differ");
        }
        if self.conditions.batch
            && (self.batch_size == 0
                || self.batch_size > base.len()
                || self.batch_size > problem.target_sample.len())
        {
            return cfg("batch_size must be in 1..=min(n_particles, n_target)");
        }
        if self.method.needs_target_score() && problem.target_score.is_none() {
            return Err(Error::Config(format!(
                "method `{}` needs an analytic target score",
                self.method
            )));
        }
        if let Some(score) = problem.target_score {
            if score.dim() != base.dim() {
                return cfg("target score dimension differs from the particles");
            }
        }
        if self.method == FlowMethod::DiffusionStep && self.conditions.adagrad {
            return cfg("the diffusion step sets its own step size and cannot use AdaGrad");
        }
        if !self.conditions.const_noise {
            ScheduleSpec::cosine(self.sigma2_max, self.sigma2_min, self.eta, self.iterations)
                .map_err(|e| Error::Config(format!("{e}")))?;
        }
        Ok(())
    }
}

/// Runs particle optimization from `base`.
pub fn run_particles(
    config: &ParticleRunConfig,
    problem: &ParticleProblem<'_>,
    base: ParticleSet,
    snapshot_steps: &[usize],
) -> Result<ParticleRun> {
    config.validate(problem, &base)?;
    let c = config.conditions;
    let n = base.len();
    let dim = base.dim();
    let schedule = if c.const_noise {
        let sigma2 = median_bandwidth_with(&base, config.log_base)?;
        ScheduleSpec::constant(sigma2, config.eta, config.iterations)?
    } else {
        ScheduleSpec::cosine(config.sigma2_max, config.sigma2_min, config.eta, config.iterations)?
    };
    let mut optimizer = if c.adagrad {
        OptimizerState::new(config.adagrad, n, dim, config.adagrad_epsilon)?
    } else {
        OptimizerState::sgd()
    };

    let target = problem.target_sample;
    let target_cf = EmpiricalCf::of(target, problem.freqs)?;
    let mut particles = base;
    let mut cache = PhaseCache::new(&particles, problem.freqs)?;
    let all: Vec<usize> = (0..n).collect();
    let mut rows = Vec::with_capacity(config.iterations);
    let mut snapshots = Vec::new();

    for step in 0..config.iterations {
        if snapshot_steps.contains(&step) {
            snapshots.push((step, particles.clone()));
        }
        let cfd = cache.cf().distance(&target_cf);
        let sigma2 = schedule.noise_at(step)?;
        let eta = schedule.step_at(step)?;
        let mut rng = seeded(derive_seed(config.noise_seed, step as u64));

        let (moved, source, batch_target) = if c.batch {
            let src = index::sample(&mut rng, n, config.batch_size).into_vec();
            let tgt = index::sample(&mut rng, target.len(), config.batch_size).into_vec();
            let source = particles.select(&src);
            (src, source, Some(target.select(&tgt)))
        } else {
            (all.clone(), particles.clone(), None)
        };
        let x = batch_target.as_ref().unwrap_or(target);

        let inject = c.anneal || config.method == FlowMethod::DiffusionStep;
        let z = if inject {
            let eps = standard_normal(&mut rng, source.len(), dim);
            source.add_scaled(&eps, Float::sqrt(sigma2))?
        } else {
            source.clone()
        };

        let before: Vec<f64> = moved.iter().flat_map(|&i| particles.row(i).to_vec()).collect();
        match config.method {
            FlowMethod::DiffusionStep => {
                let sigma2_next = if step + 1 < config.iterations {
                    schedule.noise_at(step + 1)?
                } else {
                    sigma2
                };
                let rho = diffusion_rho(sigma2, sigma2_next)?;
                let direction = denoiser(&z, x, sigma2)?.add_scaled(&source, -1.0)?;
                OptimizerState::sgd().apply_rows(&mut particles, &moved, &direction, rho)?;
            }
            method => {
                let direction = flow_direction(method, &z, x, &source, sigma2, problem.target_score)?;
                optimizer.apply_rows(&mut particles, &moved, &direction, eta)?;
            }
        }
        let displacement: f64 = moved
            .iter()
            .enumerate()
            .map(|(k, &i)| Float::sqrt(sq_dist(particles.row(i), &before[k * dim..(k + 1) * dim])))
            .sum();
        cache.refresh(&particles, &moved, problem.freqs);

        rows.push(StepRecord {
            step,
            cfd,
            sigma2,
            eta,
            mean_displacement: displacement / n as f64,
        });
    }
    if snapshot_steps.contains(&config.iterations) {
        snapshots.push((config.iterations, particles.clone()));
    }

    let final_cfd = cache.cf().distance(&target_cf);
    let cfds: Vec<f64> = rows.iter().map(|r| r.cfd).collect();
    let verdict = ConvergenceVerdict::from_trajectory(&cfds, problem.threshold)?;
    Ok(ParticleRun {
        rows,
        verdict,
        final_particles: particles,
        final_cfd,
        snapshots,
    })
}

/// Direction of `method` at query points `z`, with `target` and `source` as
/// the current samples of p and q.
pub fn flow_direction(
    method: FlowMethod,
    z: &ParticleSet,
    target: &ParticleSet,
    source: &ParticleSet,
    sigma2: f64,
    target_score: Option<&dyn ScoreFunction>,
) -> Result<ParticleSet> {
    let need_score = || {
        target_score.ok_or_else(|| Error::Config(format!("method `{method}` needs an analytic target score")))
    };
    match method {
        FlowMethod::KernelSd => sd_update(z, target, source, sigma2),
        FlowMethod::Mmd => mmd_update(z, target, source, sigma2, false),
        FlowMethod::MmdNormalized => mmd_update(z, target, source, sigma2, true),
        FlowMethod::Svgd => svgd_update(z, need_score()?, sigma2),
        FlowMethod::AnalyticSd => {
            // The source score comes from a moment-matched Gaussian.
            let q = DiagonalGaussianScore::fit(source)?;
            analytic_sd_update(z, need_score()?, &q)
        }
        FlowMethod::DiffusionStep => Ok(denoiser(z, target, sigma2)?.add_scaled(source, -1.0)?),
    }
}
