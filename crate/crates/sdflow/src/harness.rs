//! Experiment orchestration: single particle runs, condition tables,
//! interpolation between data sets, threshold calibration and the linear
//! model-optimization experiment.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sdflow_core::experiment::{run_particles, Conditions, ParticleProblem, ParticleRun};
use sdflow_core::flows::FlowMethod;
use sdflow_core::generator::{model_opt_loop, LinearGenerator, ModelOptConfig, ModelStepRecord, Reduction};
use sdflow_core::matrix::Matrix;
use sdflow_core::metrics::{calibrate_threshold, median, nn_distances, FrequencySet};
use sdflow_core::rng::{derive_seed, seeded, standard_normal};
use sdflow_core::schedules::ScheduleSpec;
use sdflow_core::targets::{offset_gaussian_base, LinearGaussianSpec, Sampler, TargetModel};
use sdflow_core::ParticleSet;

use crate::config::ExperimentConfig;
use crate::io;

/// Frequencies and convergence threshold shared by every run measured
/// against one target.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub freqs: FrequencySet,
    pub threshold: f64,
}

impl Measurement {
    /// Frequencies from `seeds.frequency`; the threshold is the configured
    /// value or the calibrated one.
    pub fn for_config(config: &ExperimentConfig) -> Result<Self> {
        let target = config.target_model()?;
        let freqs = FrequencySet::standard_normal(config.frequencies, target.dim(), config.seeds.frequency);
        let threshold = match config.threshold.value {
            Some(t) => t,
            None => calibrate_threshold(
                &target,
                config.n_target,
                config.threshold.calibration_trials,
                &freqs,
                config.calibration_seed(),
            )?,
        };
        Ok(Self { freqs, threshold })
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub run: ParticleRun,
    pub wall_time: Duration,
}

pub fn run_particle_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let m = Measurement::for_config(config)?;
    run_measured(config, &m, None)
}

/// One run with a precomputed measurement; `base` replaces the configured
/// Gaussian base when given.
pub fn run_measured(config: &ExperimentConfig, m: &Measurement, base: Option<ParticleSet>) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let target = config.target_model()?;
    let sample = target.sample(config.n_target, config.target_seed())?;
    let base = match base {
        Some(b) => b,
        None => offset_gaussian_base(&target, config.flags.offset, config.n_particles, config.base_seed())?,
    };
    let problem = ParticleProblem {
        target_sample: &sample,
        target_score: target.score(),
        freqs: &m.freqs,
        threshold: m.threshold,
    };
    let run = run_particles(&config.run_config(), &problem, base, &config.snapshots)?;
    Ok(RunRecord {
        config: config.clone(),
        run,
        wall_time: start.elapsed(),
    })
}

/// Writes `trajectory.csv`, `particles_final.csv`, `particles_<step>.csv`,
/// `verdict.csv` and the resolved `config.toml` into `dir`.
pub fn write_run(record: &RunRecord, dir: &Path) -> Result<()> {
    let run = &record.run;
    io::write_trajectory(&dir.join("trajectory.csv"), &run.rows)?;
    io::write_particles(&dir.join("particles_final.csv"), &run.final_particles, false)?;
    for (step, set) in &run.snapshots {
        io::write_particles(&dir.join(format!("particles_{step}.csv")), set, false)?;
    }
    io::write_verdict(&dir.join("verdict.csv"), &run.verdict, run.final_cfd)?;
    io::write_atomic(&dir.join("config.toml"), record.config.to_toml().as_bytes())
}

/// Results of all trials of one method under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: FlowMethod,
    pub min_cfds: Vec<f64>,
    pub converged: Vec<bool>,
    /// Set when the cell could not run; the trial lists are then empty.
    pub error: Option<String>,
}

impl Cell {
    pub fn avg_min_cfd(&self) -> Option<f64> {
        (!self.min_cfds.is_empty()).then(|| self.min_cfds.iter().sum::<f64>() / self.min_cfds.len() as f64)
    }

    pub fn all_converged(&self) -> bool {
        self.error.is_none() && !self.converged.is_empty() && self.converged.iter().all(|&c| c)
    }

    pub fn majority_converged(&self) -> bool {
        self.error.is_none() && 2 * self.converged.iter().filter(|&&c| c).count() > self.converged.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub conditions: Conditions,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTable {
    pub threshold: f64,
    pub methods: Vec<FlowMethod>,
    pub rows: Vec<TableRow>,
}

impl ConditionTable {
    pub fn cell(&self, conditions: Conditions, method: FlowMethod) -> Option<&Cell> {
        let row = self.rows.iter().find(|r| r.conditions == conditions)?;
        row.cells.iter().find(|c| c.method == method)
    }

    fn has_offset(&self) -> bool {
        self.rows.iter().any(|r| r.conditions.offset)
    }

    /// Condition flags as Y/N, then per method the average min CFD followed
    /// by the all-trials and majority verdicts.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut header: Vec<String> = ["adagrad", "batch", "const", "anneal"].map(String::from).to_vec();
        if self.has_offset() {
            header.push("offset".into());
        }
        for m in &self.methods {
            header.push(m.name().into());
        }
        for m in &self.methods {
            header.push(format!("{m}_converged_all"));
            header.push(format!("{m}_converged_majority"));
        }
        let yn = |b: bool| if b { "Y" } else { "N" }.to_string();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for row in &self.rows {
            let c = row.conditions;
            let mut rec = vec![yn(c.adagrad), yn(c.batch), yn(c.const_noise), yn(c.anneal)];
            if self.has_offset() {
                rec.push(yn(c.offset));
            }
            for cell in &row.cells {
                rec.push(match (&cell.error, cell.avg_min_cfd()) {
                    (Some(e), _) => format!("error: {e}"),
                    (None, Some(v)) => format!("{v}"),
                    (None, None) => String::new(),
                });
            }
            for cell in &row.cells {
                rec.push(yn(cell.all_converged()));
                rec.push(yn(cell.majority_converged()));
            }
            w.write_record(&rec)?;
        }
        Ok(w.into_inner()?)
    }

    /// One line per trial: flags, method, trial index, min CFD, verdict.
    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["adagrad", "batch", "const", "anneal", "offset", "method", "trial", "min_cfd", "converged"])?;
        for row in &self.rows {
            let c = row.conditions;
            for cell in &row.cells {
                for (t, (v, ok)) in cell.min_cfds.iter().zip(&cell.converged).enumerate() {
                    let flags = [c.adagrad, c.batch, c.const_noise, c.anneal, c.offset].map(|b| b.to_string());
                    let mut rec = flags.to_vec();
                    rec.extend([cell.method.to_string(), t.to_string(), format!("{v}"), ok.to_string()]);
                    w.write_record(&rec)?;
                }
            }
        }
        Ok(w.into_inner()?)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_atomic(&dir.join("table.csv"), &self.to_csv()?)?;
        io::write_atomic(&dir.join("trials.csv"), &self.trials_csv()?)
    }
}

/// Config of trial `trial`: data and noise seeds derived from the base
/// config's; frequencies and threshold stay shared. Every method and
/// condition sees the same target sample and base for a given trial.
pub fn trial_config(base: &ExperimentConfig, conditions: Conditions, method: FlowMethod, trial: usize) -> ExperimentConfig {
    let mut c = base.clone();
    c.method = method;
    c.flags = conditions.into();
    c.seeds.data = derive_seed(base.seeds.data, trial as u64);
    c.seeds.noise = derive_seed(base.seeds.noise, trial as u64);
    c.snapshots.clear();
    c
}

/// Runs every (condition, method) cell for `trials` trials. A cell that
/// fails is recorded with its error and the table continues. `progress` is
/// called after each cell.
pub fn run_condition_table(
    base: &ExperimentConfig,
    conditions: &[Conditions],
    methods: &[FlowMethod],
    trials: usize,
    mut progress: impl FnMut(&Conditions, &Cell),
) -> Result<ConditionTable> {
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let m = Measurement::for_config(base)?;
    let mut rows = Vec::with_capacity(conditions.len());
    for &cond in conditions {
        let mut cells = Vec::with_capacity(methods.len());
        for &method in methods {
            let mut cell = Cell {
                method,
                min_cfds: Vec::new(),
                converged: Vec::new(),
                error: None,
            };
            for t in 0..trials {
                match run_measured(&trial_config(base, cond, method, t), &m, None) {
                    Ok(r) => {
                        cell.min_cfds.push(r.run.verdict.min_cfd);
                        cell.converged.push(r.run.verdict.converged);
                    }
                    Err(e) => {
                        cell.min_cfds.clear();
                        cell.converged.clear();
                        cell.error = Some(format!("{e:#}"));
                        break;
                    }
                }
            }
            progress(&cond, &cell);
            cells.push(cell);
        }
        rows.push(TableRow { conditions: cond, cells });
    }
    Ok(ConditionTable {
        threshold: m.threshold,
        methods: methods.to_vec(),
        rows,
    })
}

/// Flows a draw of `source` onto the target named in `config`, starting
/// from `n` source points drawn with the config's base seed. The method,
/// schedule and flags come from `config`.
pub fn run_interpolation(source: &TargetModel, config: &ExperimentConfig, n: usize) -> Result<RunRecord> {
    let dest = config.target_model()?;
    if source.dim() != dest.dim() {
        bail!(
            "source `{}` is {}-dimensional but destination `{}` is {}-dimensional",
            source.name(),
            source.dim(),
            dest.name(),
            dest.dim()
        );
    }
    let mut config = config.clone();
    config.n_particles = n;
    config.validate()?;
    let base = source.sample(n, config.base_seed())?;
    let m = Measurement::for_config(&config)?;
    run_measured(&config, &m, Some(base))
}

/// Largest CFD over `trials` pairs of independent `n`-point draws of the
/// target.
pub fn calibrate(target: &TargetModel, n: usize, trials: usize, frequencies: usize, seed: u64) -> Result<f64> {
    let freqs = FrequencySet::standard_normal(frequencies, target.dim(), seed);
    Ok(calibrate_threshold(target, n, trials, &freqs, derive_seed(seed, 1))?)
}

/// How the constant noise level follows from the mean nearest-neighbor
/// distance `d̄` between the initial generator output and the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseRule {
    /// `σ² = k·d̄`.
    Variance,
    /// `σ = k·d̄`.
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptExperiment {
    #[serde(with = "method_str")]
    pub method: FlowMethod,
    pub dim: usize,
    pub latent_dim: usize,
    /// Seed of the ground-truth `B` and `μ`.
    pub target_seed: u64,
    pub n_target: usize,
    pub batch_size: usize,
    pub eta: f64,
    pub lambda: f64,
    pub steps: usize,
    pub noise_multiplier: f64,
    pub noise_rule: NoiseRule,
    pub reduction: ReductionName,
    pub frequencies: usize,
    pub data_seed: u64,
    pub model_seed: u64,
    pub noise_seed: u64,
    pub frequency_seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionName {
    Mean,
    Sum,
}

impl From<ReductionName> for Reduction {
    fn from(r: ReductionName) -> Self {
        match r {
            ReductionName::Mean => Reduction::Mean,
            ReductionName::Sum => Reduction::Sum,
        }
    }
}

mod method_str {
    use sdflow_core::flows::FlowMethod;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &FlowMethod, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(m)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FlowMethod, D::Error> {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

impl Default for ModelOptExperiment {
    fn default() -> Self {
        Self {
            method: FlowMethod::KernelSd,
            dim: 50,
            latent_dim: 25,
            target_seed: 0,
            n_target: 4096,
            batch_size: 1024,
            eta: 1.0,
            lambda: 1e-3,
            steps: 1000,
            noise_multiplier: 10.0,
            noise_rule: NoiseRule::Variance,
            reduction: ReductionName::Sum,
            frequencies: 256,
            data_seed: 1,
            model_seed: 2,
            noise_seed: 3,
            frequency_seed: 4,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptSummary {
    /// `‖μ̂ − μ‖ / ‖μ‖`.
    pub mean_rel_error: f64,
    /// Pearson correlation of the entries of `B̂B̂ᵀ` and `BBᵀ`.
    pub cov_correlation: f64,
    /// Median generated-to-target NN distance over the target's median
    /// self-NN distance.
    pub nn_median_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct ModelOptRecord {
    pub spec: LinearGaussianSpec,
    pub generator: LinearGenerator,
    pub trace: Vec<ModelStepRecord>,
    pub mean_nn_distance: f64,
    pub sigma2: f64,
    pub nn_generated: Vec<f64>,
    pub nn_target: Vec<f64>,
    pub summary: ModelOptSummary,
    pub wall_time: Duration,
}

/// Pearson correlation; `None` for fewer than two values or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

pub fn run_model_opt(exp: &ModelOptExperiment) -> Result<ModelOptRecord> {
    if exp.dim == 0 || exp.latent_dim == 0 || exp.n_target == 0 || exp.frequencies == 0 {
        bail!("dim, latent_dim, n_target and frequencies must be at least 1");
    }
    if !(exp.noise_multiplier > 0.0 && exp.eta > 0.0) {
        bail!("noise_multiplier and eta must be positive");
    }
    let start = Instant::now();
    let spec = LinearGaussianSpec::random(exp.dim, exp.latent_dim, exp.target_seed);
    let target = spec.sample(exp.n_target, exp.data_seed)?;
    let g0 = LinearGenerator::init(exp.dim, exp.latent_dim, exp.model_seed);

    let probe_xi = standard_normal(&mut seeded(derive_seed(exp.noise_seed, u64::MAX)), exp.batch_size.max(1), exp.latent_dim);
    let initial = g0.generate(&probe_xi)?;
    let nn0 = nn_distances(&initial, &target, false)?;
    let mean_nn_distance = nn0.iter().sum::<f64>() / nn0.len() as f64;
    let sigma2 = match exp.noise_rule {
        NoiseRule::Variance => exp.noise_multiplier * mean_nn_distance,
        NoiseRule::StdDev => (exp.noise_multiplier * mean_nn_distance).powi(2),
    };

    let config = ModelOptConfig {
        method: exp.method,
        schedule: ScheduleSpec::constant(sigma2, exp.eta, exp.steps.max(1))?,
        lambda: exp.lambda,
        batch_size: exp.batch_size,
        steps: exp.steps,
        reduction: exp.reduction.into(),
        seed: exp.noise_seed,
    };
    let freqs = FrequencySet::standard_normal(exp.frequencies, exp.dim, exp.frequency_seed);
    let (generator, trace) = model_opt_loop(&target, None, g0, &config, &freqs).context("model optimization")?;

    let generated = generator.generate(&probe_xi)?;
    let nn_generated = nn_distances(&generated, &target, false)?;
    let nn_target = nn_distances(&target, &target, true)?;
    let mu = spec.mean();
    let err: f64 = mu.iter().zip(generator.mu_hat()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = mu.iter().map(|a| a * a).sum::<f64>().sqrt();
    let cov = spec.covariance();
    let cov_hat = generator.b_hat().gram();
    let summary = ModelOptSummary {
        mean_rel_error: err / norm,
        cov_correlation: pearson(cov.as_slice(), cov_hat.as_slice()).unwrap_or(f64::NAN),
        nn_median_ratio: median(&nn_generated).unwrap_or(f64::NAN) / median(&nn_target).unwrap_or(f64::NAN),
    };
    Ok(ModelOptRecord {
        spec,
        generator,
        trace,
        mean_nn_distance,
        sigma2,
        nn_generated,
        nn_target,
        summary,
        wall_time: start.elapsed(),
    })
}

/// Writes the trained parameters, the per-step trace and the data behind
/// the mean, covariance and nearest-neighbor comparisons.
pub fn write_model_opt(record: &ModelOptRecord, dir: &Path) -> Result<()> {
    let g = &record.generator;
    io::write_matrix(&dir.join("b_hat.csv"), g.b_hat())?;
    io::write_matrix(&dir.join("mu_hat.csv"), &Matrix::from_vec(g.mu_hat().len(), 1, g.mu_hat().to_vec())?)?;
    io::write_model_trace(&dir.join("trace.csv"), &record.trace)?;
    io::write_columns(&dir.join("mean_pairs.csv"), &["mu", "mu_hat"], &[record.spec.mean(), g.mu_hat()])?;
    io::write_columns(
        &dir.join("cov_pairs.csv"),
        &["bbt", "bbt_hat"],
        &[record.spec.covariance().as_slice(), g.b_hat().gram().as_slice()],
    )?;
    io::write_columns(&dir.join("nn_generated.csv"), &["distance"], &[&record.nn_generated])?;
    io::write_columns(&dir.join("nn_target.csv"), &["distance"], &[&record.nn_target])?;
    let s = &record.summary;
    let text = format!(
        "mean_nn_distance = {}\nsigma2 = {}\nmean_rel_error = {}\ncov_correlation = {}\nnn_median_ratio = {}\n",
        record.mean_nn_distance, record.sigma2, s.mean_rel_error, s.cov_correlation, s.nn_median_ratio
    );
    io::write_atomic(&dir.join("summary.txt"), text.as_bytes())
}
