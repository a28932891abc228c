//! Experiment configuration: a TOML file with command-line overrides.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use sdflow_core::experiment::{Conditions, ParticleRunConfig};
use sdflow_core::flows::FlowMethod;
use sdflow_core::kernel::LogBase;
use sdflow_core::optimizers::{OptimizerKind, DEFAULT_ADAGRAD_ALPHA, DEFAULT_ADAGRAD_EPSILON};
use sdflow_core::rng::derive_seed;
use sdflow_core::targets::TargetModel;

/// Serializes through `Display` / `FromStr`.
mod display_str {
    use super::*;
    use serde::{de, Deserializer, Serializer};

    pub fn serialize<S: Serializer, T: Display>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<T, D::Error>
    where
        D: Deserializer<'de>,
        T: FromStr,
        T::Err: Display,
    {
        String::deserialize(d)?.parse().map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub adagrad: bool,
    pub batch: bool,
    pub const_noise: bool,
    pub anneal: bool,
    pub offset: bool,
}

impl From<Flags> for Conditions {
    fn from(f: Flags) -> Self {
        Conditions {
            adagrad: f.adagrad,
            batch: f.batch,
            const_noise: f.const_noise,
            anneal: f.anneal,
            offset: f.offset,
        }
    }
}

impl From<Conditions> for Flags {
    fn from(c: Conditions) -> Self {
        Flags {
            adagrad: c.adagrad,
            batch: c.batch,
            const_noise: c.const_noise,
            anneal: c.anneal,
            offset: c.offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cosine {
    pub sigma2_max: f64,
    pub sigma2_min: f64,
}

impl Default for Cosine {
    fn default() -> Self {
        Self {
            sigma2_max: 10.0,
            sigma2_min: 0.5,
        }
    }
}

/// AdaGrad accumulator rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Accumulator {
    /// Running sum of squared gradients.
    Plain,
    /// Exponential average of squared gradients (reference SVGD code).
    #[default]
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub accumulator: Accumulator,
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            accumulator: Accumulator::Decay,
            alpha: DEFAULT_ADAGRAD_ALPHA,
            epsilon: DEFAULT_ADAGRAD_EPSILON,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LogBaseName {
    #[default]
    Natural,
    Two,
    Ten,
}

impl From<LogBaseName> for LogBase {
    fn from(b: LogBaseName) -> Self {
        match b {
            LogBaseName::Natural => LogBase::Natural,
            LogBaseName::Two => LogBase::Two,
            LogBaseName::Ten => LogBase::Ten,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Target sample and base particles.
    pub data: u64,
    /// Batches and injected noise.
    pub noise: u64,
    /// CFD frequencies and threshold calibration.
    pub frequency: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Fixed threshold; calibrated from the target when absent.
    pub value: Option<f64>,
    pub calibration_trials: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            value: None,
            calibration_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "display_str")]
    pub method: FlowMethod,
    pub target: String,
    pub n_particles: usize,
    /// Size of the fixed target sample.
    pub n_target: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub eta: f64,
    /// Number of CFD frequencies.
    pub frequencies: usize,
    pub flags: Flags,
    pub cosine: Cosine,
    pub optimizer: OptimizerConfig,
    pub log_base: LogBaseName,
    pub seeds: Seeds,
    pub threshold: ThresholdConfig,
    /// Steps whose particles are written as `particles_<step>.csv`.
    pub snapshots: Vec<usize>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: FlowMethod::KernelSd,
            target: "grid25".into(),
            n_particles: 1024,
            n_target: 1024,
            iterations: 1000,
            batch_size: 128,
            eta: 0.1,
            frequencies: 256,
            flags: Flags::default(),
            cosine: Cosine::default(),
            optimizer: OptimizerConfig::default(),
            log_base: LogBaseName::Natural,
            seeds: Seeds::default(),
            threshold: ThresholdConfig::default(),
            snapshots: Vec::new(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn target_model(&self) -> Result<TargetModel> {
        Ok(TargetModel::by_name(&self.target, self.seeds.data)?)
    }

    /// Seed of the fixed target sample.
    pub fn target_seed(&self) -> u64 {
        derive_seed(self.seeds.data, 0)
    }

    /// Seed of the base particles.
    pub fn base_seed(&self) -> u64 {
        derive_seed(self.seeds.data, 1)
    }

    /// Seed of the threshold calibration draws.
    pub fn calibration_seed(&self) -> u64 {
        derive_seed(self.seeds.frequency, 1)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            bail!("iterations must be at least 1");
        }
        if self.n_particles == 0 || self.n_target == 0 {
            bail!("n_particles and n_target must be at least 1");
        }
        if self.batch_size == 0 || self.batch_size > self.n_particles.min(self.n_target) {
            bail!(
                "batch_size must be in 1..={} (smaller of n_particles and n_target)",
                self.n_particles.min(self.n_target)
            );
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            bail!("eta must be positive");
        }
        if self.frequencies == 0 {
            bail!("frequencies must be at least 1");
        }
        let Cosine { sigma2_max, sigma2_min } = self.cosine;
        if !(sigma2_min > 0.0 && sigma2_min <= sigma2_max && sigma2_max.is_finite()) {
            bail!("cosine schedule needs 0 < sigma2_min <= sigma2_max");
        }
        if let Some(t) = self.threshold.value {
            if !(t.is_finite() && t > 0.0) {
                bail!("threshold must be positive");
            }
        } else if self.threshold.calibration_trials == 0 {
            bail!("calibration_trials must be at least 1");
        }
        if let Some(&s) = self.snapshots.iter().find(|&&s| s > self.iterations) {
            bail!("snapshot step {s} is past the last iteration");
        }
        let target = self.target_model()?;
        if self.method.needs_target_score() && target.score().is_none() {
            bail!("method `{}` needs an analytic target score, which `{}` does not have", self.method, self.target);
        }
        if self.method == FlowMethod::DiffusionStep && self.flags.adagrad {
            bail!("the diffusion step does not use an optimizer; disable adagrad");
        }
        Ok(())
    }

    pub fn run_config(&self) -> ParticleRunConfig {
        let adagrad = match self.optimizer.accumulator {
            Accumulator::Plain => OptimizerKind::AdaGrad,
            Accumulator::Decay => OptimizerKind::AdaGradDecay {
                alpha: self.optimizer.alpha,
            },
        };
        ParticleRunConfig {
            method: self.method,
            iterations: self.iterations,
            batch_size: self.batch_size,
            eta: self.eta,
            sigma2_max: self.cosine.sigma2_max,
            sigma2_min: self.cosine.sigma2_min,
            conditions: self.flags.into(),
            adagrad,
            adagrad_epsilon: self.optimizer.epsilon,
            log_base: self.log_base.into(),
            noise_seed: self.seeds.noise,
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        fn flag(dst: &mut bool, on: bool, off: bool) {
            if on {
                *dst = true;
            } else if off {
                *dst = false;
            }
        }
        set(&mut self.method, &o.method);
        set(&mut self.target, &o.target);
        set(&mut self.n_particles, &o.n_particles);
        set(&mut self.n_target, &o.n_target);
        set(&mut self.iterations, &o.iterations);
        set(&mut self.batch_size, &o.batch_size);
        set(&mut self.eta, &o.eta);
        set(&mut self.frequencies, &o.frequencies);
        flag(&mut self.flags.adagrad, o.adagrad, o.no_adagrad);
        flag(&mut self.flags.batch, o.batch, o.no_batch);
        flag(&mut self.flags.const_noise, o.const_noise, o.no_const_noise);
        flag(&mut self.flags.anneal, o.anneal, o.no_anneal);
        flag(&mut self.flags.offset, o.offset, o.no_offset);
        set(&mut self.cosine.sigma2_max, &o.sigma2_max);
        set(&mut self.cosine.sigma2_min, &o.sigma2_min);
        set(&mut self.optimizer.accumulator, &o.accumulator);
        set(&mut self.optimizer.alpha, &o.adagrad_alpha);
        set(&mut self.optimizer.epsilon, &o.adagrad_epsilon);
        set(&mut self.log_base, &o.log_base);
        set(&mut self.seeds.data, &o.seed_data);
        set(&mut self.seeds.noise, &o.seed_noise);
        set(&mut self.seeds.frequency, &o.seed_frequency);
        if o.threshold.is_some() {
            self.threshold.value = o.threshold;
        }
        set(&mut self.threshold.calibration_trials, &o.calibration_trials);
        set(&mut self.snapshots, &o.snapshots);
        set(&mut self.output_dir, &o.output_dir);
    }
}

/// Flag-level overrides for every [`ExperimentConfig`] field.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long)]
    pub method: Option<FlowMethod>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub n_particles: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub frequencies: Option<usize>,
    #[arg(long, conflicts_with = "no_adagrad")]
    pub adagrad: bool,
    #[arg(long)]
    pub no_adagrad: bool,
    #[arg(long, conflicts_with = "no_batch")]
    pub batch: bool,
    #[arg(long)]
    pub no_batch: bool,
    #[arg(long, conflicts_with = "no_const_noise")]
    pub const_noise: bool,
    #[arg(long)]
    pub no_const_noise: bool,
    #[arg(long, conflicts_with = "no_anneal")]
    pub anneal: bool,
    #[arg(long)]
    pub no_anneal: bool,
    #[arg(long, conflicts_with = "no_offset")]
    pub offset: bool,
    #[arg(long)]
    pub no_offset: bool,
    #[arg(long)]
    pub sigma2_max: Option<f64>,
    #[arg(long)]
    pub sigma2_min: Option<f64>,
    #[arg(long, value_enum)]
    pub accumulator: Option<Accumulator>,
    #[arg(long)]
    pub adagrad_alpha: Option<f64>,
    #[arg(long)]
    pub adagrad_epsilon: Option<f64>,
    #[arg(long, value_enum)]
    pub log_base: Option<LogBaseName>,
    #[arg(long)]
    pub seed_data: Option<u64>,
    #[arg(long)]
    pub seed_noise: Option<u64>,
    #[arg(long)]
    pub seed_frequency: Option<u64>,
    /// Fixed convergence threshold (skips calibration).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub calibration_trials: Option<usize>,
    /// Comma-separated snapshot steps.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<usize>>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}
