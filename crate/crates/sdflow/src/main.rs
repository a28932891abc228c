use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sdflow::config::{ExperimentConfig, Overrides};
use sdflow::harness::{self, ModelOptExperiment, NoiseRule, ReductionName};
use sdflow::io;
use sdflow_core::experiment::Conditions;
use sdflow_core::flows::FlowMethod;
use sdflow_core::targets::{Sampler, TargetModel};

#[derive(Parser)]
#[command(name = "sdflow", version, about = "Score-difference flow particle and model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single particle-optimization run.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Condition grid over several methods, averaged over trials.
    Table {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, value_delimiter = ',', default_value = "sd,mmd,svgd")]
        methods: Vec<FlowMethod>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Include the OFFSET flag (32 conditions instead of 16).
        #[arg(long)]
        with_offset: bool,
    },
    /// Convergence threshold from independent target draws.
    Calibrate {
        #[arg(long, default_value = "grid25")]
        target: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 256)]
        frequencies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Flow a sample of one data set onto another.
    Interpolate {
        #[arg(long)]
        from: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Destination target and run settings.
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train the linear generator on the 50-dimensional Gaussian.
    ModelOpt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        noise_multiplier: Option<f64>,
        #[arg(long, value_enum)]
        noise_rule: Option<NoiseRuleArg>,
        #[arg(long, value_enum)]
        reduction: Option<ReductionArg>,
        #[arg(long)]
        target_seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Target utilities.
    Targets {
        #[command(subcommand)]
        command: TargetsCommand,
    },
}

#[derive(Subcommand)]
enum TargetsCommand {
    /// Write a seeded sample as point CSV.
    Export {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the key-value description of the target here.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        header: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseRuleArg {
    Variance,
    StdDev,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReductionArg {
    Mean,
    Sum,
}

fn load(config: &Option<PathBuf>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut c = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    c.apply(overrides);
    c.validate().context("invalid configuration")?;
    Ok(c)
}

fn yn(b: bool) -> &'static str {
    if b {
        "Y"
    } else {
        "N"
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let c = load(&config, &overrides)?;
            let r = harness::run_particle_experiment(&c)?;
            harness::write_run(&r, &c.output_dir)?;
            let v = r.run.verdict;
            println!(
                "{} min_cfd={} step={} threshold={} converged={} time={:.1}s",
                c.method,
                v.min_cfd,
                v.step_of_min,
                v.threshold,
                v.converged,
                r.wall_time.as_secs_f64()
            );
        }
        Command::Table {
            config,
            overrides,
            methods,
            trials,
            with_offset,
        } => {
            let c = load(&config, &overrides)?;
            let conditions = Conditions::grid(with_offset);
            let table = harness::run_condition_table(&c, &conditions, &methods, trials, |cond, cell| {
                let avg = cell.avg_min_cfd().map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
                eprintln!(
                    "A={} B={} C={} N={} O={} {:<6} avg_min_cfd={avg} all={}{}",
                    yn(cond.adagrad),
                    yn(cond.batch),
                    yn(cond.const_noise),
                    yn(cond.anneal),
                    yn(cond.offset),
                    cell.method,
                    yn(cell.all_converged()),
                    cell.error.as_deref().map(|e| format!(" error: {e}")).unwrap_or_default()
                );
            })?;
            table.write(&c.output_dir)?;
            println!("threshold={} table={}", table.threshold, c.output_dir.join("table.csv").display());
        }
        Command::Calibrate {
            target,
            n,
            trials,
            frequencies,
            seed,
        } => {
            let t = TargetModel::by_name(&target, seed)?;
            println!("{}", harness::calibrate(&t, n, trials, frequencies, seed)?);
        }
        Command::Interpolate {
            from,
            config,
            overrides,
        } => {
            let c = load(&config, &overrides)?;
            let source = TargetModel::by_name(&from, c.seeds.data)?;
            let r = harness::run_interpolation(&source, &c, c.n_particles)?;
            harness::write_run(&r, &c.output_dir)?;
            let v = r.run.verdict;
            println!(
                "{} -> {} min_cfd={} final_cfd={} threshold={} converged={}",
                from, c.target, v.min_cfd, r.run.final_cfd, v.threshold, v.converged
            );
        }
        Command::ModelOpt {
            config,
            steps,
            lambda,
            eta,
            noise_multiplier,
            noise_rule,
            reduction,
            target_seed,
            output_dir,
        } => {
            let mut e = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<ModelOptExperiment>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => ModelOptExperiment::default(),
            };
            e.steps = steps.unwrap_or(e.steps);
            e.lambda = lambda.unwrap_or(e.lambda);
            e.eta = eta.unwrap_or(e.eta);
            e.noise_multiplier = noise_multiplier.unwrap_or(e.noise_multiplier);
            if let Some(r) = noise_rule {
                e.noise_rule = match r {
                    NoiseRuleArg::Variance => NoiseRule::Variance,
                    NoiseRuleArg::StdDev => NoiseRule::StdDev,
                };
            }
            if let Some(r) = reduction {
                e.reduction = match r {
                    ReductionArg::Mean => ReductionName::Mean,
                    ReductionArg::Sum => ReductionName::Sum,
                };
            }
            e.target_seed = target_seed.unwrap_or(e.target_seed);
            e.output_dir = output_dir.unwrap_or(e.output_dir);
            let r = harness::run_model_opt(&e)?;
            harness::write_model_opt(&r, &e.output_dir)?;
            let s = r.summary;
            println!(
                "sigma2={:.1} mean_rel_error={:.4} cov_correlation={:.4} nn_median_ratio={:.3} time={:.1}s",
                r.sigma2,
                s.mean_rel_error,
                s.cov_correlation,
                s.nn_median_ratio,
                r.wall_time.as_secs_f64()
            );
        }
        Command::Targets {
            command:
                TargetsCommand::Export {
                    name,
                    n,
                    seed,
                    out,
                    spec,
                    header,
                },
        } => {
            let t = TargetModel::by_name(&name, seed)?;
            io::write_particles(&out, &t.sample(n, seed)?, header)?;
            if let Some(path) = spec {
                io::write_target_spec(&path, &t)?;
            }
        }
    }
    Ok(())
}
