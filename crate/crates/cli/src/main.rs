use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use holokan::analysis::FractalMode;
use holokan::model::ModelKind;
use holokan::SystemId;
use holokan_cli::commands::{self, CheckpointArgs, Outcome};
use holokan_cli::experiments::AblationKind;
use holokan_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "holokan", version, about = "Learn holomorphic velocity fields with Kolmogorov-Arnold networks")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Random seed for sampling and initialization [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; each run writes to <out>/<command>-<hash> [default: runs]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// quadratic | cubic | exp | sin | cos | zexp | potential
    #[arg(long, global = true, value_parser = parse_system)]
    system: Option<SystemId>,
    /// kan | mlp
    #[arg(long, global = true, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Flat TOML file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    warmup_steps: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Target noise as a fraction of each component's RMS
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct CheckpointFlag {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its checkpoint and loss history
    Train(TrainFlags),
    /// Velocity MSE, R^2 and Cauchy-Riemann residual on the evaluation lattice
    Evaluate {
        #[command(flatten)]
        ckpt: CheckpointFlag,
        /// Compare the analytic field with itself
        #[arg(long, conflicts_with = "checkpoint")]
        self_check: bool,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Escape-time images of the learned and true maps and their agreement
    Fractal {
        #[command(flatten)]
        ckpt: CheckpointFlag,
        /// Use the analytic field in place of a checkpoint
        #[arg(long, conflicts_with = "checkpoint")]
        analytic: bool,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        max_iter: Option<u32>,
        #[arg(long)]
        bailout: Option<f64>,
        /// Half-width of the square window
        #[arg(long)]
        extent: Option<f64>,
        /// direct | euler
        #[arg(long, value_parser = parse_mode)]
        mode: Option<FractalMode>,
    },
    /// Mean Lyapunov exponent and stability class of the learned map
    Lyapunov {
        #[command(flatten)]
        ckpt: CheckpointFlag,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Fit each spline edge to the candidate library and classify the family
    Symbolic {
        #[command(flatten)]
        ckpt: CheckpointFlag,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Sweep CR weight, grid size or hidden width on the quadratic system
    Ablate {
        #[arg(long, value_enum)]
        kind: AblationKind,
    },
    /// KAN and MLP under 0, 1, 5 and 10 percent target noise
    Noise,
    /// Fine-tune a quadratic KAN on cubic data against scratch training
    Transfer {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run every experiment into one directory
    ReproduceAll,
}

fn parse_system(s: &str) -> Result<SystemId, String> {
    s.parse().map_err(|e: holokan::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: holokan::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<FractalMode, String> {
    s.parse().map_err(|e: holokan::Error| e.to_string())
}

/// Config file, then flags. Also reports which of system/model were set explicitly.
fn resolve(global: &GlobalArgs) -> holokan_cli::Result<(ExperimentConfig, Option<SystemId>, Option<ModelKind>)> {
    let (mut cfg, file_system, file_model) = match &global.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let keys: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
                path: path.clone(),
                message: e.message().to_string(),
            })?;
            let system = keys.contains_key("system").then_some(cfg.system);
            let model = keys.contains_key("model").then_some(cfg.model);
            (cfg, system, model)
        }
        None => (ExperimentConfig::default(), None, None),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.out = out.clone();
    }
    if let Some(system) = global.system {
        cfg.system = system;
    }
    if let Some(model) = global.model {
        cfg.model = model;
    }
    Ok((cfg, global.system.or(file_system), global.model.or(file_model)))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> holokan_cli::Result<Outcome> {
    let (mut cfg, system, model) = resolve(&cli.global)?;
    let ckpt = |flag: CheckpointFlag| CheckpointArgs { path: flag.checkpoint, system, model };
    match cli.command {
        Command::Train(f) => {
            set(&mut cfg.steps, f.steps);
            set(&mut cfg.learning_rate, f.learning_rate);
            set(&mut cfg.batch_size, f.batch_size);
            set(&mut cfg.lambda_max, f.lambda_max);
            set(&mut cfg.warmup_steps, f.warmup_steps);
            set(&mut cfg.patience, f.patience);
            set(&mut cfg.noise_level, f.noise);
            set(&mut cfg.hidden, f.hidden);
            set(&mut cfg.grid_intervals, f.grid);
            commands::cmd_train(&cfg)
        }
        Command::Evaluate { ckpt: c, self_check, resolution } => {
            set(&mut cfg.eval_resolution, resolution);
            commands::cmd_evaluate(&cfg, &ckpt(c), self_check)
        }
        Command::Fractal { ckpt: c, analytic, resolution, max_iter, bailout, extent, mode } => {
            set(&mut cfg.fractal_resolution, resolution);
            set(&mut cfg.max_iter, max_iter);
            set(&mut cfg.bailout, bailout);
            set(&mut cfg.fractal_extent, extent);
            set(&mut cfg.fractal_mode, mode);
            commands::cmd_fractal(&cfg, &ckpt(c), analytic)
        }
        Command::Lyapunov { ckpt: c, resolution, n_iter, dt } => {
            set(&mut cfg.lyapunov_resolution, resolution);
            set(&mut cfg.lyapunov_iter, n_iter);
            set(&mut cfg.lyapunov_dt, dt);
            commands::cmd_lyapunov(&cfg, &ckpt(c))
        }
        Command::Symbolic { ckpt: c, top_k, resolution } => {
            set(&mut cfg.top_k, top_k);
            set(&mut cfg.symbolic_resolution, resolution);
            commands::cmd_symbolic(&cfg, &ckpt(c))
        }
        Command::Ablate { kind } => commands::cmd_ablate(&cfg, kind),
        Command::Noise => commands::cmd_noise(&cfg),
        Command::Transfer { steps } => {
            set(&mut cfg.transfer_steps, steps);
            commands::cmd_transfer(&cfg)
        }
        Command::ReproduceAll => commands::cmd_reproduce_all(&cfg, &mut |msg| eprintln!("{msg}")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!("output: {}", outcome.dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
