use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use freqshield_cli::{cmd_all, cmd_attack, cmd_evaluate, cmd_prepare, cmd_train, CliError, ExperimentConfig, TrainWhich};

#[derive(Parser)]
#[command(name = "freqshield", version, about = "Train, attack and evaluate frequency-domain adversarial defenses for segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the detector false-positive budget.
    #[arg(long = "t-fp", global = true)]
    t_fp: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load the dataset and write train/val/test manifests.
    Prepare,
    /// Train segmenters, detectors and reformers.
    Train {
        #[arg(long, value_enum, default_value_t = TrainWhich::All)]
        which: TrainWhich,
    },
    /// Craft adversarial sets against the trained segmenters.
    Attack,
    /// Detector AUC tables and the combination grid.
    Evaluate,
    /// Every stage in order.
    All,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(t) = cli.t_fp {
        cfg.defense.t_fp = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Prepare => {
            let r = cmd_prepare(&cfg)?;
            println!("prepared {} / {} / {} samples", r.counts[0], r.counts[1], r.counts[2]);
        }
        Command::Train { which } => {
            for m in cmd_train(&cfg, which)? {
                println!("{}\t{}", m.name, m.path.display());
            }
        }
        Command::Attack => {
            for s in cmd_attack(&cfg)? {
                println!("{}\t{}\tmean Dice drop {:.4}", s.attack, s.target, s.mean_dice_drop);
            }
        }
        Command::Evaluate => {
            let r = cmd_evaluate(&cfg)?;
            println!("{} grid rows; tables in {}", r.grid.rows.len(), cfg.output_dir.join("results").display());
        }
        Command::All => {
            let r = cmd_all(&cfg)?;
            println!("{} grid rows; tables in {}", r.evaluation.grid.rows.len(), cfg.output_dir.join("results").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
