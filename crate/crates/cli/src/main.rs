use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use convexdyn_cli::commands;
use convexdyn_cli::config::SceneConfig;
use convexdyn_cli::formats::Record;

#[derive(Parser)]
#[command(
    name = "convexdyn",
    about = "Mesh-free deformable bodies from convex primitives: simulate, render, identify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the neural skinning basis for the configured scene.
    TrainSkinning {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output skinning file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the configured scene with a trained skinning basis.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        skinning: PathBuf,
        /// Output trajectory file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a trajectory to a directory of PPM frames.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Camera index into the config's [[render.camera]] list.
        #[arg(long, default_value_t = 0)]
        camera: usize,
        /// Output frame directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover Young's modulus and Poisson's ratio from observed frames.
    Identify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        skinning: PathBuf,
        /// Initial Young's modulus guess (Pa).
        #[arg(long)]
        init_e: f64,
        /// Initial Poisson's ratio guess.
        #[arg(long)]
        init_nu: f64,
        /// Output records file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR/SSIM of one frame directory against another.
    Evaluate {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Output records file (JSON lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the rest-state field to multi-view frame-0 references.
    FitRest {
        #[arg(long)]
        config: PathBuf,
        /// View directories (one per config camera, each with frame_0000.ppm).
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        views: Vec<PathBuf>,
        /// Output field file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep K and M, emitting one metrics record per combination.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for ablation.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<SceneConfig> {
    let mut cfg = SceneConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::TrainSkinning { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let record = commands::cmd_train_skinning(&cfg, &out)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Simulate {
            config,
            seed,
            skinning,
            out,
        } => {
            let cfg = load_config(&config, seed)?;
            commands::cmd_simulate(&cfg, &skinning, &out)?;
        }
        Command::Render {
            config,
            trajectory,
            camera,
            out,
        } => {
            let cfg = load_config(&config, None)?;
            let frames = commands::cmd_render(&cfg, &trajectory, &out, camera)?;
            eprintln!("wrote {frames} frames to {}", out.display());
        }
        Command::Identify {
            config,
            frames,
            skinning,
            init_e,
            init_nu,
            out,
        } => {
            let cfg = load_config(&config, None)?;
            let record = commands::cmd_identify(&cfg, &frames, &skinning, init_e, init_nu, &out)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Evaluate {
            rendered,
            reference,
            out,
        } => {
            let record = commands::cmd_evaluate(&rendered, &reference, &out)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::FitRest { config, views, out } => {
            let cfg = load_config(&config, None)?;
            let record = commands::cmd_fit_rest(&cfg, &views, &out)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Ablate { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let records = convexdyn_cli::ablation::run_sweep(&cfg, &out)?;
            for r in &records {
                println!("{}", serde_json::to_string(r)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    convexdyn_core::parallel::init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = Record::Error {
                message: format!("{err:#}"),
            };
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"record\":\"error\"}}"))
            );
            ExitCode::FAILURE
        }
    }
}
