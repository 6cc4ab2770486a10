use std::path::PathBuf;
use std::process::ExitCode;

use autosame_cli::config::Overrides;
use autosame_cli::{load_studies, phantom, run_eval, run_measure, run_report, run_train};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autosame", version, about = "LV segmentation, landmark detection and biplane quantification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset.
    Phantom {
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write train/val/test manifests of one ten-fold split here.
        #[arg(long)]
        split_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0, requires = "split_dir")]
        fold: usize,
    },
    /// Train the network.
    Train {
        /// Key-value settings file; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from a checkpoint of the same run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        flags: Overrides,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure indicators from ground-truth masks and landmarks.
    Measure {
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        disks: Option<usize>,
        /// CSV file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluation CSVs plus scatter plots and overlay renders.
    Report {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_root: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of studies to render overlays for.
        #[arg(long, default_value_t = 4)]
        overlays: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Phantom {
            count,
            seed,
            out,
            split_dir,
            fold,
        } => {
            let ids = phantom(count, seed, &out, split_dir.as_deref().map(|d| (d, fold)))?;
            println!("wrote {} studies to {}", ids.len(), out.display());
        }
        Command::Train { config, resume, flags } => {
            let outcome = run_train(config.as_deref(), &flags, resume.as_deref())?;
            println!("{}", outcome.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            data_root,
            manifest,
            out,
        } => {
            let studies = load_studies(&data_root, manifest.as_deref())?;
            let r = run_eval(&checkpoint, &studies, &out)?;
            print!("{}", r.summary_csv());
        }
        Command::Measure {
            data_root,
            manifest,
            disks,
            out,
        } => {
            let studies = load_studies(&data_root, manifest.as_deref())?;
            run_measure(&studies, disks, &out)?;
            println!("{}", out.display());
        }
        Command::Report {
            checkpoint,
            data_root,
            manifest,
            out,
            overlays,
        } => {
            let studies = load_studies(&data_root, manifest.as_deref())?;
            for p in run_report(&checkpoint, &studies, &out, overlays)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
