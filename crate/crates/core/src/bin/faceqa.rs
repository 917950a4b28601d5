use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use faceqa::config::PipelineConfig;
use faceqa::pipeline;

#[derive(Parser)]
#[command(name = "faceqa", version, about = "Face image quality labels, training and validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compliance scoring, gallery selection and quality labels.
    Groundtruth,
    /// Train the regression head on the labelled training subjects.
    Train,
    /// Print `path<TAB>quality` for each image.
    Score {
        images: Vec<PathBuf>,
        /// Report unreadable images as ERROR rows instead of failing.
        #[arg(long)]
        keep_going: bool,
    },
    /// Per-tertile DET curves and EERs on the test subjects.
    Evaluate,
    /// Write a synthetic dataset.
    Synth,
    /// Run the HTTP scoring service.
    Serve,
}

fn run(cli: Cli) -> Result<(), faceqa::Error> {
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path, &cli.overrides)?,
        None => {
            let mut cfg = PipelineConfig::default();
            cfg.apply_overrides(&cli.overrides)?;
            cfg
        }
    };
    match cli.command {
        Command::Groundtruth => {
            let out = pipeline::cmd_groundtruth(&cfg)?;
            println!("{} labels written to {}", out.groundtruth.labels.len(), out.dir.display());
        }
        Command::Train => {
            let out = pipeline::cmd_train(&cfg)?;
            println!("final loss {} ; checkpoint {}", out.checkpoint.final_loss, cfg.checkpoint_path().display());
        }
        Command::Score { images, keep_going } => {
            let rows = pipeline::cmd_score(&cfg, &images, keep_going)?;
            print!("{}", pipeline::score_rows_to_tsv(&rows));
        }
        Command::Evaluate => {
            let summary = pipeline::cmd_evaluate(&cfg)?;
            for b in &summary.bins {
                println!("{}\tEER {:.3}%\t{} images", b.bin.as_str(), b.eer_pct, b.n_images);
            }
            if let Some(rho) = summary.heldout_spearman {
                println!("held-out Spearman {rho:.4} over {} probes", summary.n_heldout_probes);
            }
        }
        Command::Synth => {
            let out = pipeline::cmd_synth(&cfg)?;
            println!("{} images, manifest {}", out.images, out.manifest.display());
        }
        Command::Serve => {
            let handle = pipeline::cmd_serve(&cfg)?;
            eprintln!("listening on http://{}", handle.addr());
            handle.join();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
