//! Synthetic data → labels → trained head → per-tertile EERs.
//!
//! Run with `--release`; debug builds are several times slower.

use faceqa::config::PipelineConfig;
use faceqa::evaluation::QualityLevel;
use faceqa::pipeline;
use faceqa::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::temp_dir().join("faceqa-end-to-end");
    let mut cfg = PipelineConfig::default();
    cfg.synth_dir = root.join("data");
    cfg.manifest = cfg.synth_dir.join("manifest.tsv");
    cfg.landmarks = Some(cfg.synth_dir.join("landmarks.tsv"));
    cfg.cache_dir = root.join("cache");
    cfg.output_dir = root.join("out");
    cfg.synth = SynthConfig::default();
    cfg.train.learning_rate = 0.1;
    cfg.train.batch_size = 1;
    cfg.train_subjects = 20;
    cfg.test_subjects = 10;

    pipeline::cmd_synth(&cfg)?;
    pipeline::cmd_groundtruth(&cfg)?;
    let trained = pipeline::cmd_train(&cfg)?;
    println!("final training loss {:.5}", trained.checkpoint.final_loss);
    let summary = pipeline::cmd_evaluate(&cfg)?;

    for level in [QualityLevel::LowQ, QualityLevel::MediumQ, QualityLevel::HighQ] {
        println!("{:<8} EER {:.2}%", level.as_str(), summary.eer(level).unwrap());
    }
    if let Some(rho) = summary.heldout_spearman {
        println!("held-out Spearman {rho:.3} over {} probes", summary.n_heldout_probes);
    }
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
