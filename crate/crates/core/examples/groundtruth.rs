//! Builds quality labels for a synthetic dataset and checks them against
//! the degradation each image received.

use faceqa::config::PipelineConfig;
use faceqa::evaluation::spearman;
use faceqa::pipeline;
use faceqa::synth::{load_strengths, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("faceqa-groundtruth-example");
    let mut cfg = PipelineConfig::default();
    cfg.synth_dir = root.join("data");
    cfg.manifest = cfg.synth_dir.join("manifest.tsv");
    cfg.landmarks = Some(cfg.synth_dir.join("landmarks.tsv"));
    cfg.cache_dir = root.join("cache");
    cfg.output_dir = root.join("out");
    cfg.synth = SynthConfig { subjects: 8, images_per_subject: 8, image_size: 192, ..SynthConfig::default() };

    let synth = pipeline::cmd_synth(&cfg)?;
    let out = pipeline::cmd_groundtruth(&cfg)?;
    let strengths = load_strengths(&synth.degradation)?;

    let (labels, damage): (Vec<f64>, Vec<f64>) =
        out.groundtruth.labels.iter().map(|l| (l.quality, strengths[&l.image_id])).unzip();
    println!("{} labels, distances in [{:.4}, {:.4}]", labels.len(), out.groundtruth.normalization.d_min, out.groundtruth.normalization.d_max);
    println!("galleries: {:?}", out.gallery.values().collect::<Vec<_>>());
    println!("Spearman(label, degradation) = {:.3}", spearman(&labels, &damage));
    println!("files in {}", out.dir.display());
    Ok(())
}
