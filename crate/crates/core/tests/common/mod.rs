#![allow(dead_code)]

use std::path::{Path, PathBuf};

use faceqa::config::PipelineConfig;
use faceqa::dataset::{ImageRecord, Role};
use faceqa::imaging::RgbImage;
use faceqa::synth::SynthConfig;

/// Pipeline configuration rooted at `root`, reading the synthetic dataset
/// from `root/data`.
pub fn config_in(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.synth_dir = root.join("data");
    cfg.manifest = cfg.synth_dir.join("manifest.tsv");
    cfg.landmarks = Some(cfg.synth_dir.join("landmarks.tsv"));
    cfg.cache_dir = root.join("cache");
    cfg.output_dir = root.join("out");
    cfg
}

/// The end-to-end settings: 30 subjects × 10 images, 20/10 split,
/// 50 epochs of per-sample SGD.
pub fn end_to_end_config(root: &Path) -> PipelineConfig {
    let mut cfg = config_in(root);
    cfg.synth = SynthConfig::default();
    cfg.train.learning_rate = 0.1;
    cfg.train.batch_size = 1;
    cfg.train.epochs = 50;
    cfg.train_subjects = 20;
    cfg.test_subjects = 10;
    cfg
}

/// A small dataset for fast command tests.
pub fn small_config(root: &Path, subjects: usize, images: usize) -> PipelineConfig {
    let mut cfg = config_in(root);
    cfg.synth = SynthConfig { subjects, images_per_subject: images, image_size: 128, ..SynthConfig::default() };
    cfg.train_subjects = subjects - 2.min(subjects - 1);
    cfg.test_subjects = subjects - cfg.train_subjects;
    cfg.feature_backend.dimension = 64;
    cfg.groundtruth_backend.dimension = 32;
    cfg.train.epochs = 5;
    cfg.train.batch_size = 4;
    cfg.train.learning_rate = 0.05;
    cfg
}

pub fn record(subject: &str, image: &str) -> ImageRecord {
    ImageRecord {
        subject_id: subject.to_string(),
        image_id: image.to_string(),
        path: PathBuf::from(format!("{image}.png")),
        role: Role::Unassigned,
    }
}

/// Deterministic textured test card.
pub fn test_card(width: usize, height: usize, seed: u64) -> RgbImage {
    let s = seed as f64;
    RgbImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let r = 0.5 + 0.4 * ((xf * 0.37 + s).sin() * (yf * 0.21 - s * 0.5).cos());
        let g = 0.5 + 0.3 * ((xf + yf) * 0.11 + s * 1.3).sin();
        let b = ((x * 7 + y * 13 + seed as usize * 29) % 97) as f64 / 96.0;
        [r as f32, g as f32, b as f32]
    })
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Process-wide logger that keeps warning-level messages for inspection.
pub mod captured_log {
    use std::sync::{Mutex, Once};

    static MESSAGES: Mutex<Vec<String>> = Mutex::new(Vec::new());
    static INSTALL: Once = Once::new();

    struct Capture;

    impl log::Log for Capture {
        fn enabled(&self, metadata: &log::Metadata) -> bool {
            metadata.level() <= log::Level::Warn
        }

        fn log(&self, record: &log::Record) {
            if self.enabled(record.metadata()) {
                MESSAGES.lock().unwrap().push(record.args().to_string());
            }
        }

        fn flush(&self) {}
    }

    pub fn install() {
        INSTALL.call_once(|| {
            log::set_boxed_logger(Box::new(Capture)).expect("no other logger installed");
            log::set_max_level(log::LevelFilter::Warn);
        });
    }

    pub fn contains(needle: &str) -> bool {
        MESSAGES.lock().unwrap().iter().any(|m| m.contains(needle))
    }
}
