//! Flat `key = value` pipeline configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths in a
//! config file resolve against the file's directory; `--set` overrides are
//! taken as given. Unknown keys are errors.

use std::path::{Path, PathBuf};

use crate::qualitymodel::{TrainConfig, DEFAULT_FEATURE_DIM};
use crate::synth::SynthConfig;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Test,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub dimension: usize,
    pub seed: u64,
    pub url: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComparatorKind {
    Builtin,
    Http,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub landmarks: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub groundtruth_backend: BackendConfig,
    pub feature_backend: BackendConfig,
    pub http_timeout_secs: u64,
    pub train: TrainConfig,
    pub init_seed: u64,
    pub train_subjects: usize,
    pub test_subjects: usize,
    pub split_seed: u64,
    pub include_galleries: bool,
    pub include_unaligned: bool,
    pub comparator: ComparatorKind,
    pub eval_seed: u64,
    pub histogram_bins: usize,
    pub synth_dir: PathBuf,
    pub synth: SynthConfig,
    pub serve_addr: String,
    pub serve_threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("data/manifest.tsv"),
            landmarks: None,
            cache_dir: PathBuf::from("cache"),
            output_dir: PathBuf::from("out"),
            checkpoint: None,
            groundtruth_backend: BackendConfig { kind: BackendKind::Test, dimension: 128, seed: 7, url: String::new() },
            feature_backend: BackendConfig {
                kind: BackendKind::Test,
                dimension: DEFAULT_FEATURE_DIM,
                seed: 11,
                url: String::new(),
            },
            http_timeout_secs: 30,
            train: TrainConfig::default(),
            init_seed: 0,
            train_subjects: 20,
            test_subjects: 10,
            split_seed: 0,
            include_galleries: false,
            include_unaligned: true,
            comparator: ComparatorKind::Builtin,
            eval_seed: 0,
            histogram_bins: 10,
            synth_dir: PathBuf::from("data"),
            synth: SynthConfig::default(),
            serve_addr: "127.0.0.1:8080".into(),
            serve_threads: 4,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| bad(key, value))
}

fn float(key: &str, value: &str) -> Result<f64, Error> {
    crate::textfmt::parse_f64(value).ok_or_else(|| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool, Error> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn backend_kind(key: &str, value: &str) -> Result<BackendKind, Error> {
    match value {
        "test" => Ok(BackendKind::Test),
        "http" => Ok(BackendKind::Http),
        _ => Err(bad(key, value)),
    }
}

fn kind_str(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Test => "test",
        BackendKind::Http => "http",
    }
}

fn path(value: &str, base: Option<&Path>) -> PathBuf {
    let p = PathBuf::from(value);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn set_backend(b: &mut BackendConfig, field: &str, key: &str, value: &str) -> Result<(), Error> {
    match field {
        "" => b.kind = backend_kind(key, value)?,
        "dim" => b.dimension = num(key, value)?,
        "seed" => b.seed = num(key, value)?,
        "url" => b.url = value.to_string(),
        _ => return Err(Error::Config(format!("unknown key {key:?}"))),
    }
    Ok(())
}

impl PipelineConfig {
    /// Applies one `key = value` setting. `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), Error> {
        let f = float;
        match key {
            "manifest" => self.manifest = path(value, base),
            "landmarks" => self.landmarks = (!value.is_empty()).then(|| path(value, base)),
            "cache_dir" => self.cache_dir = path(value, base),
            "output_dir" => self.output_dir = path(value, base),
            "checkpoint" => self.checkpoint = (!value.is_empty()).then(|| path(value, base)),
            "http_timeout_secs" => self.http_timeout_secs = num(key, value)?,
            "learning_rate" => self.train.learning_rate = f(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "train_seed" => self.train.seed = num(key, value)?,
            "init_seed" => self.init_seed = num(key, value)?,
            "train_subjects" => self.train_subjects = num(key, value)?,
            "test_subjects" => self.test_subjects = num(key, value)?,
            "split_seed" => self.split_seed = num(key, value)?,
            "include_galleries" => self.include_galleries = flag(key, value)?,
            "include_unaligned" => self.include_unaligned = flag(key, value)?,
            "comparator" => {
                self.comparator = match value {
                    "builtin" => ComparatorKind::Builtin,
                    "http" => ComparatorKind::Http,
                    _ => return Err(bad(key, value)),
                }
            }
            "eval_seed" => self.eval_seed = num(key, value)?,
            "histogram_bins" => self.histogram_bins = num(key, value)?,
            "synth_dir" => self.synth_dir = path(value, base),
            "synth_subjects" => self.synth.subjects = num(key, value)?,
            "synth_images" => self.synth.images_per_subject = num(key, value)?,
            "synth_seed" => self.synth.seed = num(key, value)?,
            "synth_image_size" => self.synth.image_size = num(key, value)?,
            "synth_max_blur" => self.synth.max_blur_sigma = f(key, value)?,
            "synth_max_noise" => self.synth.max_noise_sigma = f(key, value)?,
            "synth_max_shift" => self.synth.max_brightness_shift = f(key, value)?,
            "synth_response_exponent" => self.synth.response_exponent = f(key, value)?,
            "serve_addr" => self.serve_addr = value.to_string(),
            "serve_threads" => self.serve_threads = num(key, value)?,
            _ => {
                if let Some(field) = key.strip_prefix("groundtruth_backend") {
                    return set_backend(&mut self.groundtruth_backend, field.trim_start_matches('_'), key, value);
                }
                if let Some(field) = key.strip_prefix("feature_backend") {
                    return set_backend(&mut self.feature_backend, field.trim_start_matches('_'), key, value);
                }
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, Error> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim(), base)?;
        }
        Ok(cfg)
    }

    /// Reads `path` (missing file is an input error) and applies `overrides`
    /// of the form `key=value` on top.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path.parent())?;
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), Error> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim(), None)?;
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |p: &Path| p.display().to_string();
        let fl = crate::textfmt::f64_to_string;
        let gb = &self.groundtruth_backend;
        let fb = &self.feature_backend;
        vec![
            ("manifest", p(&self.manifest)),
            ("landmarks", self.landmarks.as_deref().map(p).unwrap_or_default()),
            ("cache_dir", p(&self.cache_dir)),
            ("output_dir", p(&self.output_dir)),
            ("checkpoint", self.checkpoint.as_deref().map(p).unwrap_or_default()),
            ("groundtruth_backend", kind_str(gb.kind).into()),
            ("groundtruth_backend_dim", gb.dimension.to_string()),
            ("groundtruth_backend_seed", gb.seed.to_string()),
            ("groundtruth_backend_url", gb.url.clone()),
            ("feature_backend", kind_str(fb.kind).into()),
            ("feature_backend_dim", fb.dimension.to_string()),
            ("feature_backend_seed", fb.seed.to_string()),
            ("feature_backend_url", fb.url.clone()),
            ("http_timeout_secs", self.http_timeout_secs.to_string()),
            ("learning_rate", fl(self.train.learning_rate)),
            ("epochs", self.train.epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("train_seed", self.train.seed.to_string()),
            ("init_seed", self.init_seed.to_string()),
            ("train_subjects", self.train_subjects.to_string()),
            ("test_subjects", self.test_subjects.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("include_galleries", self.include_galleries.to_string()),
            ("include_unaligned", self.include_unaligned.to_string()),
            ("comparator", match self.comparator {
                ComparatorKind::Builtin => "builtin".into(),
                ComparatorKind::Http => "http".into(),
            }),
            ("eval_seed", self.eval_seed.to_string()),
            ("histogram_bins", self.histogram_bins.to_string()),
            ("synth_dir", p(&self.synth_dir)),
            ("synth_subjects", self.synth.subjects.to_string()),
            ("synth_images", self.synth.images_per_subject.to_string()),
            ("synth_seed", self.synth.seed.to_string()),
            ("synth_image_size", self.synth.image_size.to_string()),
            ("synth_max_blur", fl(self.synth.max_blur_sigma)),
            ("synth_max_noise", fl(self.synth.max_noise_sigma)),
            ("synth_max_shift", fl(self.synth.max_brightness_shift)),
            ("synth_response_exponent", fl(self.synth.response_exponent)),
            ("serve_addr", self.serve_addr.clone()),
            ("serve_threads", self.serve_threads.to_string()),
        ]
    }

    /// Every key with its resolved value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir.join("train").join("checkpoint.txt"))
    }
}
