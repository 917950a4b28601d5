//! The end-to-end commands behind the `faceqa` binary.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! groundtruth/  compliance.tsv gallery.tsv manifest.tsv groundtruth.tsv config.txt
//! train/        checkpoint.txt loss_history.csv split.tsv config.txt
//! evaluate/     qualities.tsv scores_<bin>.tsv det_<bin>.csv quality_histogram.csv summary.json config.txt
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::compliance::{self, run_compliance_tests, select_gallery};
use crate::config::{BackendConfig, BackendKind, ComparatorKind, PipelineConfig};
use crate::dataset::{
    load_image, load_image_file, load_manifest, partition_subjects, preprocess_face, DatasetManifest, FaceDetector,
    FaceTensor, Role, SidecarDetector, Split,
};
use crate::embeddings::{cache_load, embed, EmbeddingBackend, EmbeddingCache, EmbeddingError, TestBackend};
use crate::evaluation::{
    self, compute_det, det_to_csv, generate_scores, histogram_to_csv, quality_histogram, scores_to_tsv, spearman,
    tertile_split, BinSummary, BuiltinComparator, Comparator, PAIRING_CONVENTION,
};
use crate::groundtruth::{build_groundtruth, GroundtruthOptions, GroundtruthSet};
use crate::qualitymodel::{
    load_checkpoint, save_checkpoint, train_head, Checkpoint, ModelError, QualityScorer, TrainingSample,
};
use crate::remote::{HttpComparator, HttpEmbeddingBackend};
use crate::synth::{self, SynthOutput};
use crate::{textfmt, Error};

pub const CONFIG_ECHO: &str = "config.txt";

pub fn make_backend(backend: &BackendConfig, timeout_secs: u64) -> Result<Arc<dyn EmbeddingBackend>, Error> {
    match backend.kind {
        BackendKind::Test => Ok(Arc::new(TestBackend::new(backend.dimension, backend.seed))),
        BackendKind::Http => {
            if backend.url.is_empty() {
                return Err(Error::Config("http backend needs a url".into()));
            }
            let id = format!("http-d{}@{}", backend.dimension, backend.url);
            Ok(Arc::new(HttpEmbeddingBackend::new(id, &backend.url, backend.dimension, Duration::from_secs(timeout_secs))))
        }
    }
}

fn prepare_dir(dir: &Path, cfg: &PipelineConfig) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_ECHO), cfg.to_text())?;
    Ok(())
}

fn detector(cfg: &PipelineConfig) -> Result<Option<SidecarDetector>, Error> {
    Ok(match &cfg.landmarks {
        Some(p) => Some(SidecarDetector::load(p)?),
        None => None,
    })
}

/// Loads and preprocesses every image of `manifest` in parallel.
pub fn preprocess_manifest(
    manifest: &DatasetManifest,
    detector: Option<&dyn FaceDetector>,
) -> Result<BTreeMap<String, FaceTensor>, Error> {
    manifest
        .entries()
        .par_iter()
        .map(|rec| {
            let img = load_image(manifest, rec)?;
            Ok((rec.image_id.clone(), preprocess_face(&rec.image_id, &img, detector)?))
        })
        .collect()
}

fn cache_path(cache_dir: &Path, backend_id: &str) -> PathBuf {
    let safe: String = backend_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    cache_dir.join(format!("{safe}.tsv"))
}

/// Embeds `faces` with `backend`, reusing and extending the on-disk cache.
pub fn embed_cached(
    faces: &BTreeMap<String, FaceTensor>,
    backend: &dyn EmbeddingBackend,
    cache_dir: &Path,
) -> Result<EmbeddingCache, Error> {
    let path = cache_path(cache_dir, backend.backend_id());
    let mut cache = match cache_load(&path, backend.backend_id()) {
        Ok(c) if c.dimension() == backend.dimension() => c,
        Err(EmbeddingError::Io(_)) => EmbeddingCache::for_backend(backend),
        _ => {
            log::warn!("{}: unusable embedding cache, rebuilding", path.display());
            EmbeddingCache::for_backend(backend)
        }
    };
    let missing: Vec<(&String, &FaceTensor)> = faces.iter().filter(|(id, _)| !cache.contains(id)).collect();
    if missing.is_empty() {
        return Ok(cache);
    }
    let embedded = missing
        .par_iter()
        .map(|(id, face)| embed(id, face, backend))
        .collect::<Result<Vec<_>, _>>()?;
    for e in embedded {
        cache.store(e)?;
    }
    std::fs::create_dir_all(cache_dir)?;
    cache.save(&path)?;
    Ok(cache)
}

pub fn split_to_tsv(train: &DatasetManifest, test: &DatasetManifest) -> String {
    let mut out = String::from("subject_id\tsplit\n");
    let mut rows: Vec<(&str, &str)> = train.subjects().into_iter().map(|s| (s, "train")).collect();
    rows.extend(test.subjects().into_iter().map(|s| (s, "test")));
    rows.sort();
    for (s, split) in rows {
        out.push_str(&format!("{s}\t{split}\n"));
    }
    out
}

fn partition(cfg: &PipelineConfig, manifest: &DatasetManifest) -> Result<(DatasetManifest, DatasetManifest), Error> {
    Ok(partition_subjects(manifest, cfg.train_subjects, cfg.test_subjects, cfg.split_seed)?)
}

#[derive(Debug, Clone)]
pub struct GroundtruthOutput {
    pub dir: PathBuf,
    pub groundtruth: GroundtruthSet,
    pub gallery: compliance::GalleryMap,
}

/// Compliance → gallery selection → groundtruth embeddings → labels.
pub fn cmd_groundtruth(cfg: &PipelineConfig) -> Result<GroundtruthOutput, Error> {
    let mut manifest = load_manifest(&cfg.manifest)?;
    let det = detector(cfg)?;
    let faces = preprocess_manifest(&manifest, det.as_ref().map(|d| d as &dyn FaceDetector))?;
    let reports: Vec<_> = faces.par_iter().map(|(id, f)| run_compliance_tests(id, f)).collect();
    let gallery = select_gallery(&mut manifest, &reports)?;

    let backend = make_backend(&cfg.groundtruth_backend, cfg.http_timeout_secs)?;
    let cache = embed_cached(&faces, backend.as_ref(), &cfg.cache_dir)?;
    let options = GroundtruthOptions { include_galleries: cfg.include_galleries };
    let groundtruth = build_groundtruth(&manifest, &gallery, &cache, options)?;

    let dir = cfg.output_dir.join("groundtruth");
    prepare_dir(&dir, cfg)?;
    compliance::save_reports(&dir.join("compliance.tsv"), &reports)?;
    std::fs::write(dir.join("gallery.tsv"), compliance::gallery_to_tsv(&gallery))?;
    manifest.save(&dir.join("manifest.tsv"))?;
    groundtruth.save(&dir.join("groundtruth.tsv"))?;
    log::info!(
        "groundtruth: {} labels, d_min={} d_max={}",
        groundtruth.labels.len(),
        groundtruth.normalization.d_min,
        groundtruth.normalization.d_max
    );
    Ok(GroundtruthOutput { dir, groundtruth, gallery })
}

fn load_groundtruth(cfg: &PipelineConfig) -> Result<GroundtruthSet, Error> {
    let path = cfg.output_dir.join("groundtruth").join("groundtruth.tsv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if text.trim().is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    Ok(GroundtruthSet::parse(&text)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub checkpoint: Checkpoint,
    pub loss_history: Vec<f64>,
}

pub fn loss_history_to_csv(losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, textfmt::f64_to_string(*l)));
    }
    out
}

/// Trains the head on the labelled images of the training subjects.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainOutput, Error> {
    let groundtruth = load_groundtruth(cfg)?;
    if groundtruth.labels.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    let manifest = load_manifest(&cfg.manifest)?;
    let (train, test) = partition(cfg, &manifest)?;
    let det = detector(cfg)?;
    let mut faces = preprocess_manifest(&train, det.as_ref().map(|d| d as &dyn FaceDetector))?;
    let labels: BTreeMap<&str, f64> = groundtruth.labels.iter().map(|l| (l.image_id.as_str(), l.quality)).collect();
    faces.retain(|id, face| labels.contains_key(id.as_str()) && (cfg.include_unaligned || face.aligned()));

    let backend = make_backend(&cfg.feature_backend, cfg.http_timeout_secs)?;
    let cache = embed_cached(&faces, backend.as_ref(), &cfg.cache_dir)?;
    // manifest order keeps the sample order independent of map iteration
    let samples: Vec<TrainingSample> = train
        .entries()
        .iter()
        .filter(|r| faces.contains_key(&r.image_id))
        .map(|r| TrainingSample {
            features: cache.vector(&r.image_id).expect("embedded above").to_vec(),
            target: labels[r.image_id.as_str()],
        })
        .collect();
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    log::info!("training on {} samples, F={}", samples.len(), backend.dimension());
    let outcome = train_head(&samples, &cfg.train, cfg.init_seed)?;
    let checkpoint = Checkpoint {
        final_loss: *outcome.loss_history.last().expect("epochs > 0"),
        params: outcome.params,
        backend_id: backend.backend_id().to_string(),
        config_digest: cfg.train.digest(),
    };

    let dir = cfg.output_dir.join("train");
    prepare_dir(&dir, cfg)?;
    let checkpoint_path = cfg.checkpoint_path();
    if let Some(parent) = checkpoint_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_checkpoint(&checkpoint_path, &checkpoint)?;
    std::fs::write(dir.join("loss_history.csv"), loss_history_to_csv(&outcome.loss_history))?;
    std::fs::write(dir.join("split.tsv"), split_to_tsv(&train, &test))?;
    Ok(TrainOutput { dir, checkpoint, loss_history: outcome.loss_history })
}

/// Checkpoint plus feature backbone, validated against each other.
pub fn load_scorer(cfg: &PipelineConfig) -> Result<QualityScorer, Error> {
    let checkpoint = load_checkpoint(&cfg.checkpoint_path())?;
    let backend = make_backend(&cfg.feature_backend, cfg.http_timeout_secs)?;
    Ok(QualityScorer::new(checkpoint, backend)?)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreRow {
    Quality { path: PathBuf, quality: f64 },
    Failed { path: PathBuf, reason: String },
}

pub fn score_rows_to_tsv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("path\tquality\n");
    for row in rows {
        match row {
            ScoreRow::Quality { path, quality } => {
                out.push_str(&format!("{}\t{}\n", path.display(), textfmt::f64_to_string(*quality)))
            }
            ScoreRow::Failed { path, reason } => {
                out.push_str(&format!("{}\tERROR {}\n", path.display(), reason.replace(['\t', '\n'], " ")))
            }
        }
    }
    out
}

/// Scores image files. A failing image aborts the run unless `keep_going`,
/// in which case it becomes an `ERROR` row.
pub fn cmd_score(cfg: &PipelineConfig, paths: &[PathBuf], keep_going: bool) -> Result<Vec<ScoreRow>, Error> {
    let scorer = load_scorer(cfg)?;
    let det = detector(cfg)?;
    let det_ref = det.as_ref().map(|d| d as &dyn FaceDetector);
    let results: Vec<Result<f64, Error>> = paths
        .par_iter()
        .map(|p| {
            let img = load_image_file(p)?;
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let face = preprocess_face(&id, &img, det_ref)?;
            Ok(scorer.score(&face)?)
        })
        .collect();
    let mut rows = Vec::with_capacity(paths.len());
    for (path, result) in paths.iter().zip(results) {
        match result {
            Ok(quality) => rows.push(ScoreRow::Quality { path: path.clone(), quality }),
            Err(e) if keep_going => {
                log::warn!("{}: {e}", path.display());
                rows.push(ScoreRow::Failed { path: path.clone(), reason: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub bins: Vec<BinSummary>,
    /// Spearman correlation of predicted quality and groundtruth label over
    /// the held-out probes (gallery images excluded).
    pub heldout_spearman: Option<f64>,
    pub n_heldout_probes: usize,
    pub n_test_images: usize,
    pub n_test_subjects: usize,
    pub pairing: String,
    pub eval_seed: u64,
}

impl EvaluationSummary {
    pub fn eer(&self, level: evaluation::QualityLevel) -> Option<f64> {
        self.bins.iter().find(|b| b.bin == level).map(|b| b.eer_pct)
    }
}

pub fn qualities_to_tsv(qualities: &[(String, f64)]) -> String {
    let mut out = String::from("image_id\tquality\n");
    for (id, q) in qualities {
        out.push_str(&format!("{id}\t{}\n", textfmt::f64_to_string(*q)));
    }
    out
}

fn make_comparator<'a>(cfg: &PipelineConfig, backend: &'a dyn EmbeddingBackend) -> Result<Box<dyn Comparator + 'a>, Error> {
    Ok(match cfg.comparator {
        ComparatorKind::Builtin => Box::new(BuiltinComparator::new(backend)),
        ComparatorKind::Http => Box::new(
            HttpComparator::from_env(Duration::from_secs(cfg.http_timeout_secs))
                .ok_or_else(|| Error::Config(format!("{} is not set", crate::remote::COMPARATOR_URL_VAR)))?,
        ),
    })
}

/// Scores the test subjects, splits them into quality tertiles and computes
/// a DET curve per tertile.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<EvaluationSummary, Error> {
    let manifest = load_manifest(&cfg.manifest)?;
    let (_, test) = partition(cfg, &manifest)?;
    if test.subjects().len() < 2 {
        return Err(evaluation::EvaluationError::SingleSubject.into());
    }
    let scorer = load_scorer(cfg)?;
    let det = detector(cfg)?;
    let faces = preprocess_manifest(&test, det.as_ref().map(|d| d as &dyn FaceDetector))?;
    let qualities: Vec<(String, f64)> = faces
        .par_iter()
        .map(|(id, f)| Ok((id.clone(), scorer.score(f)?)))
        .collect::<Result<_, Error>>()?;

    let bins = tertile_split(&qualities)?;
    let gt_backend = make_backend(&cfg.groundtruth_backend, cfg.http_timeout_secs)?;
    let comparator = make_comparator(cfg, gt_backend.as_ref())?;
    let quality_of: BTreeMap<&str, f64> = qualities.iter().map(|(id, q)| (id.as_str(), *q)).collect();

    let dir = cfg.output_dir.join("evaluate");
    prepare_dir(&dir, cfg)?;
    std::fs::write(dir.join("qualities.tsv"), qualities_to_tsv(&qualities))?;

    let mut summaries = Vec::new();
    for bin in &bins {
        let (set, scores) = generate_scores(bin, &test, |id| faces.get(id), comparator.as_ref(), cfg.eval_seed)?;
        let curve = compute_det(&set)?;
        let name = bin.label.as_str();
        std::fs::write(dir.join(format!("scores_{name}.tsv")), scores_to_tsv(&scores))?;
        std::fs::write(dir.join(format!("det_{name}.csv")), det_to_csv(&curve))?;
        let mean_quality = bin.image_ids.iter().map(|id| quality_of[id.as_str()]).sum::<f64>() / bin.image_ids.len() as f64;
        log::info!("{name}: EER {:.3}% over {} mated / {} non-mated", curve.eer, set.mated.len(), set.non_mated.len());
        summaries.push(BinSummary {
            bin: bin.label,
            eer_pct: curve.eer,
            n_mated: set.mated.len(),
            n_nonmated: set.non_mated.len(),
            n_images: bin.image_ids.len(),
            mean_quality,
        });
    }

    let hist = quality_histogram(&qualities.iter().map(|(_, q)| *q).collect::<Vec<_>>(), cfg.histogram_bins);
    std::fs::write(dir.join("quality_histogram.csv"), histogram_to_csv(&hist))?;

    let (heldout_spearman, n_heldout_probes) = heldout_correlation(cfg, &test, &quality_of);
    let summary = EvaluationSummary {
        bins: summaries,
        heldout_spearman,
        n_heldout_probes,
        n_test_images: qualities.len(),
        n_test_subjects: test.subjects().len(),
        pairing: PAIRING_CONVENTION.to_string(),
        eval_seed: cfg.eval_seed,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Predicted-vs-groundtruth rank correlation over test probes, when a
/// groundtruth file from an earlier run is present.
fn heldout_correlation(cfg: &PipelineConfig, test: &DatasetManifest, quality_of: &BTreeMap<&str, f64>) -> (Option<f64>, usize) {
    let Ok(groundtruth) = load_groundtruth(cfg) else {
        return (None, 0);
    };
    let galleries: HashSet<String> = std::fs::read_to_string(cfg.output_dir.join("groundtruth").join("gallery.tsv"))
        .ok()
        .and_then(|t| compliance::gallery_from_tsv(&t).ok())
        .map(|g| g.into_values().collect())
        .unwrap_or_default();
    let mut predicted = Vec::new();
    let mut labels = Vec::new();
    for rec in test.entries() {
        if galleries.contains(&rec.image_id) || rec.role == Role::Gallery {
            continue;
        }
        if let (Some(p), Some(l)) = (quality_of.get(rec.image_id.as_str()), groundtruth.get(&rec.image_id)) {
            predicted.push(*p);
            labels.push(l);
        }
    }
    if predicted.len() < 2 {
        return (None, predicted.len());
    }
    (Some(spearman(&predicted, &labels)), predicted.len())
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthOutput, Error> {
    let out = synth::write_dataset(&cfg.synth_dir, &cfg.synth)?;
    std::fs::write(cfg.synth_dir.join(CONFIG_ECHO), cfg.to_text())?;
    Ok(out)
}

/// Test-split manifest for callers that need the held-out subjects.
pub fn test_manifest(cfg: &PipelineConfig) -> Result<DatasetManifest, Error> {
    let manifest = load_manifest(&cfg.manifest)?;
    let (_, test) = partition(cfg, &manifest)?;
    debug_assert_eq!(test.split(), Split::Test);
    Ok(test)
}

/// Starts the scoring service. A checkpoint that fails to load leaves the
/// service up but unhealthy (503) rather than aborting.
pub fn cmd_serve(cfg: &PipelineConfig) -> Result<crate::serve::ServerHandle, Error> {
    let scorer = match load_scorer(cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            log::error!("no model loaded: {e}");
            None
        }
    };
    let det: Option<Arc<dyn FaceDetector>> = match detector(cfg)? {
        Some(d) => Some(Arc::new(d)),
        None => None,
    };
    let service = crate::serve::QualityService::new(scorer, det);
    let handle = crate::serve::spawn(&cfg.serve_addr, service, cfg.serve_threads)?;
    log::info!("listening on http://{}", handle.addr());
    Ok(handle)
}
