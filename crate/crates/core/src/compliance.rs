//! ICAO-style portrait compliance proxies and gallery selection.
//!
//! Six tests, each scored in `[0,100]`:
//!
//! | test                | score                                               |
//! |---------------------|-----------------------------------------------------|
//! | `sharpness`         | `100·min(1, var(∇²Y)/0.01)`, 3×3 Laplacian, valid region |
//! | `brightness`        | `100·(1 − 2·|mean(Y) − 0.5|)`                       |
//! | `contrast`          | `100·min(1, std(Y)/0.25)`                           |
//! | `saturation_sanity` | 100 when any pixel carries chroma, else 50          |
//! | `pose_frontality`   | `100·(1 − |roll|/30°)`, neutral 50 without landmarks |
//! | `eye_resolution`    | `100·min(1, inter-eye px/60)`, neutral 50 without landmarks |
//!
//! `Y` is Rec. 601 luma on `[0,1]`-scaled values. The aggregate is the
//! unweighted mean of the six scores.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::dataset::{DatasetManifest, FaceTensor, Role};
use crate::imaging::mean_std;
use crate::textfmt;

pub const SHARPNESS_REF_VARIANCE: f64 = 0.01;
pub const CONTRAST_REF_STD: f64 = 0.25;
pub const MAX_ROLL_DEGREES: f64 = 30.0;
pub const EYE_DISTANCE_REF_PX: f64 = 60.0;
pub const NEUTRAL_SCORE: f64 = 50.0;
/// Smallest per-pixel channel spread counted as colour (half an 8-bit step).
pub const CHROMA_EPSILON: f64 = 0.5 / 255.0;

pub const TEST_NAMES: [&str; 6] =
    ["sharpness", "brightness", "contrast", "saturation_sanity", "pose_frontality", "eye_resolution"];

pub const REPORT_HEADER: &str = "image_id\ttest_name\tscore";
pub const GALLERY_HEADER: &str = "subject_id\timage_id";
const AGGREGATE_ROW: &str = "aggregate";

#[derive(Debug, Error)]
pub enum ComplianceError {
    #[error("no compliance report for image {0:?}")]
    MissingReport(String),
    #[error("malformed compliance file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceReport {
    pub image_id: String,
    pub test_scores: BTreeMap<String, f64>,
    pub aggregate: f64,
}

impl ComplianceReport {
    pub fn from_scores(image_id: impl Into<String>, test_scores: BTreeMap<String, f64>) -> Self {
        let aggregate = if test_scores.is_empty() {
            0.0
        } else {
            test_scores.values().sum::<f64>() / test_scores.len() as f64
        };
        Self { image_id: image_id.into(), test_scores, aggregate }
    }

    pub fn score(&self, test: &str) -> Option<f64> {
        self.test_scores.get(test).copied()
    }
}

/// Variance of the 3×3 Laplacian `[0 1 0; 1 −4 1; 0 1 0]` over the interior
/// of a `width×height` luma plane.
pub fn laplacian_variance(luma: &[f64], width: usize, height: usize) -> f64 {
    if width < 3 || height < 3 {
        return 0.0;
    }
    let responses = (1..height - 1).flat_map(|y| {
        (1..width - 1).map(move |x| {
            let c = y * width + x;
            (luma[c - width] - luma[c]) + (luma[c + width] - luma[c]) + (luma[c - 1] - luma[c]) + (luma[c + 1] - luma[c])
        })
    });
    mean_std(responses).1.powi(2)
}

pub fn sharpness_score(laplacian_var: f64) -> f64 {
    100.0 * (laplacian_var / SHARPNESS_REF_VARIANCE).min(1.0)
}

pub fn brightness_score(mean_luma: f64) -> f64 {
    (100.0 * (1.0 - 2.0 * (mean_luma - 0.5).abs())).clamp(0.0, 100.0)
}

pub fn contrast_score(std_luma: f64) -> f64 {
    100.0 * (std_luma / CONTRAST_REF_STD).min(1.0)
}

pub fn pose_score(roll_degrees: f64) -> f64 {
    (100.0 * (1.0 - roll_degrees.abs() / MAX_ROLL_DEGREES)).clamp(0.0, 100.0)
}

pub fn eye_resolution_score(inter_eye_px: f64) -> f64 {
    100.0 * (inter_eye_px / EYE_DISTANCE_REF_PX).clamp(0.0, 1.0)
}

pub fn run_compliance_tests(image_id: &str, face: &FaceTensor) -> ComplianceReport {
    let img = face.image();
    let luma = img.luminance();
    let (mean, std) = mean_std(luma.iter().copied());
    let lap_var = laplacian_variance(&luma, img.width(), img.height());

    let has_colour = img.data().chunks_exact(3).any(|p| {
        let hi = p[0].max(p[1]).max(p[2]) as f64;
        let lo = p[0].min(p[1]).min(p[2]) as f64;
        hi - lo > CHROMA_EPSILON
    });

    let (pose, eyes) = match face.source_landmarks() {
        Some(lm) => (pose_score(lm.roll_degrees()), eye_resolution_score(lm.inter_eye_distance())),
        None => (NEUTRAL_SCORE, NEUTRAL_SCORE),
    };

    let scores = [
        sharpness_score(lap_var),
        brightness_score(mean),
        contrast_score(std),
        if has_colour { 100.0 } else { NEUTRAL_SCORE },
        pose,
        eyes,
    ];
    let test_scores = TEST_NAMES.iter().zip(scores).map(|(n, s)| (n.to_string(), s)).collect();
    ComplianceReport::from_scores(image_id, test_scores)
}

/// Subject → gallery image.
pub type GalleryMap = BTreeMap<String, String>;

/// Picks, per subject, the image with the highest aggregate (ties go to the
/// smallest `image_id`) and rewrites roles: chosen → gallery, rest → probe.
pub fn select_gallery(
    manifest: &mut DatasetManifest,
    reports: &[ComplianceReport],
) -> Result<GalleryMap, ComplianceError> {
    let by_id: HashMap<&str, &ComplianceReport> = reports.iter().map(|r| (r.image_id.as_str(), r)).collect();
    let mut gallery = GalleryMap::new();
    for (subject, records) in manifest.by_subject() {
        let mut best: Option<(&str, f64)> = None;
        // records are sorted by image_id, so a strict comparison keeps the smallest id on ties
        for rec in records {
            let report = by_id
                .get(rec.image_id.as_str())
                .ok_or_else(|| ComplianceError::MissingReport(rec.image_id.clone()))?;
            if best.is_none_or(|(_, score)| report.aggregate > score) {
                best = Some((rec.image_id.as_str(), report.aggregate));
            }
        }
        if let Some((id, _)) = best {
            gallery.insert(subject.to_string(), id.to_string());
        }
    }
    let ids: Vec<(String, String)> =
        manifest.entries().iter().map(|e| (e.image_id.clone(), e.subject_id.clone())).collect();
    for (image_id, subject) in ids {
        let role = if gallery.get(&subject) == Some(&image_id) { Role::Gallery } else { Role::Probe };
        manifest.set_role(&image_id, role);
    }
    Ok(gallery)
}

pub fn reports_to_tsv(reports: &[ComplianceReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        for (name, score) in &r.test_scores {
            out.push_str(&format!("{}\t{}\t{}\n", r.image_id, name, textfmt::f64_to_string(*score)));
        }
        out.push_str(&format!("{}\t{AGGREGATE_ROW}\t{}\n", r.image_id, textfmt::f64_to_string(r.aggregate)));
    }
    out
}

/// Parses the report TSV; rows for one image must be contiguous and end with
/// its aggregate row.
pub fn reports_from_tsv(text: &str) -> Result<Vec<ComplianceReport>, ComplianceError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(REPORT_HEADER) {
        return Err(ComplianceError::Malformed { line: 1, reason: "unexpected header".into() });
    }
    let mut reports = Vec::new();
    let mut current: Option<(String, BTreeMap<String, f64>)> = None;
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(ComplianceError::Malformed { line, reason: "expected 3 fields".into() });
        }
        let value = textfmt::parse_f64(fields[2])
            .ok_or_else(|| ComplianceError::Malformed { line, reason: format!("bad score {:?}", fields[2]) })?;
        let (id, scores) = current.get_or_insert_with(|| (fields[0].to_string(), BTreeMap::new()));
        if id != fields[0] {
            return Err(ComplianceError::Malformed { line, reason: "report rows not contiguous".into() });
        }
        if fields[1] == AGGREGATE_ROW {
            let (id, test_scores) = current.take().expect("current report present");
            reports.push(ComplianceReport { image_id: id, test_scores, aggregate: value });
        } else {
            scores.insert(fields[1].to_string(), value);
        }
    }
    if let Some((id, _)) = current {
        return Err(ComplianceError::Malformed { line: 0, reason: format!("report {id:?} lacks an aggregate row") });
    }
    Ok(reports)
}

pub fn gallery_to_tsv(gallery: &GalleryMap) -> String {
    let mut out = format!("{GALLERY_HEADER}\n");
    for (s, i) in gallery {
        out.push_str(&format!("{s}\t{i}\n"));
    }
    out
}

pub fn gallery_from_tsv(text: &str) -> Result<GalleryMap, ComplianceError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(GALLERY_HEADER) {
        return Err(ComplianceError::Malformed { line: 1, reason: "unexpected gallery header".into() });
    }
    let mut map = GalleryMap::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let (s, i) = raw
            .split_once('\t')
            .ok_or_else(|| ComplianceError::Malformed { line: idx + 1, reason: "expected 2 fields".into() })?;
        map.insert(s.to_string(), i.to_string());
    }
    Ok(map)
}

pub fn save_reports(path: &Path, reports: &[ComplianceReport]) -> Result<(), ComplianceError> {
    Ok(std::fs::write(path, reports_to_tsv(reports))?)
}
