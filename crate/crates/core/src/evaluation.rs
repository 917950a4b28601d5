//! Quality-stratified verification: tertile binning, mated/non-mated score
//! generation, DET curves and EER.
//!
//! Conventions:
//! - a comparison is accepted iff `score ≥ threshold`;
//! - `FAR(t) = %(non-mated ≥ t)`, `FRR(t) = %(mated < t)`;
//! - mated pairs are unordered and involve at least one bin member;
//! - each bin image meets all images of one seeded-random other subject.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{DatasetManifest, FaceTensor};
use crate::embeddings::{embed, EmbeddingBackend, EmbeddingError};
use crate::groundtruth::euclidean;
use crate::textfmt;

/// Largest distance between unit vectors.
pub const BUILTIN_REFERENCE_DISTANCE: f64 = 2.0;
pub const SCORE_HEADER: &str = "probe_id\treference_id\tmated\tscore";
pub const PAIRING_CONVENTION: &str =
    "mated: unordered within-subject pairs with at least one bin member; non-mated: each bin image vs all images of one seeded random other subject; accept iff score >= threshold";

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("need at least 3 images for tertiles, got {0}")]
    TooFewImages(usize),
    #[error("comparator failure: {0}")]
    ComparatorFailure(String),
    #[error("comparison score {0} outside [0,100]")]
    ScoreOutOfRange(f64),
    #[error("need at least two subjects for non-mated comparisons")]
    SingleSubject,
    #[error("image {0:?} not in manifest")]
    UnknownImage(String),
    #[error("no {0} scores")]
    EmptyScores(ScoreSide),
    #[error("malformed score file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSide {
    Mated,
    NonMated,
}

impl fmt::Display for ScoreSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreSide::Mated => "mated",
            ScoreSide::NonMated => "non-mated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum QualityLevel {
    LowQ,
    MediumQ,
    HighQ,
}

impl QualityLevel {
    pub const ALL: [QualityLevel; 3] = [QualityLevel::LowQ, QualityLevel::MediumQ, QualityLevel::HighQ];

    pub fn as_str(self) -> &'static str {
        match self {
            QualityLevel::LowQ => "LowQ",
            QualityLevel::MediumQ => "MediumQ",
            QualityLevel::HighQ => "HighQ",
        }
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityBin {
    pub label: QualityLevel,
    pub image_ids: BTreeSet<String>,
}

/// Sorts by `(quality, image_id)` and cuts three contiguous chunks whose
/// sizes differ by at most one; the remainder goes to LowQ first, then MediumQ.
pub fn tertile_split(qualities: &[(String, f64)]) -> Result<[QualityBin; 3], EvaluationError> {
    let n = qualities.len();
    if n < 3 {
        return Err(EvaluationError::TooFewImages(n));
    }
    let mut sorted: Vec<&(String, f64)> = qualities.iter().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let (base, rem) = (n / 3, n % 3);
    let sizes = [base + usize::from(rem >= 1), base + usize::from(rem >= 2), base];
    let mut start = 0;
    let bins = QualityLevel::ALL.map(|label| {
        let size = sizes[label as usize];
        let image_ids = sorted[start..start + size].iter().map(|(id, _)| id.clone()).collect();
        start += size;
        QualityBin { label, image_ids }
    });
    Ok(bins)
}

/// Verification comparator producing scores in `[0,100]`, higher = more
/// likely mated.
pub trait Comparator: Send + Sync {
    fn compare_faces(&self, a: &FaceTensor, b: &FaceTensor) -> Result<f64, EvaluationError>;
}

/// `100·max(0, 1 − d/2)` over groundtruth-backbone embeddings.
pub struct BuiltinComparator<'a> {
    backend: &'a dyn EmbeddingBackend,
}

impl<'a> BuiltinComparator<'a> {
    pub fn new(backend: &'a dyn EmbeddingBackend) -> Self {
        Self { backend }
    }
}

pub fn builtin_score(distance: f64) -> f64 {
    100.0 * (1.0 - distance / BUILTIN_REFERENCE_DISTANCE).max(0.0)
}

fn comparator_failure(e: EmbeddingError) -> EvaluationError {
    EvaluationError::ComparatorFailure(e.to_string())
}

impl Comparator for BuiltinComparator<'_> {
    fn compare_faces(&self, a: &FaceTensor, b: &FaceTensor) -> Result<f64, EvaluationError> {
        let ea = embed("a", a, self.backend).map_err(comparator_failure)?;
        let eb = embed("b", b, self.backend).map_err(comparator_failure)?;
        let d = euclidean(&ea.vector, &eb.vector).map_err(|e| EvaluationError::ComparatorFailure(e.to_string()))?;
        Ok(builtin_score(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonScore {
    pub probe_id: String,
    pub reference_id: String,
    pub score: f64,
    pub mated: bool,
}

/// Runs the comparator and enforces the `[0,100]` contract.
pub fn compare(
    probe_id: &str,
    reference_id: &str,
    mated: bool,
    a: &FaceTensor,
    b: &FaceTensor,
    comparator: &dyn Comparator,
) -> Result<ComparisonScore, EvaluationError> {
    let score = comparator.compare_faces(a, b)?;
    if !(0.0..=100.0).contains(&score) {
        return Err(EvaluationError::ScoreOutOfRange(score));
    }
    Ok(ComparisonScore { probe_id: probe_id.to_string(), reference_id: reference_id.to_string(), score, mated })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub probe_id: String,
    pub reference_id: String,
    pub mated: bool,
}

/// Enumerates the comparisons for one bin. Deterministic for a fixed seed.
pub fn plan_pairs(bin: &QualityBin, manifest: &DatasetManifest, seed: u64) -> Result<Vec<PairPlan>, EvaluationError> {
    let by_subject = manifest.by_subject();
    let subjects: Vec<&str> = by_subject.keys().copied().collect();
    if subjects.len() < 2 {
        return Err(EvaluationError::SingleSubject);
    }
    let subject_of: HashMap<&str, &str> =
        manifest.entries().iter().map(|e| (e.image_id.as_str(), e.subject_id.as_str())).collect();

    let mut mated = Vec::new();
    for id in &bin.image_ids {
        let subject = *subject_of.get(id.as_str()).ok_or_else(|| EvaluationError::UnknownImage(id.clone()))?;
        let partners: Vec<&str> =
            by_subject[subject].iter().map(|r| r.image_id.as_str()).filter(|p| p != id).collect();
        if partners.is_empty() {
            log::info!("{id}: no same-subject partner, no mated scores");
        }
        for partner in partners {
            // a pair of two bin members is emitted once, from its smaller id
            if bin.image_ids.contains(partner) && partner < id.as_str() {
                continue;
            }
            mated.push(PairPlan { probe_id: id.clone(), reference_id: partner.to_string(), mated: true });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut non_mated = Vec::new();
    for id in &bin.image_ids {
        let subject = subject_of[id.as_str()];
        let own = subjects.binary_search(&subject).expect("subject listed");
        let pick = rng.random_range(0..subjects.len() - 1);
        let other = subjects[if pick >= own { pick + 1 } else { pick }];
        for r in &by_subject[other] {
            non_mated.push(PairPlan { probe_id: id.clone(), reference_id: r.image_id.clone(), mated: false });
        }
    }
    mated.extend(non_mated);
    Ok(mated)
}

/// Scores planned pairs in parallel; output order follows `plans`.
pub fn score_pairs<'f, F>(plans: &[PairPlan], face: F, comparator: &dyn Comparator) -> Result<Vec<ComparisonScore>, EvaluationError>
where
    F: Fn(&str) -> Option<&'f FaceTensor> + Sync,
{
    plans
        .par_iter()
        .map(|p| {
            let a = face(&p.probe_id).ok_or_else(|| EvaluationError::UnknownImage(p.probe_id.clone()))?;
            let b = face(&p.reference_id).ok_or_else(|| EvaluationError::UnknownImage(p.reference_id.clone()))?;
            compare(&p.probe_id, &p.reference_id, p.mated, a, b, comparator)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub mated: Vec<f64>,
    pub non_mated: Vec<f64>,
}

impl ScoreSet {
    pub fn from_comparisons(scores: &[ComparisonScore]) -> Self {
        let mut set = ScoreSet::default();
        for s in scores {
            if s.mated {
                set.mated.push(s.score);
            } else {
                set.non_mated.push(s.score);
            }
        }
        set
    }
}

/// Plans and scores one bin. `face` resolves image ids to preprocessed faces.
pub fn generate_scores<'f, F>(
    bin: &QualityBin,
    manifest: &DatasetManifest,
    face: F,
    comparator: &dyn Comparator,
    seed: u64,
) -> Result<(ScoreSet, Vec<ComparisonScore>), EvaluationError>
where
    F: Fn(&str) -> Option<&'f FaceTensor> + Sync,
{
    let plans = plan_pairs(bin, manifest, seed)?;
    let scores = score_pairs(&plans, face, comparator)?;
    Ok((ScoreSet::from_comparisons(&scores), scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub far_pct: f64,
    pub frr_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub points: Vec<DetPoint>,
    pub eer: f64,
}

/// Sweeps the sorted unique scores plus one sentinel below the minimum and
/// one above the maximum. The EER is the FAR/FRR crossing, linearly
/// interpolated between the bracketing thresholds, or the common value where
/// the curves meet exactly.
pub fn compute_det(scores: &ScoreSet) -> Result<DetCurve, EvaluationError> {
    if scores.mated.is_empty() {
        return Err(EvaluationError::EmptyScores(ScoreSide::Mated));
    }
    if scores.non_mated.is_empty() {
        return Err(EvaluationError::EmptyScores(ScoreSide::NonMated));
    }
    let mut mated = scores.mated.clone();
    let mut non_mated = scores.non_mated.clone();
    mated.sort_by(f64::total_cmp);
    non_mated.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = mated.iter().chain(&non_mated).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let lo = thresholds[0] - 1.0;
    let hi = thresholds[thresholds.len() - 1] + 1.0;
    thresholds.insert(0, lo);
    thresholds.push(hi);

    let (nm, nn) = (mated.len() as f64, non_mated.len() as f64);
    let points: Vec<DetPoint> = thresholds
        .iter()
        .map(|&t| {
            let rejected_mated = mated.partition_point(|&s| s < t) as f64;
            let accepted_non = (non_mated.len() - non_mated.partition_point(|&s| s < t)) as f64;
            DetPoint { threshold: t, far_pct: 100.0 * accepted_non / nn, frr_pct: 100.0 * rejected_mated / nm }
        })
        .collect();
    let eer = equal_error_rate(&points);
    Ok(DetCurve { points, eer })
}

fn equal_error_rate(points: &[DetPoint]) -> f64 {
    if let Some(p) = points.iter().find(|p| p.far_pct == p.frr_pct) {
        return p.far_pct;
    }
    for w in points.windows(2) {
        let d0 = w[0].far_pct - w[0].frr_pct;
        let d1 = w[1].far_pct - w[1].frr_pct;
        if d0 > 0.0 && d1 < 0.0 {
            let alpha = d0 / (d0 - d1);
            return w[0].far_pct + alpha * (w[1].far_pct - w[0].far_pct);
        }
    }
    unreachable!("sentinels guarantee a sign change from +100 to -100")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Uniform bins over `[0,1]`, each `[lo, hi)` except the last, which is
/// closed. Values outside `[0,1]` fall into the nearest end bin.
pub fn quality_histogram(qualities: &[f64], bin_count: usize) -> Histogram {
    let bins = bin_count.max(1);
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &q in qualities.iter().filter(|q| q.is_finite()) {
        let idx = ((q * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { edges, counts }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman needs paired samples");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && values[idx[end + 1]] == values[idx[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &idx[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

pub fn scores_to_tsv(scores: &[ComparisonScore]) -> String {
    let mut out = format!("{SCORE_HEADER}\n");
    for s in scores {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.probe_id, s.reference_id, s.mated, textfmt::f64_to_string(s.score)));
    }
    out
}

pub fn scores_from_tsv(text: &str) -> Result<Vec<ComparisonScore>, EvaluationError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(SCORE_HEADER) {
        return Err(EvaluationError::Malformed { line: 1, reason: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        let line = idx + 1;
        let malformed = |reason: &str| EvaluationError::Malformed { line, reason: reason.into() };
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 4 {
            return Err(malformed("expected 4 fields"));
        }
        let mated = f[2].parse::<bool>().map_err(|_| malformed("mated must be true/false"))?;
        let score = textfmt::parse_f64(f[3]).ok_or_else(|| malformed("bad score"))?;
        out.push(ComparisonScore { probe_id: f[0].into(), reference_id: f[1].into(), score, mated });
    }
    Ok(out)
}

pub fn det_to_csv(curve: &DetCurve) -> String {
    let mut out = String::from("threshold,far_pct,frr_pct\n");
    for p in &curve.points {
        out.push_str(&format!(
            "{},{},{}\n",
            textfmt::f64_to_string(p.threshold),
            textfmt::f64_to_string(p.far_pct),
            textfmt::f64_to_string(p.frr_pct)
        ));
    }
    out
}

pub fn histogram_to_csv(h: &Histogram) -> String {
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", textfmt::f64_to_string(h.edges[i]), textfmt::f64_to_string(h.edges[i + 1]), c));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinSummary {
    pub bin: QualityLevel,
    pub eer_pct: f64,
    pub n_mated: usize,
    pub n_nonmated: usize,
    pub n_images: usize,
    pub mean_quality: f64,
}

pub fn save_text(path: &Path, text: &str) -> Result<(), EvaluationError> {
    Ok(std::fs::write(path, text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ImageRecord, Role};

    fn q(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(i, v)| (i.to_string(), *v)).collect()
    }

    #[test]
    fn tertiles_nine_and_ten() {
        let nine: Vec<_> = (1..=9).map(|i| (format!("i{i}"), i as f64 / 10.0)).collect();
        let bins = tertile_split(&nine).unwrap();
        assert_eq!(bins.iter().map(|b| b.image_ids.len()).collect::<Vec<_>>(), [3, 3, 3]);
        assert!(bins[0].image_ids.contains("i1") && bins[2].image_ids.contains("i9"));
        let ten: Vec<_> = (0..10).map(|i| (format!("i{i}"), i as f64 / 10.0)).collect();
        let sizes: Vec<_> = tertile_split(&ten).unwrap().iter().map(|b| b.image_ids.len()).collect();
        assert_eq!(sizes, [4, 3, 3]);
        assert!(matches!(tertile_split(&q(&[("a", 0.1), ("b", 0.2)])), Err(EvaluationError::TooFewImages(2))));
    }

    #[test]
    fn tertile_ties_break_by_id() {
        let bins = tertile_split(&q(&[("c", 0.1), ("z", 0.5), ("a", 0.5), ("d", 0.9)])).unwrap();
        assert!(bins[0].image_ids.contains("a"));
        assert!(bins[1].image_ids.contains("z"));
    }

    #[test]
    fn builtin_score_endpoints() {
        assert_eq!(builtin_score(0.0), 100.0);
        assert_eq!(builtin_score(2.0), 0.0);
        assert_eq!(builtin_score(1.0), 50.0);
    }

    struct Fixed(f64);

    impl Comparator for Fixed {
        fn compare_faces(&self, _: &FaceTensor, _: &FaceTensor) -> Result<f64, EvaluationError> {
            Ok(self.0)
        }
    }

    #[test]
    fn out_of_range_external_scores_are_rejected() {
        let f = FaceTensor::from_image(crate::imaging::RgbImage::filled(224, 224, [0.5; 3]), false, None);
        assert!(matches!(compare("a", "b", true, &f, &f, &Fixed(103.5)), Err(EvaluationError::ScoreOutOfRange(v)) if v == 103.5));
        assert_eq!(compare("a", "b", true, &f, &f, &Fixed(42.0)).unwrap().score, 42.0);
    }

    fn manifest(rows: &[(&str, &str)]) -> DatasetManifest {
        let entries = rows
            .iter()
            .map(|(s, i)| ImageRecord { subject_id: s.to_string(), image_id: i.to_string(), path: "x".into(), role: Role::Unassigned })
            .collect();
        DatasetManifest::new(entries, "").unwrap()
    }

    fn bin(ids: &[&str]) -> QualityBin {
        QualityBin { label: QualityLevel::LowQ, image_ids: ids.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn mated_pairs_within_bin() {
        let m = manifest(&[("a", "a1"), ("a", "a2"), ("a", "a3"), ("b", "b1")]);
        let plans = plan_pairs(&bin(&["a1", "a2", "a3"]), &m, 1).unwrap();
        assert_eq!(plans.iter().filter(|p| p.mated).count(), 3);
        // every bin image of subject a is paired with b's single image
        assert_eq!(plans.iter().filter(|p| !p.mated).count(), 3);
    }

    #[test]
    fn lonely_image_has_no_mated_pairs() {
        let m = manifest(&[("a", "a1"), ("b", "b1"), ("b", "b2")]);
        let plans = plan_pairs(&bin(&["a1"]), &m, 1).unwrap();
        assert_eq!(plans.iter().filter(|p| p.mated).count(), 0);
        assert_eq!(plans.iter().filter(|p| !p.mated).count(), 2);
    }

    #[test]
    fn pairs_cross_the_bin_boundary_once() {
        let m = manifest(&[("a", "a1"), ("a", "a2"), ("a", "a3"), ("b", "b1")]);
        let plans = plan_pairs(&bin(&["a1", "a2"]), &m, 1).unwrap();
        let mated: Vec<_> = plans.iter().filter(|p| p.mated).map(|p| (p.probe_id.as_str(), p.reference_id.as_str())).collect();
        assert_eq!(mated, [("a1", "a2"), ("a1", "a3"), ("a2", "a3")]);
    }

    #[test]
    fn non_mated_pairing_is_seeded() {
        let rows: Vec<(String, String)> = (0..6).flat_map(|s| (0..2).map(move |i| (format!("s{s}"), format!("s{s}_{i}")))).collect();
        let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let m = manifest(&refs);
        let b = bin(&["s0_0", "s1_1", "s3_0", "s5_1"]);
        let first = plan_pairs(&b, &m, 99).unwrap();
        assert_eq!(first, plan_pairs(&b, &m, 99).unwrap());
        for p in first.iter().filter(|p| !p.mated) {
            assert_ne!(&p.probe_id[..2], &p.reference_id[..2]);
        }
        assert!(matches!(plan_pairs(&bin(&["a1"]), &manifest(&[("a", "a1"), ("a", "a2")]), 1), Err(EvaluationError::SingleSubject)));
    }

    #[test]
    fn det_examples() {
        let sep = compute_det(&ScoreSet { mated: vec![90.0, 80.0, 70.0], non_mated: vec![30.0, 20.0, 10.0] }).unwrap();
        assert_eq!(sep.eer, 0.0);
        let same = compute_det(&ScoreSet { mated: vec![10.0, 20.0, 30.0], non_mated: vec![10.0, 20.0, 30.0] }).unwrap();
        assert!((same.eer - 50.0).abs() < 1e-9);
        let mixed = compute_det(&ScoreSet { mated: vec![90.0, 60.0, 40.0], non_mated: vec![70.0, 50.0, 20.0] }).unwrap();
        assert!((mixed.eer - 100.0 / 3.0).abs() < 1e-9);
        let first = sep.points.first().unwrap();
        let last = sep.points.last().unwrap();
        assert_eq!((first.far_pct, first.frr_pct), (100.0, 0.0));
        assert_eq!((last.far_pct, last.frr_pct), (0.0, 100.0));
    }

    #[test]
    fn inverted_scores_exceed_half() {
        // worse-than-chance comparators are reported as-is, not folded
        let inv = compute_det(&ScoreSet { mated: vec![10.0], non_mated: vec![90.0] }).unwrap();
        assert_eq!(inv.eer, 100.0);
    }

    #[test]
    fn det_rejects_empty_sides() {
        assert!(matches!(compute_det(&ScoreSet { mated: vec![], non_mated: vec![1.0] }), Err(EvaluationError::EmptyScores(ScoreSide::Mated))));
        assert!(matches!(compute_det(&ScoreSet { mated: vec![1.0], non_mated: vec![] }), Err(EvaluationError::EmptyScores(ScoreSide::NonMated))));
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(quality_histogram(&[0.0, 1.0], 2).counts, vec![1, 1]);
        assert_eq!(quality_histogram(&[], 4).counts, vec![0; 4]);
        assert_eq!(quality_histogram(&[0.5], 2).counts, vec![0, 1]);
        assert_eq!(quality_histogram(&[0.5], 2).edges, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn score_file_round_trip() {
        let s = vec![ComparisonScore { probe_id: "a".into(), reference_id: "b".into(), score: 12.5, mated: true }];
        let text = scores_to_tsv(&s);
        assert_eq!(scores_from_tsv(&text).unwrap(), s);
    }
}
