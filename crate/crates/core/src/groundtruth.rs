//! Quality labels from mated distances to each subject's gallery image.
//!
//! Every probe is compared with its subject's gallery embedding; the
//! Euclidean distances of the whole pool are min-max normalized together and
//! flipped so that `1` means "as close to the compliant reference as any
//! probe got" and `0` means "farthest".

use std::path::Path;

use thiserror::Error;

use crate::compliance::GalleryMap;
use crate::dataset::{DatasetManifest, Role};
use crate::embeddings::{Embedding, EmbeddingCache};
use crate::textfmt;

#[derive(Debug, Error)]
pub enum GroundtruthError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("backend mismatch: {0:?} vs {1:?}")]
    BackendMismatch(String, String),
    #[error("empty distance list")]
    EmptyInput,
    #[error("non-finite distance at index {0}")]
    NonFiniteDistance(usize),
    #[error("subject {0:?} has no gallery image")]
    MissingGallery(String),
    #[error("no embedding for image {0:?}")]
    MissingEmbedding(String),
    #[error("malformed groundtruth file at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityLabel {
    pub image_id: String,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub d_min: f64,
    pub d_max: f64,
}

impl Normalization {
    pub fn is_degenerate(&self) -> bool {
        self.d_max == self.d_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundtruthSet {
    pub labels: Vec<QualityLabel>,
    pub normalization: Normalization,
    pub backend_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroundtruthOptions {
    /// Ablation switch: append every gallery image with label 1.0.
    pub include_galleries: bool,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64, GroundtruthError> {
    if a.len() != b.len() {
        return Err(GroundtruthError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn mated_distance(gallery: &Embedding, probe: &Embedding) -> Result<f64, GroundtruthError> {
    if gallery.backend_id != probe.backend_id {
        return Err(GroundtruthError::BackendMismatch(gallery.backend_id.clone(), probe.backend_id.clone()));
    }
    euclidean(&gallery.vector, &probe.vector)
}

/// `q = 1 − (d − d_min)/(d_max − d_min)`; all `0.5` when the range collapses.
pub fn normalize_distances(distances: &[f64]) -> Result<(Vec<f64>, Normalization), GroundtruthError> {
    if distances.is_empty() {
        return Err(GroundtruthError::EmptyInput);
    }
    if let Some(i) = distances.iter().position(|d| !d.is_finite()) {
        return Err(GroundtruthError::NonFiniteDistance(i));
    }
    let d_min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let d_max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm = Normalization { d_min, d_max };
    if norm.is_degenerate() {
        log::warn!("DegenerateNormalization: all {} distances equal {d_min}; labels set to 0.5", distances.len());
        return Ok((vec![0.5; distances.len()], norm));
    }
    let range = d_max - d_min;
    let labels = distances.iter().map(|d| (1.0 - (d - d_min) / range).clamp(0.0, 1.0)).collect();
    Ok((labels, norm))
}

/// Labels every probe of `manifest` (in manifest order) from the distance to
/// its subject's gallery embedding in `embeddings`.
pub fn build_groundtruth(
    manifest: &DatasetManifest,
    gallery: &GalleryMap,
    embeddings: &EmbeddingCache,
    options: GroundtruthOptions,
) -> Result<GroundtruthSet, GroundtruthError> {
    let lookup = |id: &str| embeddings.vector(id).ok_or_else(|| GroundtruthError::MissingEmbedding(id.to_string()));
    let mut probe_ids = Vec::new();
    let mut distances = Vec::new();
    for record in manifest.entries() {
        let gallery_id = gallery
            .get(&record.subject_id)
            .ok_or_else(|| GroundtruthError::MissingGallery(record.subject_id.clone()))?;
        if *gallery_id == record.image_id || record.role == Role::Gallery {
            continue;
        }
        distances.push(euclidean(lookup(gallery_id)?, lookup(&record.image_id)?)?);
        probe_ids.push(record.image_id.clone());
    }
    let (qualities, normalization) = if distances.is_empty() {
        // No probes at all: nothing to normalize against.
        (Vec::new(), Normalization { d_min: 0.0, d_max: 0.0 })
    } else {
        normalize_distances(&distances)?
    };
    let mut labels: Vec<QualityLabel> =
        probe_ids.into_iter().zip(qualities).map(|(image_id, quality)| QualityLabel { image_id, quality }).collect();
    if options.include_galleries {
        labels.extend(gallery.values().map(|id| QualityLabel { image_id: id.clone(), quality: 1.0 }));
    }
    Ok(GroundtruthSet { labels, normalization, backend_id: embeddings.backend_id().to_string() })
}

impl GroundtruthSet {
    pub fn get(&self, image_id: &str) -> Option<f64> {
        self.labels.iter().find(|l| l.image_id == image_id).map(|l| l.quality)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "# backend_id={} d_min={} d_max={}\n",
            self.backend_id,
            textfmt::f64_to_string(self.normalization.d_min),
            textfmt::f64_to_string(self.normalization.d_max)
        );
        for l in &self.labels {
            out.push_str(&format!("{}\t{}\n", l.image_id, textfmt::f64_to_string(l.quality)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, GroundtruthError> {
        let mut lines = text.lines().enumerate();
        let malformed = |line: usize, reason: &str| GroundtruthError::Malformed { line, reason: reason.to_string() };
        let header = lines.next().map(|(_, l)| l).unwrap_or_default();
        let fields = header.strip_prefix("# ").map(textfmt::parse_header_fields).ok_or_else(|| malformed(1, "missing header"))?;
        let get = |k: &str| fields.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
        let backend_id = get("backend_id").ok_or_else(|| malformed(1, "header lacks backend_id"))?.to_string();
        let d_min = get("d_min").and_then(textfmt::parse_f64).ok_or_else(|| malformed(1, "bad d_min"))?;
        let d_max = get("d_max").and_then(textfmt::parse_f64).ok_or_else(|| malformed(1, "bad d_max"))?;
        let mut labels = Vec::new();
        for (idx, raw) in lines {
            if raw.is_empty() {
                continue;
            }
            let line = idx + 1;
            let (id, q) = raw.split_once('\t').ok_or_else(|| malformed(line, "expected 2 fields"))?;
            let quality = textfmt::parse_f64(q)
                .filter(|q| (0.0..=1.0).contains(q))
                .ok_or_else(|| malformed(line, "quality outside [0,1]"))?;
            labels.push(QualityLabel { image_id: id.to_string(), quality });
        }
        Ok(Self { labels, normalization: Normalization { d_min, d_max }, backend_id })
    }

    pub fn save(&self, path: &Path) -> Result<(), GroundtruthError> {
        Ok(std::fs::write(path, self.to_tsv())?)
    }

    pub fn load(path: &Path) -> Result<Self, GroundtruthError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;

    fn emb(v: &[f64]) -> Embedding {
        Embedding { image_id: "x".into(), vector: v.to_vec(), backend_id: "b".into() }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(mated_distance(&emb(&[1.0, 2.0]), &emb(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(mated_distance(&emb(&[0.0, 0.0]), &emb(&[3.0, 4.0])).unwrap(), 5.0);
        assert!((mated_distance(&emb(&[1.0, 0.0]), &emb(&[-1.0, 0.0])).unwrap() - 2.0).abs() < 1e-15);
        let theta = 0.7f64;
        let d = mated_distance(&emb(&[1.0, 0.0]), &emb(&[theta.cos(), theta.sin()])).unwrap();
        assert!((d - (2.0 - 2.0 * theta.cos()).sqrt()).abs() < 1e-12);
        assert!(matches!(mated_distance(&emb(&[1.0]), &emb(&[1.0, 0.0])), Err(GroundtruthError::DimensionMismatch(1, 2))));
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_distances(&[0.0, 1.0, 2.0]).unwrap().0, vec![1.0, 0.5, 0.0]);
        assert_eq!(normalize_distances(&[0.2, 0.8]).unwrap().0, vec![1.0, 0.0]);
        let (q, n) = normalize_distances(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(q, vec![0.5; 3]);
        assert!(n.is_degenerate());
        assert!(matches!(normalize_distances(&[]), Err(GroundtruthError::EmptyInput)));
        assert!(matches!(normalize_distances(&[1.0, f64::NAN]), Err(GroundtruthError::NonFiniteDistance(1))));
    }

    fn setup() -> (DatasetManifest, GalleryMap, EmbeddingCache) {
        let mut entries = Vec::new();
        let mut cache = EmbeddingCache::new("b", 2);
        let rows = [("s1", "s1g", [0.0, 0.0]), ("s1", "s1p1", [0.0, 0.0]), ("s1", "s1p2", [1.0, 0.0]),
            ("s2", "s2g", [5.0, 5.0]), ("s2", "s2p1", [5.0, 7.0]), ("s2", "s2p2", [5.0, 8.0])];
        for (s, i, v) in rows {
            entries.push(ImageRecord { subject_id: s.into(), image_id: i.into(), path: "x".into(), role: Role::Unassigned });
            cache.store(Embedding { image_id: i.into(), vector: v.to_vec(), backend_id: "b".into() }).unwrap();
        }
        let mut gallery = GalleryMap::new();
        gallery.insert("s1".into(), "s1g".into());
        gallery.insert("s2".into(), "s2g".into());
        (DatasetManifest::new(entries, "").unwrap(), gallery, cache)
    }

    #[test]
    fn missing_gallery_is_reported() {
        let (m, mut g, c) = setup();
        g.remove("s2");
        assert!(matches!(build_groundtruth(&m, &g, &c, Default::default()), Err(GroundtruthError::MissingGallery(s)) if s == "s2"));
    }

    #[test]
    fn galleries_excluded_unless_requested() {
        let (m, g, c) = setup();
        let gt = build_groundtruth(&m, &g, &c, Default::default()).unwrap();
        assert_eq!(gt.labels.len(), 4);
        assert!(gt.get("s1g").is_none());
        let gt = build_groundtruth(&m, &g, &c, GroundtruthOptions { include_galleries: true }).unwrap();
        assert_eq!(gt.labels.len(), 6);
        assert_eq!(gt.get("s2g"), Some(1.0));
    }

    #[test]
    fn file_round_trip() {
        let (m, g, c) = setup();
        let gt = build_groundtruth(&m, &g, &c, Default::default()).unwrap();
        let text = gt.to_tsv();
        assert!(text.starts_with("# backend_id=b d_min=0 d_max=3\n"));
        let back = GroundtruthSet::parse(&text).unwrap();
        assert_eq!(back, gt);
        assert_eq!(back.to_tsv(), text);
    }
}
