//! Identity-labelled image inventories, subject partitioning, image
//! decoding, and face preprocessing to the 224×224×3 network input.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imaging::RgbImage;

pub const FACE_SIZE: usize = 224;
/// Template eye row as a fraction of the output size.
pub const EYE_ROW: f64 = 0.35;
pub const LEFT_EYE_COL: f64 = 0.30;
pub const RIGHT_EYE_COL: f64 = 0.70;

pub const MANIFEST_HEADER: &str = "subject_id\timage_id\tpath\trole";
pub const LANDMARK_HEADER: &str = "image_id\tleft_eye_x\tleft_eye_y\tright_eye_x\tright_eye_y";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("malformed manifest at line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),
    #[error("insufficient subjects: {available} available, {requested} requested")]
    InsufficientSubjects { available: usize, requested: usize },
    #[error("cannot decode image {path}: {reason}")]
    DecodeError { path: PathBuf, reason: String },
    #[error("empty image")]
    EmptyImage,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Role {
    #[default]
    Unassigned,
    Gallery,
    Probe,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Unassigned => "unassigned",
            Role::Gallery => "gallery",
            Role::Probe => "probe",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unassigned" => Ok(Role::Unassigned),
            "gallery" => Ok(Role::Gallery),
            "probe" => Ok(Role::Probe),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unsplit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub subject_id: String,
    pub image_id: String,
    /// Path as written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: PathBuf,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    entries: Vec<ImageRecord>,
    split: Split,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Builds a manifest, sorting entries by `(subject_id, image_id)`.
    pub fn new(mut entries: Vec<ImageRecord>, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(DatasetError::DuplicateImageId(e.image_id.clone()));
            }
        }
        entries.sort_by(|a, b| (&a.subject_id, &a.image_id).cmp(&(&b.subject_id, &b.image_id)));
        Ok(Self { entries, split: Split::Unsplit, base_dir: base_dir.into() })
    }

    pub fn entries(&self) -> &[ImageRecord] {
        &self.entries
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn resolve(&self, record: &ImageRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    /// Distinct subjects in sorted order.
    pub fn subjects(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.subject_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Records grouped by subject, both levels sorted.
    pub fn by_subject(&self) -> BTreeMap<&str, Vec<&ImageRecord>> {
        let mut map: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.subject_id.as_str()).or_default().push(e);
        }
        map
    }

    pub fn set_role(&mut self, image_id: &str, role: Role) -> bool {
        match self.entries.iter_mut().find(|e| e.image_id == image_id) {
            Some(e) => {
                e.role = role;
                true
            }
            None => false,
        }
    }

    fn subset(&self, subjects: &HashSet<&str>, split: Split) -> DatasetManifest {
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| subjects.contains(e.subject_id.as_str()))
                .cloned()
                .collect(),
            split,
            base_dir: self.base_dir.clone(),
        }
    }

    /// Canonical TSV serialization.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.entries.len() + 1));
        out.push_str(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", e.subject_id, e.image_id, e.path.display(), e.role));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_tsv()).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
            Some(_) => {
                return Err(DatasetError::MalformedManifest { line: 1, reason: "unexpected header".into() })
            }
            None => return Err(DatasetError::MalformedManifest { line: 1, reason: "missing header".into() }),
        }
        let mut entries = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 4 {
                return Err(DatasetError::MalformedManifest {
                    line,
                    reason: format!("expected 4 fields, found {}", fields.len()),
                });
            }
            if fields[..3].iter().any(|f| f.is_empty()) {
                return Err(DatasetError::MalformedManifest { line, reason: "empty field".into() });
            }
            let role = fields[3]
                .parse::<Role>()
                .map_err(|reason| DatasetError::MalformedManifest { line, reason })?;
            entries.push(ImageRecord {
                subject_id: fields[0].to_string(),
                image_id: fields[1].to_string(),
                path: PathBuf::from(fields[2]),
                role,
            });
        }
        Self::new(entries, base_dir)
    }
}

/// Reads a manifest TSV. Entries come back sorted, split = unsplit.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(&text, base)
}

/// Seeded, disjoint train/test subject selection. The sorted subject list is
/// shuffled with ChaCha8 seeded from `seed`; the first `train_subjects` go to
/// train and the next `test_subjects` to test.
pub fn partition_subjects(
    manifest: &DatasetManifest,
    train_subjects: usize,
    test_subjects: usize,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest), DatasetError> {
    let mut subjects = manifest.subjects();
    let requested = train_subjects + test_subjects;
    if requested > subjects.len() {
        return Err(DatasetError::InsufficientSubjects { available: subjects.len(), requested });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let train: HashSet<&str> = subjects[..train_subjects].iter().copied().collect();
    let test: HashSet<&str> = subjects[train_subjects..requested].iter().copied().collect();
    Ok((manifest.subset(&train, Split::Train), manifest.subset(&test, Split::Test)))
}

/// Decodes a PNG or JPEG into `[0,1]` RGB; grayscale is replicated.
pub fn load_image_file(path: &Path) -> Result<RgbImage, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::DecodeError { path: path.to_path_buf(), reason: e.to_string() })?;
    decode_image(&bytes).map_err(|reason| DatasetError::DecodeError { path: path.to_path_buf(), reason })
}

pub fn load_image(manifest: &DatasetManifest, record: &ImageRecord) -> Result<RgbImage, DatasetError> {
    load_image_file(&manifest.resolve(record))
}

pub fn decode_image(bytes: &[u8]) -> Result<RgbImage, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        image::DynamicImage::ImageLuma8(_)
        | image::DynamicImage::ImageLumaA8(_)
        | image::DynamicImage::ImageRgb8(_)
        | image::DynamicImage::ImageRgba8(_) => img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        other => other.to_rgb32f().into_raw().into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    };
    if w == 0 || h == 0 {
        return Err("zero-sized image".into());
    }
    Ok(RgbImage::new(w, h, data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Eye centers in original-image pixel coordinates. `left` is the eye that
/// lands on the left of the aligned output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeLandmarks {
    pub left: Point,
    pub right: Point,
}

impl EyeLandmarks {
    pub fn inter_eye_distance(&self) -> f64 {
        (self.right.x - self.left.x).hypot(self.right.y - self.left.y)
    }

    /// In-plane roll in degrees.
    pub fn roll_degrees(&self) -> f64 {
        (self.right.y - self.left.y).atan2(self.right.x - self.left.x).to_degrees()
    }
}

pub trait FaceDetector: Send + Sync {
    /// Eye landmarks for the given image, or `None` when no face is found.
    fn detect(&self, image_id: &str, image: &RgbImage) -> Option<EyeLandmarks>;
}

/// Landmarks read from a sidecar TSV keyed by `image_id`.
#[derive(Debug, Clone, Default)]
pub struct SidecarDetector {
    landmarks: HashMap<String, EyeLandmarks>,
}

impl SidecarDetector {
    pub fn new(landmarks: HashMap<String, EyeLandmarks>) -> Self {
        Self { landmarks }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        if !path.is_file() {
            return Err(DatasetError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, DatasetError> {
        let mut landmarks = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if line == 1 {
                if raw != LANDMARK_HEADER {
                    return Err(DatasetError::MalformedManifest { line, reason: "unexpected landmark header".into() });
                }
                continue;
            }
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 5 {
                return Err(DatasetError::MalformedManifest { line, reason: "expected 5 landmark fields".into() });
            }
            let mut coords = [0f64; 4];
            for (c, f) in coords.iter_mut().zip(&fields[1..]) {
                *c = f
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| DatasetError::MalformedManifest { line, reason: format!("bad coordinate {f:?}") })?;
            }
            landmarks.insert(
                fields[0].to_string(),
                EyeLandmarks { left: Point { x: coords[0], y: coords[1] }, right: Point { x: coords[2], y: coords[3] } },
            );
        }
        Ok(Self { landmarks })
    }

    pub fn to_tsv(&self) -> String {
        let sorted: BTreeMap<_, _> = self.landmarks.iter().collect();
        let mut out = format!("{LANDMARK_HEADER}\n");
        for (id, lm) in sorted {
            out.push_str(&format!("{id}\t{}\t{}\t{}\t{}\n", lm.left.x, lm.left.y, lm.right.x, lm.right.y));
        }
        out
    }
}

impl FaceDetector for SidecarDetector {
    fn detect(&self, image_id: &str, _image: &RgbImage) -> Option<EyeLandmarks> {
        self.landmarks.get(image_id).copied()
    }
}

/// 224×224×3 network input with values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTensor {
    image: RgbImage,
    aligned: bool,
    /// Eye landmarks in source-image pixels when alignment was applied.
    source_landmarks: Option<EyeLandmarks>,
}

impl FaceTensor {
    /// Wraps a 224×224 image, clamping values into `[0,1]`.
    pub fn from_image(mut image: RgbImage, aligned: bool, source_landmarks: Option<EyeLandmarks>) -> Self {
        assert_eq!((image.width(), image.height()), (FACE_SIZE, FACE_SIZE), "face tensor must be 224x224");
        image.map_values(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Self { image, aligned, source_landmarks }
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn aligned(&self) -> bool {
        self.aligned
    }

    pub fn source_landmarks(&self) -> Option<&EyeLandmarks> {
        self.source_landmarks.as_ref()
    }

    pub fn data(&self) -> &[f32] {
        self.image.data()
    }
}

/// Similarity transform `p' = s·R·p + t`, stored as `(a, b, tx, ty)` with
/// `x' = a·x − b·y + tx`, `y' = b·x + a·y + ty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    /// The transform taking `src0 → dst0` and `src1 → dst1`.
    pub fn from_pairs(src0: Point, src1: Point, dst0: Point, dst1: Point) -> Option<Self> {
        let (sx, sy) = (src1.x - src0.x, src1.y - src0.y);
        let (dx, dy) = (dst1.x - dst0.x, dst1.y - dst0.y);
        let denom = sx * sx + sy * sy;
        if denom < 1e-12 {
            return None;
        }
        let a = (dx * sx + dy * sy) / denom;
        let b = (dy * sx - dx * sy) / denom;
        let tx = dst0.x - (a * src0.x - b * src0.y);
        let ty = dst0.y - (b * src0.x + a * src0.y);
        Some(Self { a, b, tx, ty })
    }

    pub fn apply(&self, p: Point) -> Point {
        Point { x: self.a * p.x - self.b * p.y + self.tx, y: self.b * p.x + self.a * p.y + self.ty }
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.a * self.a + self.b * self.b;
        if det < 1e-24 {
            return None;
        }
        let (ia, ib) = (self.a / det, -self.b / det);
        Some(Self { a: ia, b: ib, tx: -(ia * self.tx - ib * self.ty), ty: -(ib * self.tx + ia * self.ty) })
    }
}

/// Template eye positions in the aligned 224×224 output.
pub fn template_eyes() -> EyeLandmarks {
    let s = FACE_SIZE as f64;
    EyeLandmarks {
        left: Point { x: LEFT_EYE_COL * s, y: EYE_ROW * s },
        right: Point { x: RIGHT_EYE_COL * s, y: EYE_ROW * s },
    }
}

/// Aligns the face onto the eye template when landmarks are available,
/// otherwise center-crops to a square and resizes. Both paths are bilinear.
pub fn preprocess_face(
    image_id: &str,
    image: &RgbImage,
    detector: Option<&dyn FaceDetector>,
) -> Result<FaceTensor, DatasetError> {
    if image.is_empty() {
        return Err(DatasetError::EmptyImage);
    }
    if let Some(landmarks) = detector.and_then(|d| d.detect(image_id, image)) {
        if let Some(face) = align_to_template(image, &landmarks) {
            return Ok(face);
        }
        log::debug!("{image_id}: degenerate landmarks, using center crop");
    }
    Ok(center_crop_resize(image))
}

/// The transform taking source eye landmarks onto the template.
pub fn alignment_transform(landmarks: &EyeLandmarks) -> Option<Similarity> {
    let template = template_eyes();
    Similarity::from_pairs(landmarks.left, landmarks.right, template.left, template.right)
}

pub fn align_to_template(image: &RgbImage, landmarks: &EyeLandmarks) -> Option<FaceTensor> {
    let inverse = alignment_transform(landmarks)?.inverse()?;
    let out = RgbImage::from_fn(FACE_SIZE, FACE_SIZE, |x, y| {
        let src = inverse.apply(Point { x: x as f64, y: y as f64 });
        image.sample_bilinear(src.x, src.y)
    });
    Some(FaceTensor::from_image(out, true, Some(*landmarks)))
}

pub fn center_crop_resize(image: &RgbImage) -> FaceTensor {
    let side = image.width().min(image.height());
    let x0 = (image.width() - side) / 2;
    let y0 = (image.height() - side) / 2;
    let square = if side == image.width() && side == image.height() {
        image.clone()
    } else {
        image.crop(x0, y0, side, side)
    };
    let resized = if side == FACE_SIZE { square } else { square.resize_bilinear(FACE_SIZE, FACE_SIZE) };
    FaceTensor::from_image(resized, false, None)
}
