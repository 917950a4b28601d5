//! Seeded synthetic face datasets.
//!
//! Each subject gets a procedural portrait (background, face ellipse with
//! smooth colour blobs and a fine texture, eyes, mouth), tone-calibrated so
//! its aligned crop is mid-gray. Every image of the subject re-renders that
//! portrait under a small random pose and then applies a graded
//! degradation: Gaussian blur, an over- or under-exposure shift (random
//! sign) and additive noise, each scaled by `strength^response_exponent`
//! for a per-image strength in `[0,1]`. Each subject has exactly one
//! undegraded image (strength 0).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::dataset::{align_to_template, DatasetManifest, EyeLandmarks, ImageRecord, Point, Role, SidecarDetector};
use crate::imaging::{luma, mean_std, RgbImage};
use crate::textfmt;

pub const DEGRADATION_HEADER: &str = "image_id\tstrength\tblur_sigma\tnoise_sigma\tbrightness_shift";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub images_per_subject: usize,
    pub seed: u64,
    pub image_size: usize,
    pub max_blur_sigma: f64,
    pub max_noise_sigma: f64,
    pub max_brightness_shift: f64,
    /// Degradation amounts scale with `strength^response_exponent`.
    pub response_exponent: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 30,
            images_per_subject: 10,
            seed: 1,
            image_size: 256,
            max_blur_sigma: 12.0,
            max_noise_sigma: 0.03,
            max_brightness_shift: 0.5,
            response_exponent: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Degradation {
    pub strength: f64,
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub brightness_shift: f64,
}

impl Degradation {
    /// `brighten` picks over- (true) or under-exposure.
    pub fn from_strength(strength: f64, brighten: bool, cfg: &SynthConfig) -> Self {
        let amount = strength.powf(cfg.response_exponent);
        let sign = if brighten { 1.0 } else { -1.0 };
        Self {
            strength,
            blur_sigma: cfg.max_blur_sigma * amount,
            noise_sigma: cfg.max_noise_sigma * amount,
            brightness_shift: sign * cfg.max_brightness_shift * amount,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    u: f64,
    v: f64,
    sigma: f64,
    amp: [f64; 3],
}

/// Identity-defining portrait parameters in face-local coordinates
/// (origin at the face center, pixels at scale 1).
#[derive(Debug, Clone)]
pub struct SubjectModel {
    background: [f64; 3],
    skin: [f64; 3],
    axes: (f64, f64),
    eye_half_spacing: f64,
    eye_row: f64,
    eye_radius: f64,
    eye_colour: [f64; 3],
    mouth_row: f64,
    mouth_half_width: f64,
    mouth_colour: [f64; 3],
    blobs: Vec<Blob>,
    texture_amp: f64,
    texture_period: f64,
    texture_angle: f64,
    /// Per-subject tone curve `c ↦ 0.5 + gain·(c − pivot)`, calibrated so the
    /// aligned face crop has mean luma 0.5 and luma std [`TARGET_LUMA_STD`].
    pivot: f64,
    gain: f64,
}

pub const TARGET_LUMA_STD: f64 = 0.18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub dx: f64,
    pub dy: f64,
    pub roll_degrees: f64,
    pub scale: f64,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { dx: 0.0, dy: 0.0, roll_degrees: 0.0, scale: 1.0 };
}

fn colour(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
}

impl SubjectModel {
    pub fn generate(rng: &mut ChaCha8Rng) -> Self {
        let axes = (rng.random_range(60.0..75.0), rng.random_range(80.0..95.0));
        let blobs = (0..8)
            .map(|_| Blob {
                u: rng.random_range(-0.8..0.8) * axes.0,
                v: rng.random_range(-0.8..0.8) * axes.1,
                sigma: rng.random_range(10.0..28.0),
                amp: colour(rng, -0.3, 0.3),
            })
            .collect();
        Self {
            background: colour(rng, 0.15, 0.85),
            skin: colour(rng, 0.3, 0.85),
            axes,
            eye_half_spacing: rng.random_range(26.0..34.0),
            eye_row: rng.random_range(-32.0..-20.0),
            eye_radius: rng.random_range(6.0..8.5),
            eye_colour: colour(rng, 0.0, 0.2),
            mouth_row: rng.random_range(38.0..50.0),
            mouth_half_width: rng.random_range(14.0..22.0),
            mouth_colour: colour(rng, 0.2, 0.6),
            blobs,
            texture_amp: rng.random_range(0.08..0.12),
            texture_period: rng.random_range(2.5..3.5),
            texture_angle: rng.random_range(0.0..PI),
            pivot: 0.5,
            gain: 1.0,
        }
        .calibrated()
    }

    fn calibrated(mut self) -> Self {
        let (raw, landmarks) = self.render_raw(256, Pose::IDENTITY);
        let face = align_to_template(&raw, &landmarks).expect("template eyes are distinct");
        let (mean, std) = mean_std(face.image().luminance().into_iter());
        self.pivot = mean;
        self.gain = if std > 0.0 { TARGET_LUMA_STD / std } else { 1.0 };
        self
    }

    fn eye_centres(&self) -> (Point, Point) {
        (
            Point { x: -self.eye_half_spacing, y: self.eye_row },
            Point { x: self.eye_half_spacing, y: self.eye_row },
        )
    }

    fn shade(&self, u: f64, v: f64) -> [f64; 3] {
        let (a, b) = self.axes;
        if (u / a).powi(2) + (v / b).powi(2) > 1.0 {
            return self.background;
        }
        let (le, re) = self.eye_centres();
        for e in [le, re] {
            if (u - e.x).hypot(v - e.y) <= self.eye_radius {
                return self.eye_colour;
            }
        }
        if ((u / self.mouth_half_width).powi(2) + ((v - self.mouth_row) / 5.0).powi(2)) <= 1.0 {
            return self.mouth_colour;
        }
        let phase = (u * self.texture_angle.cos() + v * self.texture_angle.sin()) * 2.0 * PI / self.texture_period;
        let texture = self.texture_amp * phase.sin();
        let mut c = self.skin;
        for blob in &self.blobs {
            let w = (-((u - blob.u).powi(2) + (v - blob.v).powi(2)) / (2.0 * blob.sigma * blob.sigma)).exp();
            for k in 0..3 {
                c[k] += blob.amp[k] * w;
            }
        }
        c.map(|x| x + texture)
    }

    /// Renders the portrait under `pose`, returning the image and the eye
    /// landmarks in image pixels.
    pub fn render(&self, size: usize, pose: Pose) -> (RgbImage, EyeLandmarks) {
        let (mut img, landmarks) = self.render_raw(size, pose);
        let (pivot, gain) = (self.pivot as f32, self.gain as f32);
        img.map_values(|c| (0.5 + gain * (c - pivot)).clamp(0.0, 1.0));
        (img, landmarks)
    }

    fn render_raw(&self, size: usize, pose: Pose) -> (RgbImage, EyeLandmarks) {
        let centre = Point { x: size as f64 / 2.0 + pose.dx, y: size as f64 / 2.0 + 8.0 + pose.dy };
        let (sin, cos) = pose.roll_degrees.to_radians().sin_cos();
        let to_image = |p: Point| Point {
            x: centre.x + pose.scale * (cos * p.x - sin * p.y),
            y: centre.y + pose.scale * (sin * p.x + cos * p.y),
        };
        let img = RgbImage::from_fn(size, size, |x, y| {
            let (px, py) = (x as f64 - centre.x, y as f64 - centre.y);
            let u = (cos * px + sin * py) / pose.scale;
            let v = (-sin * px + cos * py) / pose.scale;
            self.shade(u, v).map(|c| c as f32)
        });
        let (le, re) = self.eye_centres();
        (img, EyeLandmarks { left: to_image(le), right: to_image(re) })
    }
}

/// Blur, then brightness shift, then additive Gaussian noise, then clamp.
/// Strength 0 returns the input unchanged.
pub fn degrade(image: &RgbImage, d: &Degradation, rng: &mut ChaCha8Rng) -> RgbImage {
    if d.strength <= 0.0 {
        return image.clone();
    }
    let mut out = image.gaussian_blur(d.blur_sigma);
    let shift = d.brightness_shift as f32;
    if d.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, d.noise_sigma).expect("finite sigma");
        out.map_values(|v| (v + shift + normal.sample(rng) as f32).clamp(0.0, 1.0));
    } else {
        out.map_values(|v| (v + shift).clamp(0.0, 1.0));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub subject_id: String,
    pub image_id: String,
    pub degradation: Degradation,
    pub landmarks: EyeLandmarks,
    pub image: RgbImage,
}

pub fn subject_id(index: usize) -> String {
    format!("s{index:03}")
}

pub fn image_id(subject: usize, image: usize) -> String {
    format!("s{subject:03}_i{image:02}")
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64 + 1);
    rng
}

/// Renders one subject's images. Strengths are the grid `j/(M−1)` assigned
/// to image slots in seeded random order.
pub fn generate_subject(cfg: &SynthConfig, subject: usize) -> Vec<SynthImage> {
    let mut rng = subject_rng(cfg.seed, subject);
    let model = SubjectModel::generate(&mut rng);
    let m = cfg.images_per_subject;
    let mut strengths: Vec<f64> = (0..m).map(|j| if m > 1 { j as f64 / (m - 1) as f64 } else { 0.0 }).collect();
    strengths.shuffle(&mut rng);
    strengths
        .into_iter()
        .enumerate()
        .map(|(i, strength)| {
            let pose = Pose {
                dx: rng.random_range(-8.0..8.0),
                dy: rng.random_range(-8.0..8.0),
                roll_degrees: rng.random_range(-6.0..6.0),
                scale: rng.random_range(0.95..1.05),
            };
            let (base, landmarks) = model.render(cfg.image_size, pose);
            let degradation = Degradation::from_strength(strength, rng.random_bool(0.5), cfg);
            let image = degrade(&base, &degradation, &mut rng);
            SynthImage { subject_id: subject_id(subject), image_id: image_id(subject, i), degradation, landmarks, image }
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthImage> {
    (0..cfg.subjects).into_par_iter().flat_map_iter(|s| generate_subject(cfg, s)).collect()
}

/// Undegraded, unposed portrait of a subject, for tests and demos.
pub fn base_portrait(cfg: &SynthConfig, subject: usize) -> (RgbImage, EyeLandmarks) {
    let mut rng = subject_rng(cfg.seed, subject);
    SubjectModel::generate(&mut rng).render(cfg.image_size, Pose::IDENTITY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub landmarks: PathBuf,
    pub degradation: PathBuf,
    pub images: usize,
}

pub fn degradation_to_tsv(images: &[SynthImage]) -> String {
    let mut out = format!("{DEGRADATION_HEADER}\n");
    for img in images {
        let d = &img.degradation;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            img.image_id,
            textfmt::f64_to_string(d.strength),
            textfmt::f64_to_string(d.blur_sigma),
            textfmt::f64_to_string(d.noise_sigma),
            textfmt::f64_to_string(d.brightness_shift)
        ));
    }
    out
}

/// Writes `images/*.png`, `manifest.tsv`, `landmarks.tsv` and
/// `degradation.tsv` under `dir`.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig) -> std::io::Result<SynthOutput> {
    let image_dir = dir.join("images");
    std::fs::create_dir_all(&image_dir)?;
    let images = generate(cfg);
    images
        .par_iter()
        .map(|img| std::fs::write(image_dir.join(format!("{}.png", img.image_id)), img.image.encode_png()))
        .collect::<std::io::Result<()>>()?;

    let records = images
        .iter()
        .map(|img| ImageRecord {
            subject_id: img.subject_id.clone(),
            image_id: img.image_id.clone(),
            path: PathBuf::from("images").join(format!("{}.png", img.image_id)),
            role: Role::Unassigned,
        })
        .collect();
    let manifest = DatasetManifest::new(records, dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let landmarks = SidecarDetector::new(images.iter().map(|i| (i.image_id.clone(), i.landmarks)).collect());

    let out = SynthOutput {
        manifest: dir.join("manifest.tsv"),
        landmarks: dir.join("landmarks.tsv"),
        degradation: dir.join("degradation.tsv"),
        images: images.len(),
    };
    std::fs::write(&out.manifest, manifest.to_tsv())?;
    std::fs::write(&out.landmarks, landmarks.to_tsv())?;
    std::fs::write(&out.degradation, degradation_to_tsv(&images))?;
    Ok(out)
}

/// Reads `degradation.tsv` into `image_id → strength`.
pub fn load_strengths(path: &Path) -> std::io::Result<std::collections::BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .skip(1)
        .filter_map(|l| {
            let mut f = l.split('\t');
            Some((f.next()?.to_string(), textfmt::parse_f64(f.next()?)?))
        })
        .collect())
}

#[doc(hidden)]
pub fn mean_luma(img: &RgbImage) -> f64 {
    let n = (img.width() * img.height()) as f64;
    img.data().chunks_exact(3).map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64)).sum::<f64>() / n
}
