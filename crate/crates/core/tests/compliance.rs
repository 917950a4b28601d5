mod common;

use std::collections::BTreeMap;

use faceqa::compliance::*;
use faceqa::dataset::{center_crop_resize, DatasetManifest, FaceTensor, Role, FACE_SIZE};
use faceqa::imaging::RgbImage;
use faceqa::synth::{base_portrait, SynthConfig};
use proptest::prelude::*;

/// Direct 2-D convolution with the 4-neighbour kernel, then two-pass variance.
fn reference_laplacian_variance(img: &RgbImage) -> f64 {
    let (w, h) = (img.width(), img.height());
    let l = |x: usize, y: usize| {
        let [r, g, b] = img.pixel(x, y);
        0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
    };
    let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
    let mut responses = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = 0.0;
            for (ky, row) in kernel.iter().enumerate() {
                for (kx, k) in row.iter().enumerate() {
                    acc += k * l(x + kx - 1, y + ky - 1);
                }
            }
            responses.push(acc);
        }
    }
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    responses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n
}

fn portrait(subject: usize) -> FaceTensor {
    let cfg = SynthConfig { seed: 11, ..SynthConfig::default() };
    let (img, eyes) = base_portrait(&cfg, subject);
    faceqa::dataset::align_to_template(&img, &eyes).unwrap()
}

fn unaligned(img: RgbImage) -> FaceTensor {
    FaceTensor::from_image(img, false, None)
}

#[test]
fn uniform_gray_has_no_sharpness_or_contrast() {
    let face = unaligned(RgbImage::filled(FACE_SIZE, FACE_SIZE, [0.5; 3]));
    let r = run_compliance_tests("g", &face);
    assert_eq!(r.score("sharpness"), Some(0.0));
    assert_eq!(r.score("contrast"), Some(0.0));
    assert!((r.score("brightness").unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(r.score("saturation_sanity"), Some(NEUTRAL_SCORE));
    assert_eq!(r.score("pose_frontality"), Some(NEUTRAL_SCORE));
    assert_eq!(r.score("eye_resolution"), Some(NEUTRAL_SCORE));
}

#[test]
fn black_image_has_zero_brightness() {
    let r = run_compliance_tests("b", &unaligned(RgbImage::filled(FACE_SIZE, FACE_SIZE, [0.0; 3])));
    assert_eq!(r.score("brightness"), Some(0.0));
}

#[test]
fn report_has_six_tests_and_mean_aggregate() {
    let r = run_compliance_tests("p", &portrait(0));
    let names: Vec<&str> = r.test_scores.keys().map(String::as_str).collect();
    let mut expected = TEST_NAMES.to_vec();
    expected.sort();
    assert_eq!(names, expected);
    let mean = r.test_scores.values().sum::<f64>() / 6.0;
    assert!((r.aggregate - mean).abs() < 1e-12);
    assert_eq!(r.score("saturation_sanity"), Some(100.0));
}

#[test]
fn laplacian_matches_reference_convolution() {
    for seed in 0..4 {
        let img = common::test_card(64, 48, seed);
        let fast = laplacian_variance(&img.luminance(), 64, 48);
        let reference = reference_laplacian_variance(&img);
        assert!((fast - reference).abs() <= 1e-9 * reference.max(1e-12), "{fast} vs {reference}");
    }
}

#[test]
fn blur_sigma_3_lowers_sharpness() {
    let face = portrait(2);
    let blurred = unaligned(face.image().gaussian_blur(3.0));
    let (v0, v1) = (reference_laplacian_variance(face.image()), reference_laplacian_variance(blurred.image()));
    assert!(v1 < v0);
    let s0 = run_compliance_tests("a", &face).score("sharpness").unwrap();
    let s1 = run_compliance_tests("b", &blurred).score("sharpness").unwrap();
    assert!((s0 - sharpness_score(v0)).abs() < 1e-9);
    assert!((s1 - sharpness_score(v1)).abs() < 1e-9);
    assert!(s1 < s0, "sharpness {s0} -> {s1}");
}

#[test]
fn more_blur_never_sharpens() {
    let face = portrait(4);
    let mut last = f64::INFINITY;
    for sigma in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = run_compliance_tests("x", &unaligned(face.image().gaussian_blur(sigma))).score("sharpness").unwrap();
        assert!(s <= last, "sigma {sigma}: {s} > {last}");
        last = s;
    }
}

/// Moves every value a fraction `t` of the way toward `target` (0 or 1).
fn toward(img: &RgbImage, target: f32, t: f32) -> RgbImage {
    let mut out = img.clone();
    out.map_values(|v| v + t * (target - v));
    out
}

#[test]
fn pushing_luminance_to_its_extreme_never_brightens() {
    for subject in 0..4 {
        // start on the dark or the bright side of mid-gray, then push further out
        let target = (subject % 2) as f32;
        let start = toward(portrait(subject).image(), target, 0.1);
        let mut last = f64::INFINITY;
        for t in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
            let s = run_compliance_tests("x", &unaligned(toward(&start, target, t))).score("brightness").unwrap();
            assert!(s <= last + 1e-9, "t={t}: {s} > {last}");
            last = s;
        }
        assert!(last.abs() < 1e-9);
    }
}

#[test]
fn pose_and_eye_resolution_use_source_landmarks() {
    let face = portrait(0);
    let lm = face.source_landmarks().copied().unwrap();
    let r = run_compliance_tests("p", &face);
    assert!((r.score("pose_frontality").unwrap() - pose_score(lm.roll_degrees())).abs() < 1e-12);
    assert!((r.score("eye_resolution").unwrap() - eye_resolution_score(lm.inter_eye_distance())).abs() < 1e-12);
    assert_eq!(pose_score(0.0), 100.0);
    assert_eq!(pose_score(-30.0), 0.0);
    assert_eq!(pose_score(45.0), 0.0);
    assert_eq!(eye_resolution_score(30.0), 50.0);
    assert_eq!(eye_resolution_score(600.0), 100.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn every_score_is_in_range(seed in 0u64..500, gain in 0.0f32..4.0, offset in -1.0f32..1.0, sigma in 0.0f64..6.0) {
        let mut img = common::test_card(FACE_SIZE, FACE_SIZE, seed).gaussian_blur(sigma);
        img.map_values(|v| v * gain + offset);
        let r = run_compliance_tests("x", &unaligned(img));
        for s in r.test_scores.values().chain([&r.aggregate]) {
            prop_assert!((0.0..=100.0).contains(s));
        }
    }
}

fn manifest(ids: &[(&str, &str)]) -> DatasetManifest {
    DatasetManifest::new(ids.iter().map(|(s, i)| common::record(s, i)).collect(), ".").unwrap()
}

fn report(id: &str, aggregate: f64) -> ComplianceReport {
    ComplianceReport { image_id: id.to_string(), test_scores: BTreeMap::new(), aggregate }
}

#[test]
fn gallery_tie_goes_to_smallest_id() {
    let mut m = manifest(&[("s", "a03"), ("s", "a01"), ("s", "a02"), ("t", "b01")]);
    let reports = [report("a01", 80.0), report("a02", 95.0), report("a03", 95.0), report("b01", 10.0)];
    let g = select_gallery(&mut m, &reports).unwrap();
    assert_eq!(g["s"], "a02");
    assert_eq!(g["t"], "b01");
    let roles: Vec<(&str, Role)> = m.entries().iter().map(|e| (e.image_id.as_str(), e.role)).collect();
    assert_eq!(roles, [("a01", Role::Probe), ("a02", Role::Gallery), ("a03", Role::Probe), ("b01", Role::Gallery)]);
}

#[test]
fn missing_report_is_an_error() {
    let mut m = manifest(&[("s", "a01"), ("s", "a02")]);
    match select_gallery(&mut m, &[report("a01", 1.0)]) {
        Err(ComplianceError::MissingReport(id)) => assert_eq!(id, "a02"),
        other => panic!("expected MissingReport, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn gallery_is_invariant_under_positive_scaling(
        halves in proptest::collection::vec(0u32..200, 1..30),
        subjects in 1usize..5,
        scale in 0.01f64..100.0,
    ) {
        let ids: Vec<(String, String)> =
            (0..halves.len()).map(|i| (format!("s{}", i % subjects), format!("i{i:03}"))).collect();
        let pairs: Vec<(&str, &str)> = ids.iter().map(|(s, i)| (s.as_str(), i.as_str())).collect();
        let reports: Vec<ComplianceReport> =
            ids.iter().zip(&halves).map(|((_, i), h)| report(i, *h as f64 / 2.0)).collect();
        let scaled: Vec<ComplianceReport> =
            reports.iter().map(|r| report(&r.image_id, r.aggregate * scale)).collect();
        let (mut m1, mut m2) = (manifest(&pairs), manifest(&pairs));
        let g1 = select_gallery(&mut m1, &reports).unwrap();
        let g2 = select_gallery(&mut m2, &scaled).unwrap();
        prop_assert_eq!(&g1, &g2);
        prop_assert_eq!(m1.to_tsv(), m2.to_tsv());
        prop_assert_eq!(g1.len(), m1.subjects().len());
        for e in m1.entries() {
            prop_assert_eq!(e.role == Role::Gallery, g1[&e.subject_id] == e.image_id);
        }
    }
}

#[test]
fn report_and_gallery_files_round_trip() {
    let reports: Vec<ComplianceReport> =
        (0..3).map(|s| run_compliance_tests(&format!("p{s}"), &center_crop_resize(&common::test_card(240, 260, s)))).collect();
    let text = reports_to_tsv(&reports);
    let back = reports_from_tsv(&text).unwrap();
    assert_eq!(back, reports);
    assert_eq!(reports_to_tsv(&back), text);

    let gallery: GalleryMap = [("s1".to_string(), "a".to_string()), ("s2".to_string(), "b".to_string())].into();
    let text = gallery_to_tsv(&gallery);
    assert_eq!(gallery_from_tsv(&text).unwrap(), gallery);
}
