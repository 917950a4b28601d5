mod common;

use faceqa::compliance::GalleryMap;
use faceqa::dataset::{DatasetManifest, Role};
use faceqa::embeddings::{Embedding, EmbeddingCache};
use faceqa::groundtruth::*;
use proptest::prelude::*;

struct Fixture {
    manifest: DatasetManifest,
    gallery: GalleryMap,
    cache: EmbeddingCache,
}

/// Subjects `a` and `b`, each with one gallery and two probes.
fn fixture(vectors: &[(&str, &str, [f64; 2])]) -> Fixture {
    let mut records = Vec::new();
    let mut gallery = GalleryMap::new();
    let mut cache = EmbeddingCache::new("hand", 2);
    for (subject, id, v) in vectors {
        let mut r = common::record(subject, id);
        if id.ends_with("_g") {
            r.role = Role::Gallery;
            gallery.insert(subject.to_string(), id.to_string());
        } else {
            r.role = Role::Probe;
        }
        records.push(r);
        cache.store(Embedding { image_id: id.to_string(), vector: v.to_vec(), backend_id: "hand".into() }).unwrap();
    }
    Fixture { manifest: DatasetManifest::new(records, ".").unwrap(), gallery, cache }
}

fn four_distances(scale: f64) -> Fixture {
    let s = |v: [f64; 2]| [v[0] * scale, v[1] * scale];
    fixture(&[
        ("a", "a_g", s([0.5, -1.0])),
        ("a", "a_p1", s([0.5, -1.0])),
        ("a", "a_p2", s([0.5 + 0.6, -1.0 + 0.8])),
        ("b", "b_g", s([4.0, 4.0])),
        ("b", "b_p1", s([4.0, 6.0])),
        ("b", "b_p2", s([4.0 + 1.8, 4.0 - 2.4])),
    ])
}

fn labels_of(set: &GroundtruthSet) -> Vec<(&str, f64)> {
    set.labels.iter().map(|l| (l.image_id.as_str(), l.quality)).collect()
}

#[test]
fn four_hand_built_distances() {
    let f = four_distances(1.0);
    // by hand: a_p1 coincides with a_g, a_p2 is a 0.6/0.8 step, b_p1 a 2-unit step, b_p2 a 1.8/2.4 step
    let by_hand = [0.0, (0.6f64 * 0.6 + 0.8 * 0.8).sqrt(), 2.0, (1.8f64 * 1.8 + 2.4 * 2.4).sqrt()];
    assert_eq!(by_hand[1], 1.0);
    assert!((by_hand[3] - 3.0).abs() < 1e-15);
    let (d_min, d_max) = (0.0, by_hand[3]);
    let expected: Vec<f64> = by_hand.iter().map(|d| 1.0 - (d - d_min) / (d_max - d_min)).collect();

    let set = build_groundtruth(&f.manifest, &f.gallery, &f.cache, GroundtruthOptions::default()).unwrap();
    let got = labels_of(&set);
    assert_eq!(got.iter().map(|(id, _)| *id).collect::<Vec<_>>(), ["a_p1", "a_p2", "b_p1", "b_p2"]);
    for ((_, q), (e, exact)) in got.iter().zip(expected.iter().zip([1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0])) {
        assert!((q - e).abs() < 1e-9);
        assert!((q - exact).abs() < 1e-9);
    }
    assert_eq!(set.normalization.d_min, 0.0);
    assert!((set.normalization.d_max - 3.0).abs() < 1e-12);
    assert_eq!(set.backend_id, "hand");
    assert_eq!(got[0].1, 1.0, "a probe equal to its gallery gets the top label");
}

#[test]
fn power_of_two_scaling_leaves_labels_bit_identical() {
    let base = build_groundtruth_for(&four_distances(1.0));
    for scale in [0.125, 0.5, 2.0, 1024.0] {
        assert_eq!(labels_of(&build_groundtruth_for(&four_distances(scale))), labels_of(&base));
    }
}

fn build_groundtruth_for(f: &Fixture) -> GroundtruthSet {
    build_groundtruth(&f.manifest, &f.gallery, &f.cache, GroundtruthOptions::default()).unwrap()
}

#[test]
fn galleries_only_with_the_ablation_switch() {
    let f = four_distances(1.0);
    let set = build_groundtruth(&f.manifest, &f.gallery, &f.cache, GroundtruthOptions { include_galleries: true }).unwrap();
    assert_eq!(set.labels.len(), 6);
    assert_eq!(set.get("a_g"), Some(1.0));
    assert_eq!(set.get("b_g"), Some(1.0));
    assert_eq!(build_groundtruth_for(&f).get("a_g"), None);
}

#[test]
fn missing_gallery_is_an_error() {
    let mut f = four_distances(1.0);
    f.gallery.remove("b");
    match build_groundtruth(&f.manifest, &f.gallery, &f.cache, GroundtruthOptions::default()) {
        Err(GroundtruthError::MissingGallery(s)) => assert_eq!(s, "b"),
        other => panic!("expected MissingGallery, got {other:?}"),
    }
}

#[test]
fn degenerate_distances_give_one_half_and_warn() {
    common::captured_log::install();
    let f = fixture(&[("a", "a_g", [0.0, 0.0]), ("a", "a_p1", [3.0, 0.0]), ("a", "a_p2", [0.0, 3.0]), ("b", "b_g", [1.0, 1.0]), ("b", "b_p1", [1.0, -2.0])]);
    let set = build_groundtruth_for(&f);
    assert!(set.normalization.is_degenerate());
    assert!(set.labels.iter().all(|l| l.quality == 0.5));
    assert!(common::captured_log::contains("DegenerateNormalization"));
}

#[test]
fn normalization_examples() {
    assert_eq!(normalize_distances(&[0.0, 1.0, 2.0]).unwrap().0, vec![1.0, 0.5, 0.0]);
    assert_eq!(normalize_distances(&[3.0, 3.0, 3.0]).unwrap().0, vec![0.5; 3]);
    assert_eq!(normalize_distances(&[0.2, 0.8]).unwrap().0, vec![1.0, 0.0]);
    assert!(matches!(normalize_distances(&[]), Err(GroundtruthError::EmptyInput)));
    assert!(matches!(normalize_distances(&[1.0, f64::NAN]), Err(GroundtruthError::NonFiniteDistance(1))));
}

#[test]
fn distance_examples() {
    let e = |v: &[f64]| Embedding { image_id: "x".into(), vector: v.to_vec(), backend_id: "b".into() };
    let theta = 1.1f64;
    let d = mated_distance(&e(&[1.0, 0.0]), &e(&[theta.cos(), theta.sin()])).unwrap();
    assert!((d - (2.0 - 2.0 * theta.cos()).sqrt()).abs() < 1e-12);
    assert!((mated_distance(&e(&[1.0, 0.0]), &e(&[-1.0, 0.0])).unwrap() - 2.0).abs() < 1e-15);
    assert!(matches!(mated_distance(&e(&[1.0]), &e(&[1.0, 2.0])), Err(GroundtruthError::DimensionMismatch(1, 2))));
}

fn random_fixture(points: &[(u8, [f64; 2])]) -> Fixture {
    let mut rows: Vec<(String, String, [f64; 2])> = Vec::new();
    let subjects: std::collections::BTreeSet<u8> = points.iter().map(|(s, _)| *s).collect();
    for s in subjects {
        rows.push((format!("s{s}"), format!("s{s}_g"), [0.25 * s as f64, -0.5]));
    }
    for (i, (s, v)) in points.iter().enumerate() {
        rows.push((format!("s{s}"), format!("s{s}_p{i:02}"), *v));
    }
    let refs: Vec<(&str, &str, [f64; 2])> = rows.iter().map(|(s, i, v)| (s.as_str(), i.as_str(), *v)).collect();
    fixture(&refs)
}

proptest! {
    #[test]
    fn labels_are_normalized_and_order_preserving(
        points in proptest::collection::vec((0u8..4, [-10.0f64..10.0, -10.0f64..10.0]), 1..25),
        scale in 0.01f64..100.0,
    ) {
        let f = random_fixture(&points);
        let set = build_groundtruth_for(&f);
        let n = set.normalization;
        prop_assert!(n.d_min <= n.d_max);
        prop_assert!(set.labels.iter().all(|l| (0.0..=1.0).contains(&l.quality)));
        if n.d_min < n.d_max {
            prop_assert!(set.labels.iter().any(|l| l.quality == 0.0));
            prop_assert!(set.labels.iter().any(|l| l.quality == 1.0));
        }
        let distance = |id: &str| {
            let rec = f.manifest.get(id).unwrap();
            faceqa::groundtruth::euclidean(f.cache.vector(&f.gallery[&rec.subject_id]).unwrap(), f.cache.vector(id).unwrap()).unwrap()
        };
        for a in &set.labels {
            for b in &set.labels {
                if distance(&a.image_id) < distance(&b.image_id) {
                    prop_assert!(a.quality >= b.quality);
                }
            }
        }

        // any positive scale: same ranking, labels equal up to rounding
        let scaled_points: Vec<(u8, [f64; 2])> = points.iter().map(|(s, v)| (*s, [v[0] * scale, v[1] * scale])).collect();
        let mut scaled = random_fixture(&scaled_points);
        for g in f.gallery.values() {
            let v = f.cache.vector(g).unwrap();
            scaled.cache.store(Embedding { image_id: g.clone(), vector: vec![v[0] * scale, v[1] * scale], backend_id: "hand".into() }).unwrap();
        }
        let other = build_groundtruth_for(&scaled);
        for (x, y) in set.labels.iter().zip(&other.labels) {
            prop_assert_eq!(&x.image_id, &y.image_id);
            prop_assert!((x.quality - y.quality).abs() < 1e-9);
        }
    }
}

#[test]
fn groundtruth_file_round_trip() {
    let set = build_groundtruth_for(&four_distances(0.3));
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    set.save(&p1).unwrap();
    let loaded = GroundtruthSet::load(&p1).unwrap();
    assert_eq!(loaded, set);
    loaded.save(&p2).unwrap();
    assert_eq!(common::read(&p1), common::read(&p2));
    assert!(GroundtruthSet::parse("# backend_id=x d_min=0 d_max=1\na\t1.5\n").is_err());
}
