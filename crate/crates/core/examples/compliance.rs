//! Scores a synthetic portrait against the six compliance tests while it is
//! blurred and darkened step by step.

use faceqa::compliance::{run_compliance_tests, TEST_NAMES};
use faceqa::dataset::{align_to_template, FaceTensor};
use faceqa::synth::{base_portrait, SynthConfig};

fn main() {
    let (img, eyes) = base_portrait(&SynthConfig::default(), 0);
    let face = align_to_template(&img, &eyes).expect("portrait eyes are inside the frame");

    println!("{:<14}{}", "variant", TEST_NAMES.map(|n| format!("{n:>19}")).join(""));
    let show = |label: &str, f: &FaceTensor| {
        let r = run_compliance_tests(label, f);
        let cols: String = TEST_NAMES.iter().map(|n| format!("{:>19.1}", r.score(n).unwrap())).collect();
        println!("{label:<14}{cols}   aggregate {:.1}", r.aggregate);
    };
    show("original", &face);
    for sigma in [1.0, 2.0, 4.0] {
        let blurred = FaceTensor::from_image(face.image().gaussian_blur(sigma), true, face.source_landmarks().copied());
        show(&format!("blur {sigma}"), &blurred);
    }
    for t in [0.3, 0.6] {
        let mut dark = face.image().clone();
        dark.map_values(|v| v * (1.0 - t));
        show(&format!("darken {t}"), &FaceTensor::from_image(dark, true, face.source_landmarks().copied()));
    }
}
