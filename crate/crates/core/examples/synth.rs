//! Writes a small synthetic face dataset and lists each image's degradation.
//!
//! ```text
//! cargo run --example synth -- /tmp/faces
//! ```

use std::path::PathBuf;

use faceqa::synth::{load_strengths, write_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("faceqa-synth"));
    let cfg = SynthConfig { subjects: 4, images_per_subject: 5, image_size: 160, ..SynthConfig::default() };
    let out = write_dataset(&dir, &cfg)?;
    println!("{} images under {}", out.images, dir.display());
    for (id, strength) in load_strengths(&out.degradation)? {
        println!("{id}\t{strength:.3}");
    }
    Ok(())
}
