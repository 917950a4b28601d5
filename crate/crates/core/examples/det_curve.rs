//! DET curves and EERs for three simulated comparators of decreasing
//! separation, written as CSV next to a short summary.

use faceqa::evaluation::{compute_det, det_to_csv, ScoreSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn simulate(rng: &mut ChaCha8Rng, mated_mean: f64, n: usize) -> ScoreSet {
    let draw = |mean: f64, rng: &mut ChaCha8Rng| {
        let d = Normal::new(mean, 10.0).unwrap();
        (0..n).map(|_| d.sample(rng).clamp(0.0, 100.0)).collect()
    };
    ScoreSet { mated: draw(mated_mean, rng), non_mated: draw(35.0, rng) }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dir = std::env::temp_dir().join("faceqa-det-example");
    std::fs::create_dir_all(&dir)?;
    for (name, mean) in [("good", 75.0), ("fair", 60.0), ("poor", 45.0)] {
        let curve = compute_det(&simulate(&mut rng, mean, 500))?;
        let path = dir.join(format!("det_{name}.csv"));
        std::fs::write(&path, det_to_csv(&curve))?;
        let at_1pct = curve.points.iter().find(|p| p.far_pct <= 1.0).map(|p| p.frr_pct).unwrap_or(100.0);
        println!("{name:<5} EER {:>6.2}%   FRR at FAR<=1% {:>6.2}%   {}", curve.eer, at_1pct, path.display());
    }
    Ok(())
}
