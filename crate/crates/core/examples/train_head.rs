//! Fits the regression head to a noisy nonlinear target on random features
//! and saves the result as a checkpoint.

use faceqa::qualitymodel::{head_forward, save_checkpoint, train_head, Checkpoint, TrainConfig, TrainingSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEATURES: usize = 12;

fn sample(rng: &mut ChaCha8Rng) -> TrainingSample {
    let features: Vec<f64> = (0..FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let signal = features[0].max(0.0) + 0.5 * features[1] * features[2];
    let target = (0.5 + 0.4 * signal.tanh() + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
    TrainingSample { features, target }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let train: Vec<TrainingSample> = (0..400).map(|_| sample(&mut rng)).collect();
    let held_out: Vec<TrainingSample> = (0..100).map(|_| sample(&mut rng)).collect();

    let cfg = TrainConfig { learning_rate: 0.05, epochs: 60, batch_size: 8, seed: 1 };
    let outcome = train_head(&train, &cfg, 7)?;
    for (epoch, loss) in outcome.loss_history.iter().enumerate().step_by(10) {
        println!("epoch {:>3}  loss {loss:.5}", epoch + 1);
    }
    let mse = held_out
        .iter()
        .map(|s| (head_forward(&s.features, &outcome.params).unwrap() - s.target).powi(2))
        .sum::<f64>()
        / held_out.len() as f64;
    println!("held-out MSE {mse:.5}");

    let path = std::env::temp_dir().join("faceqa-example-head.txt");
    let checkpoint = Checkpoint {
        final_loss: *outcome.loss_history.last().unwrap(),
        params: outcome.params,
        backend_id: "random-features".into(),
        config_digest: cfg.digest(),
    };
    save_checkpoint(&path, &checkpoint)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
