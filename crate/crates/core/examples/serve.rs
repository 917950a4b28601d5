//! Starts the scoring service with a freshly initialised head, sends it a
//! few requests and shuts it down.

use std::io::Read;
use std::sync::Arc;
use std::time::Duration;

use faceqa::embeddings::make_test_backend;
use faceqa::imaging::RgbImage;
use faceqa::qualitymodel::{Checkpoint, HeadParameters, QualityScorer};
use faceqa::serve::{spawn, QualityService};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let backend = make_test_backend(32, 1);
    let checkpoint = Checkpoint {
        params: HeadParameters::init(32, 1),
        backend_id: "test-d32-s1".into(),
        config_digest: "untrained".into(),
        final_loss: f64::NAN,
    };
    let scorer = QualityScorer::new(checkpoint, Arc::new(backend))?;
    let server = spawn("127.0.0.1:0", QualityService::new(Some(scorer), None), 2)?;
    let base = format!("http://{}", server.addr());
    println!("listening on {base}");

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(10)))
        .http_status_as_error(false)
        .build()
        .into();
    let read = |mut r: ureq::http::Response<ureq::Body>| {
        let mut text = String::new();
        r.body_mut().as_reader().read_to_string(&mut text).map(|_| format!("{} {text}", r.status()))
    };

    println!("GET /v1/health -> {}", read(agent.get(format!("{base}/v1/health")).call()?)?);
    let png = RgbImage::from_fn(300, 300, |x, y| [(x % 17) as f32 / 16.0, (y % 11) as f32 / 10.0, 0.5]).encode_png();
    println!("POST image -> {}", read(agent.post(format!("{base}/v1/quality")).send(&png[..])?)?);
    println!("POST junk  -> {}", read(agent.post(format!("{base}/v1/quality")).send(&b"junk"[..])?)?);

    server.shutdown();
    Ok(())
}
