//! Talks to embedding and comparison services over HTTP. A stand-in
//! service runs on a local port so the example is self-contained; point
//! `FACEQA_COMPARATOR_URL` at a real one to use it instead.

use std::time::Duration;

use faceqa::dataset::{decode_image, FaceTensor, FACE_SIZE};
use faceqa::embeddings::{embed, make_test_backend, EmbeddingBackend};
use faceqa::evaluation::{builtin_score, compare, Comparator};
use faceqa::groundtruth::euclidean;
use faceqa::imaging::RgbImage;
use faceqa::remote::{HttpComparator, HttpEmbeddingBackend};

/// Serves `/embed` (PNG body) and `/compare` (multipart body) with the built-in test backend.
fn stand_in_service() -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    std::thread::spawn(move || {
        let backend = make_test_backend(64, 5);
        let vector = |png: &[u8]| {
            let face = FaceTensor::from_image(decode_image(png).unwrap(), true, None);
            backend.embed_vector(&face).unwrap()
        };
        for mut request in server.incoming_requests() {
            let mut body = Vec::new();
            request.as_reader().read_to_end(&mut body).unwrap();
            let reply = if request.url() == "/embed" {
                serde_json::json!({ "vector": vector(&body) })
            } else {
                let pngs = png_parts(&body);
                let d = euclidean(&vector(pngs[0]), &vector(pngs[1])).unwrap();
                serde_json::json!({ "score": builtin_score(d) })
            };
            request.respond(tiny_http::Response::from_string(reply.to_string())).unwrap();
        }
    });
    url
}

/// The PNG payloads of a multipart body, in order.
fn png_parts(body: &[u8]) -> Vec<&[u8]> {
    const SIGNATURE: &[u8] = b"\x89PNG";
    const TRAILER: &[u8] = b"IEND\xae\x42\x60\x82";
    let mut parts = Vec::new();
    let mut rest = body;
    while let Some(start) = rest.windows(4).position(|w| w == SIGNATURE) {
        let end = start + rest[start..].windows(8).position(|w| w == TRAILER).unwrap() + 8;
        parts.push(&rest[start..end]);
        rest = &rest[end..];
    }
    parts
}

fn face(shade: f32, stripe: usize) -> FaceTensor {
    let img = RgbImage::from_fn(FACE_SIZE, FACE_SIZE, |x, y| {
        let v = if (x / stripe + y / stripe) % 2 == 0 { shade } else { 1.0 - shade };
        [v, v * 0.8, v * 0.6]
    });
    FaceTensor::from_image(img, true, None)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = stand_in_service();
    let timeout = Duration::from_secs(10);
    let backend = HttpEmbeddingBackend::new("remote-test-d64", format!("{base}/embed"), 64, timeout);
    let comparator = match HttpComparator::from_env(timeout) {
        Some(c) => c,
        None => HttpComparator::new(format!("{base}/compare"), None, timeout),
    };

    let (a, b, c) = (face(0.2, 16), face(0.25, 16), face(0.7, 40));
    let e = embed("a", &a, &backend)?;
    println!("remote embedding of a: dim {} first {:.4?}", e.vector.len(), &e.vector[..4]);
    for (label, x, y) in [("a~b", &a, &b), ("a~c", &a, &c)] {
        let direct = comparator.compare_faces(x, y)?;
        let checked = compare("x", "y", true, x, y, &comparator)?;
        println!("{label}: score {direct:.2} (range-checked {:.2})", checked.score);
    }
    Ok(())
}
