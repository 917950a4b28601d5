mod common;

use std::sync::mpsc;
use std::thread::JoinHandle;
use std::time::Duration;

use faceqa::dataset::{FaceTensor, FACE_SIZE};
use faceqa::embeddings::{embed, EmbeddingBackend, EmbeddingError};
use faceqa::evaluation::{compare, Comparator, EvaluationError};
use faceqa::remote::{multipart_body, HttpComparator, HttpEmbeddingBackend};

struct Seen {
    content_type: String,
    authorization: Option<String>,
    body: Vec<u8>,
}

/// Answers `replies` requests in order with the given status and body, then exits.
fn mock(replies: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<Seen>, JoinHandle<()>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/api", server.server_addr().to_ip().unwrap());
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let mut request = server.recv().unwrap();
            let header = |name: &'static str| {
                request.headers().iter().find(|h| h.field.equiv(name)).map(|h| h.value.as_str().to_string())
            };
            let content_type = header("Content-Type").unwrap_or_default();
            let authorization = header("Authorization");
            let mut bytes = Vec::new();
            request.as_reader().read_to_end(&mut bytes).unwrap();
            tx.send(Seen { content_type, authorization, body: bytes }).unwrap();
            request.respond(tiny_http::Response::from_string(body).with_status_code(status)).unwrap();
        }
    });
    (url, rx, handle)
}

fn face(seed: u64) -> FaceTensor {
    FaceTensor::from_image(common::test_card(FACE_SIZE, FACE_SIZE, seed), true, None)
}

const TIMEOUT: Duration = Duration::from_secs(10);

#[test]
fn embedding_backend_posts_png_and_reads_vector() {
    let (url, seen, server) = mock(vec![(200, r#"{"vector": [0.6, 0.8, 0.0]}"#)]);
    let backend = HttpEmbeddingBackend::new("remote-a", url, 3, TIMEOUT);
    let e = embed("img", &face(1), &backend).unwrap();
    assert_eq!(e.vector, vec![0.6, 0.8, 0.0]);
    assert_eq!(e.backend_id, "remote-a");
    let request = seen.recv().unwrap();
    assert_eq!(request.content_type, "image/png");
    assert_eq!(request.body, face(1).image().encode_png());
    server.join().unwrap();
}

#[test]
fn embedding_backend_failures() {
    let (url, _seen, server) = mock(vec![(500, "boom"), (200, "not json"), (200, r#"{"vector": [1.0]}"#)]);
    let backend = HttpEmbeddingBackend::new("remote-b", url, 2, TIMEOUT);
    assert!(matches!(backend.embed_vector(&face(2)), Err(EmbeddingError::BackendFailure(_))));
    assert!(matches!(backend.embed_vector(&face(2)), Err(EmbeddingError::BackendFailure(_))));
    assert!(matches!(
        embed("x", &face(2), &backend),
        Err(EmbeddingError::DimensionMismatch { expected: 2, found: 1 })
    ));
    server.join().unwrap();

    let unreachable = HttpEmbeddingBackend::new("remote-c", "http://127.0.0.1:1/none", 2, Duration::from_secs(2));
    assert!(matches!(unreachable.embed_vector(&face(2)), Err(EmbeddingError::BackendFailure(_))));
}

#[test]
fn comparator_sends_both_faces_with_bearer_key() {
    let (url, seen, server) = mock(vec![(200, r#"{"score": 73.25}"#), (200, r#"{"score": 12}"#)]);
    let comparator = HttpComparator::new(url.clone(), Some("secret".into()), TIMEOUT);
    let (a, b) = (face(3), face(4));
    assert_eq!(comparator.compare_faces(&a, &b).unwrap(), 73.25);
    let request = seen.recv().unwrap();
    assert_eq!(request.authorization.as_deref(), Some("Bearer secret"));
    let boundary = request.content_type.strip_prefix("multipart/form-data; boundary=").expect("multipart").to_string();
    let expected = multipart_body(&[("probe", &a.image().encode_png()), ("reference", &b.image().encode_png())]);
    assert_eq!(request.body, expected);
    assert!(request.body.starts_with(format!("--{boundary}\r\n").as_bytes()));
    assert!(request.body.ends_with(format!("--{boundary}--\r\n").as_bytes()));

    let anonymous = HttpComparator::new(url, None, TIMEOUT);
    assert_eq!(anonymous.compare_faces(&a, &b).unwrap(), 12.0);
    assert_eq!(seen.recv().unwrap().authorization, None);
    server.join().unwrap();
}

#[test]
fn comparator_failures_and_range() {
    let (url, _seen, server) = mock(vec![(401, "denied"), (200, r#"{"score": 103.5}"#)]);
    let comparator = HttpComparator::new(url, None, TIMEOUT);
    let (a, b) = (face(5), face(6));
    assert!(matches!(comparator.compare_faces(&a, &b), Err(EvaluationError::ComparatorFailure(_))));
    assert!(matches!(compare("a", "b", true, &a, &b, &comparator), Err(EvaluationError::ScoreOutOfRange(v)) if v == 103.5));
    server.join().unwrap();
}

#[test]
fn multipart_layout() {
    let body = multipart_body(&[("probe", b"AB"), ("reference", b"C")]);
    let text = String::from_utf8(body).unwrap();
    let parts: Vec<&str> = text.split("\r\n").collect();
    let boundary = parts[0];
    assert!(boundary.starts_with("--"));
    assert_eq!(parts[1], r#"Content-Disposition: form-data; name="probe"; filename="probe.png""#);
    assert_eq!(parts[2], "Content-Type: image/png");
    assert_eq!((parts[3], parts[4]), ("", "AB"));
    assert_eq!(parts[5], boundary);
    assert_eq!(parts[9], "C");
    assert_eq!(parts[10], format!("{boundary}--"));
}
