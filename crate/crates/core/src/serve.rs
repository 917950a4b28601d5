//! Stateless HTTP scoring endpoint.
//!
//! `POST /v1/quality` takes PNG or JPEG bytes and answers
//! `{"quality": q, "aligned": b}`. An optional `image_id` query parameter
//! looks the image up in the landmark sidecar so it can be aligned.
//! `GET /v1/health` is 200 once a model is loaded, 503 before.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::json;

use crate::dataset::{decode_image, preprocess_face, FaceDetector};
use crate::qualitymodel::QualityScorer;

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    fn json(status: u16, value: serde_json::Value) -> Self {
        Self { status, body: value.to_string() }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, json!({ "error": message.into() }))
    }
}

#[derive(Clone)]
pub struct QualityService {
    scorer: Option<QualityScorer>,
    detector: Option<Arc<dyn FaceDetector>>,
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query.split('&').filter_map(|kv| kv.split_once('=')).find(|(k, _)| *k == key).map(|(_, v)| v)
}

impl QualityService {
    pub fn new(scorer: Option<QualityScorer>, detector: Option<Arc<dyn FaceDetector>>) -> Self {
        Self { scorer, detector }
    }

    pub fn is_ready(&self) -> bool {
        self.scorer.is_some()
    }

    pub fn handle(&self, method: &str, url: &str, body: &[u8]) -> Reply {
        let (path, query) = url.split_once('?').unwrap_or((url, ""));
        match (method, path) {
            ("GET", "/v1/health") => match self.scorer {
                Some(_) => Reply::json(200, json!({ "status": "ok" })),
                None => Reply::json(503, json!({ "status": "no model loaded" })),
            },
            ("POST", "/v1/quality") => self.quality(query, body),
            (_, "/v1/health" | "/v1/quality") => Reply::error(405, "method not allowed"),
            _ => Reply::error(404, "not found"),
        }
    }

    fn quality(&self, query: &str, body: &[u8]) -> Reply {
        if body.is_empty() {
            return Reply::error(400, "empty body");
        }
        let Some(scorer) = &self.scorer else {
            return Reply::error(503, "no model loaded");
        };
        let image = match decode_image(body) {
            Ok(img) => img,
            Err(e) => return Reply::error(400, format!("undecodable image: {e}")),
        };
        let image_id = query_param(query, "image_id").unwrap_or("");
        let face = match preprocess_face(image_id, &image, self.detector.as_deref()) {
            Ok(f) => f,
            Err(e) => return Reply::error(400, e.to_string()),
        };
        match scorer.score(&face) {
            Ok(q) => Reply::json(200, json!({ "quality": q, "aligned": face.aligned() })),
            Err(e) => Reply::error(500, e.to_string()),
        }
    }
}

/// A running server; dropping it does not stop it, call [`shutdown`](Self::shutdown).
pub struct ServerHandle {
    server: Arc<tiny_http::Server>,
    stopping: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.stopping.store(true, Ordering::SeqCst);
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers {
            let _ = w.join();
        }
    }

    /// Blocks until every worker exits.
    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }
}

fn respond(service: &QualityService, mut request: tiny_http::Request) {
    let mut body = Vec::new();
    let reply = match request.as_reader().read_to_end(&mut body) {
        Ok(_) => service.handle(request.method().as_str(), request.url(), &body),
        Err(e) => Reply::error(400, e.to_string()),
    };
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = tiny_http::Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}

/// Binds `addr` (port 0 picks a free port) and serves with `threads` workers.
pub fn spawn(addr: &str, service: QualityService, threads: usize) -> std::io::Result<ServerHandle> {
    let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let server = Arc::new(server);
    let stopping = Arc::new(AtomicBool::new(false));
    let workers = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let stopping = Arc::clone(&stopping);
            let service = service.clone();
            std::thread::spawn(move || loop {
                match server.recv() {
                    Ok(request) => respond(&service, request),
                    Err(_) if stopping.load(Ordering::SeqCst) => break,
                    Err(e) => log::warn!("accept failed: {e}"),
                }
            })
        })
        .collect();
    Ok(ServerHandle { server, stopping, workers, addr })
}
