//! Shared fixtures and a one-shot scripted HTTP server for backend tests.

#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use graphsos::graph::{NodeRecord, TextGraph};
use graphsos::jsonl::GraphRecord;

/// Labeled triangle with node text; degree 2 everywhere.
pub fn triangle(labels: [&str; 3]) -> TextGraph {
    let nodes = (0..3)
        .map(|i| NodeRecord::labeled(i as u64, format!("t{i}"), labels[i as usize]))
        .collect();
    TextGraph::new(nodes, vec![(0, 1), (0, 2), (1, 2)]).unwrap()
}

/// The triangle as a degree-question benchmark record.
pub fn triangle_qa_record(target: u64) -> GraphRecord {
    GraphRecord::qa(
        triangle(["a", "a", "b"]),
        format!("What is the degree of node {target}?"),
        "2",
    )
}

/// One captured HTTP request.
#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub body: String,
    pub headers: Vec<(String, String)>,
}

impl CapturedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal HTTP server answering a fixed script of `(status, body)`
/// responses, one connection each, then exiting.
pub struct TestServer {
    pub url: String,
    captured: Arc<Mutex<Vec<CapturedRequest>>>,
    handle: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn spawn(responses: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
        let addr = listener.local_addr().expect("local addr");
        let captured = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&captured);
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else {
                    return;
                };
                let request = read_request(&mut stream);
                sink.lock().expect("capture lock").push(request);
                let reason = match status {
                    200 => "OK",
                    500 => "Internal Server Error",
                    _ => "Status",
                };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\n\
                     content-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { url: format!("http://{addr}/v1"), captured, handle: Some(handle) }
    }

    /// An address nothing listens on (connection refused).
    pub fn dead_url() -> String {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = listener.local_addr().expect("local addr");
        drop(listener);
        format!("http://{addr}/v1")
    }

    /// Wait for the script to finish and return what was captured.
    pub fn finish(mut self) -> Vec<CapturedRequest> {
        if let Some(handle) = self.handle.take() {
            handle.join().expect("server thread");
        }
        self.captured.lock().expect("capture lock").clone()
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> CapturedRequest {
    let mut buf = Vec::new();
    let mut byte = [0u8; 1];
    // Read the head up to the blank line.
    while !buf.ends_with(b"\r\n\r\n") {
        match stream.read(&mut byte) {
            Ok(1) => buf.push(byte[0]),
            _ => break,
        }
    }
    let head = String::from_utf8_lossy(&buf).to_string();
    let mut headers = Vec::new();
    let mut content_length = 0usize;
    for line in head.lines().skip(1) {
        if let Some((name, value)) = line.split_once(": ") {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
            headers.push((name.to_string(), value.trim().to_string()));
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        let _ = stream.read_exact(&mut body);
    }
    CapturedRequest { body: String::from_utf8_lossy(&body).to_string(), headers }
}
