//! Wire-contract tests for the HTTP encoder and extractor clients, served by
//! a minimal in-process TCP responder.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::thread;

use dualrank_core::corpus::{Extractor, HttpExtractor};
use dualrank_core::embed::{Encoder, HttpEncoder};
use dualrank_core::error::EngineError;

/// Serves exactly one HTTP request with a fixed JSON body, then returns the
/// request bytes that were received.
fn one_shot_server(body: &'static str, status: &'static str) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut buf = Vec::new();
        let mut tmp = [0u8; 4096];
        loop {
            let n = stream.read(&mut tmp).unwrap();
            buf.extend_from_slice(&tmp[..n]);
            if let Some(header_end) = find_header_end(&buf) {
                let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
                let content_length = headers
                    .lines()
                    .find_map(|l| {
                        let (name, value) = l.split_once(':')?;
                        name.eq_ignore_ascii_case("content-length")
                            .then(|| value.trim().parse::<usize>().ok())?
                    })
                    .unwrap_or(0);
                if buf.len() >= header_end + 4 + content_length {
                    break;
                }
            }
            if n == 0 {
                break;
            }
        }
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(response.as_bytes()).unwrap();
        String::from_utf8_lossy(&buf).to_string()
    });
    (format!("http://{addr}/"), handle)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

#[test]
fn http_encoder_round_trip() {
    let (url, server) = one_shot_server(r#"{"vectors": [[1.0, 0.0], [0.0, 0.5]]}"#, "200 OK");
    let enc = HttpEncoder::new(&url, 2, 16, None);
    let got = enc.encode_batch(&["alpha", "beta"]).unwrap();
    assert_eq!(got, vec![vec![1.0, 0.0], vec![0.0, 0.5]]);
    let request = server.join().unwrap();
    assert!(request.starts_with("POST"));
    assert!(request.contains(r#""texts":["alpha","beta"]"#));
}

#[test]
fn http_encoder_rejects_dimension_mismatch() {
    let (url, server) = one_shot_server(r#"{"vectors": [[1.0, 0.0, 0.0]]}"#, "200 OK");
    let enc = HttpEncoder::new(&url, 2, 16, None);
    let err = enc.encode_batch(&["alpha"]).unwrap_err();
    assert!(matches!(err, EngineError::DimensionMismatch { .. }));
    server.join().unwrap();
}

#[test]
fn http_encoder_malformed_payload_carries_raw_body() {
    let (url, server) = one_shot_server(r#"{"not_vectors": 3}"#, "200 OK");
    let enc = HttpEncoder::new(&url, 2, 16, None);
    let err = enc.encode_batch(&["alpha"]).unwrap_err();
    match err {
        EngineError::MalformedPayload { raw, .. } => assert!(raw.contains("not_vectors")),
        other => panic!("expected MalformedPayload, got {other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn http_encoder_transport_failure_is_retryable() {
    // Nothing listens on this port.
    let enc = HttpEncoder::new("http://127.0.0.1:1/", 2, 16, None);
    let err = enc.encode_batch(&["alpha"]).unwrap_err();
    assert!(err.is_retryable(), "expected retryable transport error, got {err:?}");
}

#[test]
fn http_encoder_5xx_is_transport_error() {
    let (url, server) = one_shot_server(r#"{"oops": true}"#, "503 Service Unavailable");
    let enc = HttpEncoder::new(&url, 2, 16, None);
    let err = enc.encode_batch(&["alpha"]).unwrap_err();
    assert!(matches!(err, EngineError::Transport(_)));
    server.join().unwrap();
}

#[test]
fn http_extractor_round_trip() {
    let (url, server) = one_shot_server(
        r#"{"entities": ["Paris", "France"], "triples": [["Paris", "is the capital of", "France"]]}"#,
        "200 OK",
    );
    let ex = HttpExtractor::new(&url, None);
    let got = ex.extract("p7", "Paris is the capital of France.").unwrap();
    assert_eq!(got.entities, vec!["Paris".to_string(), "France".to_string()]);
    assert_eq!(got.triples.len(), 1);
    let request = server.join().unwrap();
    assert!(request.contains(r#""passage_id":"p7""#));
    assert!(request.contains("Paris is the capital of France."));
}

#[test]
fn http_extractor_malformed_payload() {
    let (url, server) = one_shot_server(r#"[1, 2, 3]"#, "200 OK");
    let ex = HttpExtractor::new(&url, None);
    let err = ex.extract("p", "text").unwrap_err();
    assert!(matches!(err, EngineError::MalformedPayload { .. }));
    server.join().unwrap();
}

#[test]
fn http_extractor_sends_bearer_credentials_from_env() {
    let (url, server) = one_shot_server(r#"{"entities": [], "triples": []}"#, "200 OK");
    // Safety: test-local variable name, no concurrent reader depends on it.
    unsafe { std::env::set_var("DUALRANK_TEST_TOKEN", "sekrit") };
    let ex = HttpExtractor::new(&url, Some("DUALRANK_TEST_TOKEN".into()));
    ex.extract("p", "text").unwrap();
    let request = server.join().unwrap();
    assert!(
        request.to_lowercase().contains("authorization: bearer sekrit"),
        "missing auth header in request:\n{request}"
    );
}
