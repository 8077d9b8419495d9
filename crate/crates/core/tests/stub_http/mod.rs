//! Minimal scripted HTTP server plus the wire-conformance assertions.
//!
//! The server replays canned chat-completions responses over raw TCP, records
//! every request body, and counts hits, which is all the retry-policy and
//! verdict checks need.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use temporal_search::backend::{HttpBackend, HttpBackendConfig, VideoLlm};
use temporal_search::domain::{compute_confidence, KeyframeMemory, Query, VideoSource};
use temporal_search::error::Error;
use temporal_search::frames::FrameStore;
use temporal_search::prompts::PromptSet;
use temporal_search::sampling::uniform_sample;

pub struct StubServer {
    pub base_url: String,
    pub hits: Arc<AtomicUsize>,
    pub bodies: Arc<Mutex<Vec<String>>>,
}

pub fn start(responses: Vec<(u16, String)>) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let queue = Arc::new(Mutex::new(VecDeque::from(responses)));
    {
        let hits = hits.clone();
        let bodies = bodies.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                hits.fetch_add(1, Ordering::SeqCst);
                let body = read_request(&mut stream);
                bodies.lock().unwrap().push(body);
                let (status, reply) = queue
                    .lock()
                    .unwrap()
                    .pop_front()
                    .unwrap_or((500, r#"{"error":"script exhausted"}"#.to_string()));
                let response = format!(
                    "HTTP/1.1 {status} Scripted\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
    }
    StubServer {
        base_url: format!("http://{addr}"),
        hits,
        bodies,
    }
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn read_request(stream: &mut TcpStream) -> String {
    let mut buf = Vec::new();
    let mut tmp = [0u8; 4096];
    let header_end = loop {
        match stream.read(&mut tmp) {
            Ok(0) | Err(_) => return String::new(),
            Ok(n) => buf.extend_from_slice(&tmp[..n]),
        }
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos + 4;
        }
    };
    let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let content_length = headers
        .lines()
        .find_map(|line| {
            let (name, value) = line.split_once(':')?;
            name.eq_ignore_ascii_case("content-length")
                .then(|| value.trim().parse::<usize>().ok())
                .flatten()
        })
        .unwrap_or(0);
    while buf.len() < header_end + content_length {
        match stream.read(&mut tmp) {
            Ok(0) | Err(_) => break,
            Ok(n) => buf.extend_from_slice(&tmp[..n]),
        }
    }
    String::from_utf8_lossy(&buf[header_end..]).to_string()
}

/// Chat-completions response with per-token logprobs; `top` attaches
/// first-position alternatives.
fn chat_response(content: &str, token_logprobs: &[f64], top: Option<&[(&str, f64)]>) -> String {
    let tokens: Vec<serde_json::Value> = token_logprobs
        .iter()
        .enumerate()
        .map(|(i, lp)| {
            let mut token = serde_json::json!({"token": format!("t{i}"), "logprob": lp});
            if i == 0 {
                if let Some(top) = top {
                    token["top_logprobs"] = serde_json::Value::Array(
                        top.iter()
                            .map(|(t, lp)| serde_json::json!({"token": t, "logprob": lp}))
                            .collect(),
                    );
                }
            }
            token
        })
        .collect();
    serde_json::json!({
        "id": "chatcmpl-stub",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "logprobs": {"content": tokens},
            "finish_reason": "stop"
        }]
    })
    .to_string()
}

fn backend_for(server: &StubServer) -> HttpBackend {
    let mut config = HttpBackendConfig::new(server.base_url.clone(), "stub-model");
    config.timeout = Duration::from_secs(5);
    config.retry_backoff = Duration::from_millis(5);
    config.api_key = Some("stub-key".into());
    HttpBackend::new(
        config,
        PromptSet::default(),
        Arc::new(FrameStore::synthetic()),
    )
}

fn fixtures() -> (VideoSource, Query, KeyframeMemory) {
    let video = VideoSource::new("wire", 100, 2.0).unwrap();
    let query = Query::multiple_choice("q", ["aa", "bb", "cc", "dd"], None).unwrap();
    (video, query, KeyframeMemory::new(8))
}

pub fn run_wire_conformance() {
    verdict_with_logprobs_and_recomputed_confidence();
    tolerates_missing_top_logprobs();
    retries_server_errors_with_backoff();
    surfaces_client_errors_without_retry();
    missing_logprobs_is_a_protocol_error();
}

/// Correct verdict from a canned response; the client recomputes confidence
/// from the token logprobs and must land on the server-declared value.
fn verdict_with_logprobs_and_recomputed_confidence() {
    let declared = 0.8f64;
    let logs = vec![declared.ln(); 4];
    let server = start(vec![(
        200,
        chat_response(
            "B",
            &logs,
            Some(&[("B", declared.ln()), ("A", 0.05f64.ln())]),
        ),
    )]);
    let backend = backend_for(&server);
    let (video, query, memory) = fixtures();
    let frames = uniform_sample(video.full_interval(), 4);
    let verdict = backend.answer(&video, &frames, &query, &memory).unwrap();
    assert_eq!(verdict.parsed_choice, Some('B'));
    assert!(
        (verdict.confidence - declared).abs() <= 1e-9,
        "client-side recomputation drifted"
    );
    assert!(
        (verdict.confidence - compute_confidence(&verdict.token_logprobs).unwrap()).abs() == 0.0
    );
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);

    // The request itself carries the protocol contract.
    let bodies = server.bodies.lock().unwrap();
    let body: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(body["logprobs"], true);
    assert_eq!(body["top_logprobs"], 5);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["model"], "stub-model");
    let parts = body["messages"][1]["content"].as_array().unwrap();
    let images = parts
        .iter()
        .filter(|p| p["type"] == "image_url")
        .collect::<Vec<_>>();
    assert_eq!(images.len(), 4);
    assert!(images[0]["image_url"]["url"]
        .as_str()
        .unwrap()
        .starts_with("data:image/jpeg;base64,"));
}

/// Absent top_logprobs is fine for answers; evaluation degrades to the
/// neutral 0.5.
fn tolerates_missing_top_logprobs() {
    let server = start(vec![
        (200, chat_response("A", &[-0.2, -0.3], None)),
        (200, chat_response("sure", &[-0.1], None)),
    ]);
    let backend = backend_for(&server);
    let (video, query, memory) = fixtures();
    let frames = uniform_sample(video.full_interval(), 4);
    let verdict = backend.answer(&video, &frames, &query, &memory).unwrap();
    assert_eq!(verdict.parsed_choice, Some('A'));
    assert_eq!(verdict.token_logprobs, vec![-0.2, -0.3]);
    // "sure" is the only first-position candidate: neither yes nor no.
    let score = backend
        .evaluate(&video, &frames, &query, &verdict, &memory)
        .unwrap();
    assert_eq!(score, 0.5);
}

/// Two 5xx responses then success: three attempts total, verdict delivered.
fn retries_server_errors_with_backoff() {
    let server = start(vec![
        (500, r#"{"error":"overloaded"}"#.to_string()),
        (503, r#"{"error":"still overloaded"}"#.to_string()),
        (200, chat_response("C", &[-0.1], None)),
    ]);
    let backend = backend_for(&server);
    let (video, query, memory) = fixtures();
    let frames = uniform_sample(video.full_interval(), 4);
    let verdict = backend.answer(&video, &frames, &query, &memory).unwrap();
    assert_eq!(verdict.parsed_choice, Some('C'));
    assert_eq!(
        server.hits.load(Ordering::SeqCst),
        3,
        "expected exactly three attempts"
    );
}

/// A 4xx surfaces immediately: no retry.
fn surfaces_client_errors_without_retry() {
    let server = start(vec![(404, r#"{"error":"no such model"}"#.to_string())]);
    let backend = backend_for(&server);
    let (video, query, memory) = fixtures();
    let frames = uniform_sample(video.full_interval(), 4);
    match backend.answer(&video, &frames, &query, &memory) {
        Err(Error::HttpStatus { status: 404, body }) => {
            assert!(body.contains("no such model"));
        }
        other => panic!("expected 404 error, got {other:?}"),
    }
    assert_eq!(
        server.hits.load(Ordering::SeqCst),
        1,
        "4xx must not be retried"
    );
}

/// A 200 without logprobs violates the declared capability.
fn missing_logprobs_is_a_protocol_error() {
    let body = serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": "A"}}]
    })
    .to_string();
    let server = start(vec![(200, body)]);
    let backend = backend_for(&server);
    let (video, query, memory) = fixtures();
    let frames = uniform_sample(video.full_interval(), 4);
    match backend.answer(&video, &frames, &query, &memory) {
        Err(Error::Protocol(message)) => assert!(message.contains("logprobs")),
        other => panic!("expected protocol error, got {other:?}"),
    }
}
