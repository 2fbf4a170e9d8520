#![cfg(feature = "remote")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use finsent_core::classifier::{Classifier, RemoteClassifier};
use finsent_core::embedding::{Doc, EmbeddingProvider, RemoteEmbedder};
use finsent_core::remote::RemoteConfig;
use finsent_core::SentimentLabel;

/// Serves scripted `(status, body, delay)` replies in order, then repeats the last.
fn serve(script: Vec<(u16, &'static str, u64)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, body, delay) = script[n.min(script.len() - 1)];
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut buf = vec![0; len];
                let _ = reader.read_exact(&mut buf);
                thread::sleep(Duration::from_millis(delay));
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    (url, hits)
}

fn config(url: String) -> RemoteConfig {
    RemoteConfig {
        url,
        timeout_ms: 500,
        retries: 2,
        max_in_flight: 2,
    }
}

#[test]
fn embedder_round_trip() {
    let (url, _) = serve(vec![(200, r#"{"vectors": [[0.6, 0.8, 0.0]]}"#, 0)]);
    let e = RemoteEmbedder::new(config(url), 3).unwrap();
    let v = e.embed(Doc::new("a", "text")).unwrap();
    assert_eq!(v.values(), &[0.6, 0.8, 0.0]);
}

#[test]
fn server_errors_are_retried() {
    let (url, hits) = serve(vec![
        (503, "{}", 0),
        (500, "{}", 0),
        (200, r#"{"text": "Negative"}"#, 0),
    ]);
    let c = RemoteClassifier::new(config(url)).unwrap();
    let p = c.classify("<s>[INST] x [/INST]").unwrap();
    assert_eq!(p.label, SentimentLabel::Negative);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_fail_fast() {
    let (url, hits) = serve(vec![(400, "{}", 0)]);
    let c = RemoteClassifier::new(config(url)).unwrap();
    let err = c.classify("prompt").unwrap_err();
    assert!(!err.is_retryable());
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn timeouts_respect_the_call_budget() {
    let (url, _) = serve(vec![(200, r#"{"text": "positive"}"#, 2_000)]);
    let cfg = config(url);
    let budget = cfg.call_budget();
    let c = RemoteClassifier::new(cfg).unwrap();
    let t = Instant::now();
    let err = c.classify("prompt").unwrap_err();
    assert!(err.is_retryable(), "{err}");
    assert!(
        t.elapsed() < budget + Duration::from_millis(500),
        "{:?}",
        t.elapsed()
    );
}

#[test]
fn wrong_vector_count_is_an_error() {
    let (url, _) = serve(vec![(200, r#"{"vectors": []}"#, 0)]);
    let e = RemoteEmbedder::new(config(url), 3).unwrap();
    assert!(e.embed(Doc::new("a", "text")).is_err());
}
