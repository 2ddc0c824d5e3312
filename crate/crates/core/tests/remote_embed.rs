//! The remote provider against a real HTTP endpoint on localhost.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use cgw_core::similarity::{
    EmbedRequest, EmbeddingSimilarity, RemoteEmbedder, SimilarityError, SimilarityProvider,
};
use serde_json::json;

#[derive(Clone, Copy)]
enum Mode {
    Ok,
    DropOne,
    Fail,
}

fn vector_for(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; 8];
    for w in text.split_whitespace() {
        let h = w.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        v[(h % 8) as usize] += 1.0;
    }
    v
}

/// Serves `POST /v1/embed`, one request per connection.
fn stub(mode: Mode) -> (String, Arc<AtomicUsize>, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let requests = Arc::new(AtomicUsize::new(0));
    let texts_seen = Arc::new(AtomicUsize::new(0));
    let (r, t) = (requests.clone(), texts_seen.clone());
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            r.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = if !request_line.starts_with("POST /v1/embed ") {
                ("404 Not Found", "{}".to_string())
            } else {
                let req: EmbedRequest = serde_json::from_slice(&body).unwrap();
                t.fetch_add(req.texts.len(), Ordering::SeqCst);
                let mut vectors: Vec<Vec<f64>> = req.texts.iter().map(|x| vector_for(x)).collect();
                match mode {
                    Mode::Ok => ("200 OK", json!({ "vectors": vectors }).to_string()),
                    Mode::DropOne => {
                        vectors.pop();
                        ("200 OK", json!({ "vectors": vectors }).to_string())
                    }
                    Mode::Fail => ("500 Internal Server Error", "{}".to_string()),
                }
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (format!("http://{addr}"), requests, texts_seen)
}

#[test]
fn batches_and_caches() {
    let (url, requests, texts) = stub(Mode::Ok);
    let embedder = RemoteEmbedder::http(&url);
    let v = embedder.remote_embed(&["B sleeps", "A went home", "B sleeps"]).unwrap();
    assert_eq!(v.len(), 3);
    assert_eq!(v[0], v[2]);
    assert_eq!(requests.load(Ordering::SeqCst), 1);
    assert_eq!(texts.load(Ordering::SeqCst), 2);
    assert_eq!(embedder.cached_len(), 2);

    embedder.remote_embed(&["A went home", "B sleeps"]).unwrap();
    assert_eq!(requests.load(Ordering::SeqCst), 1);
    embedder.remote_embed(&["A went home", "tea"]).unwrap();
    assert_eq!(requests.load(Ordering::SeqCst), 2);
    assert_eq!(texts.load(Ordering::SeqCst), 3);
}

#[test]
fn similarity_through_the_service() {
    let (url, requests, _) = stub(Mode::Ok);
    let f = EmbeddingSimilarity::new(RemoteEmbedder::http(&url));
    f.prepare(&["B sleeps", "B sleeps late", "A went home"]).unwrap();
    assert_eq!(requests.load(Ordering::SeqCst), 1);
    let s = f.similarity("B sleeps", "B sleeps late").unwrap();
    assert!(s > 0.0 && s < 1.0, "{s}");
    assert_eq!(f.similarity("A went home", "A went home").unwrap(), 1.0);
    assert_eq!(requests.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_replies_are_errors() {
    let (url, _, _) = stub(Mode::DropOne);
    let err = RemoteEmbedder::http(&url).remote_embed(&["a", "b"]).unwrap_err();
    assert!(matches!(err, SimilarityError::CountMismatch { sent: 2, received: 1 }), "{err}");

    let (url, _, _) = stub(Mode::Fail);
    let err = RemoteEmbedder::http(&url).remote_embed(&["a"]).unwrap_err();
    assert!(matches!(err, SimilarityError::Transport(_)), "{err}");

    let err = RemoteEmbedder::http("http://127.0.0.1:9").remote_embed(&["a"]).unwrap_err();
    assert!(matches!(err, SimilarityError::Transport(_)), "{err}");
}
