#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

/// Minimal HTTP/1.1 server: every POST body goes to `handler`, which returns
/// `(status, body)`. Each connection serves one request.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &str) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/score", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let handler = Arc::new(handler);
        let counter = hits.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let handler = handler.clone();
                let n = counter.fetch_add(1, Ordering::SeqCst);
                thread::spawn(move || serve(stream, n, &*handler));
            }
        });
        Self { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, n: usize, handler: &dyn Fn(usize, &str) -> (u16, String)) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let (status, reply) = handler(n, &String::from_utf8(body).unwrap());
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

/// A context-free server-side model: every masked position gets `dist`.
pub fn fixed_distribution_reply(body: &str, dist: &[(&str, f64)]) -> String {
    let req: serde_json::Value = serde_json::from_str(body).unwrap();
    let text = req["text"].as_str().unwrap();
    let mut tokens = vec!["<s>".to_string()];
    tokens.extend(text.split_whitespace().map(String::from));
    tokens.push("</s>".into());
    let top_k = req["top_k"].as_u64().unwrap_or(0) as usize;
    let scores: Vec<serde_json::Value> = req["positions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let i = p.as_u64().unwrap() as usize;
            let prob = dist
                .iter()
                .find(|(t, _)| *t == tokens[i])
                .map(|d| d.1)
                .unwrap_or(0.0);
            let topk: Vec<(&str, f64)> = dist.iter().take(top_k).copied().collect();
            serde_json::json!({"position": i, "logprob_original": prob.ln(), "topk": topk})
        })
        .collect();
    serde_json::json!({"tokens": tokens, "vocab_size": dist.len(), "scores": scores}).to_string()
}
