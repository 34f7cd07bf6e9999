//! Shared test fixtures: a minimal HTTP/1.1 stub server and published scores.

#![allow(dead_code)]

pub mod published;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    pub fn json(body: serde_json::Value) -> Self {
        Self {
            status: 200,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn status(status: u16, body: &str) -> Self {
        Self {
            status,
            body: body.to_string(),
            delay: Duration::ZERO,
        }
    }

    pub fn after(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub type Handler = dyn Fn(&str, &str, &[u8]) -> Reply + Send + Sync;

pub struct StubServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub peak_in_flight: Arc<AtomicUsize>,
}

impl StubServer {
    /// Serves each connection on its own thread until the process exits.
    pub fn start(handler: impl Fn(&str, &str, &[u8]) -> Reply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let handler: Arc<Handler> = Arc::new(handler);
        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (h, p) = (hits.clone(), peak.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (handler, hits, in_flight, peak) = (handler.clone(), h.clone(), in_flight.clone(), p.clone());
                thread::spawn(move || {
                    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    hits.fetch_add(1, Ordering::SeqCst);
                    let _ = serve(stream, handler.as_ref());
                    in_flight.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        Self {
            url,
            hits,
            peak_in_flight: peak,
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    let mut length = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let reply = handler(&method, &path, &body);
    thread::sleep(reply.delay);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}

/// Answers `/v1/answer` by echoing the question and picking option 0.
pub fn echo_answer(body: &[u8], ttft_ms: Option<f64>) -> Reply {
    let req: serde_json::Value = serde_json::from_slice(body).unwrap();
    let mut out = serde_json::json!({
        "query_id": req["query_id"],
        "answer_text": req["question"],
        "chosen_option": 0,
        "token_count": 1,
    });
    if let Some(t) = ttft_ms {
        out["ttft_ms"] = t.into();
    }
    Reply::json(out)
}
