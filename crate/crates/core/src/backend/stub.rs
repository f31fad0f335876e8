//! Minimal in-process implementation of the inference wire protocol, for
//! exercising [`RemoteBackend`](super::RemoteBackend) without a model.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

/// Maps a source to a target, or to an HTTP error status.
pub type Handler = dyn Fn(&str) -> Result<String, u16> + Send + Sync;

enum Latency {
    None,
    Fixed(Duration),
    Jitter(Duration, Box<Mutex<ChaCha8Rng>>),
}

struct Shared {
    handler: Box<Handler>,
    latency: Latency,
    hits: AtomicUsize,
}

pub struct StubServer {
    addr: String,
    stop: Arc<AtomicBool>,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str) -> Result<String, u16> + Send + Sync + 'static,
    {
        Self::spawn(Box::new(handler), Latency::None)
    }

    pub fn with_latency<F>(handler: F, latency: Duration) -> Self
    where
        F: Fn(&str) -> Result<String, u16> + Send + Sync + 'static,
    {
        Self::spawn(Box::new(handler), Latency::Fixed(latency))
    }

    /// Each request waits a random time up to `max`.
    pub fn with_jitter<F>(handler: F, max: Duration, seed: u64) -> Self
    where
        F: Fn(&str) -> Result<String, u16> + Send + Sync + 'static,
    {
        Self::spawn(Box::new(handler), Latency::Jitter(max, Box::new(Mutex::new(ChaCha8Rng::seed_from_u64(seed)))))
    }

    fn spawn(handler: Box<Handler>, latency: Latency) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().expect("local addr").to_string();
        let stop = Arc::new(AtomicBool::new(false));
        let shared = Arc::new(Shared { handler, latency, hits: AtomicUsize::new(0) });
        let (stop2, shared2) = (stop.clone(), shared.clone());
        let accept = thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(conn) = conn else { continue };
                let shared = shared2.clone();
                thread::spawn(move || {
                    let _ = serve(conn, &shared);
                });
            }
        });
        StubServer { addr, stop, shared, accept: Some(accept) }
    }

    /// `host:port` of the listening socket.
    pub fn addr(&self) -> String {
        self.addr.clone()
    }

    /// Number of `/predict` requests received.
    pub fn hits(&self) -> usize {
        self.shared.hits.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(&self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn respond(conn: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Error",
    };
    write!(
        conn,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    conn.flush()
}

fn serve(mut conn: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let mut parts = request_line.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some("GET"), Some("/health")) => respond(&mut conn, 200, "{\"status\":\"ok\"}"),
        (Some("POST"), Some("/predict")) => {
            shared.hits.fetch_add(1, Ordering::SeqCst);
            let source = serde_json::from_slice::<serde_json::Value>(&body).ok().and_then(|v| v.get("source")?.as_str().map(String::from));
            let Some(source) = source else {
                return respond(&mut conn, 400, "{\"error\":\"expected {\\\"source\\\": string}\"}");
            };
            match &shared.latency {
                Latency::None => {}
                Latency::Fixed(d) => thread::sleep(*d),
                Latency::Jitter(max, rng) => {
                    let ms = rng.lock().expect("rng poisoned").random_range(0..=max.as_millis() as u64);
                    thread::sleep(Duration::from_millis(ms));
                }
            }
            match (shared.handler)(&source) {
                Ok(target) => respond(&mut conn, 200, &json!({ "target": target }).to_string()),
                Err(status) => respond(&mut conn, status, "{\"error\":\"model error\"}"),
            }
        }
        _ => respond(&mut conn, 404, "{}"),
    }
}
