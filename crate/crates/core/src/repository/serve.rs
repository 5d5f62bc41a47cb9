//! A static HTTP service for generated trees.

use std::fs::File;
use std::io::{self, Read};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use tiny_http::{Header, Response, Server, StatusCode};

use super::layout::{IMPROVED_DIR, LEGACY_DIR, RRDP_DIR};
use super::RepoError;

/// Directories below a tree root that are served.
const SERVED_DIRS: [&str; 3] = [RRDP_DIR, LEGACY_DIR, IMPROVED_DIR];

/// Largest burst a rate-limited connection may send at once.
const BURST: usize = 8192;

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub bind: String,
    /// Per-connection limit in bits per second.
    pub rate_limit: Option<f64>,
    /// Tree roots by URL prefix. The prefix may be empty.
    pub mounts: Vec<(String, PathBuf)>,
}

impl ServeConfig {
    pub fn new(bind: impl Into<String>) -> Self {
        ServeConfig { bind: bind.into(), rate_limit: None, mounts: Vec::new() }
    }

    pub fn tree(mut self, prefix: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        self.mounts.push((prefix.into(), root.into()));
        self
    }

    pub fn rate_limit(mut self, bits_per_second: Option<f64>) -> Self {
        self.rate_limit = bits_per_second;
        self
    }

    fn resolve(&self, url: &str) -> Option<PathBuf> {
        let path = url.split(['?', '#']).next()?.strip_prefix('/')?;
        let parts: Vec<&str> = path.split('/').collect();
        if parts.iter().any(|p| p.is_empty() || *p == "." || *p == ".." || p.contains('\\')) {
            return None;
        }
        for (prefix, root) in &self.mounts {
            let rest = if prefix.is_empty() {
                &parts[..]
            } else if parts.first() == Some(&prefix.as_str()) {
                &parts[1..]
            } else {
                continue;
            };
            if rest.len() < 2 || !SERVED_DIRS.contains(&rest[0]) {
                continue;
            }
            let file = rest.iter().fold(root.clone(), |p, c| p.join(c));
            if file.is_file() {
                return Some(file);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AccessRecord {
    pub path: String,
    pub status: u16,
    pub bytes: u64,
}

pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    log: Arc<Mutex<Vec<AccessRecord>>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    pub fn access_log(&self) -> Vec<AccessRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap().clear()
    }

    pub fn bytes_served(&self) -> u64 {
        self.log.lock().unwrap().iter().map(|r| r.bytes).sum()
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Paces reads to a byte rate with bursts of at most `BURST` bytes.
struct RateLimited<R> {
    inner: R,
    bytes_per_second: f64,
    start: Instant,
    sent: u64,
}

impl<R: Read> Read for RateLimited<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let due = Duration::from_secs_f64(self.sent as f64 / self.bytes_per_second);
        if let Some(wait) = due.checked_sub(self.start.elapsed()) {
            thread::sleep(wait);
        }
        let n = buf.len().min(BURST);
        let n = self.inner.read(&mut buf[..n])?;
        self.sent += n as u64;
        Ok(n)
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("xml") => "application/xml",
        _ => "application/octet-stream",
    }
}

/// Starts serving the configured trees. Each request is answered on its
/// own thread.
pub fn serve(config: ServeConfig) -> Result<ServerHandle, RepoError> {
    let server = Server::http(&config.bind).map_err(|e| RepoError::Bind(format!("{}: {e}", config.bind)))?;
    let addr = server.server_addr().to_ip().ok_or_else(|| RepoError::Bind("not an IP listener".into()))?;
    let server = Arc::new(server);
    let log = Arc::new(Mutex::new(Vec::new()));
    let config = Arc::new(config);
    let thread = {
        let server = server.clone();
        let log = log.clone();
        thread::spawn(move || {
            for request in server.incoming_requests() {
                let config = config.clone();
                let log = log.clone();
                thread::spawn(move || {
                    let url = request.url().to_string();
                    let file = (request.method() == &tiny_http::Method::Get)
                        .then(|| config.resolve(&url))
                        .flatten()
                        .and_then(|p| File::open(&p).ok().map(|f| (p, f)));
                    let record = match file {
                        Some((path, f)) => {
                            let len = f.metadata().map(|m| m.len()).unwrap_or(0);
                            let header = Header::from_bytes("Content-Type", content_type(&path)).expect("header");
                            let reader: Box<dyn Read + Send> = match config.rate_limit {
                                Some(bits) => Box::new(RateLimited {
                                    inner: f,
                                    bytes_per_second: bits / 8.0,
                                    start: Instant::now(),
                                    sent: 0,
                                }),
                                None => Box::new(f),
                            };
                            let response = Response::new(StatusCode(200), vec![header], reader, Some(len as usize), None);
                            let ok = request.respond(response).is_ok();
                            AccessRecord { path: url, status: 200, bytes: if ok { len } else { 0 } }
                        }
                        None => {
                            let _ = request.respond(Response::empty(404));
                            AccessRecord { path: url, status: 404, bytes: 0 }
                        }
                    };
                    log::debug!("{} {} {}", record.status, record.path, record.bytes);
                    log.lock().unwrap().push(record);
                });
            }
        })
    };
    Ok(ServerHandle { addr, server, log, thread: Some(thread) })
}
