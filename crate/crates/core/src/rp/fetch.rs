//! RRDP transport with `.bin` probing and legacy fallback.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use super::cache::{CacheState, CachedRepository, RepoMeta};
use super::{FetchMetrics, RequestRecord, RpConfig, RpError};
use crate::rrdp::{self, apply_delta, Delta, Notification, RrdpFormat, Snapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FetchMode {
    /// Probe `notification.bin`, fall back to the XML notification.
    Auto,
    LegacyOnly,
    ImprovedOnly,
}

/// The URI with its `scheme://host/` replaced by the base URL.
fn rewrite(uri: &str, base: Option<&str>) -> String {
    let Some(base) = base else { return uri.to_string() };
    let rest = uri.split_once("://").and_then(|(_, r)| r.split_once('/')).map(|(_, p)| p).unwrap_or("");
    format!("{}/{rest}", base.trim_end_matches('/'))
}

enum Failure {
    Status(u16),
    Transport(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            Failure::Status(s) => write!(f, "HTTP {s}"),
            Failure::Transport(e) => f.write_str(e),
        }
    }
}

struct Client<'a> {
    config: &'a RpConfig,
    agent: ureq::Agent,
    probe: ureq::Agent,
}

impl<'a> Client<'a> {
    fn new(config: &'a RpConfig) -> Self {
        let probe = ureq::AgentBuilder::new()
            .timeout_connect(config.probe_timeout)
            .timeout_read(config.probe_timeout)
            .build();
        let agent = ureq::AgentBuilder::new().timeout_connect(Duration::from_secs(10)).build();
        Client { config, agent, probe }
    }

    fn get(&self, uri: &str, probe: bool) -> (RequestRecord, Result<Vec<u8>, Failure>) {
        let start = Instant::now();
        let url = rewrite(uri, self.config.base_url.as_deref());
        let result = if let Some(path) = url.strip_prefix("file://") {
            match fs::read(PathBuf::from(path)) {
                Ok(data) => Ok((200, data)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err((Some(404), Failure::Status(404))),
                Err(e) => Err((None, Failure::Transport(e.to_string()))),
            }
        } else {
            let agent = if probe { &self.probe } else { &self.agent };
            match agent.get(&url).call() {
                Ok(resp) => {
                    let status = resp.status();
                    let mut data = Vec::new();
                    match resp.into_reader().read_to_end(&mut data) {
                        Ok(_) => Ok((status, data)),
                        Err(e) => Err((Some(status), Failure::Transport(e.to_string()))),
                    }
                }
                Err(ureq::Error::Status(code, _)) => Err((Some(code), Failure::Status(code))),
                Err(e) => Err((None, Failure::Transport(e.to_string()))),
            }
        };
        let millis = start.elapsed().as_millis() as u64;
        match result {
            Ok((status, data)) => {
                (RequestRecord { uri: uri.to_string(), status: Some(status), bytes: data.len() as u64, millis }, Ok(data))
            }
            Err((status, failure)) => {
                (RequestRecord { uri: uri.to_string(), status, bytes: 0, millis }, Err(failure))
            }
        }
    }
}

fn record(metrics: &mut FetchMetrics, r: RequestRecord) {
    metrics.bytes_downloaded += r.bytes;
    metrics.requests.push(r);
}

/// The notification URIs to try, in order, with whether each is a probe.
fn candidates(tal_uri: &str, mode: FetchMode) -> Vec<(String, bool)> {
    let bin = match tal_uri.rfind('/') {
        Some(i) => format!("{}notification.bin", &tal_uri[..=i]),
        None => "notification.bin".to_string(),
    };
    let xml = if tal_uri.ends_with(".bin") { rrdp::resolve_uri(tal_uri, "notification.xml") } else { tal_uri.to_string() };
    match mode {
        FetchMode::Auto => vec![(bin, true), (xml, false)],
        FetchMode::LegacyOnly => vec![(xml, false)],
        FetchMode::ImprovedOnly => vec![(bin, false)],
    }
}

fn decode_notification(data: &[u8], uri: &str) -> Result<(Notification, RrdpFormat), String> {
    if uri.ends_with(".bin") {
        return Notification::decode(data, RrdpFormat::ImprovedProto).map(|n| (n, RrdpFormat::ImprovedProto)).map_err(|e| e.to_string());
    }
    match Notification::decode(data, RrdpFormat::LegacyXml) {
        Ok(n) => Ok((n, RrdpFormat::LegacyXml)),
        Err(e) => Notification::decode(data, RrdpFormat::ImprovedXml)
            .map(|n| (n, RrdpFormat::ImprovedXml))
            .map_err(|_| e.to_string()),
    }
}

/// Brings the cache for one trust anchor up to date. Returns the cache key
/// of the state to validate, or `None` if nothing is available.
pub fn fetch_repository(
    tal_uri: &str,
    cache: &mut CacheState,
    config: &RpConfig,
    metrics: &mut FetchMetrics,
) -> Result<Option<String>, RpError> {
    let cands = candidates(tal_uri, config.mode);
    if config.offline {
        for (uri, _) in &cands {
            if cache.load(uri).is_some() {
                let key = super::cache::key(uri);
                cache.touch(&key);
                return Ok(Some(key));
            }
        }
        return Ok(None);
    }

    let client = Client::new(config);
    for (uri, probe) in &cands {
        let (rec, result) = client.get(uri, *probe);
        record(metrics, rec);
        let data = match result {
            Ok(d) => d,
            Err(e) => {
                log::info!("{uri}: {e}");
                continue;
            }
        };
        let (notification, format) = match decode_notification(&data, uri) {
            Ok(n) => n,
            Err(e) => {
                metrics.warnings.push(format!("{uri}: {e}"));
                continue;
            }
        };
        match update(&client, uri, &notification, format, cache, config, metrics) {
            Ok(key) => return Ok(Some(key)),
            Err(e) => metrics.warnings.push(format!("{uri}: {e}")),
        }
    }

    // Nothing could be fetched: validate stale data if there is any.
    for (uri, _) in &cands {
        if cache.load(uri).is_some() {
            metrics.warnings.push(format!("{uri}: repository not refreshed, using cached data"));
            let key = super::cache::key(uri);
            cache.touch(&key);
            return Ok(Some(key));
        }
    }
    Ok(None)
}

fn update(
    client: &Client,
    uri: &str,
    n: &Notification,
    format: RrdpFormat,
    cache: &mut CacheState,
    config: &RpConfig,
    metrics: &mut FetchMetrics,
) -> Result<String, String> {
    let cached = cache.load(uri).filter(|c| c.meta.session_id == n.session_id && c.meta.format == format).cloned();
    if let Some(c) = &cached {
        if c.meta.serial == n.serial {
            let key = super::cache::key(uri);
            cache.touch(&key);
            return Ok(key);
        }
        if c.meta.serial < n.serial {
            match apply_deltas(client, uri, n, format, c.state.clone(), config, metrics) {
                Ok(state) => return store(cache, uri, n, format, state, cached.as_ref()),
                Err(e) => metrics.warnings.push(format!("{uri}: {e}; falling back to the snapshot")),
            }
        } else {
            metrics.warnings.push(format!("{uri}: serial went back from {} to {}", c.meta.serial, n.serial));
        }
    }

    let snap_uri = rrdp::resolve_uri(uri, &n.snapshot.uri);
    let (rec, result) = client.get(&snap_uri, false);
    record(metrics, rec);
    let data = result.map_err(|e| format!("{snap_uri}: {e}"))?;
    if rrdp::hash(&data) != n.snapshot.hash {
        return Err(format!("{snap_uri}: hash does not match the notification"));
    }
    let state = Snapshot::decode(&data, format).map_err(|e| format!("{snap_uri}: {e}"))?;
    if state.session_id != n.session_id || state.serial != n.serial {
        return Err(format!("{snap_uri}: session or serial differs from the notification"));
    }
    let previous = cached.or_else(|| cache.load(uri).cloned());
    store(cache, uri, n, format, state, previous.as_ref())
}

fn store(
    cache: &mut CacheState,
    uri: &str,
    n: &Notification,
    format: RrdpFormat,
    state: Snapshot,
    previous: Option<&CachedRepository>,
) -> Result<String, String> {
    let (manifest_numbers, vrps) = match previous {
        Some(p) => (p.meta.manifest_numbers.clone(), p.meta.vrps.clone()),
        None => (BTreeMap::new(), BTreeMap::new()),
    };
    let meta = RepoMeta {
        notification_uri: uri.to_string(),
        format,
        session_id: n.session_id.clone(),
        serial: n.serial,
        manifest_numbers,
        vrps,
    };
    cache.store(CachedRepository { meta, state }).map_err(|e| e.to_string())
}

/// Fetches the deltas from the cached serial on, a few at a time, and
/// applies them in order.
fn apply_deltas(
    client: &Client,
    uri: &str,
    n: &Notification,
    format: RrdpFormat,
    mut state: Snapshot,
    config: &RpConfig,
    metrics: &mut FetchMetrics,
) -> Result<Snapshot, String> {
    let refs = n.deltas_since(state.serial).ok_or("deltas not available")?;
    for chunk in refs.chunks(config.fetch_concurrency.max(1)) {
        let fetched: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|r| {
                    let delta_uri = rrdp::resolve_uri(uri, &r.uri);
                    s.spawn(move || (delta_uri.clone(), client.get(&delta_uri, false)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fetch thread")).collect()
        });
        for (r, (delta_uri, (rec, result))) in chunk.iter().zip(fetched) {
            record(metrics, rec);
            let data = result.map_err(|e| format!("{delta_uri}: {e}"))?;
            if rrdp::hash(&data) != r.hash {
                return Err(format!("{delta_uri}: hash does not match the notification"));
            }
            let delta = Delta::decode(&data, format).map_err(|e| format!("{delta_uri}: {e}"))?;
            if delta.serial != r.serial {
                return Err(format!("{delta_uri}: serial differs from the notification"));
            }
            state = apply_delta(state, &delta).map_err(|e| format!("{delta_uri}: {e}"))?;
        }
    }
    Ok(state)
}
