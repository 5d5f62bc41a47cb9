//! The relying party: fetching, caching and validation.

mod cache;
mod fetch;
pub mod point;
mod validate;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{SignatureCounter, TrustAnchorLocator};
use crate::object::RoaPayload;
use crate::resources::Prefix;

pub use cache::{CacheState, CachedRepository};
pub use fetch::FetchMode;

#[derive(Debug, Error)]
pub enum RpError {
    #[error("cache {path}: {source}")]
    Cache { path: PathBuf, source: std::io::Error },
    #[error("cache metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("no trust anchor locators")]
    NoTal,
    #[error("thread pool: {0}")]
    Threads(String),
}

//------------ Vrp -------------------------------------------------------------

/// A validated ROA payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vrp {
    pub prefix: Prefix,
    pub asn: u32,
    pub max_length: u8,
}

impl Vrp {
    pub fn from_payload(p: &RoaPayload) -> impl Iterator<Item = Vrp> + '_ {
        p.prefixes.iter().map(|rp| Vrp { prefix: rp.prefix, asn: p.asn, max_length: rp.effective_max_length() })
    }
}

//------------ VrpSet ----------------------------------------------------------

/// A sorted set of VRPs without duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrpSet {
    entries: Vec<Vrp>,
}

impl VrpSet {
    pub fn new(entries: impl IntoIterator<Item = Vrp>) -> Self {
        let mut entries: Vec<Vrp> = entries.into_iter().collect();
        entries.sort_unstable();
        entries.dedup();
        VrpSet { entries }
    }

    pub fn entries(&self) -> &[Vrp] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn union(self, other: VrpSet) -> VrpSet {
        VrpSet::new(self.entries.into_iter().chain(other.entries))
    }
}

impl FromIterator<Vrp> for VrpSet {
    fn from_iter<I: IntoIterator<Item = Vrp>>(iter: I) -> Self {
        VrpSet::new(iter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VrpFormat {
    Csv,
    JsonLines,
}

impl FromStr for VrpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(VrpFormat::Csv),
            "jsonl" | "json-lines" => Ok(VrpFormat::JsonLines),
            _ => Err(format!("unknown output format {s:?}")),
        }
    }
}

pub fn emit_vrps(set: &VrpSet, format: VrpFormat) -> Vec<u8> {
    let mut out = String::new();
    match format {
        VrpFormat::Csv => {
            out.push_str("asn,prefix,maxlen\n");
            for v in set.entries() {
                out.push_str(&format!("{},{},{}\n", v.asn, v.prefix, v.max_length));
            }
        }
        VrpFormat::JsonLines => {
            for v in set.entries() {
                let line = serde_json::json!({"asn": v.asn, "prefix": v.prefix.to_string(), "max_length": v.max_length});
                out.push_str(&line.to_string());
                out.push('\n');
            }
        }
    }
    out.into_bytes()
}

//------------ FetchMetrics ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub uri: String,
    /// HTTP status, or none if no response arrived.
    pub status: Option<u16>,
    pub bytes: u64,
    pub millis: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaFailure {
    pub ca: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchMetrics {
    pub bytes_downloaded: u64,
    pub signatures_verified: u64,
    pub wall_time_seconds: f64,
    pub cache_bytes: u64,
    pub objects_accepted: u64,
    pub objects_rejected: u64,
    pub vrps: u64,
    /// RRDP format used per trust anchor.
    pub formats: Vec<String>,
    pub failures: Vec<CaFailure>,
    pub warnings: Vec<String>,
    pub requests: Vec<RequestRecord>,
}

impl FetchMetrics {
    pub fn requests_for(&self, suffix: &str) -> impl Iterator<Item = &RequestRecord> {
        let suffix = suffix.to_string();
        self.requests.iter().filter(move |r| r.uri.ends_with(&suffix))
    }
}

//------------ RpConfig --------------------------------------------------------

#[derive(Clone, Debug)]
pub struct RpConfig {
    pub cache_dir: PathBuf,
    pub mode: FetchMode,
    /// Replaces `scheme://host/` of every repository URI, e.g. to point at
    /// a local server or, with `file://`, at a tree root on disk.
    pub base_url: Option<String>,
    /// Connect and first-byte timeout of the `notification.bin` probe.
    pub probe_timeout: Duration,
    pub fetch_concurrency: usize,
    /// Validation threads; `None` uses all cores.
    pub threads: Option<usize>,
    /// Validation time in UTC seconds.
    pub now: i64,
    /// Validate the cache without fetching.
    pub offline: bool,
}

impl RpConfig {
    pub fn new(cache_dir: impl Into<PathBuf>, now: i64) -> Self {
        RpConfig {
            cache_dir: cache_dir.into(),
            mode: FetchMode::Auto,
            base_url: None,
            probe_timeout: Duration::from_secs(2),
            fetch_concurrency: 4,
            threads: None,
            now,
            offline: false,
        }
    }

    pub fn base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = Some(url.into());
        self
    }

    pub fn mode(mut self, mode: FetchMode) -> Self {
        self.mode = mode;
        self
    }
}

impl fmt::Display for FetchMode {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            FetchMode::Auto => "auto",
            FetchMode::LegacyOnly => "legacy-only",
            FetchMode::ImprovedOnly => "improved-only",
        })
    }
}

/// Fetches every trust anchor's repository into the cache, validates and
/// returns the VRPs with the run's metrics.
pub fn run(tals: &[TrustAnchorLocator], config: &RpConfig) -> Result<(VrpSet, FetchMetrics), RpError> {
    if tals.is_empty() {
        return Err(RpError::NoTal);
    }
    let start = Instant::now();
    let counter = SignatureCounter::new();
    let mut metrics = FetchMetrics::default();
    let mut cache = CacheState::open(&config.cache_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| RpError::Threads(e.to_string()))?;

    let mut vrps = VrpSet::default();
    for tal in tals {
        let repo = fetch::fetch_repository(&tal.notification_uri, &mut cache, config, &mut metrics)?;
        let Some(key) = repo else {
            metrics.failures.push(CaFailure {
                ca: tal.notification_uri.clone(),
                reason: "repository unavailable and not cached".into(),
            });
            continue;
        };
        let entry = cache.get_mut(&key).expect("fetched repositories are cached");
        metrics.formats.push(entry.meta.format.to_string());
        let set = pool.install(|| validate::validate(tal, entry, config.now, &counter, &mut metrics));
        cache.store_meta(&key)?;
        vrps = vrps.union(set);
    }

    metrics.signatures_verified = counter.verifies();
    metrics.vrps = vrps.len() as u64;
    metrics.cache_bytes = cache.bytes_used();
    metrics.wall_time_seconds = start.elapsed().as_secs_f64();
    Ok((vrps, metrics))
}
