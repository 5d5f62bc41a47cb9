//! The persistent relying party cache.
//!
//! ```text
//! <cache>/<key>/meta.json   session, serial, format, per-CA state
//! <cache>/<key>/state.bin   repository objects as an improved snapshot
//! ```
//!
//! `key` is derived from the notification URI the state was fetched from.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RpError, Vrp};
use crate::rrdp::{RrdpFormat, Snapshot};

const META: &str = "meta.json";
const STATE: &str = "state.bin";

fn cache_err(path: &Path) -> impl FnOnce(std::io::Error) -> RpError + '_ {
    move |source| RpError::Cache { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMeta {
    pub notification_uri: String,
    pub format: RrdpFormat,
    pub session_id: String,
    pub serial: u64,
    /// Last accepted manifest number per CA repository.
    pub manifest_numbers: BTreeMap<String, u64>,
    /// VRPs last accepted per CA repository, reused when a manifest
    /// number goes backwards.
    pub vrps: BTreeMap<String, Vec<Vrp>>,
}

#[derive(Clone, Debug)]
pub struct CachedRepository {
    pub meta: RepoMeta,
    pub state: Snapshot,
}

pub struct CacheState {
    root: PathBuf,
    entries: HashMap<String, CachedRepository>,
    used: BTreeSet<String>,
}

pub fn key(notification_uri: &str) -> String {
    hex::encode(&crate::rrdp::hash(notification_uri.as_bytes())[..8])
}

impl CacheState {
    pub fn open(root: &Path) -> Result<Self, RpError> {
        fs::create_dir_all(root).map_err(cache_err(root))?;
        Ok(CacheState { root: root.to_path_buf(), entries: HashMap::new(), used: BTreeSet::new() })
    }

    fn dir(&self, key: &str) -> PathBuf {
        self.root.join(key)
    }

    /// The cached state for a notification URI, loading it from disk if
    /// needed. Unreadable entries count as absent.
    pub fn load(&mut self, notification_uri: &str) -> Option<&CachedRepository> {
        let key = key(notification_uri);
        if !self.entries.contains_key(&key) {
            let dir = self.dir(&key);
            let meta: RepoMeta = serde_json::from_slice(&fs::read(dir.join(META)).ok()?).ok()?;
            let state = Snapshot::decode(&fs::read(dir.join(STATE)).ok()?, RrdpFormat::ImprovedProto).ok()?;
            if meta.notification_uri != notification_uri || state.session_id != meta.session_id {
                return None;
            }
            self.entries.insert(key.clone(), CachedRepository { meta, state });
        }
        self.entries.get(&key)
    }

    pub fn get_mut(&mut self, key: &str) -> Option<&mut CachedRepository> {
        self.entries.get_mut(key)
    }

    /// Marks an entry as used by this run.
    pub fn touch(&mut self, key: &str) {
        self.used.insert(key.to_string());
    }

    /// Replaces the state for a notification URI and writes it out.
    pub fn store(&mut self, repo: CachedRepository) -> Result<String, RpError> {
        let key = key(&repo.meta.notification_uri);
        let dir = self.dir(&key);
        fs::create_dir_all(&dir).map_err(cache_err(&dir))?;
        let path = dir.join(STATE);
        fs::write(&path, repo.state.encode(RrdpFormat::ImprovedProto)).map_err(cache_err(&path))?;
        self.entries.insert(key.clone(), repo);
        self.store_meta(&key)?;
        self.touch(&key);
        Ok(key)
    }

    pub fn store_meta(&self, key: &str) -> Result<(), RpError> {
        let Some(repo) = self.entries.get(key) else { return Ok(()) };
        let path = self.dir(key).join(META);
        fs::write(&path, serde_json::to_vec(&repo.meta)?).map_err(cache_err(&path))
    }

    /// Bytes on disk of the entries used by this run.
    pub fn bytes_used(&self) -> u64 {
        self.used
            .iter()
            .flat_map(|k| [self.dir(k).join(META), self.dir(k).join(STATE)])
            .filter_map(|p| fs::metadata(p).ok())
            .map(|m| m.len())
            .sum()
    }
}
