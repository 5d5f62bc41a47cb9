//! Names, URIs and the on-disk layout of a generated tree.
//!
//! ```text
//! <out>/tree.json          scenario and per-CA state
//! <out>/root.tal
//! <out>/keys/<i>.der       PKCS#8 keys of the pool
//! <out>/repo/...           legacy object mirror, rsync namespace layout
//! <out>/irepo/...          converted tree, if any
//! <out>/rrdp/              notification, snapshot and delta files
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use sha2::Sha256;

use super::{io_err, Profile, RepoError, Scenario};
use crate::crypto::{KeyPair, KeyPool};
use crate::object::RevokedEntry;

pub const RSYNC_BASE: &str = "rsync://rpki.example.net/";
pub const HTTP_BASE: &str = "http://rpki.example.net/";
pub const NOTIFICATION_URI: &str = "http://rpki.example.net/rrdp/notification.xml";
pub const TREE_FILE: &str = "tree.json";
pub const TAL_FILE: &str = "root.tal";
pub const KEYS_DIR: &str = "keys";
pub const LEGACY_DIR: &str = "repo";
pub const IMPROVED_DIR: &str = "irepo";
pub const RRDP_DIR: &str = "rrdp";
pub const TA_CERT_NAME: &str = "ta.cer";

pub fn ca_handle(index: usize) -> String {
    if index == 0 {
        "ta".to_string()
    } else {
        format!("ca-{index}")
    }
}

/// The repository URI of a CA: 69 characters for every handle.
pub fn repo_uri(seed: &[u8; 32], handle: &str) -> String {
    let mut h = Sha256::new();
    h.update(seed);
    h.update(handle.as_bytes());
    let digest = h.finalize();
    format!("{RSYNC_BASE}repository/{}/", hex::encode(&digest[..16]))
}

/// An object file name in the usual 27-character key-identifier style.
pub fn object_name(tag: &str, ext: &str) -> String {
    format!("{}.{ext}", URL_SAFE_NO_PAD.encode(Sha1::digest(tag.as_bytes())))
}

pub fn ca_subject(handle: &str) -> String {
    hex::encode(Sha1::digest(handle.as_bytes()))
}

/// Each CA owns an aligned block of /24s and ASNs this large.
pub fn block_size(s: &Scenario) -> usize {
    (0..s.ca_count).map(|c| s.roas_for(c)).max().unwrap_or(0).max(1).next_power_of_two()
}

/// Maps an rsync URI to a path below a mirror directory.
pub fn mirror_path(mirror: &Path, uri: &str) -> Option<PathBuf> {
    let rel = uri.strip_prefix(RSYNC_BASE)?;
    if rel.split('/').any(|c| c == ".." || c == ".") {
        return None;
    }
    Some(mirror.join(rel))
}

//------------ Persistent state -----------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaInfo {
    pub index: usize,
    pub handle: String,
    pub parent: Option<usize>,
    /// Index into the key pool.
    pub key: usize,
    pub repo_uri: String,
    /// URI of this CA's certificate.
    pub cert_uri: String,
    pub roa_count: usize,
    /// Next serial of this CA's single serial namespace.
    pub next_serial: u64,
}

impl CaInfo {
    pub fn allocate_serial(&mut self) -> u64 {
        let s = self.next_serial;
        self.next_serial += 1;
        s
    }

    pub fn manifest_name(&self, profile: &Profile) -> String {
        object_name(&self.handle, profile.manifest_ext())
    }

    pub fn crl_name(&self) -> String {
        object_name(&self.handle, "crl")
    }

    pub fn roa_name(&self, j: usize, profile: &Profile) -> String {
        object_name(&format!("{}/roa/{j}", self.handle), profile.roa_ext())
    }
}

/// Per-tree, per-CA publication state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeState {
    pub manifest_number: u64,
    pub revoked: Vec<RevokedEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedTree {
    /// Mirror directory name below the tree root.
    pub dir: String,
    pub profile: Profile,
    pub session_id: String,
    /// Zero before the first publication.
    pub serial: u64,
    /// Retained deltas, newest first.
    pub deltas: Vec<DeltaRecord>,
    pub cas: Vec<TreeState>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub serial: u64,
    pub size: u64,
    pub hash: String,
}

/// Everything generated for one scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepositoryTree {
    #[serde(skip)]
    pub root: PathBuf,
    pub scenario: Scenario,
    pub cas: Vec<CaInfo>,
    pub trees: Vec<PublishedTree>,
}

impl RepositoryTree {
    pub fn load(root: &Path) -> Result<Self, RepoError> {
        let path = root.join(TREE_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut tree: RepositoryTree = serde_json::from_str(&text)?;
        tree.root = root.to_path_buf();
        Ok(tree)
    }

    pub fn save(&self) -> Result<(), RepoError> {
        let path = self.root.join(TREE_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text).map_err(io_err(&path))
    }

    pub fn tal_path(&self) -> PathBuf {
        self.root.join(TAL_FILE)
    }

    pub fn rrdp_dir(&self) -> PathBuf {
        self.root.join(RRDP_DIR)
    }

    pub fn mirror(&self, tree: &PublishedTree) -> PathBuf {
        self.root.join(&tree.dir)
    }

    pub fn tree(&self, dir: &str) -> Option<&PublishedTree> {
        self.trees.iter().find(|t| t.dir == dir)
    }

    /// Loads the key pool, from the stored keys if present.
    pub fn keys(&self) -> Result<KeyPool, RepoError> {
        let dir = self.root.join(KEYS_DIR);
        if !dir.exists() {
            return Ok(KeyPool::for_seed(&self.scenario.seed));
        }
        let mut keys = Vec::new();
        for i in 0.. {
            let path = dir.join(format!("{i}.der"));
            if !path.exists() {
                break;
            }
            let der = fs::read(&path).map_err(io_err(&path))?;
            keys.push(KeyPair::from_pkcs8_der(&der)?);
        }
        if keys.is_empty() {
            return Err(RepoError::Scenario("key directory is empty".into()));
        }
        Ok(KeyPool::from_keys(keys))
    }

    pub fn total_bytes(dir: &Path) -> u64 {
        fn walk(p: &Path) -> u64 {
            match fs::read_dir(p) {
                Ok(rd) => rd
                    .flatten()
                    .map(|e| {
                        let p = e.path();
                        if p.is_dir() {
                            walk(&p)
                        } else {
                            e.metadata().map(|m| m.len()).unwrap_or(0)
                        }
                    })
                    .sum(),
                Err(_) => 0,
            }
        }
        walk(dir)
    }
}
