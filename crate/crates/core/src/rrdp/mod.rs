//! RRDP notification, snapshot and delta files.
//!
//! Three wire formats share one data model: the flat legacy XML, the
//! CA-grouped improved XML and its proto3 equivalent.

mod proto;
mod xml;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Hash = [u8; 32];

pub const NAMESPACE: &str = "http://www.ripe.net/rpki/rrdp";

pub fn hash(data: &[u8]) -> Hash {
    Sha256::digest(data).into()
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum RrdpError {
    #[error("XML: {0}")]
    Xml(String),
    #[error("proto3: {0}")]
    Proto(#[from] crate::proto::ProtoError),
    #[error("base64 content")]
    Base64,
    #[error("bad hash {0:?}")]
    Hash(String),
    #[error("invalid session id {0:?}")]
    Session(String),
    #[error("serial must be positive")]
    Serial,
    #[error("invalid repository URI {0:?}")]
    RepoUri(String),
    #[error("invalid object name {0:?}")]
    Name(String),
    #[error("repositories must be sorted and unique")]
    RepoOrder,
    #[error("duplicate or unsorted name {0:?}")]
    NameOrder(String),
    #[error("empty CA group in delta")]
    EmptyGroup,
    #[error("delta references are not contiguous")]
    DeltaRefs,
    #[error("session mismatch")]
    SessionMismatch,
    #[error("delta serial {got} does not follow {have}")]
    SerialGap { have: u64, got: u64 },
    #[error("hash precondition failed for {0}")]
    HashPrecondition(String),
    #[error("withdraw of missing object {0}")]
    Missing(String),
    #[error("publish without hash over existing object {0}")]
    Exists(String),
}

//------------ RrdpFormat -----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RrdpFormat {
    LegacyXml,
    ImprovedXml,
    ImprovedProto,
}

impl RrdpFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RrdpFormat::LegacyXml | RrdpFormat::ImprovedXml => "xml",
            RrdpFormat::ImprovedProto => "bin",
        }
    }
}

impl fmt::Display for RrdpFormat {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            RrdpFormat::LegacyXml => "legacy_xml",
            RrdpFormat::ImprovedXml => "improved_xml",
            RrdpFormat::ImprovedProto => "improved_proto",
        })
    }
}

impl FromStr for RrdpFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "legacy_xml" => Ok(RrdpFormat::LegacyXml),
            "improved_xml" => Ok(RrdpFormat::ImprovedXml),
            "improved_proto" => Ok(RrdpFormat::ImprovedProto),
            _ => Err(format!("unknown RRDP format {s:?}")),
        }
    }
}

//------------ Data model -----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotEntry {
    pub name: String,
    pub content: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotCa {
    pub repo_uri: String,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub session_id: String,
    pub serial: u64,
    pub cas: Vec<SnapshotCa>,
}

pub type RepositorySnapshot = Snapshot;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Publish {
    pub name: String,
    /// Hash of the object being replaced.
    pub hash: Option<Hash>,
    pub content: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Withdraw {
    pub name: String,
    pub hash: Hash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaCa {
    pub repo_uri: String,
    pub modified: Vec<Publish>,
    pub withdrawn: Vec<Withdraw>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delta {
    pub session_id: String,
    pub serial: u64,
    pub cas: Vec<DeltaCa>,
}

pub type DeltaFile = Delta;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotRef {
    pub uri: String,
    pub hash: Hash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaRef {
    pub serial: u64,
    pub uri: String,
    pub hash: Hash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Notification {
    pub session_id: String,
    pub serial: u64,
    pub snapshot: SnapshotRef,
    /// Ordered by descending serial.
    pub deltas: Vec<DeltaRef>,
}

pub type NotificationFile = Notification;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Notification,
    Snapshot,
    Delta,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RrdpFile {
    Notification(Notification),
    Snapshot(Snapshot),
    Delta(Delta),
}

pub fn encode_rrdp(file: &RrdpFile, format: RrdpFormat) -> Vec<u8> {
    match file {
        RrdpFile::Notification(n) => n.encode(format),
        RrdpFile::Snapshot(s) => s.encode(format),
        RrdpFile::Delta(d) => d.encode(format),
    }
}

pub fn decode_rrdp(data: &[u8], kind: FileKind, format: RrdpFormat) -> Result<RrdpFile, RrdpError> {
    Ok(match kind {
        FileKind::Notification => RrdpFile::Notification(Notification::decode(data, format)?),
        FileKind::Snapshot => RrdpFile::Snapshot(Snapshot::decode(data, format)?),
        FileKind::Delta => RrdpFile::Delta(Delta::decode(data, format)?),
    })
}

//------------ Checks ---------------------------------------------------------

fn check_session(s: &str) -> Result<(), RrdpError> {
    match uuid::Uuid::parse_str(s) {
        Ok(u) if u.hyphenated().to_string() == s => Ok(()),
        _ => Err(RrdpError::Session(s.to_string())),
    }
}

fn check_header(session: &str, serial: u64) -> Result<(), RrdpError> {
    check_session(session)?;
    if serial == 0 {
        return Err(RrdpError::Serial);
    }
    Ok(())
}

/// A repository URI ends in a slash so that the flat legacy form can be
/// regrouped at the last slash.
fn check_repo(uri: &str) -> Result<(), RrdpError> {
    if uri.len() < 2 || !uri.ends_with('/') || uri.bytes().any(|b| b.is_ascii_whitespace() || b.is_ascii_control()) {
        return Err(RrdpError::RepoUri(uri.to_string()));
    }
    Ok(())
}

fn check_name(name: &str) -> Result<(), RrdpError> {
    crate::object::check_file_name(name).map_err(|_| RrdpError::Name(name.to_string()))
}

fn check_repo_order<'a>(repos: impl Iterator<Item = &'a str>) -> Result<(), RrdpError> {
    let mut last: Option<&str> = None;
    for r in repos {
        check_repo(r)?;
        if last.is_some_and(|l| l >= r) {
            return Err(RrdpError::RepoOrder);
        }
        last = Some(r);
    }
    Ok(())
}

fn check_name_order<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), RrdpError> {
    let mut last: Option<&str> = None;
    for n in names {
        check_name(n)?;
        if last.is_some_and(|l| l >= n) {
            return Err(RrdpError::NameOrder(n.to_string()));
        }
        last = Some(n);
    }
    Ok(())
}

pub(crate) fn hex_hash(h: &Hash) -> String {
    hex::encode(h)
}

pub(crate) fn parse_hex_hash(s: &str) -> Result<Hash, RrdpError> {
    let bytes = hex::decode(s).map_err(|_| RrdpError::Hash(s.to_string()))?;
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(RrdpError::Hash(s.to_string()));
    }
    bytes.try_into().map_err(|_| RrdpError::Hash(s.to_string()))
}

//------------ Snapshot -------------------------------------------------------

type State = BTreeMap<String, BTreeMap<String, Vec<u8>>>;

impl Snapshot {
    /// Builds a snapshot from unordered content, sorting CAs and entries.
    pub fn from_objects(session_id: String, serial: u64, objects: impl IntoIterator<Item = (String, String, Vec<u8>)>) -> Self {
        let mut state = State::new();
        for (repo, name, content) in objects {
            state.entry(repo).or_default().insert(name, content);
        }
        Snapshot::from_state(session_id, serial, state)
    }

    fn from_state(session_id: String, serial: u64, state: State) -> Self {
        let cas = state
            .into_iter()
            .filter(|(_, entries)| !entries.is_empty())
            .map(|(repo_uri, entries)| SnapshotCa {
                repo_uri,
                entries: entries.into_iter().map(|(name, content)| SnapshotEntry { name, content }).collect(),
            })
            .collect();
        Snapshot { session_id, serial, cas }
    }

    fn into_state(self) -> State {
        self.cas
            .into_iter()
            .map(|ca| (ca.repo_uri, ca.entries.into_iter().map(|e| (e.name, e.content)).collect()))
            .collect()
    }

    pub fn check(&self) -> Result<(), RrdpError> {
        check_header(&self.session_id, self.serial)?;
        check_repo_order(self.cas.iter().map(|c| c.repo_uri.as_str()))?;
        for ca in &self.cas {
            check_name_order(ca.entries.iter().map(|e| e.name.as_str()))?;
        }
        Ok(())
    }

    /// The published objects as (repository, name, content), ignoring the
    /// session, serial and empty CA groups.
    pub fn objects(&self) -> Vec<(&str, &str, &[u8])> {
        self.cas
            .iter()
            .flat_map(|ca| ca.entries.iter().map(move |e| (ca.repo_uri.as_str(), e.name.as_str(), e.content.as_slice())))
            .collect()
    }

    pub fn object_count(&self) -> usize {
        self.cas.iter().map(|c| c.entries.len()).sum()
    }

    pub fn get(&self, repo_uri: &str, name: &str) -> Option<&[u8]> {
        let ca = self.cas.iter().find(|c| c.repo_uri == repo_uri)?;
        ca.entries.iter().find(|e| e.name == name).map(|e| e.content.as_slice())
    }

    pub fn encode(&self, format: RrdpFormat) -> Vec<u8> {
        match format {
            RrdpFormat::LegacyXml => xml::encode_snapshot(self, false),
            RrdpFormat::ImprovedXml => xml::encode_snapshot(self, true),
            RrdpFormat::ImprovedProto => proto::encode_snapshot(self),
        }
    }

    pub fn decode(data: &[u8], format: RrdpFormat) -> Result<Self, RrdpError> {
        let s = match format {
            RrdpFormat::LegacyXml => xml::decode_snapshot(data, false)?,
            RrdpFormat::ImprovedXml => xml::decode_snapshot(data, true)?,
            RrdpFormat::ImprovedProto => proto::decode_snapshot(data)?,
        };
        s.check()?;
        Ok(s)
    }

    /// The delta that turns `self` into `new`.
    pub fn diff(&self, new: &Snapshot) -> Delta {
        let old = self.clone().into_state();
        let new_state = new.clone().into_state();
        let empty = BTreeMap::new();
        let mut repos: Vec<&String> = old.keys().chain(new_state.keys()).collect();
        repos.sort();
        repos.dedup();
        let mut cas = Vec::new();
        for repo in repos {
            let before = old.get(repo).unwrap_or(&empty);
            let after = new_state.get(repo).unwrap_or(&empty);
            let modified: Vec<Publish> = after
                .iter()
                .filter(|(name, content)| before.get(*name) != Some(content))
                .map(|(name, content)| Publish {
                    name: name.clone(),
                    hash: before.get(name).map(|c| hash(c)),
                    content: content.clone(),
                })
                .collect();
            let withdrawn: Vec<Withdraw> = before
                .iter()
                .filter(|(name, _)| !after.contains_key(*name))
                .map(|(name, content)| Withdraw { name: name.clone(), hash: hash(content) })
                .collect();
            if !modified.is_empty() || !withdrawn.is_empty() {
                cas.push(DeltaCa { repo_uri: repo.clone(), modified, withdrawn });
            }
        }
        Delta { session_id: new.session_id.clone(), serial: new.serial, cas }
    }
}

/// Applies a delta to a state. Any error means the client has to fall back
/// to the snapshot.
pub fn apply_delta(state: Snapshot, delta: &Delta) -> Result<Snapshot, RrdpError> {
    if state.session_id != delta.session_id {
        return Err(RrdpError::SessionMismatch);
    }
    if delta.serial != state.serial + 1 {
        return Err(RrdpError::SerialGap { have: state.serial, got: delta.serial });
    }
    let session = state.session_id.clone();
    let mut objects = state.into_state();
    for ca in &delta.cas {
        let entries = objects.entry(ca.repo_uri.clone()).or_default();
        for p in &ca.modified {
            let uri = format!("{}{}", ca.repo_uri, p.name);
            match (entries.get(&p.name), p.hash) {
                (Some(old), Some(h)) if hash(old) == h => {}
                (Some(_), Some(_)) => return Err(RrdpError::HashPrecondition(uri)),
                (Some(_), None) => return Err(RrdpError::Exists(uri)),
                (None, Some(_)) => return Err(RrdpError::Missing(uri)),
                (None, None) => {}
            }
            entries.insert(p.name.clone(), p.content.clone());
        }
        for w in &ca.withdrawn {
            let uri = format!("{}{}", ca.repo_uri, w.name);
            match entries.remove(&w.name) {
                Some(old) if hash(&old) == w.hash => {}
                Some(_) => return Err(RrdpError::HashPrecondition(uri)),
                None => return Err(RrdpError::Missing(uri)),
            }
        }
    }
    Ok(Snapshot::from_state(session, delta.serial, objects))
}

//------------ Delta ----------------------------------------------------------

impl Delta {
    pub fn check(&self) -> Result<(), RrdpError> {
        check_header(&self.session_id, self.serial)?;
        check_repo_order(self.cas.iter().map(|c| c.repo_uri.as_str()))?;
        for ca in &self.cas {
            if ca.modified.is_empty() && ca.withdrawn.is_empty() {
                return Err(RrdpError::EmptyGroup);
            }
            check_name_order(ca.modified.iter().map(|e| e.name.as_str()))?;
            check_name_order(ca.withdrawn.iter().map(|e| e.name.as_str()))?;
            let mut names: Vec<&str> =
                ca.modified.iter().map(|e| e.name.as_str()).chain(ca.withdrawn.iter().map(|e| e.name.as_str())).collect();
            names.sort_unstable();
            if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
                return Err(RrdpError::NameOrder(w[0].to_string()));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.cas.is_empty()
    }

    pub fn encode(&self, format: RrdpFormat) -> Vec<u8> {
        match format {
            RrdpFormat::LegacyXml => xml::encode_delta(self, false),
            RrdpFormat::ImprovedXml => xml::encode_delta(self, true),
            RrdpFormat::ImprovedProto => proto::encode_delta(self),
        }
    }

    pub fn decode(data: &[u8], format: RrdpFormat) -> Result<Self, RrdpError> {
        let d = match format {
            RrdpFormat::LegacyXml => xml::decode_delta(data, false)?,
            RrdpFormat::ImprovedXml => xml::decode_delta(data, true)?,
            RrdpFormat::ImprovedProto => proto::decode_delta(data)?,
        };
        d.check()?;
        Ok(d)
    }
}

//------------ Notification ---------------------------------------------------

impl Notification {
    pub fn check(&self) -> Result<(), RrdpError> {
        check_header(&self.session_id, self.serial)?;
        let mut expect = self.serial;
        for d in &self.deltas {
            if d.serial != expect || d.serial == 0 {
                return Err(RrdpError::DeltaRefs);
            }
            expect -= 1;
        }
        Ok(())
    }

    pub fn encode(&self, format: RrdpFormat) -> Vec<u8> {
        match format {
            RrdpFormat::LegacyXml | RrdpFormat::ImprovedXml => xml::encode_notification(self),
            RrdpFormat::ImprovedProto => proto::encode_notification(self),
        }
    }

    pub fn decode(data: &[u8], format: RrdpFormat) -> Result<Self, RrdpError> {
        let n = match format {
            RrdpFormat::LegacyXml | RrdpFormat::ImprovedXml => xml::decode_notification(data)?,
            RrdpFormat::ImprovedProto => proto::decode_notification(data)?,
        };
        n.check()?;
        Ok(n)
    }

    /// The deltas needed to move from `serial` to the current serial, oldest
    /// first, or `None` if they are not all available.
    pub fn deltas_since(&self, serial: u64) -> Option<Vec<&DeltaRef>> {
        if serial > self.serial {
            return None;
        }
        let needed = (self.serial - serial) as usize;
        if needed > self.deltas.len() {
            return None;
        }
        Some(self.deltas[..needed].iter().rev().collect())
    }
}

/// Resolves a reference from a notification file against the notification
/// URI. Absolute references are returned unchanged.
pub fn resolve_uri(notification_uri: &str, reference: &str) -> String {
    if reference.contains("://") {
        return reference.to_string();
    }
    match notification_uri.rfind('/') {
        Some(i) => format!("{}{}", &notification_uri[..=i], reference),
        None => reference.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SESSION: &str = "9df4b597-af9e-4dca-bdda-719cce2c4e28";

    fn snap(serial: u64, objs: &[(&str, &str, &[u8])]) -> Snapshot {
        Snapshot::from_objects(
            SESSION.into(),
            serial,
            objs.iter().map(|(r, n, c)| (r.to_string(), n.to_string(), c.to_vec())),
        )
    }

    #[test]
    fn diff_then_apply() {
        let a = snap(1, &[("rsync://h/a/", "x.roa", b"1"), ("rsync://h/a/", "y.roa", b"2"), ("rsync://h/b/", "z.roa", b"3")]);
        let b = snap(2, &[("rsync://h/a/", "x.roa", b"1"), ("rsync://h/a/", "y.roa", b"22"), ("rsync://h/c/", "w.roa", b"4")]);
        let d = a.diff(&b);
        d.check().unwrap();
        let applied = apply_delta(a.clone(), &d).unwrap();
        assert_eq!(applied.objects(), b.objects());
        assert_eq!(applied.serial, 2);
    }

    #[test]
    fn withdrawing_last_object_drops_group() {
        let a = snap(1, &[("rsync://h/a/", "x.roa", b"1")]);
        let d = Delta {
            session_id: SESSION.into(),
            serial: 2,
            cas: vec![DeltaCa {
                repo_uri: "rsync://h/a/".into(),
                modified: vec![],
                withdrawn: vec![Withdraw { name: "x.roa".into(), hash: hash(b"1") }],
            }],
        };
        let s = apply_delta(a, &d).unwrap();
        assert!(s.cas.is_empty());
        assert_eq!(s, snap(2, &[]));
    }

    #[test]
    fn apply_rejects_gaps_and_bad_hashes() {
        let a = snap(1, &[("rsync://h/a/", "x.roa", b"1")]);
        let mut d = a.diff(&snap(3, &[]));
        assert_eq!(apply_delta(a.clone(), &d), Err(RrdpError::SerialGap { have: 1, got: 3 }));
        d.serial = 2;
        d.cas[0].withdrawn[0].hash = hash(b"other");
        assert!(matches!(apply_delta(a.clone(), &d), Err(RrdpError::HashPrecondition(_))));
        d.session_id = "1df4b597-af9e-4dca-bdda-719cce2c4e28".into();
        assert_eq!(apply_delta(a, &d), Err(RrdpError::SessionMismatch));
    }

    #[test]
    fn notification_delta_selection() {
        let h = [0u8; 32];
        let n = Notification {
            session_id: SESSION.into(),
            serial: 5,
            snapshot: SnapshotRef { uri: "snapshot.bin".into(), hash: h },
            deltas: (3..=5).rev().map(|s| DeltaRef { serial: s, uri: format!("delta-{s}.bin"), hash: h }).collect(),
        };
        n.check().unwrap();
        let picked: Vec<u64> = n.deltas_since(3).unwrap().iter().map(|d| d.serial).collect();
        assert_eq!(picked, vec![4, 5]);
        assert!(n.deltas_since(1).is_none());
        assert_eq!(n.deltas_since(5).unwrap().len(), 0);
    }

    #[test]
    fn relative_references() {
        let n = "http://host/rrdp/notification.bin";
        assert_eq!(resolve_uri(n, "snapshot.bin"), "http://host/rrdp/snapshot.bin");
        assert_eq!(resolve_uri(n, "http://o/x.xml"), "http://o/x.xml");
    }
}
