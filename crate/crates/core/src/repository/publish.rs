//! Turns an object mirror into RRDP files.

use std::fs;
use std::path::Path;

use super::layout::{DeltaRecord, HTTP_BASE, RRDP_DIR, RSYNC_BASE};
use super::{io_err, RepoError, RepositoryTree};
use crate::rrdp::{self, DeltaRef, Notification, RrdpFormat, Snapshot, SnapshotRef};

/// Reads every object below a mirror directory as (repository URI, name,
/// content).
pub fn read_mirror(mirror: &Path) -> Result<Vec<(String, String, Vec<u8>)>, RepoError> {
    fn walk(dir: &Path, rel: &str, out: &mut Vec<(String, String, Vec<u8>)>) -> Result<(), RepoError> {
        let mut entries: Vec<_> = fs::read_dir(dir).map_err(io_err(dir))?.collect::<Result<_, _>>().map_err(io_err(dir))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            let name = e.file_name().to_string_lossy().into_owned();
            if path.is_dir() {
                walk(&path, &format!("{rel}{name}/"), out)?;
            } else if !rel.is_empty() {
                let content = fs::read(&path).map_err(io_err(&path))?;
                out.push((format!("{RSYNC_BASE}{rel}"), name, content));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if mirror.exists() {
        walk(mirror, "", &mut out)?;
    }
    Ok(out)
}

fn file_name(kind: &str, format: RrdpFormat) -> String {
    format!("{kind}.{}", format.extension())
}

/// Legacy notifications carry absolute URIs, improved ones relative URIs.
fn reference(name: &str, format: RrdpFormat) -> String {
    match format {
        RrdpFormat::LegacyXml => format!("{HTTP_BASE}{RRDP_DIR}/{name}"),
        _ => name.to_string(),
    }
}

/// Publishes the current mirror content of tree `index` under a new serial.
/// Returns false if nothing changed since the last publication.
pub fn publish(tree: &mut RepositoryTree, index: usize) -> Result<bool, RepoError> {
    let rrdp_dir = tree.rrdp_dir();
    fs::create_dir_all(&rrdp_dir).map_err(io_err(&rrdp_dir))?;
    let mirror = tree.mirror(&tree.trees[index]);
    let t = &mut tree.trees[index];
    let format = t.profile.rrdp;
    let serial = t.serial + 1;
    let snapshot = Snapshot::from_objects(t.session_id.clone(), serial, read_mirror(&mirror)?);
    let snap_path = rrdp_dir.join(file_name("snapshot", format));

    if t.serial > 0 {
        let old_bytes = fs::read(&snap_path).map_err(io_err(&snap_path))?;
        let old = Snapshot::decode(&old_bytes, format)?;
        let delta = old.diff(&snapshot);
        if delta.is_empty() {
            return Ok(false);
        }
        let bytes = delta.encode(format);
        let path = rrdp_dir.join(file_name(&format!("delta-{serial}"), format));
        fs::write(&path, &bytes).map_err(io_err(&path))?;
        t.deltas.insert(0, DeltaRecord { serial, size: bytes.len() as u64, hash: hex::encode(rrdp::hash(&bytes)) });
    }

    let snap_bytes = snapshot.encode(format);
    fs::write(&snap_path, &snap_bytes).map_err(io_err(&snap_path))?;

    // Keep deltas while together they are no larger than the snapshot.
    let mut total = 0;
    let keep = t
        .deltas
        .iter()
        .take_while(|d| {
            total += d.size;
            total <= snap_bytes.len() as u64
        })
        .count();
    for d in t.deltas.drain(keep..) {
        let path = rrdp_dir.join(file_name(&format!("delta-{}", d.serial), format));
        let _ = fs::remove_file(path);
    }

    let notification = Notification {
        session_id: t.session_id.clone(),
        serial,
        snapshot: SnapshotRef { uri: reference(&file_name("snapshot", format), format), hash: rrdp::hash(&snap_bytes) },
        deltas: t
            .deltas
            .iter()
            .map(|d| DeltaRef {
                serial: d.serial,
                uri: reference(&file_name(&format!("delta-{}", d.serial), format), format),
                hash: hex::decode(&d.hash).ok().and_then(|h| h.try_into().ok()).unwrap_or_default(),
            })
            .collect(),
    };
    let path = rrdp_dir.join(file_name("notification", format));
    fs::write(&path, notification.encode(format)).map_err(io_err(&path))?;
    t.serial = serial;
    Ok(true)
}
