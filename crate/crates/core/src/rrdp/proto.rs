//! The proto3 forms. Hashes are raw 32-byte values.

use super::*;
use crate::proto::{Fields, ProtoError, Writer};

fn to_hash(field: u32, b: &[u8]) -> Result<Hash, RrdpError> {
    b.try_into().map_err(|_| ProtoError::Invalid(field, "hash length").into())
}

fn string(b: &[u8], field: u32) -> Result<String, RrdpError> {
    String::from_utf8(b.to_vec()).map_err(|_| ProtoError::Invalid(field, "utf-8").into())
}

//--- Notification

pub fn encode_notification(n: &Notification) -> Vec<u8> {
    let snapshot = Writer::new().string(1, &n.snapshot.uri).bytes(2, &n.snapshot.hash).finish();
    let mut w = Writer::new();
    w.uint(1, n.serial).string(2, &n.session_id).message(3, &snapshot);
    for d in &n.deltas {
        w.message(4, &Writer::new().string(1, &d.uri).bytes(2, &d.hash).uint(3, d.serial).finish());
    }
    w.finish()
}

pub fn decode_notification(data: &[u8]) -> Result<Notification, RrdpError> {
    let mut f = Fields::parse(data)?;
    let serial = f.uint(1)?;
    let session_id = f.string(2)?.to_string();
    let mut s = Fields::parse(f.required_message(3)?)?;
    let snapshot = SnapshotRef { uri: s.string(1)?.to_string(), hash: to_hash(2, s.bytes(2)?)? };
    s.finish()?;
    let deltas = f
        .repeated(4)?
        .into_iter()
        .map(|b| {
            let mut d = Fields::parse(b)?;
            let uri = d.string(1)?.to_string();
            let hash = to_hash(2, d.bytes(2)?)?;
            let serial = d.uint(3)?;
            d.finish()?;
            Ok(DeltaRef { serial, uri, hash })
        })
        .collect::<Result<_, RrdpError>>()?;
    f.finish()?;
    Ok(Notification { session_id, serial, snapshot, deltas })
}

//--- Snapshot

pub fn encode_snapshot(s: &Snapshot) -> Vec<u8> {
    let mut w = Writer::new();
    w.uint(1, s.serial).string(2, &s.session_id);
    for ca in &s.cas {
        let mut c = Writer::new();
        c.string(1, &ca.repo_uri);
        for e in &ca.entries {
            c.message(2, &Writer::new().string(1, &e.name).bytes(2, &e.content).finish());
        }
        w.message(3, &c.finish());
    }
    w.finish()
}

pub fn decode_snapshot(data: &[u8]) -> Result<Snapshot, RrdpError> {
    let mut f = Fields::parse(data)?;
    let serial = f.uint(1)?;
    let session_id = f.string(2)?.to_string();
    let mut cas = Vec::new();
    for b in f.repeated(3)? {
        let mut c = Fields::parse(b)?;
        let repo_uri = c.string(1)?.to_string();
        let mut entries = Vec::new();
        for e in c.repeated(2)? {
            let mut e = Fields::parse(e)?;
            let name = e.string(1)?.to_string();
            let content = e.bytes(2)?.to_vec();
            e.finish()?;
            entries.push(SnapshotEntry { name, content });
        }
        c.finish()?;
        cas.push(SnapshotCa { repo_uri, entries });
    }
    f.finish()?;
    Ok(Snapshot { session_id, serial, cas })
}

//--- Delta

pub fn encode_delta(d: &Delta) -> Vec<u8> {
    let mut w = Writer::new();
    w.uint(1, d.serial).string(2, &d.session_id);
    for ca in &d.cas {
        let mut c = Writer::new();
        c.string(1, &ca.repo_uri);
        for p in &ca.modified {
            let entry = Writer::new()
                .string(1, &p.name)
                .opt_bytes(2, p.hash.as_ref().map(|h| h.as_slice()))
                .opt_bytes(3, Some(&p.content))
                .finish();
            c.message(2, &entry);
        }
        for wd in &ca.withdrawn {
            c.message(3, &Writer::new().string(1, &wd.name).opt_bytes(2, Some(&wd.hash)).finish());
        }
        w.message(3, &c.finish());
    }
    w.finish()
}

pub fn decode_delta(data: &[u8]) -> Result<Delta, RrdpError> {
    let mut f = Fields::parse(data)?;
    let serial = f.uint(1)?;
    let session_id = f.string(2)?.to_string();
    let mut cas = Vec::new();
    for b in f.repeated(3)? {
        let mut c = Fields::parse(b)?;
        let repo_uri = c.string(1)?.to_string();
        let mut modified = Vec::new();
        for e in c.repeated(2)? {
            let mut e = Fields::parse(e)?;
            let name = string(e.bytes(1)?, 1)?;
            let hash = e.opt_bytes(2)?.map(|h| to_hash(2, h)).transpose()?;
            let content = e.opt_bytes(3)?.ok_or(ProtoError::Missing(3))?.to_vec();
            e.finish()?;
            modified.push(Publish { name, hash, content });
        }
        let mut withdrawn = Vec::new();
        for e in c.repeated(3)? {
            let mut e = Fields::parse(e)?;
            let name = string(e.bytes(1)?, 1)?;
            let hash = to_hash(2, e.opt_bytes(2)?.ok_or(ProtoError::Missing(2))?)?;
            e.finish()?;
            withdrawn.push(Withdraw { name, hash });
        }
        c.finish()?;
        cas.push(DeltaCa { repo_uri, modified, withdrawn });
    }
    f.finish()?;
    Ok(Delta { session_id, serial, cas })
}
