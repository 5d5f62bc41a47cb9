//! Repository mutations for failure tests.
//!
//! `flip_byte`, `delete` and `omit_from_manifest` act like a malicious
//! repository: they do not re-sign anything. `revoke` and `expire` act like
//! the legitimate issuer and re-sign the manifest (and CRL).

use std::fmt;
use std::str::FromStr;

use super::generate::{read_certs, read_objects, write_objects, CaContext};
use super::{publish, RepoError, RepositoryTree};
use crate::crypto::SignatureCounter;
use crate::object::{
    decode_manifest, decode_roa, detect_manifest_variant, replace_content_keeping_signature, CodecVariant,
    RevokedEntry,
};
use crate::rp::point::roa_variant;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TamperAction {
    FlipByte(String),
    Delete(String),
    OmitFromManifest(String),
    Revoke(u64),
    Expire(String),
}

impl fmt::Display for TamperAction {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            TamperAction::FlipByte(n) => write!(f, "flip_byte:{n}"),
            TamperAction::Delete(n) => write!(f, "delete:{n}"),
            TamperAction::OmitFromManifest(n) => write!(f, "omit_from_manifest:{n}"),
            TamperAction::Revoke(s) => write!(f, "revoke:{s}"),
            TamperAction::Expire(n) => write!(f, "expire:{n}"),
        }
    }
}

impl FromStr for TamperAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| format!("expected action:target, got {s:?}"))?;
        let arg = arg.to_string();
        Ok(match kind {
            "flip_byte" => TamperAction::FlipByte(arg),
            "delete" => TamperAction::Delete(arg),
            "omit_from_manifest" => TamperAction::OmitFromManifest(arg),
            "revoke" => TamperAction::Revoke(arg.parse().map_err(|_| format!("bad serial {arg:?}"))?),
            "expire" => TamperAction::Expire(arg),
            _ => return Err(format!("unknown tamper action {kind:?}")),
        })
    }
}

/// Locates the CA publishing file `name` in tree `index`.
fn owner(tree: &RepositoryTree, index: usize, name: &str) -> Result<usize, RepoError> {
    let mirror = tree.mirror(&tree.trees[index]);
    tree.cas
        .iter()
        .position(|ca| {
            super::layout::mirror_path(&mirror, &ca.repo_uri).is_some_and(|dir| dir.join(name).is_file())
        })
        .ok_or_else(|| RepoError::Target(name.to_string()))
}

fn manifest_name(objects: &super::generate::Objects) -> Option<String> {
    let imft = objects.keys().find(|n| n.ends_with(".imft"));
    imft.or_else(|| objects.keys().find(|n| n.ends_with(".mft"))).cloned()
}

fn manifest_variant(name: &str, data: &[u8]) -> Option<CodecVariant> {
    if name.ends_with(".mft") {
        Some(CodecVariant::LEGACY)
    } else {
        detect_manifest_variant(data)
    }
}

/// Applies `action` to the mirror of tree `index` and republishes it.
pub fn tamper(tree: &mut RepositoryTree, index: usize, action: &TamperAction) -> Result<(), RepoError> {
    if index >= tree.trees.len() {
        return Err(RepoError::Target(format!("tree {index}")));
    }
    let mirror = tree.mirror(&tree.trees[index]);
    match action {
        TamperAction::FlipByte(name) | TamperAction::Delete(name) | TamperAction::OmitFromManifest(name) => {
            let c = owner(tree, index, name)?;
            let repo = tree.cas[c].repo_uri.clone();
            let mut objects = read_objects(&mirror, &repo)?;
            match action {
                TamperAction::FlipByte(_) => {
                    let data = objects.get_mut(name).expect("owner found it");
                    let i = data.len() / 2;
                    data[i] ^= 0x01;
                }
                TamperAction::Delete(_) => {
                    objects.remove(name);
                }
                _ => {
                    let mft = manifest_name(&objects).ok_or_else(|| RepoError::Target("manifest".into()))?;
                    let data = &objects[&mft];
                    let variant = manifest_variant(&mft, data).ok_or_else(|| RepoError::Target(mft.clone()))?;
                    let mut m = decode_manifest(data, variant)?.manifest;
                    let before = m.files.len();
                    m.files.retain(|f| f.name != *name);
                    if m.files.len() == before {
                        return Err(RepoError::Target(name.clone()));
                    }
                    let bytes = replace_content_keeping_signature(data, variant, &m)?;
                    objects.insert(mft, bytes);
                }
            }
            write_objects(&mirror, &repo, &objects)?;
        }
        TamperAction::Revoke(serial) => {
            let c = find_serial(tree, index, *serial)?;
            reissue(tree, index, c, |state, _| {
                if !state.revoked.iter().any(|r| r.serial == *serial) {
                    state.revoked.push(RevokedEntry { serial: *serial, time: 0 });
                }
            })?;
        }
        TamperAction::Expire(name) => {
            let c = owner(tree, index, name)?;
            reissue(tree, index, c, |_, pending| pending.expire.push(name.clone()))?;
        }
    }
    publish(tree, index)?;
    tree.save()
}

/// Finds the CA that issued the ROA or certificate with `serial`.
fn find_serial(tree: &RepositoryTree, index: usize, serial: u64) -> Result<usize, RepoError> {
    let mirror = tree.mirror(&tree.trees[index]);
    for (c, ca) in tree.cas.iter().enumerate() {
        let objects = read_objects(&mirror, &ca.repo_uri)?;
        for (name, data) in &objects {
            let found = if let Some(v) = roa_variant(name, data) {
                decode_roa(data, v).is_ok_and(|d| d.payload.serial == serial)
            } else if name.ends_with(".cer") && name != super::TA_CERT_NAME {
                crate::crypto::Certificate::decode(data).is_ok_and(|cert| cert.serial == serial)
            } else {
                false
            };
            if found {
                return Ok(c);
            }
        }
    }
    Err(RepoError::Target(format!("serial {serial}")))
}

/// Pending issuer-side changes.
struct Reissue {
    expire: Vec<String>,
}

/// Re-signs the publication point of CA `c` after `change`, with a fresh
/// manifest number and the original validity window.
fn reissue(
    tree: &mut RepositoryTree,
    index: usize,
    c: usize,
    change: impl FnOnce(&mut super::TreeState, &mut Reissue),
) -> Result<(), RepoError> {
    let mirror = tree.mirror(&tree.trees[index]);
    let profile = tree.trees[index].profile;
    let certs = read_certs(tree, &mirror)?;
    let pool = tree.keys()?;
    let counter = SignatureCounter::new();
    let mut state = tree.trees[index].cas[c].clone();
    let mut pending = Reissue { expire: Vec::new() };
    change(&mut state, &mut pending);

    let repo = tree.cas[c].repo_uri.clone();
    let mut objects = read_objects(&mirror, &repo)?;
    let mft = manifest_name(&objects).ok_or_else(|| RepoError::Target("manifest".into()))?;
    let variant = manifest_variant(&mft, &objects[&mft]).ok_or_else(|| RepoError::Target(mft.clone()))?;
    let this_update = decode_manifest(&objects[&mft], variant)?.manifest.this_update;
    for r in &mut state.revoked {
        if r.time == 0 {
            r.time = this_update;
        }
    }
    state.manifest_number = tree.cas[c].allocate_serial();

    let info = &tree.cas[c];
    let ctx = CaContext { info, cert: &certs[c], pool: &pool, counter: &counter };
    for name in &pending.expire {
        let data = &objects[name];
        let v = roa_variant(name, data).ok_or_else(|| RepoError::Target(name.clone()))?;
        let mut payload = decode_roa(data, v)?.payload;
        // Expires a minute after issuance.
        payload.not_after = payload.not_before + 60;
        let j = objects.keys().position(|n| n == name).unwrap_or(0);
        let bytes = ctx.encode_roa(&payload, &profile, name, j)?;
        objects.insert(name.clone(), bytes);
    }
    ctx.sign_publication_point(&mut objects, &state, this_update, &profile)?;
    write_objects(&mirror, &repo, &objects)?;
    tree.trees[index].cas[c] = state;
    Ok(())
}
