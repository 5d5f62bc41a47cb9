//! Conversion of a legacy tree into a parallel improved tree.

use std::collections::{BTreeMap, HashMap};
use std::fs;

use serde::Serialize;

use super::generate::{read_certs, read_objects, session_id, write_objects, CaContext, Objects};
use super::layout::{PublishedTree, TreeState, IMPROVED_DIR, RRDP_DIR};
use super::{io_err, publish, Ablation, RepoError, RepositoryTree};
use crate::crypto::SignatureCounter;
use crate::object::verify::Rejection;
use crate::object::{decode_roa, RevokedEntry};
use crate::resources::ResourceSet;
use crate::rp::point::{roa_variant, validate_point, ObjectRejection, PointFiles};
use crate::rrdp::RrdpFormat;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConversionReport {
    /// The source already was an improved tree and was left alone.
    pub passthrough: bool,
    pub converted_cas: usize,
    pub roas: usize,
    /// Revocation entries carried from CRLs into merged manifests.
    pub revocations: usize,
    /// CAs that were not converted, with the reason.
    pub failed: Vec<(String, String)>,
    /// Serials used by more than one object of a CA.
    pub collisions: Vec<(String, u64)>,
    pub legacy_snapshot_bytes: u64,
    pub improved_snapshot_bytes: u64,
}

fn renamed(name: &str) -> String {
    match name.strip_suffix(".roa") {
        Some(stem) => format!("{stem}.iroa"),
        None => name.to_string(),
    }
}

/// Converts the legacy tree of `tree` into an improved tree published next
/// to it. The legacy mirror and RRDP files are not touched. `now` is the
/// time the legacy tree is validated at.
pub fn convert(tree: &mut RepositoryTree, now: i64) -> Result<ConversionReport, RepoError> {
    let profile = Ablation::Full.profile();
    let source = &tree.trees[0];
    let mut report = ConversionReport::default();
    if source.profile == profile {
        report.passthrough = true;
        return Ok(report);
    }
    if source.profile.rrdp != RrdpFormat::LegacyXml {
        return Err(RepoError::Unsupported("only trees published as legacy XML can be converted".into()));
    }
    let mirror = tree.mirror(source);
    let certs = read_certs(tree, &mirror)?;
    let pool = tree.keys()?;
    let counter = SignatureCounter::new();
    let target = tree.root.join(IMPROVED_DIR);
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io_err(&target))?;
    }

    let mut resources: Vec<Option<ResourceSet>> = vec![None; tree.cas.len()];
    let mut states = Vec::with_capacity(tree.cas.len());
    for (c, info) in tree.cas.iter().enumerate() {
        let parent_resources = match info.parent {
            None => certs[c].explicit_resources(),
            Some(p) => resources[p].clone(),
        };
        let fail = |report: &mut ConversionReport, why: String| report.failed.push((info.handle.clone(), why));
        let Some(parent_resources) = parent_resources else {
            fail(&mut report, "issuer was not converted".into());
            states.push(TreeState { manifest_number: 0, revoked: Vec::new() });
            continue;
        };
        let own = certs[c].effective_resources(&parent_resources);
        let legacy = read_objects(&mirror, &info.repo_uri)?;
        let files: PointFiles = legacy.iter().map(|(n, d)| (n.as_str(), d.as_slice())).collect();
        let outcome = match validate_point(&files, &certs[c], &own, now, &counter, None) {
            Ok(o) => o,
            Err(e) => {
                fail(&mut report, e.to_string());
                states.push(TreeState { manifest_number: 0, revoked: Vec::new() });
                continue;
            }
        };

        // Revoked or expired ROAs are carried over; the revocation list or
        // their validity keeps them out of the output as before.
        let mut payloads: BTreeMap<String, _> = outcome.roas.into_iter().collect();
        let mut invalid = None;
        for (name, why) in &outcome.rejected {
            let data = &legacy[name];
            let carried = matches!(
                why,
                ObjectRejection::Roa(Rejection::Expired | Rejection::NotYetValid | Rejection::Revoked(_))
            );
            match roa_variant(name, data).filter(|_| carried).map(|v| decode_roa(data, v)) {
                Some(Ok(d)) => {
                    payloads.insert(name.clone(), d.payload);
                }
                _ if matches!(why, ObjectRejection::Cert(_)) => {}
                _ => invalid = Some(format!("{name}: {why}")),
            }
        }
        if let Some(why) = invalid {
            fail(&mut report, why);
            states.push(TreeState { manifest_number: 0, revoked: Vec::new() });
            continue;
        }

        let mut seen: HashMap<u64, usize> = HashMap::new();
        for p in payloads.values() {
            *seen.entry(p.serial).or_default() += 1;
        }
        for r in &outcome.revoked {
            seen.entry(r.serial).or_default();
        }
        let mut collisions: Vec<u64> = seen.into_iter().filter(|(_, n)| *n > 1).map(|(s, _)| s).collect();
        collisions.sort_unstable();
        report.collisions.extend(collisions.into_iter().map(|s| (info.handle.clone(), s)));

        let ctx = CaContext { info, cert: &certs[c], pool: &pool, counter: &counter };
        let mut objects = Objects::new();
        for (j, (name, payload)) in payloads.iter().enumerate() {
            let new_name = renamed(name);
            let bytes = ctx.encode_roa(payload, &profile, &new_name, j)?;
            objects.insert(new_name, bytes);
        }
        // Certificates are carried over unchanged.
        for (name, data) in &legacy {
            if name.ends_with(".cer") {
                objects.insert(name.clone(), data.clone());
            }
        }
        let revoked: Vec<RevokedEntry> = outcome.revoked.clone();
        let state = TreeState { manifest_number: outcome.manifest.manifest.number, revoked };
        ctx.sign_publication_point(&mut objects, &state, outcome.manifest.manifest.this_update, &profile)?;
        write_objects(&target, &info.repo_uri, &objects)?;

        report.converted_cas += 1;
        report.roas += payloads.len();
        report.revocations += state.revoked.len();
        resources[c] = Some(own);
        states.push(state);
    }

    match tree.trees.iter().position(|t| t.dir == IMPROVED_DIR) {
        Some(i) => tree.trees[i].cas = states,
        None => tree.trees.push(PublishedTree {
            dir: IMPROVED_DIR.to_string(),
            profile,
            session_id: session_id(&tree.scenario.seed, IMPROVED_DIR),
            serial: 0,
            deltas: Vec::new(),
            cas: states,
        }),
    }
    let index = tree.trees.iter().position(|t| t.dir == IMPROVED_DIR).expect("tree added above");
    publish(tree, index)?;
    tree.save()?;

    let size = |format: RrdpFormat| {
        let path = tree.root.join(RRDP_DIR).join(format!("snapshot.{}", format.extension()));
        fs::metadata(path).map(|m| m.len()).unwrap_or(0)
    };
    report.legacy_snapshot_bytes = size(RrdpFormat::LegacyXml);
    report.improved_snapshot_bytes = size(RrdpFormat::ImprovedProto);
    log::info!(
        "converted {} CAs with {} ROAs; {} failed",
        report.converted_cas,
        report.roas,
        report.failed.len()
    );
    Ok(report)
}
