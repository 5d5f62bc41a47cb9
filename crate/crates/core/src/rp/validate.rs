//! Top-down validation of a cached repository.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use super::cache::CachedRepository;
use super::point::{validate_point, PointFailure, PointFiles};
use super::{CaFailure, FetchMetrics, Vrp, VrpSet};
use crate::crypto::{Certificate, SignatureCounter, TrustAnchorLocator};
use crate::resources::ResourceSet;

/// Finds and checks the trust anchor certificate: self-signed, current
/// and carrying the TAL's key. Costs one verification.
fn trust_anchor(
    tal: &TrustAnchorLocator,
    points: &BTreeMap<&str, PointFiles>,
    now: i64,
    counter: &SignatureCounter,
) -> Result<(Certificate, ResourceSet), String> {
    let named = points.values().flat_map(|f| f.iter()).filter(|(n, _)| **n == crate::repository::TA_CERT_NAME);
    let others = points.values().flat_map(|f| f.iter()).filter(|(n, _)| n.ends_with(".cer"));
    let spki = tal.public_key.spki();
    let data = named
        .chain(others)
        .map(|(_, d)| *d)
        .find(|d| d.windows(spki.len()).any(|w| w == spki))
        .ok_or("trust anchor certificate not found")?;
    let cert = Certificate::decode(data).map_err(|e| format!("trust anchor: {e}"))?;
    if !cert.is_ca() || !cert.is_self_signed() || cert.public_key.spki() != spki {
        return Err("trust anchor certificate does not match the TAL".into());
    }
    if !cert.verify_signature(&tal.public_key, counter) {
        return Err("trust anchor signature does not verify".into());
    }
    cert.check_validity(now).map_err(|e| format!("trust anchor: {e}"))?;
    let resources = cert.explicit_resources().ok_or("trust anchor inherits resources")?;
    Ok((cert, resources))
}

enum Outcome {
    Valid { repo: String, number: u64, vrps: Vec<Vrp>, accepted: u64, rejected: u64, children: Vec<(Certificate, ResourceSet)> },
    Stale { repo: String, reason: String },
    Failed { repo: String, reason: String },
}

/// Validates everything below the trust anchor of `tal` in `repo`,
/// updating the per-CA state kept in the cache metadata.
pub fn validate(
    tal: &TrustAnchorLocator,
    repo: &mut CachedRepository,
    now: i64,
    counter: &SignatureCounter,
    metrics: &mut FetchMetrics,
) -> VrpSet {
    let points: BTreeMap<&str, PointFiles> = repo
        .state
        .cas
        .iter()
        .map(|ca| (ca.repo_uri.as_str(), ca.entries.iter().map(|e| (e.name.as_str(), e.content.as_slice())).collect()))
        .collect();
    let (ta, resources) = match trust_anchor(tal, &points, now, counter) {
        Ok(t) => t,
        Err(reason) => {
            metrics.failures.push(CaFailure { ca: tal.notification_uri.clone(), reason });
            return VrpSet::default();
        }
    };

    let meta = &mut repo.meta;
    let mut vrps = Vec::new();
    let mut seen = HashSet::new();
    let mut level = vec![(ta, resources)];
    while !level.is_empty() {
        // Keys may be shared between CAs, repositories may not.
        level.retain(|(cert, _)| seen.insert(cert.repo_uri().unwrap_or_default().to_string()));
        let outcomes: Vec<Outcome> = level
            .par_iter()
            .map(|(cert, resources)| {
                let Some(repo_uri) = cert.repo_uri() else {
                    return Outcome::Failed { repo: cert.subject.clone(), reason: "no repository URI".into() };
                };
                let repo = repo_uri.to_string();
                let Some(files) = points.get(repo_uri) else {
                    return Outcome::Failed { repo, reason: PointFailure::NoManifest.to_string() };
                };
                let cached = meta.manifest_numbers.get(repo_uri).copied();
                match validate_point(files, cert, resources, now, counter, cached) {
                    Ok(o) => Outcome::Valid {
                        number: o.manifest.manifest.number,
                        vrps: o.roas.iter().flat_map(|(_, p)| Vrp::from_payload(p)).collect(),
                        accepted: (o.roas.len() + o.children.len()) as u64,
                        rejected: o.rejected.len() as u64,
                        children: o.children.into_iter().map(|c| (c.cert, c.resources)).collect(),
                        repo,
                    },
                    Err(e @ PointFailure::Stale { .. }) => Outcome::Stale { repo, reason: e.to_string() },
                    Err(e) => Outcome::Failed { repo, reason: e.to_string() },
                }
            })
            .collect();

        let mut next = Vec::new();
        for outcome in outcomes {
            match outcome {
                Outcome::Valid { repo, number, vrps: found, accepted, rejected, children } => {
                    metrics.objects_accepted += accepted;
                    metrics.objects_rejected += rejected;
                    vrps.extend_from_slice(&found);
                    meta.manifest_numbers.insert(repo.clone(), number);
                    meta.vrps.insert(repo, found);
                    next.extend(children);
                }
                Outcome::Stale { repo, reason } => {
                    metrics.warnings.push(format!("{repo}: {reason}; keeping cached data"));
                    if let Some(cached) = meta.vrps.get(&repo) {
                        vrps.extend_from_slice(cached);
                    }
                }
                Outcome::Failed { repo, reason } => {
                    meta.vrps.remove(&repo);
                    metrics.failures.push(CaFailure { ca: repo, reason });
                }
            }
        }
        level = next;
    }
    metrics.failures.sort_by(|a, b| a.ca.cmp(&b.ca));
    VrpSet::new(vrps)
}
