//! Strategies and round-trip checks shared by the codec property tests and
//! the acceptance run.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use irpki::crypto::{
    issue, AsResources, CertKind, CertTemplate, Certificate, CountingSigner, IpResources, Issuer, KeyPool,
    SignatureCounter,
};
use irpki::object::{
    decode_manifest, decode_roa, encode_manifest, encode_roa, CodecVariant, Crl, CrlMode, EeSigning, Encoding,
    Envelope, FileAndHash, Manifest, ObjectSigner, RevokedEntry, RoaPayload, RoaPrefix,
};
use irpki::resources::{AsRange, Prefix};
use irpki::rrdp::{
    Delta, DeltaCa, DeltaRef, Notification, Publish, RrdpFormat, Snapshot, SnapshotCa, SnapshotEntry, SnapshotRef,
    Withdraw,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 10_000;

pub const ROA_VARIANTS: [CodecVariant; 5] = [
    CodecVariant::LEGACY,
    CodecVariant::new(Envelope::CmsEe, Encoding::Proto3, CrlMode::Standalone),
    CodecVariant::new(Envelope::DirectSigned, Encoding::Der, CrlMode::Standalone),
    CodecVariant::new(Envelope::Unsigned, Encoding::Der, CrlMode::Standalone),
    CodecVariant::new(Envelope::Unsigned, Encoding::Proto3, CrlMode::Standalone),
];

pub const MANIFEST_VARIANTS: [CodecVariant; 6] = [
    CodecVariant::LEGACY,
    CodecVariant::new(Envelope::CmsEe, Encoding::Proto3, CrlMode::Standalone),
    CodecVariant::new(Envelope::DirectSigned, Encoding::Der, CrlMode::Standalone),
    CodecVariant::new(Envelope::DirectSigned, Encoding::Der, CrlMode::Merged),
    CodecVariant::new(Envelope::DirectSigned, Encoding::Proto3, CrlMode::Standalone),
    CodecVariant::new(Envelope::DirectSigned, Encoding::Proto3, CrlMode::Merged),
];

pub const RRDP_FORMATS: [RrdpFormat; 3] = [RrdpFormat::LegacyXml, RrdpFormat::ImprovedXml, RrdpFormat::ImprovedProto];

const Y2000: i64 = 946_684_800;
const Y2100: i64 = 4_102_444_800;

//------------ Signing fixture ------------------------------------------------

pub struct Fixture {
    pub pool: KeyPool,
    pub counter: SignatureCounter,
    pub ca: Certificate,
}

impl Fixture {
    pub fn new() -> Self {
        let pool = KeyPool::for_seed(&[7; 32]);
        let counter = SignatureCounter::new();
        let key = pool.get(0);
        let ca = issue(
            CertTemplate {
                serial: 1,
                subject: "codec-ca".into(),
                not_before: Y2000,
                not_after: Y2100,
                public_key: key.public_key().clone(),
                ip_resources: Some(IpResources::Prefixes(vec![
                    Prefix::new(Ipv4Addr::UNSPECIFIED.into(), 0).unwrap(),
                    Prefix::new(Ipv6Addr::UNSPECIFIED.into(), 0).unwrap(),
                ])),
                as_resources: Some(AsResources::Ranges(vec![AsRange::all()])),
                kind: CertKind::Ca { repo_uri: "rsync://codec.test/repo/".into(), notify_uri: "https://codec.test/n.xml".into() },
            },
            Issuer::SelfSigned(&CountingSigner::new(key, &counter)),
        )
        .unwrap();
        Fixture { pool, counter, ca }
    }

    fn ca_signer(&self) -> CountingSigner<'_> {
        CountingSigner::new(self.pool.get(0), &self.counter)
    }

    fn ee_signer(&self) -> CountingSigner<'_> {
        CountingSigner::new(self.pool.get(1), &self.counter)
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

fn with_signer<R>(fx: &Fixture, envelope: Envelope, f: impl FnOnce(Option<ObjectSigner>) -> R) -> R {
    let ca = fx.ca_signer();
    let ee = fx.ee_signer();
    let signer = match envelope {
        Envelope::Unsigned => None,
        Envelope::DirectSigned => Some(ObjectSigner::Direct(&ca)),
        Envelope::CmsEe => Some(ObjectSigner::Ee(EeSigning {
            issuer: &fx.ca,
            issuer_signer: &ca,
            ee_key: &ee,
            crl_uri: "rsync://codec.test/repo/ca.crl",
            issuer_uri: "rsync://codec.test/ta.cer",
            object_uri: "rsync://codec.test/repo/object",
        })),
    };
    f(signer)
}

//------------ Strategies -----------------------------------------------------

pub fn prefix() -> impl Strategy<Value = Prefix> {
    prop_oneof![
        (any::<u32>(), 0u8..=32).prop_map(|(a, len)| {
            let mask = if len == 0 { 0 } else { u32::MAX << (32 - len) };
            Prefix::new(IpAddr::V4(Ipv4Addr::from(a & mask)), len).unwrap()
        }),
        (any::<u128>(), 0u8..=128).prop_map(|(a, len)| {
            let mask = if len == 0 { 0 } else { u128::MAX << (128 - len) };
            Prefix::new(IpAddr::V6(Ipv6Addr::from(a & mask)), len).unwrap()
        }),
    ]
}

pub fn roa_prefix() -> impl Strategy<Value = RoaPrefix> {
    (prefix(), any::<bool>(), any::<u8>()).prop_map(|(p, has_max, m)| {
        let bits = p.afi().bits();
        let max = has_max.then(|| p.len() + m % (bits - p.len() + 1));
        RoaPrefix::new(p, max)
    })
}

pub fn validity() -> impl Strategy<Value = (i64, i64)> {
    (Y2000..Y2100 - 400 * 86400, 1i64..366 * 86400).prop_map(|(nb, d)| (nb, nb + d))
}

/// CRL number, validity and revoked entries with distinct serials.
pub fn crl_case() -> impl Strategy<Value = (u64, (i64, i64), Vec<RevokedEntry>)> {
    (0..=u64::MAX, validity(), prop::collection::btree_map(1..=u64::MAX, Y2000..Y2100, 0..6)).prop_map(|(n, v, r)| {
        (n, v, r.into_iter().map(|(serial, time)| RevokedEntry { serial, time }).collect())
    })
}

pub fn roa_payload() -> impl Strategy<Value = RoaPayload> {
    (any::<u32>(), prop::collection::vec(roa_prefix(), 1..6), 1..=u64::MAX, validity()).prop_map(
        |(asn, mut prefixes, serial, (nb, na))| {
            prefixes.sort_by(|a, b| a.prefix.cmp(&b.prefix));
            prefixes.dedup_by(|a, b| a.prefix == b.prefix);
            RoaPayload::new(asn, prefixes, serial, nb, na)
        },
    )
}

pub fn file_name() -> impl Strategy<Value = String> {
    ("[a-zA-Z0-9_-]{1,16}", prop::sample::select(vec!["roa", "iroa", "cer", "crl", "gbr"]))
        .prop_map(|(stem, ext)| format!("{stem}.{ext}"))
}

fn revoked() -> impl Strategy<Value = Vec<RevokedEntry>> {
    prop::collection::btree_map(1..=u64::MAX, Y2000..Y2100, 0..6)
        .prop_map(|m| m.into_iter().map(|(serial, time)| RevokedEntry { serial, time }).collect())
}

/// A manifest and a variant it can be encoded in.
pub fn manifest_case() -> impl Strategy<Value = (Manifest, CodecVariant)> {
    (
        prop::sample::select(MANIFEST_VARIANTS.to_vec()),
        0..=u64::MAX,
        validity(),
        prop::collection::btree_map(file_name(), any::<[u8; 32]>(), 0..8),
        revoked(),
    )
        .prop_map(|(variant, number, (this_update, next_update), files, revoked)| {
            let merged = variant.crl_mode == CrlMode::Merged;
            let files = files
                .into_iter()
                .filter(|(n, _)| !(merged && n.ends_with(".crl")))
                .map(|(name, hash)| FileAndHash { name, hash })
                .collect();
            let revoked = if merged { revoked } else { Vec::new() };
            (Manifest { number, this_update, next_update, files, revoked }, variant)
        })
}

fn session() -> impl Strategy<Value = String> {
    any::<[u8; 16]>().prop_map(|b| uuid::Builder::from_random_bytes(b).into_uuid().hyphenated().to_string())
}

fn repo_uris(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set("[a-z0-9]{1,8}", 0..max)
        .prop_map(|s| s.into_iter().map(|n| format!("rsync://rpki.test/repo/{n}/")).collect())
}

fn content() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..96)
}

/// Snapshots with at least one object per CA group, which every format
/// can carry.
pub fn snapshot() -> impl Strategy<Value = Snapshot> {
    (session(), 1..=u64::MAX, repo_uris(5))
        .prop_flat_map(|(session_id, serial, repos)| {
            let n = repos.len();
            (
                Just((session_id, serial, repos)),
                prop::collection::vec(prop::collection::btree_map(file_name(), content(), 1..5), n),
            )
        })
        .prop_map(|((session_id, serial, repos), groups)| Snapshot {
            session_id,
            serial,
            cas: repos
                .into_iter()
                .zip(groups)
                .map(|(repo_uri, entries)| SnapshotCa {
                    repo_uri,
                    entries: entries.into_iter().map(|(name, content)| SnapshotEntry { name, content }).collect(),
                })
                .collect(),
        })
}

pub fn delta() -> impl Strategy<Value = Delta> {
    (session(), 1..=u64::MAX, repo_uris(5))
        .prop_flat_map(|(session_id, serial, repos)| {
            let n = repos.len();
            let change = (any::<u8>(), content(), any::<[u8; 32]>());
            (
                Just((session_id, serial, repos)),
                prop::collection::vec(prop::collection::btree_map(file_name(), change, 1..5), n),
            )
        })
        .prop_map(|((session_id, serial, repos), groups)| Delta {
            session_id,
            serial,
            cas: repos
                .into_iter()
                .zip(groups)
                .map(|(repo_uri, changes)| {
                    let mut ca = DeltaCa { repo_uri, modified: Vec::new(), withdrawn: Vec::new() };
                    for (name, (kind, content, hash)) in changes {
                        match kind % 3 {
                            0 => ca.modified.push(Publish { name, hash: None, content }),
                            1 => ca.modified.push(Publish { name, hash: Some(hash), content }),
                            _ => ca.withdrawn.push(Withdraw { name, hash }),
                        }
                    }
                    ca
                })
                .collect(),
        })
}

pub fn notification() -> impl Strategy<Value = Notification> {
    (session(), 1..=u64::MAX, any::<[u8; 32]>(), prop::collection::vec(any::<[u8; 32]>(), 0..6), "[a-z0-9-]{1,12}")
        .prop_map(|(session_id, serial, snap_hash, delta_hashes, stem)| {
            let deltas = delta_hashes
                .into_iter()
                .take(serial.min(6) as usize)
                .enumerate()
                .map(|(i, hash)| {
                    let s = serial - i as u64;
                    DeltaRef { serial: s, uri: format!("{stem}/delta-{s}.xml"), hash }
                })
                .collect();
            Notification {
                session_id,
                serial,
                snapshot: SnapshotRef { uri: format!("https://rpki.test/{stem}/snapshot.xml"), hash: snap_hash },
                deltas,
            }
        })
}

/// Certificate resources as disjoint, non-adjacent IPv4 /16s and AS ranges
/// so that they have a single canonical encoding.
pub fn cert_template() -> impl Strategy<Value = (CertTemplate, bool)> {
    (
        1..=u64::MAX,
        "[A-Za-z0-9 ]{0,15}[A-Za-z0-9]",
        validity(),
        prop::collection::btree_set(0u32..32768, 0..5),
        prop::collection::btree_set(0u32..1_000_000, 0..4),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(serial, subject, (nb, na), blocks, asns, inherit, ca)| {
            let ip = if inherit {
                IpResources::Inherit
            } else {
                IpResources::Prefixes(
                    blocks.iter().map(|b| Prefix::new(IpAddr::V4(Ipv4Addr::from((b * 2) << 16)), 16).unwrap()).collect(),
                )
            };
            let asn = AsResources::Ranges(asns.iter().map(|a| AsRange::new(a * 4, a * 4 + 1).unwrap()).collect());
            let kind = if ca {
                CertKind::Ca { repo_uri: "rsync://rpki.test/repo/x/".into(), notify_uri: "https://rpki.test/n.xml".into() }
            } else {
                CertKind::Ee {
                    crl_uri: "rsync://rpki.test/repo/ca.crl".into(),
                    issuer_uri: "rsync://rpki.test/ta.cer".into(),
                    object_uri: "rsync://rpki.test/repo/x.roa".into(),
                }
            };
            let template = CertTemplate {
                serial,
                subject,
                not_before: nb,
                not_after: na,
                public_key: KeyPool::for_seed(&[7; 32]).get(2).public_key().clone(),
                ip_resources: Some(ip),
                as_resources: Some(asn),
                kind,
            };
            (template, ca)
        })
}

//------------ Checks ---------------------------------------------------------

macro_rules! ensure_eq {
    ($a:expr, $b:expr, $($ctx:tt)*) => {
        if $a != $b {
            return Err(TestCaseError::fail(format!($($ctx)*)));
        }
    };
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// decode(encode(p)) = p and re-encoding the decoded payload reproduces the
/// bytes, in every ROA variant given.
pub fn roa_roundtrip(fx: &Fixture, p: &RoaPayload, variant: CodecVariant) -> Result<(), TestCaseError> {
    let bytes = with_signer(fx, variant.envelope, |s| encode_roa(p, variant, s)).map_err(fail)?;
    let decoded = decode_roa(&bytes, variant).map_err(fail)?;
    ensure_eq!(&decoded.payload, p, "{variant}: payload changed");
    let again = with_signer(fx, variant.envelope, |s| encode_roa(&decoded.payload, variant, s)).map_err(fail)?;
    ensure_eq!(again, bytes, "{variant}: re-encoding differs");
    Ok(())
}

pub fn manifest_roundtrip(fx: &Fixture, m: &Manifest, variant: CodecVariant) -> Result<(), TestCaseError> {
    let encode = |m: &Manifest| {
        with_signer(fx, variant.envelope, |s| encode_manifest(m, variant, s.expect("manifests are signed")))
    };
    let bytes = encode(m).map_err(fail)?;
    let decoded = decode_manifest(&bytes, variant).map_err(fail)?;
    ensure_eq!(&decoded.manifest, m, "{variant}: manifest changed");
    ensure_eq!(encode(&decoded.manifest).map_err(fail)?, bytes, "{variant}: re-encoding differs");
    Ok(())
}

pub fn crl_roundtrip(fx: &Fixture, number: u64, (this, next): (i64, i64), revoked: Vec<RevokedEntry>) -> Result<(), TestCaseError> {
    let crl = Crl::issue(&fx.ca, &fx.ca_signer(), number, this, next, revoked).map_err(fail)?;
    let decoded = Crl::decode(crl.to_der()).map_err(fail)?;
    ensure_eq!(&decoded, &crl, "CRL changed");
    let again = Crl::issue(&fx.ca, &fx.ca_signer(), decoded.number, decoded.this_update, decoded.next_update, decoded.revoked.clone())
        .map_err(fail)?;
    ensure_eq!(again.to_der(), crl.to_der(), "CRL re-encoding differs");
    Ok(())
}

pub fn cert_roundtrip(fx: &Fixture, t: CertTemplate) -> Result<(), TestCaseError> {
    let cert = issue(t.clone(), Issuer::Cert(&fx.ca, &fx.ca_signer())).map_err(fail)?;
    let decoded = Certificate::decode(cert.to_der()).map_err(fail)?;
    ensure_eq!(&decoded, &cert, "certificate changed");
    ensure_eq!(decoded.serial, t.serial, "serial");
    ensure_eq!(decoded.ip_resources, t.ip_resources, "IP resources");
    ensure_eq!(decoded.as_resources, t.as_resources, "AS resources");
    Ok(())
}

pub fn snapshot_roundtrip(s: &Snapshot) -> Result<(), TestCaseError> {
    for format in RRDP_FORMATS {
        let bytes = s.encode(format);
        let decoded = Snapshot::decode(&bytes, format).map_err(fail)?;
        ensure_eq!(&decoded, s, "{format}: snapshot changed");
        ensure_eq!(decoded.encode(format), bytes, "{format}: re-encoding differs");
    }
    Ok(())
}

pub fn delta_roundtrip(d: &Delta) -> Result<(), TestCaseError> {
    if d.cas.is_empty() {
        return Ok(());
    }
    for format in RRDP_FORMATS {
        let bytes = d.encode(format);
        let decoded = Delta::decode(&bytes, format).map_err(fail)?;
        ensure_eq!(&decoded, d, "{format}: delta changed");
        ensure_eq!(decoded.encode(format), bytes, "{format}: re-encoding differs");
    }
    Ok(())
}

pub fn notification_roundtrip(n: &Notification) -> Result<(), TestCaseError> {
    for format in RRDP_FORMATS {
        let bytes = n.encode(format);
        let decoded = Notification::decode(&bytes, format).map_err(fail)?;
        ensure_eq!(&decoded, n, "{format}: notification changed");
        ensure_eq!(decoded.encode(format), bytes, "{format}: re-encoding differs");
    }
    Ok(())
}
