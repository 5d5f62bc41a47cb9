//! Validation of a single publication point.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use crate::crypto::{CertError, Certificate, SignatureCounter};
use crate::object::verify::{verify_crl, verify_manifest, verify_object_authenticity, Rejection, VerifyContext};
use crate::object::{
    detect_manifest_variant, detect_roa_variant, CodecVariant, CrlMode, DecodedManifest, Envelope, ManifestSignature,
    RevokedEntry, RoaPayload,
};
use crate::resources::ResourceSet;

/// The files of a publication point by name.
pub type PointFiles<'a> = BTreeMap<&'a str, &'a [u8]>;

/// Why a whole CA was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointFailure {
    NoManifest,
    MultipleManifests,
    Manifest(String),
    /// The manifest number went backwards.
    Stale { cached: u64, fetched: u64 },
    MissingFile(String),
    HashMismatch(String),
    MissingCrl,
    Crl(String),
    ManifestRevoked,
}

impl fmt::Display for PointFailure {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            PointFailure::NoManifest => f.write_str("no manifest"),
            PointFailure::MultipleManifests => f.write_str("more than one manifest"),
            PointFailure::Manifest(e) => write!(f, "manifest: {e}"),
            PointFailure::Stale { cached, fetched } => {
                write!(f, "manifest number {fetched} is below the cached {cached}")
            }
            PointFailure::MissingFile(n) => write!(f, "listed file {n} is missing"),
            PointFailure::HashMismatch(n) => write!(f, "hash mismatch for {n}"),
            PointFailure::MissingCrl => f.write_str("manifest lists no CRL"),
            PointFailure::Crl(e) => write!(f, "CRL: {e}"),
            PointFailure::ManifestRevoked => f.write_str("manifest EE certificate is revoked"),
        }
    }
}

/// A validated child CA certificate.
#[derive(Clone, Debug)]
pub struct ChildCa {
    pub name: String,
    pub cert: Certificate,
    pub resources: ResourceSet,
}

#[derive(Clone, Debug)]
pub struct PointOutcome {
    pub manifest_name: String,
    pub manifest_variant: CodecVariant,
    pub manifest: DecodedManifest,
    /// Revocations from the standalone CRL or the merged manifest.
    pub revoked: Vec<RevokedEntry>,
    pub roas: Vec<(String, RoaPayload)>,
    pub children: Vec<ChildCa>,
    pub rejected: Vec<(String, ObjectRejection)>,
}

/// Why a single object was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ObjectRejection {
    Roa(Rejection),
    Cert(CertError),
}

impl fmt::Display for ObjectRejection {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            ObjectRejection::Roa(e) => e.fmt(f),
            ObjectRejection::Cert(e) => e.fmt(f),
        }
    }
}

/// The codec variant implied by a ROA file name and content.
pub fn roa_variant(name: &str, data: &[u8]) -> Option<CodecVariant> {
    if name.ends_with(".roa") {
        Some(CodecVariant::LEGACY)
    } else if name.ends_with(".iroa") {
        detect_roa_variant(data)
    } else {
        None
    }
}

fn find_manifest<'a>(files: &PointFiles<'a>) -> Result<(&'a str, &'a [u8], CodecVariant), PointFailure> {
    for (ext, improved) in [(".imft", true), (".mft", false)] {
        let mut found = files.iter().filter(|(n, _)| n.ends_with(ext));
        if let Some((name, data)) = found.next() {
            if found.next().is_some() {
                return Err(PointFailure::MultipleManifests);
            }
            let variant = if improved {
                detect_manifest_variant(data).ok_or_else(|| PointFailure::Manifest("unknown variant".into()))?
            } else {
                CodecVariant::LEGACY
            };
            return Ok((name, data, variant));
        }
    }
    Err(PointFailure::NoManifest)
}

/// Validates the publication point of `ca`. Any manifest, hash or CRL
/// problem rejects the whole point; ROAs and child certificates are
/// rejected individually.
pub fn validate_point(
    files: &PointFiles,
    ca: &Certificate,
    resources: &ResourceSet,
    now: i64,
    counter: &SignatureCounter,
    cached_number: Option<u64>,
) -> Result<PointOutcome, PointFailure> {
    let ctx = VerifyContext { issuer: ca, issuer_resources: resources, now, counter };
    let (mft_name, mft_data, variant) = find_manifest(files)?;
    let manifest = verify_manifest(mft_data, variant, &ctx).map_err(|e| PointFailure::Manifest(e.to_string()))?;
    let m = &manifest.manifest;
    if let Some(cached) = cached_number {
        if m.number < cached {
            return Err(PointFailure::Stale { cached, fetched: m.number });
        }
    }
    for entry in &m.files {
        let data = files.get(entry.name.as_str()).ok_or_else(|| PointFailure::MissingFile(entry.name.clone()))?;
        if crate::object::verify::sha256(data) != entry.hash {
            return Err(PointFailure::HashMismatch(entry.name.clone()));
        }
    }
    let revoked_list = match variant.crl_mode {
        CrlMode::Standalone => {
            let name = m.crl_name().ok_or(PointFailure::MissingCrl)?;
            let crl = verify_crl(files[name], &ctx).map_err(|e| PointFailure::Crl(e.to_string()))?;
            crl.revoked
        }
        CrlMode::Merged => m.revoked.clone(),
    };
    let revoked: HashSet<u64> = revoked_list.iter().map(|r| r.serial).collect();
    if let (Envelope::CmsEe, ManifestSignature::Cms(obj)) = (variant.envelope, &manifest.signature) {
        if obj.ee_cert.as_ref().is_some_and(|ee| revoked.contains(&ee.serial)) {
            return Err(PointFailure::ManifestRevoked);
        }
    }

    let mut roas = Vec::new();
    let mut children = Vec::new();
    let mut rejected = Vec::new();
    for entry in &m.files {
        let name = entry.name.as_str();
        let data = files[name];
        if let Some(roa_variant) = roa_variant(name, data) {
            match verify_object_authenticity(data, roa_variant, &ctx, Some(&entry.hash), &revoked) {
                Ok(payload) => roas.push((entry.name.clone(), payload)),
                Err(e) => rejected.push((entry.name.clone(), ObjectRejection::Roa(e))),
            }
        } else if name.ends_with(".roa") || name.ends_with(".iroa") {
            rejected.push((entry.name.clone(), ObjectRejection::Roa(Rejection::Signature)));
        } else if name.ends_with(".cer") {
            match validate_child(data, &ctx, &revoked) {
                Ok((cert, resources)) => children.push(ChildCa { name: entry.name.clone(), cert, resources }),
                Err(e) => rejected.push((entry.name.clone(), ObjectRejection::Cert(e))),
            }
        }
    }
    Ok(PointOutcome {
        manifest_name: mft_name.to_string(),
        manifest_variant: variant,
        manifest,
        revoked: revoked_list,
        roas,
        children,
        rejected,
    })
}

fn validate_child(data: &[u8], ctx: &VerifyContext, revoked: &HashSet<u64>) -> Result<(Certificate, ResourceSet), CertError> {
    let cert = Certificate::decode(data)?;
    if !cert.is_ca() {
        return Err(CertError::Kind("CA"));
    }
    let resources = cert.validate_issued_by(ctx.issuer, ctx.issuer_resources, ctx.now, ctx.counter)?;
    if revoked.contains(&cert.serial) {
        return Err(CertError::Revoked);
    }
    Ok((cert, resources))
}
