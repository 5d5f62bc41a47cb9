//! Authenticity checks for decoded objects under a validated CA.
//!
//! Signature costs: a CMS object with EE certificate costs two
//! verifications, a directly signed object one, an unsigned object none.

use std::collections::HashSet;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::cms::SignedObject;
use super::manifest::ManifestSignature;
use super::{decode_manifest, decode_roa, CodecVariant, Crl, DecodedManifest, Envelope, ObjectError, RoaPayload};
use crate::crypto::{CertError, Certificate, SignatureCounter};
use crate::resources::ResourceSet;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum Rejection {
    #[error("decode failed: {0}")]
    Decode(#[from] ObjectError),
    #[error("EE certificate: {0}")]
    EeCert(CertError),
    #[error("signature does not verify")]
    Signature,
    #[error("hash does not match the manifest")]
    HashMismatch,
    #[error("no manifest hash for an unsigned object")]
    MissingHash,
    #[error("not yet valid")]
    NotYetValid,
    #[error("expired")]
    Expired,
    #[error("serial {0} is revoked")]
    Revoked(u64),
    #[error("resources not covered by the issuer")]
    Resources,
    #[error("issued by a different CA")]
    Issuer,
}

/// The validated CA an object is checked against.
#[derive(Clone, Copy)]
pub struct VerifyContext<'a> {
    pub issuer: &'a Certificate,
    pub issuer_resources: &'a ResourceSet,
    pub now: i64,
    pub counter: &'a SignatureCounter,
}

fn check_window(now: i64, not_before: i64, not_after: i64) -> Result<(), Rejection> {
    if now < not_before {
        Err(Rejection::NotYetValid)
    } else if now >= not_after {
        Err(Rejection::Expired)
    } else {
        Ok(())
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Checks the EE certificate and content signature of a CMS object: two
/// verifications. Returns the EE certificate's effective resources.
fn verify_ee_envelope(obj: &SignedObject, ctx: &VerifyContext) -> Result<ResourceSet, Rejection> {
    let ee = obj.ee_cert.as_ref().ok_or(Rejection::Signature)?;
    if ee.is_ca() {
        return Err(Rejection::EeCert(CertError::Kind("EE")));
    }
    let resources = ee
        .validate_issued_by(ctx.issuer, ctx.issuer_resources, ctx.now, ctx.counter)
        .map_err(Rejection::EeCert)?;
    if !obj.verify_signature(&ee.public_key, ctx.counter) {
        return Err(Rejection::Signature);
    }
    Ok(resources)
}

/// Verifies a ROA in any variant and returns its payload.
pub fn verify_object_authenticity(
    data: &[u8],
    variant: CodecVariant,
    ctx: &VerifyContext,
    manifest_hash: Option<&[u8; 32]>,
    revoked: &HashSet<u64>,
) -> Result<RoaPayload, Rejection> {
    match manifest_hash {
        Some(h) if sha256(data) != *h => return Err(Rejection::HashMismatch),
        None if variant.envelope == Envelope::Unsigned => return Err(Rejection::MissingHash),
        _ => {}
    }
    let decoded = decode_roa(data, variant)?;
    let payload = decoded.payload;
    let mut allowed = ctx.issuer_resources.clone();
    match (variant.envelope, &decoded.envelope) {
        (Envelope::CmsEe, Some(obj)) => {
            allowed = verify_ee_envelope(obj, ctx)?;
            let ee = obj.ee_cert.as_ref().expect("checked by envelope");
            if revoked.contains(&ee.serial) {
                return Err(Rejection::Revoked(ee.serial));
            }
            if payload.not_before < ee.not_before || payload.not_after > ee.not_after {
                return Err(Rejection::EeCert(CertError::Expired));
            }
        }
        (Envelope::DirectSigned, Some(obj)) => {
            if obj.sid != ctx.issuer.ski {
                return Err(Rejection::Issuer);
            }
            if !obj.verify_signature(&ctx.issuer.public_key, ctx.counter) {
                return Err(Rejection::Signature);
            }
        }
        (Envelope::Unsigned, None) => {}
        _ => return Err(Rejection::Signature),
    }
    check_window(ctx.now, payload.not_before, payload.not_after)?;
    if revoked.contains(&payload.serial) {
        return Err(Rejection::Revoked(payload.serial));
    }
    let covered = payload.prefixes.iter().all(|p| allowed.contains_prefix(&p.prefix) && ctx.issuer_resources.contains_prefix(&p.prefix));
    if !covered {
        return Err(Rejection::Resources);
    }
    Ok(payload)
}

/// Verifies a manifest: signature(s) and validity window. Revocation of a
/// manifest EE certificate is checked by the caller once the CRL is known.
pub fn verify_manifest(data: &[u8], variant: CodecVariant, ctx: &VerifyContext) -> Result<DecodedManifest, Rejection> {
    let decoded = decode_manifest(data, variant)?;
    match (&decoded.signature, variant.envelope) {
        (ManifestSignature::Cms(obj), Envelope::CmsEe) => {
            verify_ee_envelope(obj, ctx)?;
        }
        (_, Envelope::DirectSigned) => {
            if let ManifestSignature::Cms(obj) = &decoded.signature {
                if obj.sid != ctx.issuer.ski {
                    return Err(Rejection::Issuer);
                }
            }
            if !decoded.verify_direct(&ctx.issuer.public_key, ctx.counter) {
                return Err(Rejection::Signature);
            }
        }
        _ => return Err(Rejection::Signature),
    }
    let m = &decoded.manifest;
    check_window(ctx.now, m.this_update, m.next_update)?;
    Ok(decoded)
}

/// Verifies a standalone CRL: one verification.
pub fn verify_crl(data: &[u8], ctx: &VerifyContext) -> Result<Crl, Rejection> {
    let crl = Crl::decode(data)?;
    if crl.aki != ctx.issuer.ski || crl.issuer != ctx.issuer.subject {
        return Err(Rejection::Issuer);
    }
    if !crl.verify_signature(&ctx.issuer.public_key, ctx.counter) {
        return Err(Rejection::Signature);
    }
    check_window(ctx.now, crl.this_update, crl.next_update)?;
    Ok(crl)
}
