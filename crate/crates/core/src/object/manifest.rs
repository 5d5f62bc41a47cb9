//! Manifests, legacy and combined with revocations.

use std::collections::HashSet;

use super::cms::{self, SignedObject};
use super::roa::{parse_proto_meta, proto_meta};
use super::{check_file_name, CodecVariant, CrlMode, Encoding, Envelope, ObjectError, ObjectSigner};
use crate::crypto::{issue, AsResources, CertKind, CertTemplate, IpResources, Issuer, PublicKey, SignatureCounter};
use crate::der::{self, oids, DerError, Reader};
use crate::proto::{self, Fields, ProtoError, Writer};

pub const HASH_ALGORITHM: &str = "sha256";
pub const SIGNATURE_ALGORITHM: &str = "sha256WithRSAEncryption";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FileAndHash {
    pub name: String,
    pub hash: [u8; 32],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct RevokedEntry {
    pub serial: u64,
    pub time: i64,
}

/// Manifest content. With an empty revocation list and a standalone CRL
/// this is a legacy manifest; otherwise it is the combined form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub number: u64,
    pub this_update: i64,
    pub next_update: i64,
    pub files: Vec<FileAndHash>,
    pub revoked: Vec<RevokedEntry>,
}

pub type CombinedManifest = Manifest;

impl Manifest {
    pub fn validate(&self, crl_mode: CrlMode) -> Result<(), ObjectError> {
        if self.this_update >= self.next_update {
            return Err(ObjectError::Validity);
        }
        let mut names = HashSet::new();
        for f in &self.files {
            check_file_name(&f.name)?;
            if !names.insert(f.name.as_str()) {
                return Err(ObjectError::DuplicateFile(f.name.clone()));
            }
            if crl_mode == CrlMode::Merged && f.name.ends_with(".crl") {
                return Err(ObjectError::CrlInMergedManifest(f.name.clone()));
            }
        }
        let mut serials = HashSet::new();
        for r in &self.revoked {
            if !serials.insert(r.serial) {
                return Err(ObjectError::DuplicateRevocation(r.serial));
            }
        }
        if crl_mode == CrlMode::Standalone && !self.revoked.is_empty() {
            return Err(ObjectError::RevocationsInStandalone);
        }
        Ok(())
    }

    pub fn hash_of(&self, name: &str) -> Option<&[u8; 32]> {
        self.files.iter().find(|f| f.name == name).map(|f| &f.hash)
    }

    /// The name of the standalone CRL, if one is listed.
    pub fn crl_name(&self) -> Option<&str> {
        self.files.iter().map(|f| f.name.as_str()).find(|n| n.ends_with(".crl"))
    }
}

/// How a decoded manifest was signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ManifestSignature {
    Cms(SignedObject),
    Proto { signed_bytes: Vec<u8>, signature: Vec<u8>, ski: Option<Vec<u8>> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedManifest {
    pub manifest: Manifest,
    pub signature: ManifestSignature,
}

impl DecodedManifest {
    /// Verifies a direct signature by `key`, costing one verification.
    pub fn verify_direct(&self, key: &PublicKey, counter: &SignatureCounter) -> bool {
        match &self.signature {
            ManifestSignature::Cms(obj) => obj.ee_cert.is_none() && obj.verify_signature(key, counter),
            ManifestSignature::Proto { signed_bytes, signature, ski } => {
                let ski_ok = ski.as_deref().is_none_or(|s| s == key.key_id().as_bytes());
                key.verify(signed_bytes, signature, counter) && ski_ok
            }
        }
    }
}

//------------ DER -----------------------------------------------------------

fn der_content(m: &Manifest, merged: bool) -> Vec<u8> {
    let files: Vec<Vec<u8>> = m
        .files
        .iter()
        .map(|f| der::sequence(&[&der::ia5_string(&f.name), &der::bit_string(0, &f.hash)]))
        .collect();
    let files: Vec<&[u8]> = files.iter().map(|f| f.as_slice()).collect();
    let number = der::unsigned_integer(m.number);
    let this = der::generalized_time(m.this_update);
    let next = der::generalized_time(m.next_update);
    let alg = der::oid(oids::SHA256);
    let list = der::sequence(&files);
    if merged {
        let revoked: Vec<Vec<u8>> = m
            .revoked
            .iter()
            .map(|r| der::sequence(&[&der::unsigned_integer(r.serial), &der::x509_time(r.time)]))
            .collect();
        let revoked: Vec<&[u8]> = revoked.iter().map(|r| r.as_slice()).collect();
        der::sequence(&[&number, &this, &next, &alg, &list, &der::sequence(&revoked)])
    } else {
        der::sequence(&[&number, &this, &next, &alg, &list])
    }
}

fn decode_der_content(data: &[u8]) -> Result<(Manifest, bool), ObjectError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let number = seq.read_u64()?;
    let this_update = seq.read_generalized_time()?;
    let next_update = seq.read_generalized_time()?;
    seq.expect_oid(oids::SHA256)?;
    let mut list = seq.read_sequence()?;
    let mut files = Vec::new();
    while !list.is_empty() {
        let mut fh = list.read_sequence()?;
        let name = fh.read_ia5()?.to_string();
        let (unused, hash) = fh.read_bit_string()?;
        fh.finish()?;
        let hash: [u8; 32] = hash.try_into().map_err(|_| DerError::Invalid("hash length"))?;
        if unused != 0 {
            return Err(DerError::Invalid("hash bit string").into());
        }
        files.push(FileAndHash { name, hash });
    }
    let merged = !seq.is_empty();
    let mut revoked = Vec::new();
    if merged {
        let mut list = seq.read_sequence()?;
        while !list.is_empty() {
            let mut r = list.read_sequence()?;
            let serial = r.read_u64()?;
            let time = r.read_x509_time()?;
            r.finish()?;
            revoked.push(RevokedEntry { serial, time });
        }
    }
    seq.finish()?;
    Ok((Manifest { number, this_update, next_update, files, revoked }, merged))
}

/// Whether a DER manifest content uses the combined template.
pub fn der_has_revocations(data: &[u8]) -> bool {
    matches!(decode_der_content(data), Ok((_, true)))
}

//------------ Proto3 --------------------------------------------------------

fn proto_body(m: &Manifest, ski: Option<&[u8]>) -> Vec<u8> {
    let mut hashes = Writer::new();
    hashes.string(1, HASH_ALGORITHM);
    for f in &m.files {
        hashes.message(2, &Writer::new().string(1, &f.name).bytes(2, &f.hash).finish());
    }
    let mut content = Writer::new();
    content.message(1, &hashes.finish());
    for r in &m.revoked {
        let rc = Writer::new().uint(1, r.serial).message(2, &proto::timestamp(r.time)).finish();
        content.message(2, &rc);
    }
    Writer::new()
        .message(1, &content.finish())
        .message(2, &proto_meta(m.number, m.this_update, m.next_update, ski))
        .finish()
}

fn proto_signature(sig: &[u8]) -> Vec<u8> {
    Writer::new().string(1, SIGNATURE_ALGORITHM).bytes(3, sig).finish()
}

/// Decodes a proto3 manifest. Returns the manifest, the key identifier in
/// its metadata, the signed prefix and the signature if present.
type ProtoParts<'a> = (Manifest, Option<Vec<u8>>, &'a [u8], Option<Vec<u8>>);

fn decode_proto(data: &[u8]) -> Result<ProtoParts<'_>, ObjectError> {
    let mut f = Fields::parse(data)?;
    let content = f.required_message(1)?;
    let meta = parse_proto_meta(f.required_message(2)?)?;
    let signature = match f.message(3)? {
        None => None,
        Some(s) => {
            let mut sf = Fields::parse(s)?;
            if sf.string(1)? != SIGNATURE_ALGORITHM {
                return Err(ProtoError::Invalid(1, "signature algorithm").into());
            }
            if sf.opt_bytes(2)?.is_some() {
                return Err(ProtoError::Invalid(2, "signature parameters").into());
            }
            let sig = sf.bytes(3)?.to_vec();
            sf.finish()?;
            Some(sig)
        }
    };
    f.finish()?;

    let mut cf = Fields::parse(content)?;
    let mut hf = Fields::parse(cf.required_message(1)?)?;
    if hf.string(1)? != HASH_ALGORITHM {
        return Err(ProtoError::Invalid(1, "hash algorithm").into());
    }
    let mut files = Vec::new();
    for e in hf.repeated(2)? {
        let mut ef = Fields::parse(e)?;
        let name = ef.string(1)?.to_string();
        let hash: [u8; 32] = ef.bytes(2)?.try_into().map_err(|_| ProtoError::Invalid(2, "hash length"))?;
        ef.finish()?;
        files.push(FileAndHash { name, hash });
    }
    hf.finish()?;
    let mut revoked = Vec::new();
    for r in cf.repeated(2)? {
        let mut rf = Fields::parse(r)?;
        let serial = rf.uint(1)?;
        let time = proto::parse_timestamp(rf.required_message(2)?)?;
        rf.finish()?;
        revoked.push(RevokedEntry { serial, time });
    }
    cf.finish()?;

    let tail = signature.as_ref().map_or(0, |s| Writer::new().message(3, &proto_signature(s)).finish().len());
    let signed_len = data.len() - tail;
    let m = Manifest {
        number: meta.serial,
        this_update: meta.not_before,
        next_update: meta.not_after,
        files,
        revoked,
    };
    Ok((m, meta.ski, &data[..signed_len], signature))
}

/// Whether a proto3 manifest lists a standalone CRL.
pub fn proto_lists_crl(data: &[u8]) -> bool {
    matches!(decode_proto(data), Ok((m, ..)) if m.crl_name().is_some())
}

//------------ Variant dispatch ----------------------------------------------

fn check_variant(variant: CodecVariant) -> Result<(), ObjectError> {
    if variant.valid_for_manifest() {
        Ok(())
    } else {
        Err(ObjectError::Variant(variant, "manifest"))
    }
}

fn econtent(m: &Manifest, variant: CodecVariant) -> Vec<u8> {
    match variant.encoding {
        Encoding::Der => der_content(m, variant.crl_mode == CrlMode::Merged),
        Encoding::Proto3 => proto_body(m, None),
    }
}

pub fn encode_manifest(m: &Manifest, variant: CodecVariant, signer: ObjectSigner) -> Result<Vec<u8>, ObjectError> {
    check_variant(variant)?;
    m.validate(variant.crl_mode)?;
    match (variant.envelope, variant.encoding, signer) {
        (Envelope::DirectSigned, Encoding::Proto3, ObjectSigner::Direct(key)) => {
            let body = proto_body(m, Some(key.public_key().key_id().as_bytes()));
            let sig = key.sign(&body);
            let mut out = body;
            out.extend(Writer::new().message(3, &proto_signature(&sig)).finish());
            Ok(out)
        }
        (Envelope::DirectSigned, Encoding::Der, ObjectSigner::Direct(key)) => {
            Ok(cms::encode(oids::CT_MANIFEST, &econtent(m, variant), None, key, m.this_update))
        }
        (Envelope::CmsEe, _, ObjectSigner::Ee(ee)) => {
            let template = CertTemplate {
                serial: m.number,
                subject: ee.ee_key.public_key().key_id().to_string(),
                not_before: m.this_update,
                not_after: m.next_update,
                public_key: ee.ee_key.public_key().clone(),
                ip_resources: Some(IpResources::Inherit),
                as_resources: Some(AsResources::Inherit),
                kind: CertKind::Ee {
                    crl_uri: ee.crl_uri.to_string(),
                    issuer_uri: ee.issuer_uri.to_string(),
                    object_uri: ee.object_uri.to_string(),
                },
            };
            let cert = issue(template, Issuer::Cert(ee.issuer, ee.issuer_signer))?;
            Ok(cms::encode(oids::CT_MANIFEST, &econtent(m, variant), Some(&cert), ee.ee_key, m.this_update))
        }
        _ => Err(ObjectError::Signer),
    }
}

/// Re-encodes a manifest with new content but its original signature, as
/// someone without the signing key would. Verification of the result fails.
pub fn replace_content_keeping_signature(data: &[u8], variant: CodecVariant, m: &Manifest) -> Result<Vec<u8>, ObjectError> {
    let decoded = decode_manifest(data, variant)?;
    Ok(match decoded.signature {
        ManifestSignature::Cms(obj) => obj.with_econtent(&econtent(m, variant)),
        ManifestSignature::Proto { signature, ski, .. } => {
            let mut out = proto_body(m, ski.as_deref());
            out.extend(Writer::new().message(3, &proto_signature(&signature)).finish());
            out
        }
    })
}

pub fn decode_manifest(data: &[u8], variant: CodecVariant) -> Result<DecodedManifest, ObjectError> {
    if data.is_empty() {
        return Err(ObjectError::Empty);
    }
    check_variant(variant)?;
    let (manifest, signature) = match (variant.envelope, variant.encoding) {
        (Envelope::DirectSigned, Encoding::Proto3) => {
            let (m, ski, signed, sig) = decode_proto(data)?;
            let sig = sig.ok_or(ProtoError::Missing(3))?;
            (m, ManifestSignature::Proto { signed_bytes: signed.to_vec(), signature: sig, ski })
        }
        (envelope, encoding) => {
            let obj = SignedObject::decode(data)?;
            if obj.content_type != oids::CT_MANIFEST {
                return Err(ObjectError::ContentType);
            }
            if obj.ee_cert.is_some() != (envelope == Envelope::CmsEe) {
                return Err(ObjectError::Variant(variant, "manifest envelope"));
            }
            let m = match encoding {
                Encoding::Der => {
                    let (m, merged) = decode_der_content(&obj.econtent)?;
                    if merged != (variant.crl_mode == CrlMode::Merged) {
                        return Err(ObjectError::Variant(variant, "manifest template"));
                    }
                    m
                }
                Encoding::Proto3 => {
                    let (m, ski, signed, sig) = decode_proto(&obj.econtent)?;
                    if ski.is_some() || sig.is_some() || signed.len() != obj.econtent.len() {
                        return Err(ObjectError::NonCanonical);
                    }
                    m
                }
            };
            (m, ManifestSignature::Cms(obj))
        }
    };
    manifest.validate(variant.crl_mode)?;
    Ok(DecodedManifest { manifest, signature })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            number: 7,
            this_update: 1_735_689_600,
            next_update: 1_735_776_000,
            files: vec![
                FileAndHash { name: "a.iroa".into(), hash: [1; 32] },
                FileAndHash { name: "b.iroa".into(), hash: [2; 32] },
            ],
            revoked: vec![RevokedEntry { serial: 9, time: 1_735_689_000 }],
        }
    }

    #[test]
    fn validation_rules() {
        let mut m = sample();
        assert!(m.validate(CrlMode::Merged).is_ok());
        assert_eq!(m.validate(CrlMode::Standalone), Err(ObjectError::RevocationsInStandalone));
        m.files.push(FileAndHash { name: "x.crl".into(), hash: [0; 32] });
        assert!(matches!(m.validate(CrlMode::Merged), Err(ObjectError::CrlInMergedManifest(_))));
        let mut m = sample();
        m.files.push(m.files[0].clone());
        assert!(matches!(m.validate(CrlMode::Merged), Err(ObjectError::DuplicateFile(_))));
        let mut m = sample();
        m.revoked.push(m.revoked[0]);
        assert!(matches!(m.validate(CrlMode::Merged), Err(ObjectError::DuplicateRevocation(9))));
    }

    #[test]
    fn der_templates_round_trip() {
        let m = sample();
        let (back, merged) = decode_der_content(&der_content(&m, true)).unwrap();
        assert!(merged);
        assert_eq!(back, m);
        let mut legacy = sample();
        legacy.revoked.clear();
        let (back, merged) = decode_der_content(&der_content(&legacy, false)).unwrap();
        assert!(!merged);
        assert_eq!(back, legacy);
    }

    #[test]
    fn proto_body_round_trips() {
        let m = sample();
        let body = proto_body(&m, None);
        let (back, ski, signed, sig) = decode_proto(&body).unwrap();
        assert_eq!(back, m);
        assert!(ski.is_none() && sig.is_none());
        assert_eq!(signed, &body[..]);
    }
}
