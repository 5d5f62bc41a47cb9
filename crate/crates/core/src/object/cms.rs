//! CMS SignedData as profiled for RPKI signed objects.
//!
//! The EE certificate is optional here: without it the object is signed
//! directly by the CA key identified in the signer identifier.

use sha2::{Digest, Sha256};

use super::ObjectError;
use crate::crypto::{Certificate, KeyId, PublicKey, SignatureCounter, Signer};
use crate::der::{self, oids, DerError, Reader};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedObject {
    pub content_type: Vec<u8>,
    pub econtent: Vec<u8>,
    pub ee_cert: Option<Certificate>,
    pub sid: KeyId,
    pub signing_time: i64,
    pub message_digest: [u8; 32],
    pub signature: Vec<u8>,
    signed_attrs: Vec<u8>,
}

fn sha256_alg() -> Vec<u8> {
    der::sequence(&[&der::oid(oids::SHA256)])
}

fn attribute(oid: &[u8], value: &[u8]) -> Vec<u8> {
    der::sequence(&[&der::oid(oid), &der::cons(der::SET, &[value])])
}

/// The signed attributes as a DER `SET OF`, the form that is signed.
fn signed_attrs(content_type: &[u8], signing_time: i64, digest: &[u8; 32]) -> Vec<u8> {
    der::set_of(vec![
        attribute(oids::CONTENT_TYPE_ATTR, &der::oid(content_type)),
        attribute(oids::SIGNING_TIME_ATTR, &der::x509_time(signing_time)),
        attribute(oids::MESSAGE_DIGEST_ATTR, &der::octet_string(digest)),
    ])
}

fn assemble(
    content_type: &[u8],
    econtent: &[u8],
    ee_cert: Option<&[u8]>,
    sid: &KeyId,
    attrs: &[u8],
    signature: &[u8],
) -> Vec<u8> {
    let mut implicit_attrs = attrs.to_vec();
    implicit_attrs[0] = der::ctx_cons(0);
    let signer_info = der::sequence(&[
        &der::unsigned_integer(3),
        &der::tlv(der::ctx_prim(0), sid.as_bytes()),
        &sha256_alg(),
        &implicit_attrs,
        &der::sequence(&[&der::oid(oids::RSA_ENCRYPTION), &der::null()]),
        &der::octet_string(signature),
    ]);
    let encap = der::sequence(&[
        &der::oid(content_type),
        &der::cons(der::ctx_cons(0), &[&der::octet_string(econtent)]),
    ]);
    let certs = ee_cert.map(|c| der::cons(der::ctx_cons(0), &[c])).unwrap_or_default();
    let signed_data = der::sequence(&[
        &der::unsigned_integer(3),
        &der::cons(der::SET, &[&sha256_alg()]),
        &encap,
        &certs,
        &der::cons(der::SET, &[&signer_info]),
    ]);
    der::sequence(&[&der::oid(oids::SIGNED_DATA), &der::cons(der::ctx_cons(0), &[&signed_data])])
}

/// Builds a signed object. `signer` must hold the key of the EE certificate
/// when one is given, otherwise the issuing CA key.
pub fn encode(
    content_type: &[u8],
    econtent: &[u8],
    ee_cert: Option<&Certificate>,
    signer: &dyn Signer,
    signing_time: i64,
) -> Vec<u8> {
    let digest: [u8; 32] = Sha256::digest(econtent).into();
    let attrs = signed_attrs(content_type, signing_time, &digest);
    let signature = signer.sign(&attrs);
    let sid = signer.public_key().key_id();
    assemble(content_type, econtent, ee_cert.map(|c| c.to_der()), &sid, &attrs, &signature)
}

impl SignedObject {
    pub fn decode(data: &[u8]) -> Result<Self, ObjectError> {
        let mut outer = Reader::new(data);
        let mut ci = outer.read_sequence()?;
        outer.finish()?;
        ci.expect_oid(oids::SIGNED_DATA)?;
        let mut wrap = ci.read_nested(der::ctx_cons(0))?;
        ci.finish()?;
        let mut sd = wrap.read_sequence()?;
        wrap.finish()?;
        if sd.read_u64()? != 3 {
            return Err(DerError::Invalid("SignedData version").into());
        }
        sd.read(der::SET)?;
        let mut encap = sd.read_sequence()?;
        let content_type = encap.read_oid()?.to_vec();
        let mut ec = encap.read_nested(der::ctx_cons(0))?;
        let econtent = ec.read(der::OCTET_STRING)?.to_vec();
        ec.finish()?;
        encap.finish()?;
        let ee_cert = match sd.read_opt(der::ctx_cons(0))? {
            Some(certs) => Some(Certificate::decode(certs)?),
            None => None,
        };
        let mut infos = sd.read_nested(der::SET)?;
        sd.finish()?;
        let mut si = infos.read_sequence()?;
        infos.finish()?;
        si.read_u64()?;
        let sid = KeyId::from_slice(si.read(der::ctx_prim(0))?).ok_or(DerError::Invalid("signer identifier"))?;
        si.read(der::SEQUENCE)?;
        let attrs_content = si.read(der::ctx_cons(0))?;
        si.read(der::SEQUENCE)?;
        let signature = si.read(der::OCTET_STRING)?.to_vec();
        si.finish()?;

        let mut attrs = Reader::new(attrs_content);
        let mut ct_attr = attrs.read_sequence()?;
        ct_attr.expect_oid(oids::CONTENT_TYPE_ATTR)?;
        let mut set = ct_attr.read_nested(der::SET)?;
        if set.read_oid()? != content_type {
            return Err(DerError::Invalid("content type attribute").into());
        }
        let mut time_attr = attrs.read_sequence()?;
        time_attr.expect_oid(oids::SIGNING_TIME_ATTR)?;
        let signing_time = time_attr.read_nested(der::SET)?.read_x509_time()?;
        let mut md_attr = attrs.read_sequence()?;
        md_attr.expect_oid(oids::MESSAGE_DIGEST_ATTR)?;
        let digest = md_attr.read_nested(der::SET)?.read(der::OCTET_STRING)?.to_vec();
        attrs.finish()?;
        let message_digest: [u8; 32] =
            digest.try_into().map_err(|_| DerError::Invalid("message digest length"))?;

        let signed = signed_attrs(&content_type, signing_time, &message_digest);
        let rebuilt = assemble(
            &content_type,
            &econtent,
            ee_cert.as_ref().map(|c| c.to_der()),
            &sid,
            &signed,
            &signature,
        );
        if rebuilt != data {
            return Err(ObjectError::NonCanonical);
        }
        Ok(SignedObject {
            content_type,
            econtent,
            ee_cert,
            sid,
            signing_time,
            message_digest,
            signature,
            signed_attrs: signed,
        })
    }

    /// Re-assembles the object around different content while keeping the
    /// original signed attributes and signature.
    pub fn with_econtent(&self, econtent: &[u8]) -> Vec<u8> {
        assemble(
            &self.content_type,
            econtent,
            self.ee_cert.as_ref().map(|c| c.to_der()),
            &self.sid,
            &self.signed_attrs,
            &self.signature,
        )
    }

    pub fn digest_matches(&self) -> bool {
        let digest: [u8; 32] = Sha256::digest(&self.econtent).into();
        digest == self.message_digest
    }

    /// Checks the content signature, costing one verification.
    pub fn verify_signature(&self, key: &PublicKey, counter: &SignatureCounter) -> bool {
        let ok = key.verify(&self.signed_attrs, &self.signature, counter);
        ok && self.digest_matches() && key.key_id() == self.sid
    }
}
