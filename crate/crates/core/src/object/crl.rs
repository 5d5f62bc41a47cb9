//! Standalone certificate revocation lists.

use super::manifest::RevokedEntry;
use super::ObjectError;
use crate::crypto::cert::{encode_name, encode_signed, read_name, read_signed, sha256_with_rsa};
use crate::crypto::{Certificate, KeyId, PublicKey, SignatureCounter, Signer};
use crate::der::{self, oids, DerError, Reader};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Crl {
    pub issuer: String,
    pub aki: KeyId,
    pub number: u64,
    pub this_update: i64,
    pub next_update: i64,
    pub revoked: Vec<RevokedEntry>,
    pub signature: Vec<u8>,
    tbs: Vec<u8>,
    der: Vec<u8>,
}

pub type LegacyCrl = Crl;

fn encode_tbs(issuer: &str, aki: &KeyId, number: u64, this: i64, next: i64, revoked: &[RevokedEntry]) -> Vec<u8> {
    let aki_ext = der::sequence(&[
        &der::oid(oids::AUTHORITY_KEY_ID),
        &der::octet_string(&der::sequence(&[&der::tlv(der::ctx_prim(0), aki.as_bytes())])),
    ]);
    let number_ext = der::sequence(&[
        &der::oid(oids::CRL_NUMBER),
        &der::octet_string(&der::unsigned_integer(number)),
    ]);
    let exts = der::cons(der::ctx_cons(0), &[&der::sequence(&[&aki_ext, &number_ext])]);
    let entries: Vec<Vec<u8>> = revoked
        .iter()
        .map(|r| der::sequence(&[&der::unsigned_integer(r.serial), &der::x509_time(r.time)]))
        .collect();
    let entries: Vec<&[u8]> = entries.iter().map(|e| e.as_slice()).collect();
    let list = if entries.is_empty() { Vec::new() } else { der::sequence(&entries) };
    der::sequence(&[
        &der::unsigned_integer(1),
        &sha256_with_rsa(),
        &encode_name(issuer),
        &der::x509_time(this),
        &der::x509_time(next),
        &list,
        &exts,
    ])
}

impl Crl {
    /// Issues a CRL signed by the CA key (one signature).
    pub fn issue(
        issuer: &Certificate,
        signer: &dyn Signer,
        number: u64,
        this_update: i64,
        next_update: i64,
        mut revoked: Vec<RevokedEntry>,
    ) -> Result<Self, ObjectError> {
        if this_update >= next_update {
            return Err(ObjectError::Validity);
        }
        if signer.public_key() != &issuer.public_key {
            return Err(ObjectError::Signer);
        }
        revoked.sort();
        if revoked.windows(2).any(|w| w[0].serial == w[1].serial) {
            return Err(ObjectError::DuplicateRevocation(revoked[0].serial));
        }
        let tbs = encode_tbs(&issuer.subject, &issuer.ski, number, this_update, next_update, &revoked);
        let signature = signer.sign(&tbs);
        let der = encode_signed(&tbs, &signature);
        Ok(Crl {
            issuer: issuer.subject.clone(),
            aki: issuer.ski,
            number,
            this_update,
            next_update,
            revoked,
            signature,
            tbs,
            der,
        })
    }

    pub fn to_der(&self) -> &[u8] {
        &self.der
    }

    pub fn decode(data: &[u8]) -> Result<Self, ObjectError> {
        if data.is_empty() {
            return Err(ObjectError::Empty);
        }
        let (tbs, signature) = read_signed(data)?;
        let mut r = Reader::new(tbs);
        let mut seq = r.read_sequence()?;
        r.finish()?;
        if seq.read_u64()? != 1 {
            return Err(DerError::Invalid("CRL version").into());
        }
        seq.read(der::SEQUENCE)?;
        let issuer = read_name(&mut seq)?;
        let this_update = seq.read_x509_time()?;
        let next_update = seq.read_x509_time()?;
        let mut revoked = Vec::new();
        if let Some(list) = seq.read_opt(der::SEQUENCE)? {
            let mut list = Reader::new(list);
            while !list.is_empty() {
                let mut e = list.read_sequence()?;
                let serial = e.read_u64()?;
                let time = e.read_x509_time()?;
                e.finish()?;
                revoked.push(RevokedEntry { serial, time });
            }
        }
        let mut wrap = seq.read_nested(der::ctx_cons(0))?;
        seq.finish()?;
        let mut exts = wrap.read_sequence()?;
        wrap.finish()?;
        let mut aki_ext = exts.read_sequence()?;
        aki_ext.expect_oid(oids::AUTHORITY_KEY_ID)?;
        let mut v = Reader::new(aki_ext.read(der::OCTET_STRING)?);
        let aki = KeyId::from_slice(v.read_sequence()?.read(der::ctx_prim(0))?)
            .ok_or(DerError::Invalid("key identifier"))?;
        let mut num_ext = exts.read_sequence()?;
        num_ext.expect_oid(oids::CRL_NUMBER)?;
        let number = Reader::new(num_ext.read(der::OCTET_STRING)?).read_u64()?;
        exts.finish()?;
        if encode_tbs(&issuer, &aki, number, this_update, next_update, &revoked) != tbs {
            return Err(ObjectError::NonCanonical);
        }
        Ok(Crl {
            issuer,
            aki,
            number,
            this_update,
            next_update,
            revoked,
            signature,
            tbs: tbs.to_vec(),
            der: data.to_vec(),
        })
    }

    /// Checks the CA signature, costing one verification.
    pub fn verify_signature(&self, key: &PublicKey, counter: &SignatureCounter) -> bool {
        key.verify(&self.tbs, &self.signature, counter)
    }
}
