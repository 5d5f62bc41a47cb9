//! The X.509 resource certificate subset.

use thiserror::Error;

use super::keys::{KeyError, KeyId, PublicKey, SignatureCounter, Signer};
use crate::der::{self, oids, DerError, Reader};
use crate::resources::{Afi, AsRange, Prefix, ResourceSet};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CertError {
    #[error("malformed certificate: {0}")]
    Der(#[from] DerError),
    #[error("malformed certificate: {0}")]
    Key(#[from] KeyError),
    #[error("unsupported extension {0}")]
    UnknownExtension(String),
    #[error("duplicate extension")]
    DuplicateExtension,
    #[error("missing extension {0}")]
    MissingExtension(&'static str),
    #[error("certificate is not in canonical form")]
    NonCanonical,
    #[error("validity window is empty")]
    EmptyValidity,
    #[error("resources exceed those of the issuer")]
    Resources,
    #[error("signing key does not match the issuer certificate")]
    IssuerKey,
    #[error("issuer has no explicit resources")]
    IssuerInherits,
    #[error("names must be non-empty PrintableString")]
    Name,
    #[error("signature does not verify")]
    Signature,
    #[error("authority key identifier mismatch")]
    Aki,
    #[error("issuer name mismatch")]
    IssuerName,
    #[error("certificate not yet valid")]
    NotYetValid,
    #[error("certificate expired")]
    Expired,
    #[error("certificate revoked")]
    Revoked,
    #[error("expected a {0} certificate")]
    Kind(&'static str),
}

//------------ Resources -----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IpResources {
    Inherit,
    Prefixes(Vec<Prefix>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsResources {
    Inherit,
    Ranges(Vec<AsRange>),
}

//------------ Certificate ---------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertKind {
    Ca { repo_uri: String, notify_uri: String },
    Ee { crl_uri: String, issuer_uri: String, object_uri: String },
}

/// The issuer-independent content of a certificate to be issued.
#[derive(Clone, Debug)]
pub struct CertTemplate {
    pub serial: u64,
    pub subject: String,
    pub not_before: i64,
    pub not_after: i64,
    pub public_key: PublicKey,
    pub ip_resources: Option<IpResources>,
    pub as_resources: Option<AsResources>,
    pub kind: CertKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub serial: u64,
    pub issuer: String,
    pub subject: String,
    pub not_before: i64,
    pub not_after: i64,
    pub public_key: PublicKey,
    pub ski: KeyId,
    pub aki: KeyId,
    pub ip_resources: Option<IpResources>,
    pub as_resources: Option<AsResources>,
    pub kind: CertKind,
    pub signature: Vec<u8>,
    tbs: Vec<u8>,
    der: Vec<u8>,
}

pub type CaCertificate = Certificate;

pub enum Issuer<'a> {
    SelfSigned(&'a dyn Signer),
    Cert(&'a Certificate, &'a dyn Signer),
}

fn check_name(s: &str) -> Result<(), CertError> {
    if s.is_empty() || !s.bytes().all(der::is_printable) {
        return Err(CertError::Name);
    }
    Ok(())
}

/// Issues a certificate, performing exactly one signature.
pub fn issue(t: CertTemplate, issuer: Issuer) -> Result<Certificate, CertError> {
    if t.not_before >= t.not_after {
        return Err(CertError::EmptyValidity);
    }
    check_name(&t.subject)?;
    let ski = t.public_key.key_id();
    let (issuer_name, aki, signer) = match issuer {
        Issuer::SelfSigned(signer) => {
            if signer.public_key() != &t.public_key {
                return Err(CertError::IssuerKey);
            }
            (t.subject.clone(), ski, signer)
        }
        Issuer::Cert(cert, signer) => {
            if signer.public_key() != &cert.public_key {
                return Err(CertError::IssuerKey);
            }
            let parent = cert.explicit_resources().ok_or(CertError::IssuerInherits)?;
            let own = explicit_set(&t.ip_resources, &t.as_resources);
            if !parent.contains(&own) {
                return Err(CertError::Resources);
            }
            (cert.subject.clone(), cert.ski, signer)
        }
    };
    let mut cert = Certificate {
        serial: t.serial,
        issuer: issuer_name,
        subject: t.subject,
        not_before: t.not_before,
        not_after: t.not_after,
        public_key: t.public_key,
        ski,
        aki,
        ip_resources: normalize_ip(t.ip_resources),
        as_resources: normalize_as(t.as_resources),
        kind: t.kind,
        signature: Vec::new(),
        tbs: Vec::new(),
        der: Vec::new(),
    };
    cert.tbs = cert.encode_tbs();
    cert.signature = signer.sign(&cert.tbs);
    cert.der = encode_signed(&cert.tbs, &cert.signature);
    Ok(cert)
}

fn normalize_ip(r: Option<IpResources>) -> Option<IpResources> {
    r.map(|r| match r {
        IpResources::Prefixes(mut v) => {
            v.sort();
            v.dedup();
            IpResources::Prefixes(v)
        }
        other => other,
    })
}

fn normalize_as(r: Option<AsResources>) -> Option<AsResources> {
    r.map(|r| match r {
        AsResources::Ranges(mut v) => {
            v.sort();
            v.dedup();
            AsResources::Ranges(v)
        }
        other => other,
    })
}

fn explicit_set(ip: &Option<IpResources>, asn: &Option<AsResources>) -> ResourceSet {
    let prefixes = match ip {
        Some(IpResources::Prefixes(v)) => v.as_slice(),
        _ => &[],
    };
    let ranges = match asn {
        Some(AsResources::Ranges(v)) => v.as_slice(),
        _ => &[],
    };
    ResourceSet::new(prefixes, ranges)
}

/// `SEQUENCE { tbs, algorithm, BIT STRING signature }`, shared with CRLs.
pub(crate) fn encode_signed(tbs: &[u8], signature: &[u8]) -> Vec<u8> {
    der::sequence(&[tbs, &sha256_with_rsa(), &der::bit_string(0, signature)])
}

pub(crate) fn sha256_with_rsa() -> Vec<u8> {
    der::sequence(&[&der::oid(oids::SHA256_WITH_RSA), &der::null()])
}

pub(crate) fn encode_name(cn: &str) -> Vec<u8> {
    let atv = der::sequence(&[&der::oid(oids::COMMON_NAME), &der::printable_string(cn)]);
    der::sequence(&[&der::cons(der::SET, &[&atv])])
}

pub(crate) fn read_name(r: &mut Reader) -> Result<String, CertError> {
    let mut name = r.read_sequence()?;
    let mut rdn = name.read_nested(der::SET)?;
    let mut atv = rdn.read_sequence()?;
    atv.expect_oid(oids::COMMON_NAME)?;
    let cn = atv.read_printable()?.to_string();
    atv.finish()?;
    rdn.finish()?;
    name.finish()?;
    Ok(cn)
}

pub(crate) fn read_signed<'a>(data: &'a [u8]) -> Result<(&'a [u8], Vec<u8>), CertError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let tbs = seq.read_captured(der::SEQUENCE)?;
    let mut alg = seq.read_sequence()?;
    alg.expect_oid(oids::SHA256_WITH_RSA)?;
    alg.read_null()?;
    alg.finish()?;
    let (unused, sig) = seq.read_bit_string()?;
    if unused != 0 {
        return Err(DerError::Invalid("signature bit string").into());
    }
    seq.finish()?;
    Ok((tbs, sig.to_vec()))
}

fn extension(oid: &[u8], critical: bool, value: &[u8]) -> Vec<u8> {
    let oid = der::oid(oid);
    let value = der::octet_string(value);
    if critical {
        der::sequence(&[&oid, &der::boolean(true), &value])
    } else {
        der::sequence(&[&oid, &value])
    }
}

fn uri_name(uri: &str) -> Vec<u8> {
    der::tlv(der::ctx_prim(6), uri.as_bytes())
}

fn access_description(method: &[u8], uri: &str) -> Vec<u8> {
    der::sequence(&[&der::oid(method), &uri_name(uri)])
}

pub fn encode_ip_resources(r: &IpResources) -> Vec<u8> {
    let families: Vec<Vec<u8>> = match r {
        IpResources::Inherit => [Afi::Ipv4, Afi::Ipv6]
            .iter()
            .map(|afi| der::sequence(&[&der::octet_string(&afi.code().to_be_bytes()), &der::null()]))
            .collect(),
        IpResources::Prefixes(prefixes) => [Afi::Ipv4, Afi::Ipv6]
            .iter()
            .filter_map(|afi| {
                let items: Vec<Vec<u8>> = prefixes
                    .iter()
                    .filter(|p| p.afi() == *afi)
                    .map(|p| der::prefix_bit_string(&p.octets(), p.len()))
                    .collect();
                if items.is_empty() {
                    return None;
                }
                let items: Vec<&[u8]> = items.iter().map(|i| i.as_slice()).collect();
                Some(der::sequence(&[
                    &der::octet_string(&afi.code().to_be_bytes()),
                    &der::sequence(&items),
                ]))
            })
            .collect(),
    };
    let refs: Vec<&[u8]> = families.iter().map(|f| f.as_slice()).collect();
    der::sequence(&refs)
}

pub fn encode_as_resources(r: &AsResources) -> Vec<u8> {
    let choice = match r {
        AsResources::Inherit => der::null(),
        AsResources::Ranges(ranges) => {
            let items: Vec<Vec<u8>> = ranges
                .iter()
                .map(|r| {
                    if r.min == r.max {
                        der::unsigned_integer(r.min as u64)
                    } else {
                        der::sequence(&[
                            &der::unsigned_integer(r.min as u64),
                            &der::unsigned_integer(r.max as u64),
                        ])
                    }
                })
                .collect();
            let refs: Vec<&[u8]> = items.iter().map(|i| i.as_slice()).collect();
            der::sequence(&refs)
        }
    };
    der::sequence(&[&der::cons(der::ctx_cons(0), &[&choice])])
}

/// Reads an address family code from its two-byte OCTET STRING.
pub(crate) fn read_afi(r: &mut Reader) -> Result<Afi, DerError> {
    match r.read(der::OCTET_STRING)? {
        [0, c] => Afi::from_code(*c as u64).ok_or(DerError::Invalid("address family")),
        _ => Err(DerError::Invalid("address family")),
    }
}

/// Reads an RFC 3779 prefix bit string.
pub(crate) fn read_prefix(r: &mut Reader, afi: Afi) -> Result<Prefix, DerError> {
    let (unused, bytes) = r.read_bit_string()?;
    let len = bytes.len() * 8 - unused as usize;
    let len = u8::try_from(len).map_err(|_| DerError::Invalid("prefix length"))?;
    Prefix::from_octets(afi, bytes, len).map_err(|_| DerError::Invalid("prefix"))
}

fn decode_ip_resources(data: &[u8]) -> Result<IpResources, DerError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let mut inherit = 0;
    let mut prefixes = Vec::new();
    while !seq.is_empty() {
        let mut fam = seq.read_sequence()?;
        let afi = read_afi(&mut fam)?;
        if fam.peek_tag() == Some(der::NULL) {
            fam.read_null()?;
            inherit += 1;
        } else {
            let mut items = fam.read_sequence()?;
            while !items.is_empty() {
                prefixes.push(read_prefix(&mut items, afi)?);
            }
        }
        fam.finish()?;
    }
    match (inherit, prefixes.is_empty()) {
        (0, _) => Ok(IpResources::Prefixes(prefixes)),
        (_, true) => Ok(IpResources::Inherit),
        _ => Err(DerError::Invalid("mixed inherit and explicit resources")),
    }
}

fn decode_as_resources(data: &[u8]) -> Result<AsResources, DerError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let mut asnum = seq.read_nested(der::ctx_cons(0))?;
    seq.finish()?;
    if asnum.peek_tag() == Some(der::NULL) {
        asnum.read_null()?;
        asnum.finish()?;
        return Ok(AsResources::Inherit);
    }
    let mut items = asnum.read_sequence()?;
    asnum.finish()?;
    let mut ranges = Vec::new();
    let as_u32 = |v: u64| u32::try_from(v).map_err(|_| DerError::Invalid("AS number"));
    while !items.is_empty() {
        if items.peek_tag() == Some(der::INTEGER) {
            ranges.push(AsRange::single(as_u32(items.read_u64()?)?));
        } else {
            let mut r = items.read_sequence()?;
            let min = as_u32(r.read_u64()?)?;
            let max = as_u32(r.read_u64()?)?;
            r.finish()?;
            ranges.push(AsRange::new(min, max).map_err(|_| DerError::Invalid("AS range"))?);
        }
    }
    Ok(AsResources::Ranges(ranges))
}

fn read_uri(r: &mut Reader) -> Result<String, DerError> {
    let bytes = r.read(der::ctx_prim(6))?;
    if !bytes.is_ascii() {
        return Err(DerError::Invalid("URI"));
    }
    Ok(String::from_utf8(bytes.to_vec()).expect("ascii"))
}

/// Reads a SEQUENCE OF AccessDescription into (method, uri) pairs.
fn read_access(data: &[u8]) -> Result<Vec<(Vec<u8>, String)>, DerError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let mut out = Vec::new();
    while !seq.is_empty() {
        let mut ad = seq.read_sequence()?;
        let method = ad.read_oid()?.to_vec();
        let uri = read_uri(&mut ad)?;
        ad.finish()?;
        out.push((method, uri));
    }
    Ok(out)
}

impl Certificate {
    fn encode_tbs(&self) -> Vec<u8> {
        let mut exts = vec![
            extension(oids::SUBJECT_KEY_ID, false, &der::octet_string(self.ski.as_bytes())),
            extension(
                oids::AUTHORITY_KEY_ID,
                false,
                &der::sequence(&[&der::tlv(der::ctx_prim(0), self.aki.as_bytes())]),
            ),
        ];
        match &self.kind {
            CertKind::Ca { repo_uri, notify_uri } => {
                exts.push(extension(
                    oids::SUBJECT_INFO_ACCESS,
                    false,
                    &der::sequence(&[
                        &access_description(oids::AD_CA_REPOSITORY, repo_uri),
                        &access_description(oids::AD_RPKI_NOTIFY, notify_uri),
                    ]),
                ));
            }
            CertKind::Ee { crl_uri, issuer_uri, object_uri } => {
                exts.push(extension(oids::KEY_USAGE, true, &der::bit_string(7, &[0x80])));
                let dp_name = der::cons(der::ctx_cons(0), &[&der::cons(der::ctx_cons(0), &[&uri_name(crl_uri)])]);
                exts.push(extension(
                    oids::CRL_DISTRIBUTION_POINTS,
                    false,
                    &der::sequence(&[&der::sequence(&[&dp_name])]),
                ));
                exts.push(extension(
                    oids::AUTHORITY_INFO_ACCESS,
                    false,
                    &der::sequence(&[&access_description(oids::AD_CA_ISSUERS, issuer_uri)]),
                ));
                exts.push(extension(
                    oids::SUBJECT_INFO_ACCESS,
                    false,
                    &der::sequence(&[&access_description(oids::AD_SIGNED_OBJECT, object_uri)]),
                ));
                exts.push(extension(
                    oids::CERTIFICATE_POLICIES,
                    true,
                    &der::sequence(&[&der::sequence(&[&der::oid(oids::RPKI_POLICY)])]),
                ));
            }
        }
        if let Some(ip) = &self.ip_resources {
            exts.push(extension(oids::IP_ADDR_BLOCKS, true, &encode_ip_resources(ip)));
        }
        if let Some(asn) = &self.as_resources {
            exts.push(extension(oids::AUTONOMOUS_SYS_IDS, true, &encode_as_resources(asn)));
        }
        let ext_refs: Vec<&[u8]> = exts.iter().map(|e| e.as_slice()).collect();
        der::sequence(&[
            &der::cons(der::ctx_cons(0), &[&der::unsigned_integer(2)]),
            &der::unsigned_integer(self.serial),
            &sha256_with_rsa(),
            &encode_name(&self.issuer),
            &der::sequence(&[&der::x509_time(self.not_before), &der::x509_time(self.not_after)]),
            &encode_name(&self.subject),
            self.public_key.spki(),
            &der::cons(der::ctx_cons(3), &[&der::sequence(&ext_refs)]),
        ])
    }

    pub fn tbs(&self) -> &[u8] {
        &self.tbs
    }

    pub fn to_der(&self) -> &[u8] {
        &self.der
    }

    pub fn is_ca(&self) -> bool {
        matches!(self.kind, CertKind::Ca { .. })
    }

    pub fn is_self_signed(&self) -> bool {
        self.aki == self.ski && self.issuer == self.subject
    }

    /// The resources of this certificate when none are inherited.
    pub fn explicit_resources(&self) -> Option<ResourceSet> {
        if matches!(self.ip_resources, Some(IpResources::Inherit))
            || matches!(self.as_resources, Some(AsResources::Inherit))
        {
            return None;
        }
        Some(explicit_set(&self.ip_resources, &self.as_resources))
    }

    /// The effective resources given those of the issuer.
    pub fn effective_resources(&self, issuer: &ResourceSet) -> ResourceSet {
        match self.explicit_resources() {
            Some(own) => own,
            // Partial inheritance is treated as inheriting everything.
            None => issuer.clone(),
        }
    }

    pub fn repo_uri(&self) -> Option<&str> {
        match &self.kind {
            CertKind::Ca { repo_uri, .. } => Some(repo_uri),
            _ => None,
        }
    }

    pub fn notify_uri(&self) -> Option<&str> {
        match &self.kind {
            CertKind::Ca { notify_uri, .. } => Some(notify_uri),
            _ => None,
        }
    }

    pub fn verify_signature(&self, issuer_key: &PublicKey, counter: &SignatureCounter) -> bool {
        issuer_key.verify(&self.tbs, &self.signature, counter)
    }

    /// Validates this certificate as issued by `issuer`: key identifiers,
    /// name chaining, signature (one verification), validity at `now` and
    /// resource containment. Returns the effective resources.
    pub fn validate_issued_by(
        &self,
        issuer: &Certificate,
        issuer_resources: &ResourceSet,
        now: i64,
        counter: &SignatureCounter,
    ) -> Result<ResourceSet, CertError> {
        if self.aki != issuer.ski {
            return Err(CertError::Aki);
        }
        if self.issuer != issuer.subject {
            return Err(CertError::IssuerName);
        }
        if !self.verify_signature(&issuer.public_key, counter) {
            return Err(CertError::Signature);
        }
        self.check_validity(now)?;
        let own = self.effective_resources(issuer_resources);
        if !issuer_resources.contains(&own) {
            return Err(CertError::Resources);
        }
        Ok(own)
    }

    pub fn check_validity(&self, now: i64) -> Result<(), CertError> {
        if now < self.not_before {
            Err(CertError::NotYetValid)
        } else if now >= self.not_after {
            Err(CertError::Expired)
        } else {
            Ok(())
        }
    }

    /// Decodes a certificate, rejecting anything outside the profile or not
    /// in canonical form.
    pub fn decode(data: &[u8]) -> Result<Self, CertError> {
        let (tbs, signature) = read_signed(data)?;
        let mut r = Reader::new(tbs);
        let mut seq = r.read_sequence()?;
        let mut version = seq.read_nested(der::ctx_cons(0))?;
        if version.read_u64()? != 2 {
            return Err(DerError::Invalid("version").into());
        }
        version.finish()?;
        let serial = seq.read_u64()?;
        let mut alg = seq.read_sequence()?;
        alg.expect_oid(oids::SHA256_WITH_RSA)?;
        alg.read_null()?;
        alg.finish()?;
        let issuer = read_name(&mut seq)?;
        let mut validity = seq.read_sequence()?;
        let not_before = validity.read_x509_time()?;
        let not_after = validity.read_x509_time()?;
        validity.finish()?;
        let subject = read_name(&mut seq)?;
        let spki = seq.read_captured(der::SEQUENCE)?;
        let public_key = PublicKey::from_spki(spki)?;
        let mut ext_wrap = seq.read_nested(der::ctx_cons(3))?;
        let mut exts = ext_wrap.read_sequence()?;
        ext_wrap.finish()?;
        seq.finish()?;

        let mut ski = None;
        let mut aki = None;
        let mut sia = None;
        let mut crldp = None;
        let mut aia = None;
        let mut ip = None;
        let mut asn = None;
        let mut seen = Vec::new();
        while !exts.is_empty() {
            let mut ext = exts.read_sequence()?;
            let oid = ext.read_oid()?;
            if seen.contains(&oid) {
                return Err(CertError::DuplicateExtension);
            }
            seen.push(oid);
            if ext.peek_tag() == Some(der::BOOLEAN) {
                ext.read_bool()?;
            }
            let value = ext.read(der::OCTET_STRING)?;
            ext.finish()?;
            match oid {
                o if o == oids::SUBJECT_KEY_ID => {
                    let mut v = Reader::new(value);
                    ski = Some(KeyId::from_slice(v.read(der::OCTET_STRING)?).ok_or(CertError::NonCanonical)?);
                    v.finish()?;
                }
                o if o == oids::AUTHORITY_KEY_ID => {
                    let mut v = Reader::new(value);
                    let mut s = v.read_sequence()?;
                    v.finish()?;
                    aki = Some(KeyId::from_slice(s.read(der::ctx_prim(0))?).ok_or(CertError::NonCanonical)?);
                    s.finish()?;
                }
                o if o == oids::SUBJECT_INFO_ACCESS => sia = Some(read_access(value)?),
                o if o == oids::AUTHORITY_INFO_ACCESS => aia = Some(read_access(value)?),
                o if o == oids::CRL_DISTRIBUTION_POINTS => {
                    let mut v = Reader::new(value);
                    let mut dps = v.read_sequence()?;
                    let mut dp = dps.read_sequence()?;
                    let mut name = dp.read_nested(der::ctx_cons(0))?;
                    let mut full = name.read_nested(der::ctx_cons(0))?;
                    crldp = Some(read_uri(&mut full)?);
                    for r in [&full, &name, &dp, &dps, &v] {
                        r.finish()?;
                    }
                }
                o if o == oids::KEY_USAGE || o == oids::CERTIFICATE_POLICIES => {
                    // Fixed values, checked by the canonical re-encoding.
                }
                o if o == oids::IP_ADDR_BLOCKS => ip = Some(decode_ip_resources(value)?),
                o if o == oids::AUTONOMOUS_SYS_IDS => asn = Some(decode_as_resources(value)?),
                other => return Err(CertError::UnknownExtension(oid_text(other))),
            }
        }
        let sia = sia.ok_or(CertError::MissingExtension("subject information access"))?;
        let find = |list: &[(Vec<u8>, String)], method: &[u8]| {
            list.iter().find(|(m, _)| m == method).map(|(_, u)| u.clone())
        };
        let kind = if let Some(object_uri) = find(&sia, oids::AD_SIGNED_OBJECT) {
            let issuer_uri = aia
                .as_deref()
                .and_then(|a| find(a, oids::AD_CA_ISSUERS))
                .ok_or(CertError::MissingExtension("authority information access"))?;
            CertKind::Ee {
                crl_uri: crldp.ok_or(CertError::MissingExtension("CRL distribution points"))?,
                issuer_uri,
                object_uri,
            }
        } else {
            CertKind::Ca {
                repo_uri: find(&sia, oids::AD_CA_REPOSITORY).ok_or(CertError::MissingExtension("caRepository"))?,
                notify_uri: find(&sia, oids::AD_RPKI_NOTIFY).ok_or(CertError::MissingExtension("rpkiNotify"))?,
            }
        };
        let cert = Certificate {
            serial,
            issuer,
            subject,
            not_before,
            not_after,
            public_key,
            ski: ski.ok_or(CertError::MissingExtension("subject key identifier"))?,
            aki: aki.ok_or(CertError::MissingExtension("authority key identifier"))?,
            ip_resources: ip,
            as_resources: asn,
            kind,
            signature,
            tbs: tbs.to_vec(),
            der: data.to_vec(),
        };
        if cert.ski != cert.public_key.key_id() || cert.encode_tbs() != tbs {
            return Err(CertError::NonCanonical);
        }
        Ok(cert)
    }
}

fn oid_text(oid: &[u8]) -> String {
    let mut arcs = Vec::new();
    let mut v = 0u64;
    for (i, b) in oid.iter().enumerate() {
        v = (v << 7) | (b & 0x7f) as u64;
        if b & 0x80 == 0 {
            if arcs.is_empty() && i < 4 {
                arcs.push(v.min(80) / 40);
                arcs.push(v - arcs[0] * 40);
            } else {
                arcs.push(v);
            }
            v = 0;
        }
    }
    arcs.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(".")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oid_text_inverts_encoding() {
        for t in ["1.3.6.1.5.5.7.1.7", "2.5.29.14", "1.2.840.113549.1.9.16.1.24"] {
            assert_eq!(oid_text(&der::encode_oid_text(t).unwrap()), t);
        }
    }

    #[test]
    fn ip_resources_encoding() {
        let r = IpResources::Prefixes(vec!["10.0.0.0/24".parse().unwrap()]);
        let enc = encode_ip_resources(&r);
        assert_eq!(enc, [0x30, 0x0e, 0x30, 0x0c, 0x04, 0x02, 0x00, 0x01, 0x30, 0x06, 0x03, 0x04, 0x00, 10, 0, 0]);
        assert_eq!(decode_ip_resources(&enc).unwrap(), r);
        let inherit = encode_ip_resources(&IpResources::Inherit);
        assert_eq!(decode_ip_resources(&inherit).unwrap(), IpResources::Inherit);
    }

    #[test]
    fn as_resources_encoding() {
        let r = AsResources::Ranges(vec![AsRange::single(64496), AsRange::new(65000, 65010).unwrap()]);
        let enc = encode_as_resources(&r);
        assert_eq!(decode_as_resources(&enc).unwrap(), r);
        assert_eq!(encode_as_resources(&AsResources::Inherit), [0x30, 0x04, 0xa0, 0x02, 0x05, 0x00]);
    }
}
