//! Route origin authorizations.

use super::cms::{self, SignedObject};
use super::{CodecVariant, Encoding, Envelope, ObjectError, ObjectSigner};
use crate::crypto::{issue, CertKind, CertTemplate, IpResources, Issuer};
use crate::der::{self, oids, DerError, Reader};
use crate::proto::{self, Fields, ProtoError, Writer};
use crate::resources::{Afi, Prefix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RoaPrefix {
    pub prefix: Prefix,
    pub max_length: Option<u8>,
}

impl RoaPrefix {
    pub fn new(prefix: Prefix, max_length: Option<u8>) -> Self {
        RoaPrefix { prefix, max_length }
    }

    pub fn effective_max_length(&self) -> u8 {
        self.max_length.unwrap_or(self.prefix.len())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoaPayload {
    pub asn: u32,
    pub prefixes: Vec<RoaPrefix>,
    pub serial: u64,
    pub not_before: i64,
    pub not_after: i64,
}

impl RoaPayload {
    /// Builds a payload, sorting prefixes into canonical order.
    pub fn new(asn: u32, mut prefixes: Vec<RoaPrefix>, serial: u64, not_before: i64, not_after: i64) -> Self {
        prefixes.sort();
        RoaPayload { asn, prefixes, serial, not_before, not_after }
    }

    pub fn validate(&self) -> Result<(), ObjectError> {
        if self.prefixes.is_empty() {
            return Err(ObjectError::NoPrefixes);
        }
        for p in &self.prefixes {
            if let Some(max) = p.max_length {
                if max < p.prefix.len() || max > p.prefix.afi().bits() {
                    return Err(ObjectError::MaxLength { len: p.prefix.len(), max });
                }
            }
        }
        if self.prefixes.windows(2).any(|w| w[0].prefix >= w[1].prefix) {
            return Err(ObjectError::PrefixOrder);
        }
        if self.serial == 0 {
            return Err(ObjectError::Serial);
        }
        if self.not_before >= self.not_after {
            return Err(ObjectError::Validity);
        }
        Ok(())
    }

    fn family(&self, afi: Afi) -> impl Iterator<Item = &RoaPrefix> {
        self.prefixes.iter().filter(move |p| p.prefix.afi() == afi)
    }

    fn families(&self) -> impl Iterator<Item = Afi> + '_ {
        [Afi::Ipv4, Afi::Ipv6].into_iter().filter(|afi| self.family(*afi).next().is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedRoa {
    pub payload: RoaPayload,
    pub envelope: Option<SignedObject>,
}

//------------ DER -----------------------------------------------------------

fn der_blocks(p: &RoaPayload) -> Vec<u8> {
    let fams: Vec<Vec<u8>> = p
        .families()
        .map(|afi| {
            let addrs: Vec<Vec<u8>> = p
                .family(afi)
                .map(|rp| {
                    let addr = der::prefix_bit_string(&rp.prefix.octets(), rp.prefix.len());
                    match rp.max_length {
                        Some(m) => der::sequence(&[&addr, &der::unsigned_integer(m as u64)]),
                        None => der::sequence(&[&addr]),
                    }
                })
                .collect();
            let refs: Vec<&[u8]> = addrs.iter().map(|a| a.as_slice()).collect();
            der::sequence(&[&der::octet_string(&afi.code().to_be_bytes()), &der::sequence(&refs)])
        })
        .collect();
    let refs: Vec<&[u8]> = fams.iter().map(|f| f.as_slice()).collect();
    der::sequence(&refs)
}

fn read_der_blocks(r: &mut Reader) -> Result<Vec<RoaPrefix>, ObjectError> {
    let mut blocks = r.read_sequence()?;
    let mut out = Vec::new();
    while !blocks.is_empty() {
        let mut fam = blocks.read_sequence()?;
        let afi = crate::crypto::cert::read_afi(&mut fam)?;
        let mut addrs = fam.read_sequence()?;
        fam.finish()?;
        while !addrs.is_empty() {
            let mut a = addrs.read_sequence()?;
            let prefix = crate::crypto::cert::read_prefix(&mut a, afi)?;
            let max_length = if a.is_empty() {
                None
            } else {
                Some(u8::try_from(a.read_u64()?).map_err(|_| DerError::Invalid("max length"))?)
            };
            a.finish()?;
            out.push(RoaPrefix { prefix, max_length });
        }
    }
    Ok(out)
}

/// RFC 6482 eContent: serial and validity live in the EE certificate.
pub fn legacy_content(p: &RoaPayload) -> Vec<u8> {
    der::sequence(&[&der::unsigned_integer(p.asn as u64), &der_blocks(p)])
}

fn decode_legacy_content(data: &[u8]) -> Result<(u32, Vec<RoaPrefix>), ObjectError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let asn = u32::try_from(seq.read_u64()?).map_err(|_| DerError::Invalid("AS number"))?;
    let prefixes = read_der_blocks(&mut seq)?;
    seq.finish()?;
    Ok((asn, prefixes))
}

/// The improved template with ROA number and validity in the content.
pub fn improved_der(p: &RoaPayload) -> Vec<u8> {
    der::sequence(&[
        &der::unsigned_integer(p.asn as u64),
        &der::unsigned_integer(p.serial),
        &der::generalized_time(p.not_before),
        &der::generalized_time(p.not_after),
        &der_blocks(p),
    ])
}

fn decode_improved_der(data: &[u8]) -> Result<RoaPayload, ObjectError> {
    let mut outer = Reader::new(data);
    let mut seq = outer.read_sequence()?;
    outer.finish()?;
    let asn = u32::try_from(seq.read_u64()?).map_err(|_| DerError::Invalid("AS number"))?;
    let serial = seq.read_u64()?;
    let not_before = seq.read_generalized_time()?;
    let not_after = seq.read_generalized_time()?;
    let prefixes = read_der_blocks(&mut seq)?;
    seq.finish()?;
    Ok(RoaPayload { asn, prefixes, serial, not_before, not_after })
}

//------------ Proto3 --------------------------------------------------------

/// Encodes `IpEntry.ip`: the prefix length followed by the significant
/// address bytes.
fn ip_entry_bytes(p: &Prefix) -> Vec<u8> {
    let mut out = vec![p.len()];
    out.extend_from_slice(&p.significant_octets());
    out
}

pub fn proto_meta(serial: u64, not_before: i64, not_after: i64, ski: Option<&[u8]>) -> Vec<u8> {
    Writer::new()
        .uint(2, serial)
        .message(3, &proto::timestamp(not_before))
        .message(4, &proto::timestamp(not_after))
        .opt_bytes(5, ski)
        .finish()
}

pub struct Meta {
    pub serial: u64,
    pub not_before: i64,
    pub not_after: i64,
    pub ski: Option<Vec<u8>>,
}

pub fn parse_proto_meta(data: &[u8]) -> Result<Meta, ObjectError> {
    let mut f = Fields::parse(data)?;
    if f.opt_bytes(1)?.is_some() {
        return Err(ProtoError::Invalid(1, "object identifier is not carried").into());
    }
    let serial = f.uint(2)?;
    let not_before = proto::parse_timestamp(f.required_message(3)?)?;
    let not_after = proto::parse_timestamp(f.required_message(4)?)?;
    let ski = f.opt_bytes(5)?.map(|s| s.to_vec());
    f.finish()?;
    Ok(Meta { serial, not_before, not_after, ski })
}

/// Proto3 ROA content. Under a CMS envelope the EE certificate carries serial
/// and validity, so `Meta` is left out.
pub fn proto_content(p: &RoaPayload, meta: bool) -> Vec<u8> {
    let mut w = Writer::new();
    w.uint(1, p.asn as u64);
    for afi in p.families() {
        let mut fam = Writer::new();
        fam.uint(1, afi.code() as u64);
        for rp in p.family(afi) {
            let entry = Writer::new()
                .bytes(1, &ip_entry_bytes(&rp.prefix))
                .opt_uint(2, rp.max_length.map(u64::from))
                .finish();
            fam.message(2, &entry);
        }
        w.message(2, &fam.finish());
    }
    if meta {
        w.message(3, &proto_meta(p.serial, p.not_before, p.not_after, None));
    }
    w.finish()
}

/// Decodes proto3 ROA content. `ee` supplies serial and validity when the
/// content sits under an EE certificate and must then carry no `Meta`.
fn decode_proto(data: &[u8], ee: Option<(u64, i64, i64)>) -> Result<RoaPayload, ObjectError> {
    let mut f = Fields::parse(data)?;
    let asn = u32::try_from(f.uint(1)?).map_err(|_| ProtoError::Invalid(1, "AS number"))?;
    let mut prefixes = Vec::new();
    for fam in f.repeated(2)? {
        let mut ff = Fields::parse(fam)?;
        let afi = Afi::from_code(ff.uint(1)?).ok_or(ProtoError::Invalid(1, "address family"))?;
        for entry in ff.repeated(2)? {
            let mut ef = Fields::parse(entry)?;
            let ip = ef.bytes(1)?;
            let (len, addr) = ip.split_first().ok_or(ProtoError::Missing(1))?;
            let prefix = Prefix::from_octets(afi, addr, *len).map_err(|_| ProtoError::Invalid(1, "prefix"))?;
            let max_length = ef
                .opt_uint(2)?
                .map(|m| u8::try_from(m).map_err(|_| ProtoError::Invalid(2, "max length")))
                .transpose()?;
            ef.finish()?;
            prefixes.push(RoaPrefix { prefix, max_length });
        }
        ff.finish()?;
    }
    let (serial, not_before, not_after) = match ee {
        Some(fields) => {
            if f.message(3)?.is_some() {
                return Err(ProtoError::Invalid(3, "ROA meta under an EE certificate").into());
            }
            fields
        }
        None => {
            let meta = parse_proto_meta(f.required_message(3)?)?;
            if meta.ski.is_some() {
                return Err(ProtoError::Invalid(5, "ROA meta carries no key identifier").into());
            }
            (meta.serial, meta.not_before, meta.not_after)
        }
    };
    f.finish()?;
    Ok(RoaPayload { asn, prefixes, serial, not_before, not_after })
}

//------------ Variant dispatch ----------------------------------------------

fn check_roa_variant(variant: CodecVariant) -> Result<(), ObjectError> {
    if variant.valid_for_roa() {
        Ok(())
    } else {
        Err(ObjectError::Variant(variant, "ROA"))
    }
}

/// Encodes a ROA. A signer is required unless the envelope is unsigned.
pub fn encode_roa(
    payload: &RoaPayload,
    variant: CodecVariant,
    signer: Option<ObjectSigner>,
) -> Result<Vec<u8>, ObjectError> {
    payload.validate()?;
    check_roa_variant(variant)?;
    match (variant.envelope, signer) {
        (Envelope::Unsigned, None) => Ok(match variant.encoding {
            Encoding::Der => improved_der(payload),
            Encoding::Proto3 => proto_content(payload, true),
        }),
        (Envelope::DirectSigned, Some(ObjectSigner::Direct(key))) => {
            Ok(cms::encode(oids::CT_ROA, &improved_der(payload), None, key, payload.not_before))
        }
        (Envelope::CmsEe, Some(ObjectSigner::Ee(ee))) => {
            let content = match variant.encoding {
                Encoding::Der => legacy_content(payload),
                Encoding::Proto3 => proto_content(payload, false),
            };
            let template = CertTemplate {
                serial: payload.serial,
                subject: ee.ee_key.public_key().key_id().to_string(),
                not_before: payload.not_before,
                not_after: payload.not_after,
                public_key: ee.ee_key.public_key().clone(),
                ip_resources: Some(IpResources::Prefixes(payload.prefixes.iter().map(|p| p.prefix).collect())),
                as_resources: None,
                kind: CertKind::Ee {
                    crl_uri: ee.crl_uri.to_string(),
                    issuer_uri: ee.issuer_uri.to_string(),
                    object_uri: ee.object_uri.to_string(),
                },
            };
            let cert = issue(template, Issuer::Cert(ee.issuer, ee.issuer_signer))?;
            Ok(cms::encode(oids::CT_ROA, &content, Some(&cert), ee.ee_key, payload.not_before))
        }
        _ => Err(ObjectError::Signer),
    }
}

pub fn decode_roa(data: &[u8], variant: CodecVariant) -> Result<DecodedRoa, ObjectError> {
    if data.is_empty() {
        return Err(ObjectError::Empty);
    }
    check_roa_variant(variant)?;
    let (payload, envelope) = match variant.envelope {
        Envelope::Unsigned => {
            let p = match variant.encoding {
                Encoding::Der => decode_improved_der(data)?,
                Encoding::Proto3 => decode_proto(data, None)?,
            };
            (p, None)
        }
        Envelope::DirectSigned => {
            let obj = SignedObject::decode(data)?;
            if obj.ee_cert.is_some() {
                return Err(ObjectError::Variant(variant, "ROA with EE certificate"));
            }
            (decode_improved_der(&obj.econtent)?, Some(obj))
        }
        Envelope::CmsEe => {
            let obj = SignedObject::decode(data)?;
            let ee = obj.ee_cert.as_ref().ok_or(ObjectError::Variant(variant, "ROA without EE certificate"))?;
            let p = match variant.encoding {
                Encoding::Der => {
                    let (asn, prefixes) = decode_legacy_content(&obj.econtent)?;
                    RoaPayload { asn, prefixes, serial: ee.serial, not_before: ee.not_before, not_after: ee.not_after }
                }
                Encoding::Proto3 => decode_proto(&obj.econtent, Some((ee.serial, ee.not_before, ee.not_after)))?,
            };
            (p, Some(obj))
        }
    };
    if let Some(obj) = &envelope {
        if obj.content_type != oids::CT_ROA {
            return Err(ObjectError::ContentType);
        }
    }
    payload.validate()?;
    Ok(DecodedRoa { payload, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RoaPayload {
        let t = 1_735_689_600;
        RoaPayload::new(64496, vec![RoaPrefix::new("10.0.0.0/24".parse().unwrap(), None)], 1, t, t + 86400)
    }

    #[test]
    fn proto_bytes_by_hand() {
        let p = sample();
        let mut expected = vec![0x08, 0xf0, 0xf7, 0x03]; // asn = 64496
        expected.extend([0x12, 0x0a, 0x08, 0x01, 0x12, 0x06, 0x0a, 0x04, 24, 10, 0, 0]);
        expected.extend([0x1a, 0x12, 0x10, 0x01]);
        expected.extend([0x1a, 0x06, 0x08, 0x80, 0x8b, 0xd2, 0xbb, 0x06]);
        expected.extend([0x22, 0x06, 0x08, 0x80, 0xae, 0xd7, 0xbb, 0x06]);
        assert_eq!(proto_content(&p, true), expected);
        assert_eq!(decode_proto(&expected, None).unwrap(), p);

        let bare = proto_content(&p, false);
        assert_eq!(bare, expected[..16]);
        let ee = (p.serial, p.not_before, p.not_after);
        assert_eq!(decode_proto(&bare, Some(ee)).unwrap(), p);
        assert!(decode_proto(&expected, Some(ee)).is_err());
        assert!(decode_proto(&bare, None).is_err());
    }

    #[test]
    fn unsigned_round_trips() {
        let p = sample();
        for enc in [Encoding::Der, Encoding::Proto3] {
            let v = CodecVariant::new(Envelope::Unsigned, enc, super::super::CrlMode::Standalone);
            let bytes = encode_roa(&p, v, None).unwrap();
            assert_eq!(decode_roa(&bytes, v).unwrap().payload, p);
        }
    }

    #[test]
    fn rejects_bad_payloads() {
        let mut p = sample();
        p.prefixes.clear();
        assert_eq!(p.validate(), Err(ObjectError::NoPrefixes));
        let mut p = sample();
        p.prefixes[0].max_length = Some(23);
        assert!(matches!(p.validate(), Err(ObjectError::MaxLength { .. })));
        let v = CodecVariant::new(Envelope::Unsigned, Encoding::Der, super::super::CrlMode::Standalone);
        assert_eq!(decode_roa(&[], v), Err(ObjectError::Empty));
    }
}
