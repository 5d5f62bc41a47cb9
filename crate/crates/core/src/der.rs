//! Strict DER reading and writing.
//!
//! Only the subset of X.690 needed for the RPKI templates is supported:
//! single-byte tags, definite minimal lengths, minimal INTEGER encodings
//! and zero-padded BIT STRINGs. Anything else is rejected on decode.

use chrono::{Datelike, NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

pub const BOOLEAN: u8 = 0x01;
pub const INTEGER: u8 = 0x02;
pub const BIT_STRING: u8 = 0x03;
pub const OCTET_STRING: u8 = 0x04;
pub const NULL: u8 = 0x05;
pub const OID: u8 = 0x06;
pub const PRINTABLE_STRING: u8 = 0x13;
pub const IA5_STRING: u8 = 0x16;
pub const UTC_TIME: u8 = 0x17;
pub const GENERALIZED_TIME: u8 = 0x18;
pub const SEQUENCE: u8 = 0x30;
pub const SET: u8 = 0x31;

/// Context-specific constructed tag `[n]`.
pub const fn ctx_cons(n: u8) -> u8 {
    0xa0 | n
}

/// Context-specific primitive tag `[n]`.
pub const fn ctx_prim(n: u8) -> u8 {
    0x80 | n
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DerError {
    #[error("truncated input")]
    Truncated,
    #[error("non-minimal or indefinite length")]
    BadLength,
    #[error("unexpected tag {found:#04x}, expected {expected:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("unsupported multi-byte tag")]
    LongTag,
    #[error("trailing data after value")]
    Trailing,
    #[error("invalid {0}")]
    Invalid(&'static str),
}

pub type Result<T> = std::result::Result<T, DerError>;

//------------ Writing -------------------------------------------------------

fn push_len(out: &mut Vec<u8>, len: usize) {
    if len < 0x80 {
        out.push(len as u8);
    } else {
        let bytes = len.to_be_bytes();
        let skip = bytes.iter().take_while(|b| **b == 0).count();
        out.push(0x80 | (bytes.len() - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
}

pub fn tlv(tag: u8, content: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(content.len() + 6);
    out.push(tag);
    push_len(&mut out, content.len());
    out.extend_from_slice(content);
    out
}

/// Wraps the concatenation of `parts` in a constructed value.
pub fn cons(tag: u8, parts: &[&[u8]]) -> Vec<u8> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(len + 6);
    out.push(tag);
    push_len(&mut out, len);
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

pub fn sequence(parts: &[&[u8]]) -> Vec<u8> {
    cons(SEQUENCE, parts)
}

/// A DER `SET OF`: elements are sorted by their encodings.
pub fn set_of(mut elements: Vec<Vec<u8>>) -> Vec<u8> {
    elements.sort();
    let refs: Vec<&[u8]> = elements.iter().map(|e| e.as_slice()).collect();
    cons(SET, &refs)
}

pub fn unsigned_integer(v: u64) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|b| **b == 0).count().min(7);
    let mut content = Vec::with_capacity(9);
    if bytes[skip] & 0x80 != 0 {
        content.push(0);
    }
    content.extend_from_slice(&bytes[skip..]);
    tlv(INTEGER, &content)
}

pub fn boolean(v: bool) -> Vec<u8> {
    tlv(BOOLEAN, &[if v { 0xff } else { 0 }])
}

pub fn null() -> Vec<u8> {
    vec![NULL, 0]
}

pub fn octet_string(v: &[u8]) -> Vec<u8> {
    tlv(OCTET_STRING, v)
}

pub fn bit_string(unused: u8, bytes: &[u8]) -> Vec<u8> {
    let mut content = Vec::with_capacity(bytes.len() + 1);
    content.push(unused);
    content.extend_from_slice(bytes);
    tlv(BIT_STRING, &content)
}

/// Encodes a prefix as the RFC 3779 bit string of its significant bits.
pub fn prefix_bit_string(addr: &[u8], len: u8) -> Vec<u8> {
    let nbytes = (len as usize).div_ceil(8);
    let unused = (nbytes * 8 - len as usize) as u8;
    bit_string(unused, &addr[..nbytes])
}

pub fn ia5_string(s: &str) -> Vec<u8> {
    tlv(IA5_STRING, s.as_bytes())
}

pub fn printable_string(s: &str) -> Vec<u8> {
    tlv(PRINTABLE_STRING, s.as_bytes())
}

pub fn oid(encoded: &[u8]) -> Vec<u8> {
    tlv(OID, encoded)
}

fn datetime(t: i64) -> chrono::DateTime<Utc> {
    Utc.timestamp_opt(t, 0).single().expect("timestamp in range")
}

pub fn generalized_time(t: i64) -> Vec<u8> {
    let s = datetime(t).format("%Y%m%d%H%M%SZ").to_string();
    tlv(GENERALIZED_TIME, s.as_bytes())
}

pub fn utc_time(t: i64) -> Vec<u8> {
    let s = datetime(t).format("%y%m%d%H%M%SZ").to_string();
    tlv(UTC_TIME, s.as_bytes())
}

/// X.509 `Time`: UTCTime through 2049, GeneralizedTime afterwards.
pub fn x509_time(t: i64) -> Vec<u8> {
    if datetime(t).year() < 2050 {
        utc_time(t)
    } else {
        generalized_time(t)
    }
}

//------------ Reading -------------------------------------------------------

/// A cursor over a sequence of DER values.
#[derive(Clone, Debug)]
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn peek_tag(&self) -> Option<u8> {
        self.buf.first().copied()
    }

    /// Reads the next value, returning its tag, content and full encoding.
    pub fn read_raw(&mut self) -> Result<(u8, &'a [u8], &'a [u8])> {
        let buf = self.buf;
        let tag = *buf.first().ok_or(DerError::Truncated)?;
        if tag & 0x1f == 0x1f {
            return Err(DerError::LongTag);
        }
        let first = *buf.get(1).ok_or(DerError::Truncated)?;
        let (len, hdr) = if first < 0x80 {
            (first as usize, 2)
        } else {
            let n = (first & 0x7f) as usize;
            if n == 0 || n > 4 {
                return Err(DerError::BadLength);
            }
            let bytes = buf.get(2..2 + n).ok_or(DerError::Truncated)?;
            if bytes[0] == 0 {
                return Err(DerError::BadLength);
            }
            let len = bytes.iter().fold(0usize, |acc, b| (acc << 8) | *b as usize);
            if len < 0x80 {
                return Err(DerError::BadLength);
            }
            (len, 2 + n)
        };
        let end = hdr.checked_add(len).ok_or(DerError::BadLength)?;
        if buf.len() < end {
            return Err(DerError::Truncated);
        }
        self.buf = &buf[end..];
        Ok((tag, &buf[hdr..end], &buf[..end]))
    }

    pub fn read(&mut self, tag: u8) -> Result<&'a [u8]> {
        match self.peek_tag() {
            None => Err(DerError::Truncated),
            Some(t) if t != tag => Err(DerError::UnexpectedTag { expected: tag, found: t }),
            Some(_) => Ok(self.read_raw()?.1),
        }
    }

    /// Reads a value with `tag` and returns its complete encoding.
    pub fn read_captured(&mut self, tag: u8) -> Result<&'a [u8]> {
        match self.peek_tag() {
            None => Err(DerError::Truncated),
            Some(t) if t != tag => Err(DerError::UnexpectedTag { expected: tag, found: t }),
            Some(_) => Ok(self.read_raw()?.2),
        }
    }

    pub fn read_opt(&mut self, tag: u8) -> Result<Option<&'a [u8]>> {
        if self.peek_tag() == Some(tag) {
            Ok(Some(self.read_raw()?.1))
        } else {
            Ok(None)
        }
    }

    pub fn read_nested(&mut self, tag: u8) -> Result<Reader<'a>> {
        self.read(tag).map(Reader::new)
    }

    pub fn read_sequence(&mut self) -> Result<Reader<'a>> {
        self.read_nested(SEQUENCE)
    }

    pub fn finish(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DerError::Trailing)
        }
    }

    pub fn read_u64(&mut self) -> Result<u64> {
        let content = self.read(INTEGER)?;
        decode_unsigned(content)
    }

    pub fn read_bool(&mut self) -> Result<bool> {
        match self.read(BOOLEAN)? {
            [0xff] => Ok(true),
            [0x00] => Ok(false),
            _ => Err(DerError::Invalid("boolean")),
        }
    }

    pub fn read_null(&mut self) -> Result<()> {
        if self.read(NULL)?.is_empty() {
            Ok(())
        } else {
            Err(DerError::Invalid("null"))
        }
    }

    pub fn read_oid(&mut self) -> Result<&'a [u8]> {
        self.read(OID)
    }

    pub fn expect_oid(&mut self, expected: &[u8]) -> Result<()> {
        if self.read_oid()? == expected {
            Ok(())
        } else {
            Err(DerError::Invalid("object identifier"))
        }
    }

    /// Reads a BIT STRING, returning the unused-bit count and the bytes.
    pub fn read_bit_string(&mut self) -> Result<(u8, &'a [u8])> {
        let content = self.read(BIT_STRING)?;
        let (&unused, bytes) = content.split_first().ok_or(DerError::Invalid("bit string"))?;
        if unused > 7 || (bytes.is_empty() && unused != 0) {
            return Err(DerError::Invalid("bit string"));
        }
        if let Some(last) = bytes.last() {
            if last & ((1u16 << unused) - 1) as u8 != 0 {
                return Err(DerError::Invalid("bit string padding"));
            }
        }
        Ok((unused, bytes))
    }

    pub fn read_ia5(&mut self) -> Result<&'a str> {
        let content = self.read(IA5_STRING)?;
        if !content.is_ascii() {
            return Err(DerError::Invalid("IA5String"));
        }
        std::str::from_utf8(content).map_err(|_| DerError::Invalid("IA5String"))
    }

    pub fn read_printable(&mut self) -> Result<&'a str> {
        let content = self.read(PRINTABLE_STRING)?;
        if !content.iter().all(|c| is_printable(*c)) {
            return Err(DerError::Invalid("PrintableString"));
        }
        std::str::from_utf8(content).map_err(|_| DerError::Invalid("PrintableString"))
    }

    pub fn read_generalized_time(&mut self) -> Result<i64> {
        let content = self.read(GENERALIZED_TIME)?;
        parse_time(content, "%Y%m%d%H%M%SZ", 15)
    }

    /// Reads an X.509 `Time`, enforcing the RFC 5280 choice by year.
    pub fn read_x509_time(&mut self) -> Result<i64> {
        match self.peek_tag() {
            Some(UTC_TIME) => {
                let content = self.read(UTC_TIME)?;
                if content.len() != 13 {
                    return Err(DerError::Invalid("UTCTime"));
                }
                let yy: i32 = std::str::from_utf8(&content[..2])
                    .ok()
                    .and_then(|s| s.parse().ok())
                    .ok_or(DerError::Invalid("UTCTime"))?;
                let century = if yy >= 50 { "19" } else { "20" };
                let mut full = century.as_bytes().to_vec();
                full.extend_from_slice(content);
                parse_time(&full, "%Y%m%d%H%M%SZ", 15)
            }
            Some(GENERALIZED_TIME) => {
                let t = self.read_generalized_time()?;
                if datetime(t).year() < 2050 {
                    return Err(DerError::Invalid("GeneralizedTime before 2050"));
                }
                Ok(t)
            }
            Some(found) => Err(DerError::UnexpectedTag { expected: UTC_TIME, found }),
            None => Err(DerError::Truncated),
        }
    }
}

pub fn is_printable(c: u8) -> bool {
    c.is_ascii_alphanumeric() || b" '()+,-./:=?".contains(&c)
}

fn parse_time(content: &[u8], fmt: &str, len: usize) -> Result<i64> {
    if content.len() != len {
        return Err(DerError::Invalid("time"));
    }
    let s = std::str::from_utf8(content).map_err(|_| DerError::Invalid("time"))?;
    NaiveDateTime::parse_from_str(s, fmt)
        .map(|t| t.and_utc().timestamp())
        .map_err(|_| DerError::Invalid("time"))
}

pub fn decode_unsigned(content: &[u8]) -> Result<u64> {
    match content {
        [] => Err(DerError::Invalid("integer")),
        [first, ..] if first & 0x80 != 0 => Err(DerError::Invalid("negative integer")),
        [0, second, ..] if second & 0x80 == 0 => Err(DerError::Invalid("non-minimal integer")),
        _ => {
            let digits = if content[0] == 0 && content.len() > 1 { &content[1..] } else { content };
            if digits.len() > 8 {
                return Err(DerError::Invalid("integer too large"));
            }
            Ok(digits.iter().fold(0u64, |acc, b| (acc << 8) | *b as u64))
        }
    }
}

//------------ Object identifiers --------------------------------------------

/// Encodes a dotted-decimal object identifier into its DER content bytes.
pub fn encode_oid_text(text: &str) -> Option<Vec<u8>> {
    let arcs: Vec<u64> = text.split('.').map(|a| a.parse().ok()).collect::<Option<_>>()?;
    if arcs.len() < 2 || arcs[0] > 2 {
        return None;
    }
    let mut out = Vec::new();
    let mut push = |mut v: u64| {
        let mut tmp = vec![(v & 0x7f) as u8];
        v >>= 7;
        while v > 0 {
            tmp.push(0x80 | (v & 0x7f) as u8);
            v >>= 7;
        }
        tmp.reverse();
        out.extend_from_slice(&tmp);
    };
    push(arcs[0] * 40 + arcs[1]);
    for a in &arcs[2..] {
        push(*a);
    }
    Some(out)
}

pub mod oids {
    pub const SHA256: &[u8] = &[0x60, 0x86, 0x48, 0x01, 0x65, 0x03, 0x04, 0x02, 0x01];
    pub const RSA_ENCRYPTION: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x01, 0x01];
    pub const SHA256_WITH_RSA: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x01, 0x0b];
    pub const SIGNED_DATA: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x07, 0x02];
    pub const CONTENT_TYPE_ATTR: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x09, 0x03];
    pub const MESSAGE_DIGEST_ATTR: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x09, 0x04];
    pub const SIGNING_TIME_ATTR: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x09, 0x05];
    pub const CT_ROA: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x09, 0x10, 0x01, 0x18];
    pub const CT_MANIFEST: &[u8] = &[0x2a, 0x86, 0x48, 0x86, 0xf7, 0x0d, 0x01, 0x09, 0x10, 0x01, 0x1a];
    pub const COMMON_NAME: &[u8] = &[0x55, 0x04, 0x03];
    pub const SUBJECT_KEY_ID: &[u8] = &[0x55, 0x1d, 0x0e];
    pub const KEY_USAGE: &[u8] = &[0x55, 0x1d, 0x0f];
    pub const CRL_NUMBER: &[u8] = &[0x55, 0x1d, 0x14];
    pub const CRL_DISTRIBUTION_POINTS: &[u8] = &[0x55, 0x1d, 0x1f];
    pub const CERTIFICATE_POLICIES: &[u8] = &[0x55, 0x1d, 0x20];
    pub const AUTHORITY_KEY_ID: &[u8] = &[0x55, 0x1d, 0x23];
    pub const AUTHORITY_INFO_ACCESS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x01, 0x01];
    pub const IP_ADDR_BLOCKS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x01, 0x07];
    pub const AUTONOMOUS_SYS_IDS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x01, 0x08];
    pub const SUBJECT_INFO_ACCESS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x01, 0x0b];
    pub const AD_CA_ISSUERS: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x02];
    pub const AD_CA_REPOSITORY: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x05];
    pub const AD_SIGNED_OBJECT: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x0b];
    pub const AD_RPKI_NOTIFY: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x30, 0x0d];
    pub const RPKI_POLICY: &[u8] = &[0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x0e, 0x02];
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oid_constants_match_dotted_text() {
        let table: &[(&[u8], &str)] = &[
            (oids::SHA256, "2.16.840.1.101.3.4.2.1"),
            (oids::RSA_ENCRYPTION, "1.2.840.113549.1.1.1"),
            (oids::SHA256_WITH_RSA, "1.2.840.113549.1.1.11"),
            (oids::SIGNED_DATA, "1.2.840.113549.1.7.2"),
            (oids::CONTENT_TYPE_ATTR, "1.2.840.113549.1.9.3"),
            (oids::MESSAGE_DIGEST_ATTR, "1.2.840.113549.1.9.4"),
            (oids::SIGNING_TIME_ATTR, "1.2.840.113549.1.9.5"),
            (oids::CT_ROA, "1.2.840.113549.1.9.16.1.24"),
            (oids::CT_MANIFEST, "1.2.840.113549.1.9.16.1.26"),
            (oids::COMMON_NAME, "2.5.4.3"),
            (oids::SUBJECT_KEY_ID, "2.5.29.14"),
            (oids::KEY_USAGE, "2.5.29.15"),
            (oids::CRL_NUMBER, "2.5.29.20"),
            (oids::CRL_DISTRIBUTION_POINTS, "2.5.29.31"),
            (oids::CERTIFICATE_POLICIES, "2.5.29.32"),
            (oids::AUTHORITY_KEY_ID, "2.5.29.35"),
            (oids::AUTHORITY_INFO_ACCESS, "1.3.6.1.5.5.7.1.1"),
            (oids::IP_ADDR_BLOCKS, "1.3.6.1.5.5.7.1.7"),
            (oids::AUTONOMOUS_SYS_IDS, "1.3.6.1.5.5.7.1.8"),
            (oids::SUBJECT_INFO_ACCESS, "1.3.6.1.5.5.7.1.11"),
            (oids::AD_CA_ISSUERS, "1.3.6.1.5.5.7.48.2"),
            (oids::AD_CA_REPOSITORY, "1.3.6.1.5.5.7.48.5"),
            (oids::AD_SIGNED_OBJECT, "1.3.6.1.5.5.7.48.11"),
            (oids::AD_RPKI_NOTIFY, "1.3.6.1.5.5.7.48.13"),
            (oids::RPKI_POLICY, "1.3.6.1.5.5.7.14.2"),
        ];
        for (encoded, text) in table {
            assert_eq!(encode_oid_text(text).unwrap(), *encoded, "{text}");
        }
    }

    #[test]
    fn integers_are_minimal() {
        assert_eq!(unsigned_integer(0), vec![2, 1, 0]);
        assert_eq!(unsigned_integer(127), vec![2, 1, 127]);
        assert_eq!(unsigned_integer(128), vec![2, 2, 0, 128]);
        assert_eq!(unsigned_integer(64496), vec![2, 3, 0, 0xfb, 0xf0]);
        assert_eq!(unsigned_integer(u64::MAX).len(), 11);
        for v in [0, 1, 127, 128, 255, 256, 64496, 1 << 63, u64::MAX] {
            assert_eq!(Reader::new(&unsigned_integer(v)).read_u64().unwrap(), v);
        }
        assert!(Reader::new(&[2, 2, 0, 1]).read_u64().is_err());
        assert!(Reader::new(&[2, 1, 0x80]).read_u64().is_err());
    }

    #[test]
    fn long_lengths_round_trip_and_reject_non_minimal() {
        let content = vec![7u8; 300];
        let enc = octet_string(&content);
        assert_eq!(&enc[..4], &[4, 0x82, 0x01, 0x2c]);
        assert_eq!(Reader::new(&enc).read(OCTET_STRING).unwrap(), &content[..]);
        assert_eq!(Reader::new(&[4, 0x81, 5, 1, 2, 3, 4, 5]).read(4), Err(DerError::BadLength));
        assert_eq!(Reader::new(&[4, 0x80]).read(4), Err(DerError::BadLength));
        assert_eq!(Reader::new(&[4, 5, 1]).read(4), Err(DerError::Truncated));
    }

    #[test]
    fn times_round_trip() {
        let t = 1_735_689_600; // 2025-01-01T00:00:00Z
        assert_eq!(generalized_time(t)[2..], *b"20250101000000Z");
        assert_eq!(utc_time(t)[2..], *b"250101000000Z");
        assert_eq!(Reader::new(&generalized_time(t)).read_generalized_time().unwrap(), t);
        assert_eq!(Reader::new(&x509_time(t)).read_x509_time().unwrap(), t);
        let late = 2_600_000_000; // 2052
        assert_eq!(x509_time(late)[0], GENERALIZED_TIME);
        assert_eq!(Reader::new(&x509_time(late)).read_x509_time().unwrap(), late);
        // UTCTime must be used before 2050.
        assert!(Reader::new(&generalized_time(t)).read_x509_time().is_err());
    }

    #[test]
    fn bit_string_padding_must_be_zero() {
        assert!(Reader::new(&[3, 2, 1, 0xfe]).read_bit_string().is_ok());
        assert!(Reader::new(&[3, 2, 1, 0xff]).read_bit_string().is_err());
        assert!(Reader::new(&[3, 1, 1]).read_bit_string().is_err());
        assert_eq!(prefix_bit_string(&[10, 0, 0, 0], 24), vec![3, 4, 0, 10, 0, 0]);
        assert_eq!(prefix_bit_string(&[10, 0, 0, 0], 8), vec![3, 2, 0, 10]);
        assert_eq!(prefix_bit_string(&[0, 0, 0, 0], 0), vec![3, 1, 0]);
        assert_eq!(prefix_bit_string(&[10, 128, 0, 0], 9), vec![3, 3, 7, 10, 128]);
    }

    #[test]
    fn set_of_sorts_elements() {
        let s = set_of(vec![vec![0x30, 2, 5, 5], vec![0x30, 1, 1]]);
        assert_eq!(s, vec![0x31, 7, 0x30, 1, 1, 0x30, 2, 5, 5]);
    }
}
