//! RPKI payload objects in their legacy and improved encodings.

pub mod cms;
pub mod crl;
pub mod manifest;
pub mod roa;
pub mod verify;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{CertError, Certificate, Signer};
use crate::der::DerError;
use crate::proto::ProtoError;

pub use crl::Crl;
pub use manifest::{
    decode_manifest, encode_manifest, replace_content_keeping_signature, DecodedManifest, FileAndHash, Manifest,
    ManifestSignature, RevokedEntry,
};
pub use roa::{decode_roa, encode_roa, DecodedRoa, RoaPayload, RoaPrefix};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ObjectError {
    #[error("DER: {0}")]
    Der(#[from] DerError),
    #[error("proto3: {0}")]
    Proto(#[from] ProtoError),
    #[error("certificate: {0}")]
    Cert(#[from] CertError),
    #[error("input is not in canonical form")]
    NonCanonical,
    #[error("empty input")]
    Empty,
    #[error("ROA has no prefixes")]
    NoPrefixes,
    #[error("max length {max} invalid for /{len}")]
    MaxLength { len: u8, max: u8 },
    #[error("ROA prefixes must be sorted and unique")]
    PrefixOrder,
    #[error("serial must be positive")]
    Serial,
    #[error("validity window is empty")]
    Validity,
    #[error("duplicate file name {0}")]
    DuplicateFile(String),
    #[error("duplicate revoked serial {0}")]
    DuplicateRevocation(u64),
    #[error("merged manifest lists a CRL ({0})")]
    CrlInMergedManifest(String),
    #[error("standalone manifest carries revocations")]
    RevocationsInStandalone,
    #[error("invalid file name {0:?}")]
    FileName(String),
    #[error("unsupported variant {0} for {1}")]
    Variant(CodecVariant, &'static str),
    #[error("signer does not fit the envelope")]
    Signer,
    #[error("unexpected content type")]
    ContentType,
}

//------------ CodecVariant --------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// CMS SignedData carrying a one-off EE certificate.
    CmsEe,
    /// A single signature by the CA key.
    DirectSigned,
    /// No signature; integrity comes from the manifest hash.
    Unsigned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Der,
    Proto3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrlMode {
    Standalone,
    Merged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodecVariant {
    pub envelope: Envelope,
    pub encoding: Encoding,
    pub crl_mode: CrlMode,
}

impl CodecVariant {
    pub const fn new(envelope: Envelope, encoding: Encoding, crl_mode: CrlMode) -> Self {
        CodecVariant { envelope, encoding, crl_mode }
    }

    pub const LEGACY: CodecVariant = CodecVariant::new(Envelope::CmsEe, Encoding::Der, CrlMode::Standalone);

    /// Whether this variant can encode a ROA.
    pub fn valid_for_roa(&self) -> bool {
        self.crl_mode == CrlMode::Standalone
            && !(self.envelope == Envelope::DirectSigned && self.encoding == Encoding::Proto3)
    }

    /// Whether this variant can encode a manifest.
    pub fn valid_for_manifest(&self) -> bool {
        match self.envelope {
            Envelope::Unsigned => false,
            Envelope::CmsEe => self.crl_mode == CrlMode::Standalone,
            Envelope::DirectSigned => true,
        }
    }
}

impl fmt::Display for CodecVariant {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        let e = match self.envelope {
            Envelope::CmsEe => "cms_ee",
            Envelope::DirectSigned => "direct_signed",
            Envelope::Unsigned => "unsigned",
        };
        let c = match self.encoding {
            Encoding::Der => "der",
            Encoding::Proto3 => "proto3",
        };
        let m = match self.crl_mode {
            CrlMode::Standalone => "standalone",
            CrlMode::Merged => "merged",
        };
        write!(f, "{e}/{c}/{m}")
    }
}

impl FromStr for CodecVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split('/').collect();
        let [e, c, m] = parts.as_slice() else {
            return Err(format!("expected envelope/encoding/crl_mode, got {s:?}"));
        };
        let envelope = match *e {
            "cms_ee" => Envelope::CmsEe,
            "direct_signed" => Envelope::DirectSigned,
            "unsigned" => Envelope::Unsigned,
            _ => return Err(format!("unknown envelope {e:?}")),
        };
        let encoding = match *c {
            "der" => Encoding::Der,
            "proto3" => Encoding::Proto3,
            _ => return Err(format!("unknown encoding {c:?}")),
        };
        let crl_mode = match *m {
            "standalone" => CrlMode::Standalone,
            "merged" => CrlMode::Merged,
            _ => return Err(format!("unknown CRL mode {m:?}")),
        };
        Ok(CodecVariant { envelope, encoding, crl_mode })
    }
}

//------------ ObjectSigner --------------------------------------------------

/// What an EE-certificate envelope needs besides the payload.
#[derive(Clone, Copy)]
pub struct EeSigning<'a> {
    pub issuer: &'a Certificate,
    pub issuer_signer: &'a dyn Signer,
    pub ee_key: &'a dyn Signer,
    pub crl_uri: &'a str,
    pub issuer_uri: &'a str,
    pub object_uri: &'a str,
}

#[derive(Clone, Copy)]
pub enum ObjectSigner<'a> {
    Ee(EeSigning<'a>),
    Direct(&'a dyn Signer),
}

//------------ Variant detection ---------------------------------------------

/// Guesses the encoding variant of an improved ROA file from its bytes.
pub fn detect_roa_variant(data: &[u8]) -> Option<CodecVariant> {
    let standalone = CrlMode::Standalone;
    match data.first()? {
        0x30 => match cms::SignedObject::decode(data) {
            Ok(obj) => {
                let encoding = if obj.econtent.first() == Some(&0x30) { Encoding::Der } else { Encoding::Proto3 };
                let envelope = if obj.ee_cert.is_some() { Envelope::CmsEe } else { Envelope::DirectSigned };
                Some(CodecVariant::new(envelope, encoding, standalone))
            }
            Err(_) => Some(CodecVariant::new(Envelope::Unsigned, Encoding::Der, standalone)),
        },
        _ => Some(CodecVariant::new(Envelope::Unsigned, Encoding::Proto3, standalone)),
    }
}

/// Guesses the encoding variant of an improved manifest file.
pub fn detect_manifest_variant(data: &[u8]) -> Option<CodecVariant> {
    match data.first()? {
        0x30 => {
            let obj = cms::SignedObject::decode(data).ok()?;
            let envelope = if obj.ee_cert.is_some() { Envelope::CmsEe } else { Envelope::DirectSigned };
            let (encoding, crl_mode) = if obj.econtent.first() == Some(&0x30) {
                let merged = manifest::der_has_revocations(&obj.econtent);
                (Encoding::Der, if merged { CrlMode::Merged } else { CrlMode::Standalone })
            } else {
                (Encoding::Proto3, CrlMode::Standalone)
            };
            Some(CodecVariant::new(envelope, encoding, crl_mode))
        }
        _ => {
            let mode = if manifest::proto_lists_crl(data) { CrlMode::Standalone } else { CrlMode::Merged };
            Some(CodecVariant::new(Envelope::DirectSigned, Encoding::Proto3, mode))
        }
    }
}

/// Checks a manifest file name: a single path component.
pub fn check_file_name(name: &str) -> Result<(), ObjectError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name.bytes().all(|b| b.is_ascii_graphic() && b != b'/' && b != b'\\');
    if ok {
        Ok(())
    } else {
        Err(ObjectError::FileName(name.to_string()))
    }
}
