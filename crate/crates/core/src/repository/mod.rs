//! Scenario-driven repository generation, conversion, tampering and an
//! HTTP service for the resulting trees.

mod convert;
mod generate;
mod layout;
mod publish;
mod serve;
mod tamper;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::object::{CodecVariant, CrlMode, Encoding, Envelope, ObjectError};
use crate::rrdp::{RrdpError, RrdpFormat};

pub use convert::{convert, ConversionReport};
pub use generate::generate;
pub use layout::{
    ca_handle, object_name, repo_uri, CaInfo, PublishedTree, RepositoryTree, TreeState, IMPROVED_DIR, KEYS_DIR,
    LEGACY_DIR, NOTIFICATION_URI, RRDP_DIR, RSYNC_BASE, TAL_FILE, TA_CERT_NAME, TREE_FILE,
};
pub use publish::{publish, read_mirror};
pub use serve::{serve, AccessRecord, ServeConfig, ServerHandle};
pub use tamper::{tamper, TamperAction};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("object: {0}")]
    Object(#[from] ObjectError),
    #[error("certificate: {0}")]
    Cert(#[from] crate::crypto::CertError),
    #[error("RRDP: {0}")]
    Rrdp(#[from] RrdpError),
    #[error("tree metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("key: {0}")]
    Key(#[from] crate::crypto::KeyError),
    #[error("unknown tamper target {0}")]
    Target(String),
    #[error("bind failed: {0}")]
    Bind(String),
    #[error("{0}")]
    Unsupported(String),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RepoError {
    let path = path.into();
    move |source| RepoError::Io { path, source }
}

//------------ Ablation -------------------------------------------------------

/// A named configuration applying one design change, all of them, or none.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Legacy,
    NoCrl,
    ProtoOverAsn1,
    ProtoOverXml,
    NoEe,
    NoRoaSig,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::Legacy,
        Ablation::NoCrl,
        Ablation::ProtoOverAsn1,
        Ablation::ProtoOverXml,
        Ablation::NoEe,
        Ablation::NoRoaSig,
        Ablation::Full,
    ];

    pub fn profile(self) -> Profile {
        use CrlMode::*;
        use Encoding::*;
        use Envelope::*;
        let legacy = Profile {
            roa: CodecVariant::LEGACY,
            manifest: CodecVariant::LEGACY,
            improved_roa: false,
            improved_manifest: false,
            rrdp: RrdpFormat::LegacyXml,
        };
        match self {
            Ablation::Legacy => legacy,
            Ablation::NoCrl => Profile {
                manifest: CodecVariant::new(DirectSigned, Der, Merged),
                improved_manifest: true,
                ..legacy
            },
            Ablation::ProtoOverAsn1 => Profile {
                roa: CodecVariant::new(CmsEe, Proto3, Standalone),
                manifest: CodecVariant::new(CmsEe, Proto3, Standalone),
                improved_roa: true,
                improved_manifest: true,
                ..legacy
            },
            Ablation::ProtoOverXml => Profile { rrdp: RrdpFormat::ImprovedProto, ..legacy },
            Ablation::NoEe => Profile {
                roa: CodecVariant::new(DirectSigned, Der, Standalone),
                manifest: CodecVariant::new(DirectSigned, Der, Standalone),
                improved_roa: true,
                improved_manifest: true,
                ..legacy
            },
            Ablation::NoRoaSig => Profile {
                roa: CodecVariant::new(Unsigned, Der, Standalone),
                manifest: CodecVariant::new(DirectSigned, Der, Standalone),
                improved_roa: true,
                improved_manifest: true,
                ..legacy
            },
            Ablation::Full => Profile {
                roa: CodecVariant::new(Unsigned, Proto3, Standalone),
                manifest: CodecVariant::new(DirectSigned, Proto3, Merged),
                improved_roa: true,
                improved_manifest: true,
                rrdp: RrdpFormat::ImprovedProto,
            },
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Ablation::Legacy => "legacy",
            Ablation::NoCrl => "no_crl",
            Ablation::ProtoOverAsn1 => "proto_over_asn1",
            Ablation::ProtoOverXml => "proto_over_xml",
            Ablation::NoEe => "no_ee",
            Ablation::NoRoaSig => "no_roa_sig",
            Ablation::Full => "full",
        })
    }
}

impl FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| format!("unknown ablation {s:?}"))
    }
}

/// The object variants, file extensions and RRDP format of a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub roa: CodecVariant,
    pub manifest: CodecVariant,
    /// `.iroa` rather than `.roa`.
    pub improved_roa: bool,
    /// `.imft` rather than `.mft`.
    pub improved_manifest: bool,
    pub rrdp: RrdpFormat,
}

impl Profile {
    pub fn roa_ext(&self) -> &'static str {
        if self.improved_roa {
            "iroa"
        } else {
            "roa"
        }
    }

    pub fn manifest_ext(&self) -> &'static str {
        if self.improved_manifest {
            "imft"
        } else {
            "mft"
        }
    }

    pub fn standalone_crl(&self) -> bool {
        self.manifest.crl_mode == CrlMode::Standalone
    }
}

//------------ Scenario -------------------------------------------------------

pub const DEFAULT_VALIDITY_HOURS: u32 = 48;
/// Manifests and CRLs are refreshed daily.
pub const MANIFEST_HOURS: u32 = 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoaCounts {
    Uniform(usize),
    PerCa(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    /// Number of CAs including the trust anchor.
    pub ca_count: usize,
    pub roas_per_ca: RoaCounts,
    pub ablation: Ablation,
    pub validity_hours: u32,
    #[serde(with = "hex_seed")]
    pub seed: [u8; 32],
    /// Issuance time of every object, in UTC seconds.
    pub issued_at: i64,
}

mod hex_seed {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(seed))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        super::parse_seed(&s).map_err(serde::de::Error::custom)
    }
}

/// A seed is 64 hex digits; any other text is hashed into one.
pub fn parse_seed(s: &str) -> Result<[u8; 32], String> {
    if s.len() == 64 {
        if let Ok(bytes) = hex::decode(s) {
            return Ok(bytes.try_into().expect("32 bytes"));
        }
    }
    if s.is_empty() {
        return Err("empty seed".into());
    }
    Ok(crate::rrdp::hash(s.as_bytes()))
}

impl Scenario {
    pub fn new(ca_count: usize, roas_per_ca: usize, ablation: Ablation) -> Self {
        Scenario {
            ca_count,
            roas_per_ca: RoaCounts::Uniform(roas_per_ca),
            ablation,
            validity_hours: DEFAULT_VALIDITY_HOURS,
            seed: parse_seed("irpki").expect("seed"),
            issued_at: 1_735_689_600,
        }
    }

    pub fn with_seed(mut self, seed: [u8; 32]) -> Self {
        self.seed = seed;
        self
    }

    pub fn roas_for(&self, ca: usize) -> usize {
        match &self.roas_per_ca {
            RoaCounts::Uniform(n) => *n,
            RoaCounts::PerCa(v) => v.get(ca).copied().unwrap_or(0),
        }
    }

    pub fn total_roas(&self) -> usize {
        (0..self.ca_count).map(|c| self.roas_for(c)).sum()
    }

    pub fn check(&self) -> Result<(), RepoError> {
        let bad = |m: &str| Err(RepoError::Scenario(m.to_string()));
        if self.ca_count == 0 {
            return bad("ca_count must be at least 1");
        }
        if let RoaCounts::PerCa(v) = &self.roas_per_ca {
            if v.len() != self.ca_count {
                return bad("per-CA ROA list must have ca_count entries");
            }
        }
        if self.validity_hours <= MANIFEST_HOURS {
            return bad("validity must exceed the 24 hour manifest interval");
        }
        // Every ROA gets its own /24 below 10.0.0.0 and its own ASN.
        let block = layout::block_size(self) as u64;
        if block * self.ca_count as u64 > 1 << 23 {
            return bad("too many ROAs for the synthetic address plan");
        }
        Ok(())
    }

    /// Parses `key = value` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, RepoError> {
        let mut s = Scenario::new(1, 0, Ablation::Legacy);
        let mut seen_ca = false;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| RepoError::Scenario(format!("line {}: {m}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("{key}: not a number")));
            match key {
                "ca_count" => {
                    s.ca_count = num(value)? as usize;
                    seen_ca = true;
                }
                "roas_per_ca" => {
                    s.roas_per_ca = if value.contains(',') {
                        RoaCounts::PerCa(value.split(',').map(|v| num(v.trim()).map(|n| n as usize)).collect::<Result<_, _>>()?)
                    } else {
                        RoaCounts::Uniform(num(value)? as usize)
                    }
                }
                "ablation" => s.ablation = value.parse().map_err(bad)?,
                "seed" => s.seed = parse_seed(value).map_err(bad)?,
                "validity_hours" => s.validity_hours = num(value)? as u32,
                "issued_at" => s.issued_at = value.parse().map_err(|_| bad("issued_at: not a number".into()))?,
                _ => return Err(bad(format!("unknown key {key:?}"))),
            }
        }
        if !seen_ca {
            return Err(RepoError::Scenario("ca_count is required".into()));
        }
        s.check()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_file() {
        let s = Scenario::parse("# demo\nca_count = 3\nroas_per_ca = 1,2,0\nablation = no_ee\nseed = x\n").unwrap();
        assert_eq!(s.ca_count, 3);
        assert_eq!(s.total_roas(), 3);
        assert_eq!(s.ablation, Ablation::NoEe);
        assert_eq!(s.seed, crate::rrdp::hash(b"x"));
        assert!(Scenario::parse("ca_count = 0").is_err());
        assert!(Scenario::parse("ca_count = 2\ncolour = red").is_err());
        assert!(Scenario::parse("ca_count = 2\nroas_per_ca = 1,2,3").is_err());
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.to_string().parse::<Ablation>().unwrap(), a);
            let p = a.profile();
            assert!(p.roa.valid_for_roa(), "{a}");
            assert!(p.manifest.valid_for_manifest(), "{a}");
        }
    }
}
