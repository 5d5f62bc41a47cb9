use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

use super::keys::PublicKey;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TalError {
    #[error("TAL has no URI line")]
    MissingUri,
    #[error("TAL URI {0:?} is not absolute")]
    RelativeUri(String),
    #[error("TAL is missing the blank separator line")]
    Separator,
    #[error("TAL key is not valid base64")]
    Base64,
    #[error("TAL key does not parse")]
    Key,
}

/// Points at the RRDP notification file of a trust anchor and pins its key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustAnchorLocator {
    pub notification_uri: String,
    pub public_key: PublicKey,
}

impl TrustAnchorLocator {
    pub fn parse(text: &str) -> Result<Self, TalError> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let uri = lines.next().filter(|l| !l.is_empty()).ok_or(TalError::MissingUri)?;
        if !(uri.starts_with("http://") || uri.starts_with("https://")) {
            return Err(TalError::RelativeUri(uri.to_string()));
        }
        if lines.next() != Some("") {
            return Err(TalError::Separator);
        }
        let b64: String = lines.collect();
        let spki = STANDARD.decode(b64.trim()).map_err(|_| TalError::Base64)?;
        let public_key = PublicKey::from_spki(&spki).map_err(|_| TalError::Key)?;
        Ok(TrustAnchorLocator { notification_uri: uri.to_string(), public_key })
    }

    pub fn to_text(&self) -> String {
        let b64 = STANDARD.encode(self.public_key.spki());
        let mut out = format!("{}\n\n", self.notification_uri);
        for chunk in b64.as_bytes().chunks(64) {
            out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
            out.push('\n');
        }
        out
    }
}
