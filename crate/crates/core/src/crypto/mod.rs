//! Keys, signatures, resource certificates and trust anchors.

pub mod cert;
pub mod keys;
pub mod tal;

pub use cert::{issue, AsResources, CaCertificate, CertError, CertKind, CertTemplate, Certificate, IpResources, Issuer};
pub use keys::{
    CountingSigner, KeyError, KeyId, KeyPair, KeyPool, PublicKey, SignatureCounter, Signer, KEY_BITS, POOL_SIZE,
    SIGNATURE_LEN,
};
pub use tal::{TalError, TrustAnchorLocator};

/// Generates an RSA-2048 key pair, deterministically when seeded.
pub fn generate_keypair(seed: Option<[u8; 32]>) -> KeyPair {
    KeyPair::generate(seed)
}
