use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use rsa::signature::{SignatureEncoding, Signer as _, Verifier as _};
use rsa::traits::PublicKeyParts;
use rsa::{RsaPrivateKey, RsaPublicKey};
use sha1::Sha1;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::der;

pub const KEY_BITS: usize = 2048;
pub const SIGNATURE_LEN: usize = 256;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("malformed public key")]
    PublicKey,
    #[error("malformed private key")]
    PrivateKey,
    #[error("key modulus is {0} bits, expected 2048")]
    Size(usize),
}

//------------ KeyId ---------------------------------------------------------

/// SHA-1 over the subjectPublicKey bits of a key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyId(pub [u8; 20]);

impl KeyId {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_slice(s: &[u8]) -> Option<Self> {
        s.try_into().ok().map(KeyId)
    }
}

impl fmt::Display for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for KeyId {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "KeyId({self})")
    }
}

//------------ SignatureCounter ----------------------------------------------

/// Counts signature operations. Clones share the same counts.
#[derive(Clone, Debug, Default)]
pub struct SignatureCounter {
    inner: Arc<Counts>,
}

#[derive(Debug, Default)]
struct Counts {
    verify: AtomicU64,
    sign: AtomicU64,
}

impl SignatureCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn verifies(&self) -> u64 {
        self.inner.verify.load(Ordering::SeqCst)
    }

    pub fn signs(&self) -> u64 {
        self.inner.sign.load(Ordering::SeqCst)
    }

    fn record_verify(&self) {
        self.inner.verify.fetch_add(1, Ordering::SeqCst);
    }

    fn record_sign(&self) {
        self.inner.sign.fetch_add(1, Ordering::SeqCst);
    }
}

//------------ PublicKey -----------------------------------------------------

#[derive(Clone)]
pub struct PublicKey {
    spki: Vec<u8>,
    key: VerifyingKey<Sha256>,
    bits: usize,
    id: KeyId,
}

impl PublicKey {
    /// Parses a DER SubjectPublicKeyInfo holding an RSA-2048 key.
    pub fn from_spki(spki: &[u8]) -> Result<Self, KeyError> {
        let key = RsaPublicKey::from_public_key_der(spki).map_err(|_| KeyError::PublicKey)?;
        let bits = key.n().bits();
        if bits != KEY_BITS {
            return Err(KeyError::Size(bits));
        }
        let canonical = key.to_public_key_der().map_err(|_| KeyError::PublicKey)?;
        if canonical.as_bytes() != spki {
            return Err(KeyError::PublicKey);
        }
        let id = key_id_of_spki(spki).ok_or(KeyError::PublicKey)?;
        Ok(PublicKey { spki: spki.to_vec(), key: VerifyingKey::new(key), bits, id })
    }

    fn from_rsa(key: RsaPublicKey) -> Self {
        let spki = key.to_public_key_der().expect("encodable key").as_bytes().to_vec();
        let id = key_id_of_spki(&spki).expect("well-formed spki");
        let bits = key.n().bits();
        PublicKey { spki, key: VerifyingKey::new(key), bits, id }
    }

    pub fn spki(&self) -> &[u8] {
        &self.spki
    }

    pub fn key_id(&self) -> KeyId {
        self.id
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Verifies an RSASSA-PKCS1-v1_5 SHA-256 signature. Every call counts
    /// as one verification, including ones on malformed input.
    pub fn verify(&self, msg: &[u8], sig: &[u8], counter: &SignatureCounter) -> bool {
        counter.record_verify();
        let Ok(sig) = Signature::try_from(sig) else {
            return false;
        };
        self.key.verify(msg, &sig).is_ok()
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.spki == other.spki
    }
}

impl Eq for PublicKey {}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "PublicKey({})", self.id)
    }
}

fn key_id_of_spki(spki: &[u8]) -> Option<KeyId> {
    let mut outer = der::Reader::new(spki);
    let mut seq = outer.read_sequence().ok()?;
    seq.read(der::SEQUENCE).ok()?;
    let (unused, bits) = seq.read_bit_string().ok()?;
    if unused != 0 {
        return None;
    }
    Some(KeyId(Sha1::digest(bits).into()))
}

//------------ KeyPair -------------------------------------------------------

pub struct KeyPair {
    private: RsaPrivateKey,
    signing: SigningKey<Sha256>,
    public: PublicKey,
    memo: Option<Mutex<HashMap<[u8; 32], Vec<u8>>>>,
}

impl KeyPair {
    /// Generates an RSA-2048 key. With a seed the key is a pure function of
    /// the seed, otherwise OS randomness is used.
    pub fn generate(seed: Option<[u8; 32]>) -> Self {
        let private = match seed {
            Some(seed) => {
                let mut rng = ChaCha20Rng::from_seed(seed);
                RsaPrivateKey::new(&mut rng, KEY_BITS)
            }
            None => RsaPrivateKey::new(&mut rand::rngs::OsRng, KEY_BITS),
        }
        .expect("RSA key generation");
        Self::from_private(private)
    }

    fn from_private(private: RsaPrivateKey) -> Self {
        let public = PublicKey::from_rsa(RsaPublicKey::from(&private));
        let signing = SigningKey::<Sha256>::new(private.clone());
        KeyPair { private, signing, public, memo: None }
    }

    /// Caches signatures by message digest. PKCS#1 v1.5 is deterministic,
    /// so cached and fresh signatures are identical.
    pub fn with_memo(mut self) -> Self {
        self.memo = Some(Mutex::new(HashMap::new()));
        self
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> KeyId {
        self.public.key_id()
    }

    pub fn sign(&self, msg: &[u8], counter: &SignatureCounter) -> Vec<u8> {
        counter.record_sign();
        let Some(memo) = &self.memo else {
            return self.signing.sign(msg).to_vec();
        };
        let digest: [u8; 32] = Sha256::digest(msg).into();
        if let Some(sig) = memo.lock().unwrap().get(&digest) {
            return sig.clone();
        }
        let sig = self.signing.sign(msg).to_vec();
        memo.lock().unwrap().insert(digest, sig.clone());
        sig
    }

    pub fn to_pkcs8_der(&self) -> Vec<u8> {
        self.private.to_pkcs8_der().expect("encodable key").as_bytes().to_vec()
    }

    pub fn from_pkcs8_der(der: &[u8]) -> Result<Self, KeyError> {
        let private = RsaPrivateKey::from_pkcs8_der(der).map_err(|_| KeyError::PrivateKey)?;
        let bits = private.n().bits();
        if bits != KEY_BITS {
            return Err(KeyError::Size(bits));
        }
        Ok(Self::from_private(private))
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "KeyPair({})", self.key_id())
    }
}

//------------ Signer --------------------------------------------------------

/// Signing capability handed to object encoders.
pub trait Signer: Sync {
    fn public_key(&self) -> &PublicKey;
    fn sign(&self, msg: &[u8]) -> Vec<u8>;
}

/// A key paired with the counter its signatures are recorded in.
#[derive(Clone, Copy)]
pub struct CountingSigner<'a> {
    pub key: &'a KeyPair,
    pub counter: &'a SignatureCounter,
}

impl<'a> CountingSigner<'a> {
    pub fn new(key: &'a KeyPair, counter: &'a SignatureCounter) -> Self {
        CountingSigner { key, counter }
    }
}

impl Signer for CountingSigner<'_> {
    fn public_key(&self) -> &PublicKey {
        self.key.public_key()
    }

    fn sign(&self, msg: &[u8]) -> Vec<u8> {
        self.key.sign(msg, self.counter)
    }
}

//------------ KeyPool -------------------------------------------------------

/// Number of distinct keys in a seeded pool.
pub const POOL_SIZE: usize = 8;

/// Derives the seed for key `index` of a pool.
pub fn derive_key_seed(seed: &[u8; 32], index: u32) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"irpki key");
    h.update(seed);
    h.update(index.to_be_bytes());
    h.finalize().into()
}

/// A fixed set of deterministic keys shared by every CA and EE certificate
/// of a generated repository. Pools are cached per seed for the life of
/// the process.
#[derive(Clone)]
pub struct KeyPool {
    keys: Arc<Vec<KeyPair>>,
}

impl KeyPool {
    pub fn for_seed(seed: &[u8; 32]) -> Self {
        static POOLS: OnceLock<Mutex<HashMap<[u8; 32], KeyPool>>> = OnceLock::new();
        let pools = POOLS.get_or_init(Default::default);
        // Generation holds the lock so concurrent callers share one pool.
        let mut pools = pools.lock().unwrap();
        pools
            .entry(*seed)
            .or_insert_with(|| {
                let keys = (0..POOL_SIZE as u32)
                    .map(|i| KeyPair::generate(Some(derive_key_seed(seed, i))).with_memo())
                    .collect();
                KeyPool { keys: Arc::new(keys) }
            })
            .clone()
    }

    pub fn from_keys(keys: Vec<KeyPair>) -> Self {
        KeyPool { keys: Arc::new(keys) }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, index: usize) -> &KeyPair {
        &self.keys[index % self.keys.len()]
    }

    pub fn keys(&self) -> &[KeyPair] {
        &self.keys
    }
}
