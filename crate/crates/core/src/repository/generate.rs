//! Scenario generation.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::layout::{
    block_size, ca_handle, ca_subject, mirror_path, object_name, repo_uri, CaInfo, PublishedTree, TreeState,
    LEGACY_DIR, NOTIFICATION_URI, TA_CERT_NAME,
};
use super::{io_err, publish, Profile, RepoError, RepositoryTree, Scenario, MANIFEST_HOURS};
use crate::crypto::{
    issue, AsResources, CertKind, CertTemplate, Certificate, CountingSigner, IpResources, Issuer, KeyPair, KeyPool,
    SignatureCounter, TrustAnchorLocator,
};
use crate::object::{
    encode_manifest, encode_roa, Crl, EeSigning, Envelope, FileAndHash, Manifest, ObjectSigner, RoaPayload, RoaPrefix,
};
use crate::resources::{synthetic_v4, v4_default, v4_range_prefixes, v6_default, AsRange, Prefix};

/// First ASN handed out to synthetic ROAs.
pub const FIRST_ASN: u32 = 64496;

/// The objects of one publication point, by file name.
pub(crate) type Objects = BTreeMap<String, Vec<u8>>;

/// Serial numbers start high in the positive range so that every serial
/// encodes to the same length.
fn serial_base(seed: &[u8; 32], ca: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"serial");
    h.update(seed);
    h.update((ca as u64).to_be_bytes());
    let d = h.finalize();
    (1 << 63) | (u64::from_be_bytes(d[..8].try_into().unwrap()) >> 2)
}

fn key_index(ca: usize, pool: usize) -> usize {
    // The trust anchor key is not shared with any other CA.
    if ca == 0 {
        0
    } else {
        1 + (ca - 1) % (pool - 1)
    }
}

pub(crate) fn session_id(seed: &[u8; 32], dir: &str) -> String {
    let mut h = Sha256::new();
    h.update(b"session");
    h.update(seed);
    h.update(dir.as_bytes());
    let d = h.finalize();
    uuid::Builder::from_random_bytes(d[..16].try_into().unwrap()).into_uuid().hyphenated().to_string()
}

/// The IPv4 block and ASN range of CA `ca`.
pub(crate) fn ca_block(scenario: &Scenario, ca: usize) -> (Vec<Prefix>, AsRange) {
    let b = block_size(scenario) as u64;
    let first = ca as u64 * b;
    let base = u32::from(std::net::Ipv4Addr::new(10, 0, 0, 0)) as u64;
    let prefixes = v4_range_prefixes(base + (first << 8), base + ((first + b) << 8));
    let asns = AsRange { min: FIRST_ASN + first as u32, max: FIRST_ASN + (first + b - 1) as u32 };
    (prefixes, asns)
}

pub(crate) fn roa_payload(scenario: &Scenario, ca: usize, j: usize, serial: u64) -> RoaPayload {
    let g = (ca * block_size(scenario) + j) as u32;
    let not_before = scenario.issued_at;
    let not_after = not_before + scenario.validity_hours as i64 * 3600;
    RoaPayload::new(FIRST_ASN + g, vec![RoaPrefix::new(synthetic_v4(g), None)], serial, not_before, not_after)
}

//------------ CaContext ------------------------------------------------------

/// A CA able to sign: its certificate, key and the key pool for EE keys.
pub(crate) struct CaContext<'a> {
    pub info: &'a CaInfo,
    pub cert: &'a Certificate,
    pub pool: &'a KeyPool,
    pub counter: &'a SignatureCounter,
}

impl<'a> CaContext<'a> {
    fn key(&self) -> &'a KeyPair {
        self.pool.get(self.info.key)
    }

    fn signer(&self) -> CountingSigner<'a> {
        CountingSigner::new(self.key(), self.counter)
    }

    fn ee_signer(&self, salt: usize) -> CountingSigner<'a> {
        CountingSigner::new(self.pool.get(self.info.index + salt), self.counter)
    }

    fn with_signer<T>(
        &self,
        envelope: Envelope,
        name: &str,
        ee_salt: usize,
        f: impl FnOnce(Option<ObjectSigner>) -> T,
    ) -> T {
        let ca = self.signer();
        let ee = self.ee_signer(ee_salt);
        let crl_uri = format!("{}{}", self.info.repo_uri, self.info.crl_name());
        let object_uri = format!("{}{}", self.info.repo_uri, name);
        match envelope {
            Envelope::Unsigned => f(None),
            Envelope::DirectSigned => f(Some(ObjectSigner::Direct(&ca))),
            Envelope::CmsEe => f(Some(ObjectSigner::Ee(EeSigning {
                issuer: self.cert,
                issuer_signer: &ca,
                ee_key: &ee,
                crl_uri: &crl_uri,
                issuer_uri: &self.info.cert_uri,
                object_uri: &object_uri,
            }))),
        }
    }

    pub fn encode_roa(&self, payload: &RoaPayload, profile: &Profile, name: &str, j: usize) -> Result<Vec<u8>, RepoError> {
        Ok(self.with_signer(profile.roa.envelope, name, j + 1, |s| encode_roa(payload, profile.roa, s))?)
    }

    /// Signs the manifest, and CRL if standalone, over `objects` and adds
    /// them to it. Objects already named like the manifest or CRL are
    /// replaced.
    pub fn sign_publication_point(
        &self,
        objects: &mut Objects,
        state: &TreeState,
        this_update: i64,
        profile: &Profile,
    ) -> Result<(), RepoError> {
        let next_update = this_update + MANIFEST_HOURS as i64 * 3600;
        let mft_name = self.info.manifest_name(profile);
        let crl_name = self.info.crl_name();
        objects.remove(&mft_name);
        objects.remove(&crl_name);
        if profile.standalone_crl() {
            let crl = Crl::issue(
                self.cert,
                &self.signer(),
                state.manifest_number,
                this_update,
                next_update,
                state.revoked.clone(),
            )?;
            objects.insert(crl_name, crl.to_der().to_vec());
        }
        let manifest = Manifest {
            number: state.manifest_number,
            this_update,
            next_update,
            files: objects
                .iter()
                .filter(|(name, _)| *name != TA_CERT_NAME)
                .map(|(name, content)| FileAndHash { name: name.clone(), hash: crate::rrdp::hash(content) })
                .collect(),
            revoked: if profile.standalone_crl() { Vec::new() } else { state.revoked.clone() },
        };
        let bytes = self.with_signer(profile.manifest.envelope, &mft_name, 5, |s| {
            encode_manifest(&manifest, profile.manifest, s.expect("manifests are signed"))
        })?;
        objects.insert(mft_name, bytes);
        Ok(())
    }
}

pub(crate) fn write_objects(mirror: &Path, repo_uri: &str, objects: &Objects) -> Result<(), RepoError> {
    let dir = mirror_path(mirror, repo_uri).ok_or_else(|| RepoError::Unsupported(format!("repository URI {repo_uri}")))?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (name, content) in objects {
        let path = dir.join(name);
        fs::write(&path, content).map_err(io_err(&path))?;
    }
    Ok(())
}

pub(crate) fn read_objects(mirror: &Path, repo_uri: &str) -> Result<Objects, RepoError> {
    let dir = mirror_path(mirror, repo_uri).ok_or_else(|| RepoError::Unsupported(format!("repository URI {repo_uri}")))?;
    let mut out = Objects::new();
    if !dir.exists() {
        return Ok(out);
    }
    for e in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let e = e.map_err(io_err(&dir))?;
        if e.path().is_file() {
            let content = fs::read(e.path()).map_err(io_err(e.path()))?;
            out.insert(e.file_name().to_string_lossy().into_owned(), content);
        }
    }
    Ok(out)
}

/// Reads the certificates of all CAs from a mirror, parents first.
pub(crate) fn read_certs(tree: &RepositoryTree, mirror: &Path) -> Result<Vec<Certificate>, RepoError> {
    tree.cas
        .iter()
        .map(|ca| {
            let path = mirror_path(mirror, &ca.cert_uri).ok_or_else(|| RepoError::Target(ca.cert_uri.clone()))?;
            let der = fs::read(&path).map_err(io_err(&path))?;
            Ok(Certificate::decode(&der)?)
        })
        .collect()
}

fn ca_template(scenario: &Scenario, info: &CaInfo, serial: u64, key: &KeyPair) -> CertTemplate {
    let (ip, asn) = if info.index == 0 {
        (vec![v4_default(), v6_default()], AsRange::all())
    } else {
        ca_block(scenario, info.index)
    };
    CertTemplate {
        serial,
        subject: ca_subject(&info.handle),
        not_before: scenario.issued_at,
        not_after: scenario.issued_at + scenario.validity_hours as i64 * 3600,
        public_key: key.public_key().clone(),
        ip_resources: Some(IpResources::Prefixes(ip)),
        as_resources: Some(AsResources::Ranges(vec![asn])),
        kind: CertKind::Ca { repo_uri: info.repo_uri.clone(), notify_uri: NOTIFICATION_URI.to_string() },
    }
}

/// Generates the repository for a scenario below `out`, replacing any
/// previous tree there.
pub fn generate(scenario: &Scenario, out: &Path) -> Result<RepositoryTree, RepoError> {
    scenario.check()?;
    for dir in [super::LEGACY_DIR, super::IMPROVED_DIR, super::RRDP_DIR, super::KEYS_DIR] {
        let p = out.join(dir);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    let keys_dir = out.join(super::KEYS_DIR);
    fs::create_dir_all(&keys_dir).map_err(io_err(&keys_dir))?;
    let pool = KeyPool::for_seed(&scenario.seed);
    for (i, key) in pool.keys().iter().enumerate() {
        let path = keys_dir.join(format!("{i}.der"));
        fs::write(&path, key.to_pkcs8_der()).map_err(io_err(&path))?;
    }

    let profile = scenario.ablation.profile();
    let counter = SignatureCounter::new();
    let ta_repo = repo_uri(&scenario.seed, &ca_handle(0));
    let mut cas: Vec<CaInfo> = (0..scenario.ca_count)
        .map(|c| {
            let handle = ca_handle(c);
            let cert_name =
                if c == 0 { TA_CERT_NAME.to_string() } else { object_name(&format!("{handle}/cer"), "cer") };
            CaInfo {
                index: c,
                parent: (c > 0).then_some(0),
                key: key_index(c, pool.len()),
                repo_uri: repo_uri(&scenario.seed, &handle),
                cert_uri: format!("{ta_repo}{cert_name}"),
                roa_count: scenario.roas_for(c),
                next_serial: serial_base(&scenario.seed, c),
                handle,
            }
        })
        .collect();

    // Certificates: the trust anchor first, children in index order.
    let mut certs: Vec<Certificate> = Vec::with_capacity(cas.len());
    let mut objects: Vec<Objects> = vec![Objects::new(); cas.len()];
    let ta_key = pool.get(cas[0].key);
    let serial = cas[0].allocate_serial();
    let ta = issue(ca_template(scenario, &cas[0], serial, ta_key), Issuer::SelfSigned(&CountingSigner::new(ta_key, &counter)))?;
    objects[0].insert(TA_CERT_NAME.to_string(), ta.to_der().to_vec());
    certs.push(ta);
    for c in 1..cas.len() {
        let parent = cas[c].parent.expect("child");
        let serial = cas[parent].allocate_serial();
        let template = ca_template(scenario, &cas[c], serial, pool.get(cas[c].key));
        let signer = CountingSigner::new(pool.get(cas[parent].key), &counter);
        let cert = issue(template, Issuer::Cert(&certs[parent], &signer))?;
        let name = cas[c].cert_uri.rsplit('/').next().expect("name").to_string();
        objects[parent].insert(name, cert.to_der().to_vec());
        certs.push(cert);
    }

    let mut states = Vec::with_capacity(cas.len());
    for c in 0..cas.len() {
        let serials: Vec<u64> = (0..cas[c].roa_count).map(|_| cas[c].allocate_serial()).collect();
        let state = TreeState { manifest_number: cas[c].allocate_serial(), revoked: Vec::new() };
        let ctx = CaContext { info: &cas[c], cert: &certs[c], pool: &pool, counter: &counter };
        for (j, serial) in serials.into_iter().enumerate() {
            let payload = roa_payload(scenario, c, j, serial);
            let name = cas[c].roa_name(j, &profile);
            let bytes = ctx.encode_roa(&payload, &profile, &name, j)?;
            objects[c].insert(name, bytes);
        }
        ctx.sign_publication_point(&mut objects[c], &state, scenario.issued_at, &profile)?;
        states.push(state);
    }

    let mirror = out.join(LEGACY_DIR);
    for (ca, objs) in cas.iter().zip(&objects) {
        write_objects(&mirror, &ca.repo_uri, objs)?;
    }
    let tal = TrustAnchorLocator { notification_uri: NOTIFICATION_URI.to_string(), public_key: certs[0].public_key.clone() };
    let tal_path = out.join(super::TAL_FILE);
    fs::write(&tal_path, tal.to_text()).map_err(io_err(&tal_path))?;

    let mut tree = RepositoryTree {
        root: out.to_path_buf(),
        scenario: scenario.clone(),
        cas,
        trees: vec![PublishedTree {
            dir: LEGACY_DIR.to_string(),
            profile,
            session_id: session_id(&scenario.seed, LEGACY_DIR),
            serial: 0,
            deltas: Vec::new(),
            cas: states,
        }],
    };
    publish(&mut tree, 0)?;
    tree.save()?;
    log::info!(
        "generated {} CAs and {} ROAs ({}) with {} signatures",
        scenario.ca_count,
        scenario.total_roas(),
        scenario.ablation,
        counter.signs()
    );
    Ok(tree)
}
