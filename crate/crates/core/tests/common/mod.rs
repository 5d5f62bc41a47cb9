#![allow(dead_code)]

pub mod codec;
pub mod confluence;
pub mod equivalence;
pub mod tamper;

use std::fs;
use std::path::Path;

use irpki::crypto::TrustAnchorLocator;
use irpki::repository::{self, Ablation, RepositoryTree, Scenario};
use irpki::rp::{self, FetchMetrics, FetchMode, RpConfig, VrpSet};

/// One hour after issuance, when every generated object is current.
pub fn now(s: &Scenario) -> i64 {
    s.issued_at + 3600
}

pub fn generate(s: &Scenario, dir: &Path) -> RepositoryTree {
    repository::generate(s, dir).unwrap_or_else(|e| panic!("generate {s:?}: {e}"))
}

pub fn scenario(cas: usize, roas: usize, ablation: Ablation, seed: &str) -> Scenario {
    Scenario::new(cas, roas, ablation).with_seed(repository::parse_seed(seed).unwrap())
}

pub fn tal(tree: &RepositoryTree) -> TrustAnchorLocator {
    TrustAnchorLocator::parse(&fs::read_to_string(tree.tal_path()).unwrap()).unwrap()
}

pub fn file_url(root: &Path) -> String {
    format!("file://{}/", root.display())
}

/// Validates `tree` read straight from disk with a fresh cache.
pub fn validate(tree: &RepositoryTree, mode: FetchMode) -> (VrpSet, FetchMetrics) {
    let cache = tempfile::tempdir().unwrap();
    validate_with(tree, mode, cache.path())
}

pub fn validate_with(tree: &RepositoryTree, mode: FetchMode, cache: &Path) -> (VrpSet, FetchMetrics) {
    let config = RpConfig::new(cache, now(&tree.scenario)).base_url(file_url(&tree.root)).mode(mode);
    rp::run(&[tal(tree)], &config).unwrap()
}

/// Bytes of the snapshot files fetched during a run.
pub fn snapshot_bytes(m: &FetchMetrics) -> u64 {
    m.requests.iter().filter(|r| r.uri.contains("snapshot")).map(|r| r.bytes).sum()
}

/// Copies a generated tree so it can be mutated independently.
pub fn copy_tree(from: &Path, to: &Path) -> RepositoryTree {
    fn walk(from: &Path, to: &Path) {
        fs::create_dir_all(to).unwrap();
        for e in fs::read_dir(from).unwrap().flatten() {
            let target = to.join(e.file_name());
            if e.path().is_dir() {
                walk(&e.path(), &target);
            } else {
                fs::copy(e.path(), target).unwrap();
            }
        }
    }
    walk(from, to);
    RepositoryTree::load(to).unwrap()
}
