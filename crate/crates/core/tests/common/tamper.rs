use std::fs;
use std::path::Path;

use irpki::object::decode_roa;
use irpki::repository::{self, Ablation, RepositoryTree, TamperAction, LEGACY_DIR};
use irpki::rp::point::roa_variant;
use irpki::rp::{FetchMode, Vrp, VrpSet};

pub const CAS: usize = 4;
pub const ROAS: usize = 3;
pub const TARGET: usize = 2;

pub struct Mode {
    pub index: usize,
    pub fetch: FetchMode,
}

pub const MODES: [Mode; 2] = [Mode { index: 0, fetch: FetchMode::LegacyOnly }, Mode { index: 1, fetch: FetchMode::ImprovedOnly }];

/// A legacy tree with its conversion published next to it.
pub fn base(dir: &Path) -> RepositoryTree {
    let s = super::scenario(CAS, ROAS, Ablation::Legacy, "tamper");
    let mut tree = super::generate(&s, dir);
    let report = repository::convert(&mut tree, super::now(&s)).unwrap();
    assert!(report.failed.is_empty());
    tree
}

pub fn mirror_dir(tree: &RepositoryTree, index: usize, ca: usize) -> std::path::PathBuf {
    let rel = tree.cas[ca].repo_uri.strip_prefix(repository::RSYNC_BASE).unwrap();
    tree.mirror(&tree.trees[index]).join(rel)
}

pub fn files(tree: &RepositoryTree, index: usize, ca: usize) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(mirror_dir(tree, index, ca))
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

pub fn roas(tree: &RepositoryTree, index: usize, ca: usize) -> Vec<(String, Vec<Vrp>, u64)> {
    files(tree, index, ca)
        .into_iter()
        .filter(|(n, _)| n.ends_with(".roa") || n.ends_with(".iroa"))
        .map(|(n, data)| {
            let p = decode_roa(&data, roa_variant(&n, &data).unwrap()).unwrap().payload;
            (n, Vrp::from_payload(&p).collect(), p.serial)
        })
        .collect()
}

pub fn find(tree: &RepositoryTree, index: usize, ca: usize, ext: &str) -> String {
    files(tree, index, ca).into_iter().map(|(n, _)| n).find(|n| n.ends_with(ext)).unwrap()
}

pub fn without(set: &VrpSet, gone: &[Vrp]) -> VrpSet {
    set.entries().iter().filter(|v| !gone.contains(v)).copied().collect()
}

pub struct Outcome {
    pub vrps: VrpSet,
    pub failed: Vec<String>,
    pub action: TamperAction,
    pub tree: RepositoryTree,
    _dir: tempfile::TempDir,
}

/// Applies `action` to a fresh copy and validates it in `mode`.
pub fn run(src: &Path, mode: &Mode, action: impl Fn(&RepositoryTree) -> TamperAction) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut tree = super::copy_tree(src, dir.path());
    let action = action(&tree);
    repository::tamper(&mut tree, mode.index, &action).unwrap();
    let (vrps, m) = super::validate(&tree, mode.fetch);
    let failed = m.failures.iter().map(|f| f.ca.clone()).collect();
    Outcome { vrps, failed, action, tree, _dir: dir }
}

pub fn corruption_invalidates_exactly_the_ca() {
    let src = tempfile::tempdir().unwrap();
    let tree = base(src.path());
    for mode in &MODES {
        let (clean, m) = super::validate(&tree, mode.fetch);
        assert!(m.failures.is_empty());
        assert_eq!(clean.len(), CAS * ROAS);
        let target_vrps: Vec<Vrp> = roas(&tree, mode.index, TARGET).into_iter().flat_map(|r| r.1).collect();
        assert_eq!(target_vrps.len(), ROAS);
        let expected = without(&clean, &target_vrps);
        let repo = tree.cas[TARGET].repo_uri.clone();

        let roa_ext = if mode.index == 0 { ".roa" } else { ".iroa" };
        let mft_ext = if mode.index == 0 { ".mft" } else { ".imft" };
        let mut actions: Vec<Box<dyn Fn(&RepositoryTree) -> TamperAction>> = vec![
            Box::new(|t| TamperAction::FlipByte(find(t, mode.index, TARGET, roa_ext))),
            Box::new(|t| TamperAction::FlipByte(find(t, mode.index, TARGET, mft_ext))),
            Box::new(|t| TamperAction::Delete(find(t, mode.index, TARGET, roa_ext))),
            Box::new(|t| TamperAction::Delete(find(t, mode.index, TARGET, mft_ext))),
            Box::new(|t| TamperAction::OmitFromManifest(find(t, mode.index, TARGET, roa_ext))),
        ];
        if mode.index == 0 {
            actions.push(Box::new(|t| TamperAction::FlipByte(find(t, 0, TARGET, ".crl"))));
            actions.push(Box::new(|t| TamperAction::Delete(find(t, 0, TARGET, ".crl"))));
        }
        for action in actions {
            let o = run(src.path(), mode, &action);
            assert_eq!(o.failed, vec![repo.clone()], "{} in tree {}", o.action, mode.index);
            assert_eq!(o.vrps, expected, "{} in tree {}", o.action, mode.index);
        }
    }
}

pub fn revocation_excludes_exactly_the_object() {
    let src = tempfile::tempdir().unwrap();
    let tree = base(src.path());
    for mode in &MODES {
        let (clean, _) = super::validate(&tree, mode.fetch);
        for (name, vrps, serial) in roas(&tree, mode.index, TARGET) {
            let o = run(src.path(), mode, |_| TamperAction::Revoke(serial));
            assert!(o.failed.is_empty(), "revoking {name}: {:?}", o.failed);
            assert_eq!(o.vrps, without(&clean, &vrps), "revoking {name} in tree {}", mode.index);
        }
    }
}

pub fn expiry_excludes_exactly_the_object() {
    let src = tempfile::tempdir().unwrap();
    let tree = base(src.path());
    for mode in &MODES {
        let (clean, _) = super::validate(&tree, mode.fetch);
        let (name, vrps, _) = roas(&tree, mode.index, 1).remove(0);
        let o = run(src.path(), mode, |_| TamperAction::Expire(name.clone()));
        assert!(o.failed.is_empty(), "{:?}", o.failed);
        assert_eq!(o.vrps, without(&clean, &vrps));
    }
}

pub fn legacy_tampering_leaves_improved_tree_intact() {
    let src = tempfile::tempdir().unwrap();
    let tree = base(src.path());
    let (clean, _) = super::validate(&tree, FetchMode::ImprovedOnly);
    let o = run(src.path(), &MODES[0], |t| TamperAction::Delete(find(t, 0, TARGET, ".mft")));
    assert_eq!(o.failed.len(), 1);
    let (improved, m) = super::validate(&o.tree, FetchMode::ImprovedOnly);
    assert!(m.failures.is_empty());
    assert_eq!(improved, clean);
    assert_eq!(o.tree.trees[0].dir, LEGACY_DIR);
}
