use std::collections::BTreeMap;

use irpki::repository::{self, Ablation, TamperAction};
use irpki::rp::{CacheState, FetchMode};
use irpki::rrdp::{apply_delta, Delta, RrdpFormat, Snapshot};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::codec::{file_name, RRDP_FORMATS};

pub type State = BTreeMap<(String, String), Vec<u8>>;

#[derive(Clone, Debug)]
pub enum Step {
    Put { repo: u8, name: String, content: Vec<u8> },
    Remove(usize),
}

pub fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        3 => (0u8..4, file_name(), prop::collection::vec(any::<u8>(), 0..48))
            .prop_map(|(repo, name, content)| Step::Put { repo, name, content }),
        1 => any::<usize>().prop_map(Step::Remove),
    ]
}

pub fn apply(state: &mut State, step: &Step) {
    match step {
        Step::Put { repo, name, content } => {
            state.insert((format!("rsync://rpki.test/repo/r{repo}/"), name.clone()), content.clone());
        }
        Step::Remove(i) if !state.is_empty() => {
            let key = state.keys().nth(i % state.len()).unwrap().clone();
            state.remove(&key);
        }
        Step::Remove(_) => {}
    }
}

pub fn snapshot(state: &State, serial: u64) -> Snapshot {
    Snapshot::from_objects(
        "0b7e2c5e-4d1a-4f7e-9a43-3c8d3e1f2a10".into(),
        serial,
        state.iter().map(|((r, n), c)| (r.clone(), n.clone(), c.clone())),
    )
}

/// A run of update batches, a starting point in it and a delta format.
pub type History = (Vec<Vec<Step>>, prop::sample::Index, RrdpFormat);

pub fn history() -> impl Strategy<Value = History> {
    (
        prop::collection::vec(prop::collection::vec(step(), 1..6), 1..12),
        any::<prop::sample::Index>(),
        prop::sample::select(RRDP_FORMATS.to_vec()),
    )
}

/// Starting at any serial n, applying the published deltas up to m gives
/// exactly the snapshot at m.
pub fn check_confluence((updates, start, format): History) -> Result<(), TestCaseError> {
    let mut state = State::new();
    let mut snapshots = vec![snapshot(&state, 1)];
    for (i, steps) in updates.iter().enumerate() {
        for s in steps {
            apply(&mut state, s);
        }
        snapshots.push(snapshot(&state, i as u64 + 2));
    }
    let deltas: Vec<Delta> = snapshots.windows(2).map(|w| w[0].diff(&w[1])).collect();

    let n = start.index(snapshots.len());
    let mut cur = snapshots[n].clone();
    for d in &deltas[n..] {
        let d = if d.is_empty() { d.clone() } else { Delta::decode(&d.encode(format), format).unwrap() };
        cur = apply_delta(cur, &d).map_err(|e| TestCaseError::fail(e.to_string()))?;
    }
    let last = snapshots.last().unwrap();
    prop_assert_eq!(&cur, last);
    prop_assert_eq!(cur.objects(), last.objects());
    Ok(())
}

/// Updates published by the repository reach a cached relying party through
/// deltas only, and its state equals a fresh snapshot fetch.
pub fn relying_party_follows_deltas(ablation: Ablation) {
    let dir = tempfile::tempdir().unwrap();
    let s = super::scenario(3, 3, ablation, "deltas");
    let mut tree = super::generate(&s, dir.path());
    let warm = tempfile::tempdir().unwrap();
    super::validate_with(&tree, FetchMode::Auto, warm.path());

    let rel = tree.cas[1].repo_uri.strip_prefix(repository::RSYNC_BASE).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(tree.mirror(&tree.trees[0]).join(rel))
        .unwrap()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with("roa"))
        .collect();
    names.sort();
    let actions = [
        TamperAction::Expire(names[0].clone()),
        TamperAction::Delete(names[1].clone()),
        TamperAction::OmitFromManifest(names[2].clone()),
    ];
    for action in &actions {
        repository::tamper(&mut tree, 0, action).unwrap();
    }
    assert_eq!(tree.trees[0].serial, 1 + actions.len() as u64);

    let (vrps, m) = super::validate_with(&tree, FetchMode::Auto, warm.path());
    assert_eq!(super::snapshot_bytes(&m), 0, "{ablation}");
    assert_eq!(m.requests.iter().filter(|r| r.uri.contains("delta")).count(), actions.len(), "{ablation}");
    let fresh = tempfile::tempdir().unwrap();
    let (fresh_vrps, fm) = super::validate_with(&tree, FetchMode::Auto, fresh.path());
    assert_eq!(vrps, fresh_vrps, "{ablation}");
    assert_eq!(m.failures, fm.failures, "{ablation}");

    let uri = if ablation == Ablation::Full {
        repository::NOTIFICATION_URI.replace(".xml", ".bin")
    } else {
        repository::NOTIFICATION_URI.to_string()
    };
    let mut a = CacheState::open(warm.path()).unwrap();
    let mut b = CacheState::open(fresh.path()).unwrap();
    let a = a.load(&uri).unwrap().state.clone();
    let b = b.load(&uri).unwrap().state.clone();
    assert_eq!(a, b, "{ablation}");
}
