mod common;

use irpki::capacity::{bench_report, run_benchmark, BenchConfig};
use irpki::repository::Ablation;

#[test]
fn benchmark_reports_every_ablation_against_legacy() {
    let work = tempfile::tempdir().unwrap();
    let s = common::scenario(3, 20, Ablation::Legacy, "bench");
    let mut config = BenchConfig::new(s, work.path());
    config.ablations = vec![Ablation::Full, Ablation::NoCrl];
    config.runs = 2;
    let runs = run_benchmark(&config).unwrap();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|r| r.wall_times.len() == 2 && r.vrps == 60));

    let report = bench_report(&runs).unwrap();
    let legacy = report.row("3x20", Ablation::Legacy).unwrap();
    assert_eq!(legacy.time_ratio, 1.0);
    assert_eq!(legacy.signatures, 3 * (1 + 2 + 1) + 60 * 2);
    let full = report.row("3x20", Ablation::Full).unwrap();
    assert_eq!(full.signatures, 3 * 2);
    assert!(full.snapshot_ratio < 0.5, "{}", full.snapshot_ratio);
    assert_eq!(full.snapshot_ratio, full.snapshot_bytes as f64 / legacy.snapshot_bytes as f64);
    let no_crl = report.row("3x20", Ablation::NoCrl).unwrap();
    assert!(full.snapshot_bytes <= no_crl.snapshot_bytes && no_crl.snapshot_bytes <= legacy.snapshot_bytes);

    let out = work.path().join("report");
    let files = report.write(&out).unwrap();
    assert_eq!(files.len(), 3);
    let csv = std::fs::read_to_string(files.iter().find(|f| f.extension().unwrap() == "csv").unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(files.iter().find(|f| f.extension().unwrap() == "json").unwrap()).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn file_transport_benchmark_matches_http() {
    let work = tempfile::tempdir().unwrap();
    let s = common::scenario(2, 5, Ablation::Legacy, "bench");
    let mut config = BenchConfig::new(s, work.path().join("http"));
    config.ablations = vec![Ablation::Full];
    config.runs = 1;
    let http = run_benchmark(&config).unwrap();
    config.http = false;
    config.work_dir = work.path().join("file");
    let file = run_benchmark(&config).unwrap();
    for (a, b) in http.iter().zip(&file) {
        assert_eq!((a.snapshot_bytes, a.signatures, a.vrps), (b.snapshot_bytes, b.signatures, b.vrps));
    }
}

#[test]
fn snapshot_sizes_follow_the_ablation_order() {
    let work = tempfile::tempdir().unwrap();
    let s = common::scenario(1, 200, Ablation::Legacy, "order");
    let mut config = BenchConfig::new(s, work.path());
    config.ablations = Ablation::ALL.iter().copied().filter(|a| *a != Ablation::Legacy).collect();
    config.runs = 1;
    config.http = false;
    let runs = run_benchmark(&config).unwrap();
    let size = |a| runs.iter().find(|r| r.ablation == a).unwrap().snapshot_bytes;
    assert!(size(Ablation::Full) <= size(Ablation::NoRoaSig));
    assert!(size(Ablation::NoRoaSig) <= size(Ablation::NoEe));
    for middle in [Ablation::NoCrl, Ablation::ProtoOverAsn1, Ablation::ProtoOverXml] {
        assert!(size(Ablation::NoEe) <= size(middle), "{middle:?}");
        assert!(size(middle) <= size(Ablation::Legacy), "{middle:?}");
    }
}
