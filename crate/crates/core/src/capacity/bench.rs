//! Ablation benchmarks: runs the relying party against generated trees
//! and compares every ablation with the legacy baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::TrustAnchorLocator;
use crate::repository::{self, Ablation, RepoError, RoaCounts, Scenario, ServeConfig};
use crate::rp::{self, RpConfig, RpError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no legacy baseline for scenario {0}")]
    MissingBaseline(String),
    #[error("no runs recorded for {0}")]
    Empty(String),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Rp(#[from] RpError),
    #[error("{0}")]
    Other(String),
}

//------------ BenchRun -------------------------------------------------------

/// Measurements of one ablation of one scenario, with one wall time per
/// repetition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRun {
    pub scenario: String,
    pub ablation: Ablation,
    pub wall_times: Vec<f64>,
    pub snapshot_bytes: u64,
    pub cache_bytes: u64,
    pub signatures: u64,
    pub vrps: u64,
}

/// Short label such as `1x10000` for CAs by ROAs per CA.
pub fn scenario_label(s: &Scenario) -> String {
    match &s.roas_per_ca {
        RoaCounts::Uniform(n) => format!("{}x{}", s.ca_count, n),
        RoaCounts::PerCa(_) => format!("{}x{}total", s.ca_count, s.total_roas()),
    }
}

//------------ BenchReport ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub scenario: String,
    pub ablation: Ablation,
    pub runs: usize,
    pub wall_mean: f64,
    pub wall_std: f64,
    pub snapshot_bytes: u64,
    pub cache_bytes: u64,
    pub signatures: u64,
    pub vrps: u64,
    pub time_ratio: f64,
    pub snapshot_ratio: f64,
    pub cache_ratio: f64,
    pub signature_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        a / b
    }
}

/// Groups runs by scenario and relates each to the scenario's legacy run.
pub fn bench_report(runs: &[BenchRun]) -> Result<BenchReport, BenchError> {
    let mut by_scenario: BTreeMap<&str, Vec<&BenchRun>> = BTreeMap::new();
    for r in runs {
        if r.wall_times.is_empty() {
            return Err(BenchError::Empty(format!("{} {}", r.scenario, r.ablation)));
        }
        by_scenario.entry(&r.scenario).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (scenario, group) in by_scenario {
        let base = group
            .iter()
            .find(|r| r.ablation == Ablation::Legacy)
            .ok_or_else(|| BenchError::MissingBaseline(scenario.to_string()))?;
        let (base_time, _) = mean_std(&base.wall_times);
        let mut group = group.clone();
        group.sort_by_key(|r| Ablation::ALL.iter().position(|a| *a == r.ablation));
        for r in group {
            let (wall_mean, wall_std) = mean_std(&r.wall_times);
            rows.push(BenchRow {
                scenario: scenario.to_string(),
                ablation: r.ablation,
                runs: r.wall_times.len(),
                wall_mean,
                wall_std,
                snapshot_bytes: r.snapshot_bytes,
                cache_bytes: r.cache_bytes,
                signatures: r.signatures,
                vrps: r.vrps,
                time_ratio: ratio(wall_mean, base_time),
                snapshot_ratio: ratio(r.snapshot_bytes as f64, base.snapshot_bytes as f64),
                cache_ratio: ratio(r.cache_bytes as f64, base.cache_bytes as f64),
                signature_ratio: ratio(r.signatures as f64, base.signatures as f64),
            });
        }
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    pub fn row(&self, scenario: &str, ablation: Ablation) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.ablation == ablation)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<16} {:>4} {:>10} {:>9} {:>12} {:>12} {:>9} {:>7} {:>7} {:>7} {:>7}\n",
            "scenario", "ablation", "runs", "wall_s", "std_s", "snapshot_B", "cache_B", "sigs", "t/leg", "s/leg", "c/leg", "v/leg"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:<16} {:>4} {:>10.4} {:>9.4} {:>12} {:>12} {:>9} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
                r.scenario,
                r.ablation.to_string(),
                r.runs,
                r.wall_mean,
                r.wall_std,
                r.snapshot_bytes,
                r.cache_bytes,
                r.signatures,
                r.time_ratio,
                r.snapshot_ratio,
                r.cache_ratio,
                r.signature_ratio
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,ablation,runs,wall_mean,wall_std,snapshot_bytes,cache_bytes,signatures,vrps,time_ratio,snapshot_ratio,cache_ratio,signature_ratio\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.ablation,
                r.runs,
                r.wall_mean,
                r.wall_std,
                r.snapshot_bytes,
                r.cache_bytes,
                r.signatures,
                r.vrps,
                r.time_ratio,
                r.snapshot_ratio,
                r.cache_ratio,
                r.signature_ratio
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<out>.txt`, `<out>.csv` and `<out>.json`.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>, BenchError> {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| BenchError::Other(format!("{}: {e}", parent.display())))?;
        }
        let mut written = Vec::new();
        for (ext, text) in [("txt", self.to_table()), ("csv", self.to_csv()), ("json", self.to_json())] {
            let path = out.with_extension(ext);
            fs::write(&path, text).map_err(|e| BenchError::Other(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

//------------ run_benchmark --------------------------------------------------

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub scenario: Scenario,
    pub ablations: Vec<Ablation>,
    /// Fresh-cache repetitions per ablation.
    pub runs: usize,
    /// Trees and caches are created below this directory.
    pub work_dir: PathBuf,
    /// Serve trees over local HTTP; otherwise read them from disk.
    pub http: bool,
    /// Server rate limit in bits per second.
    pub rate_limit: Option<f64>,
    pub threads: Option<usize>,
}

impl BenchConfig {
    pub fn new(scenario: Scenario, work_dir: impl Into<PathBuf>) -> Self {
        BenchConfig {
            scenario,
            ablations: Ablation::ALL.to_vec(),
            runs: 3,
            work_dir: work_dir.into(),
            http: true,
            rate_limit: None,
            threads: None,
        }
    }
}

/// Generates the scenario once per ablation and validates it `runs` times,
/// one ablation after the other. The legacy baseline is always included.
pub fn run_benchmark(config: &BenchConfig) -> Result<Vec<BenchRun>, BenchError> {
    let mut ablations = config.ablations.clone();
    if !ablations.contains(&Ablation::Legacy) {
        ablations.insert(0, Ablation::Legacy);
    }
    let label = scenario_label(&config.scenario);
    let mut runs = Vec::new();
    for ablation in ablations {
        let scenario = Scenario { ablation, ..config.scenario.clone() };
        let root = config.work_dir.join(format!("{label}-{ablation}"));
        let tree = repository::generate(&scenario, &root)?;
        let tal_text = fs::read_to_string(tree.tal_path()).map_err(|e| BenchError::Other(e.to_string()))?;
        let tal = TrustAnchorLocator::parse(&tal_text).map_err(|e| BenchError::Other(e.to_string()))?;

        let server = if config.http {
            Some(repository::serve(ServeConfig::new("127.0.0.1:0").tree("", &root).rate_limit(config.rate_limit))?)
        } else {
            None
        };
        let base_url = match &server {
            Some(s) => s.base_url(),
            None => format!("file://{}/", root.display()),
        };

        let mut run = BenchRun {
            scenario: label.clone(),
            ablation,
            wall_times: Vec::new(),
            snapshot_bytes: 0,
            cache_bytes: 0,
            signatures: 0,
            vrps: 0,
        };
        for i in 0..config.runs.max(1) {
            let cache = config.work_dir.join(format!("{label}-{ablation}-cache{i}"));
            let _ = fs::remove_dir_all(&cache);
            let mut rp = RpConfig::new(&cache, scenario.issued_at + 3600).base_url(base_url.clone());
            rp.threads = config.threads;
            let (vrps, metrics) = rp::run(std::slice::from_ref(&tal), &rp)?;
            if !metrics.failures.is_empty() {
                return Err(BenchError::Other(format!("{ablation}: validation failed: {:?}", metrics.failures)));
            }
            run.wall_times.push(metrics.wall_time_seconds);
            run.snapshot_bytes = metrics.requests.iter().filter(|r| r.uri.contains("snapshot")).map(|r| r.bytes).sum();
            run.cache_bytes = metrics.cache_bytes;
            run.signatures = metrics.signatures_verified;
            run.vrps = vrps.len() as u64;
            let _ = fs::remove_dir_all(&cache);
        }
        if let Some(s) = server {
            s.shutdown();
        }
        log::info!("{label} {ablation}: {:?}", run.wall_times);
        runs.push(run);
    }
    Ok(runs)
}
