use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use irpki::capacity::{self, BenchConfig, ObjectInventory, PqAlgorithm, RpPopulation};
use irpki::crypto::TrustAnchorLocator;
use irpki::repository::{self, Ablation, RepositoryTree, Scenario, ServeConfig, TamperAction};
use irpki::rp::{self, FetchMode, RpConfig, VrpFormat};

/// Generate, serve and validate legacy and improved RPKI repositories.
#[derive(Parser)]
#[command(name = "irpki", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a repository tree from a scenario.
    Gen(GenArgs),
    /// Publish an improved tree next to a legacy one.
    Convert(ConvertArgs),
    /// Serve a tree over HTTP.
    Serve(ServeArgs),
    /// Corrupt or re-sign objects of a tree.
    Tamper(TamperArgs),
    /// Fetch and validate, printing VRPs on stdout.
    Validate(ValidateArgs),
    /// Analytical capacity models.
    #[command(subcommand)]
    Capacity(CapacityCommand),
    /// Run ablation benchmarks and write a report.
    Bench(BenchArgs),
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn now() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

//------------ gen ------------------------------------------------------------

#[derive(Args)]
struct GenArgs {
    /// Scenario file with `key = value` lines; flags override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of CAs including the trust anchor.
    #[arg(long)]
    cas: Option<usize>,
    /// ROAs per CA.
    #[arg(long)]
    roas: Option<usize>,
    #[arg(long)]
    ablation: Option<Ablation>,
    /// 64 hex digits, or any text to be hashed.
    #[arg(long)]
    seed: Option<String>,
    /// Issuance time in UTC seconds; defaults to the current hour.
    #[arg(long)]
    issued_at: Option<i64>,
    #[arg(long)]
    validity_hours: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

fn load_scenario(path: Option<&Path>) -> Result<Option<Scenario>> {
    let Some(path) = path else { return Ok(None) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(Scenario::parse(&text)?))
}

fn gen(args: GenArgs) -> Result<()> {
    let file = load_scenario(args.scenario.as_deref())?;
    let from_file = file.is_some();
    let mut s = file.unwrap_or_else(|| Scenario::new(1, 1, Ablation::Legacy));
    if let Some(c) = args.cas {
        s.ca_count = c;
    }
    if let Some(r) = args.roas {
        s.roas_per_ca = repository::RoaCounts::Uniform(r);
    }
    if let Some(a) = args.ablation {
        s.ablation = a;
    }
    if let Some(seed) = &args.seed {
        s.seed = repository::parse_seed(seed).map_err(anyhow::Error::msg)?;
    }
    if let Some(h) = args.validity_hours {
        s.validity_hours = h;
    }
    match args.issued_at {
        Some(t) => s.issued_at = t,
        None if !from_file => s.issued_at = now() / 3600 * 3600,
        None => {}
    }
    let tree = repository::generate(&s, &args.out)?;
    log::info!("generated {} CAs, {} ROAs in {}", tree.cas.len(), s.total_roas(), args.out.display());
    emit(&format!("{}\n", tree.tal_path().display()))?;
    Ok(())
}

//------------ convert --------------------------------------------------------

#[derive(Args)]
struct ConvertArgs {
    /// Tree directory written by `gen`.
    #[arg(long)]
    tree: PathBuf,
    /// Validation time for the legacy tree; defaults to the current time.
    #[arg(long)]
    now: Option<i64>,
}

fn convert(args: ConvertArgs) -> Result<()> {
    let mut tree = RepositoryTree::load(&args.tree)?;
    let report = repository::convert(&mut tree, args.now.unwrap_or_else(now))?;
    emit(&(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(())
}

//------------ serve ----------------------------------------------------------

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    tree: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Per-connection limit in Mbit/s.
    #[arg(long)]
    rate_limit: Option<f64>,
}

fn serve(args: ServeArgs) -> Result<()> {
    if !args.tree.join(repository::TREE_FILE).exists() {
        bail!("{} is not a generated tree", args.tree.display());
    }
    let config = ServeConfig::new(args.bind).tree("", &args.tree).rate_limit(args.rate_limit.map(|m| m * 1e6));
    let handle = repository::serve(config)?;
    eprintln!("serving {} at {}", args.tree.display(), handle.base_url());
    handle.wait();
    Ok(())
}

//------------ tamper ---------------------------------------------------------

#[derive(Args)]
struct TamperArgs {
    #[arg(long)]
    tree: PathBuf,
    /// One of flip_byte:NAME, delete:NAME, omit_from_manifest:NAME,
    /// revoke:SERIAL or expire:NAME.
    #[arg(long)]
    action: TamperAction,
    /// Mirror directory of the published tree to change.
    #[arg(long, default_value = repository::LEGACY_DIR)]
    target: String,
}

fn tamper(args: TamperArgs) -> Result<()> {
    let mut tree = RepositoryTree::load(&args.tree)?;
    let Some(index) = tree.trees.iter().position(|t| t.dir == args.target) else {
        bail!("tree has no published directory {:?}", args.target);
    };
    repository::tamper(&mut tree, index, &args.action)?;
    log::info!("{} applied to {}", args.action, args.target);
    Ok(())
}

//------------ validate -------------------------------------------------------

#[derive(Args)]
struct ValidateArgs {
    /// Trust anchor locator; may be repeated.
    #[arg(long, required = true)]
    tal: Vec<PathBuf>,
    #[arg(long, env = "IRPKI_CACHE")]
    cache: PathBuf,
    #[arg(long, conflicts_with = "improved_only")]
    legacy_only: bool,
    #[arg(long)]
    improved_only: bool,
    #[arg(long, default_value = "csv")]
    format: VrpFormat,
    /// Write the run's metrics as JSON.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Replace the host of every repository URI, e.g. http://127.0.0.1:8080/
    /// or file:///path/to/tree/.
    #[arg(long)]
    base_url: Option<String>,
    /// Validation time in UTC seconds.
    #[arg(long)]
    now: Option<i64>,
    /// Validate the cache without fetching.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    threads: Option<usize>,
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut tals = Vec::new();
    for path in &args.tal {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        tals.push(TrustAnchorLocator::parse(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    let mode = match (args.legacy_only, args.improved_only) {
        (true, _) => FetchMode::LegacyOnly,
        (_, true) => FetchMode::ImprovedOnly,
        _ => FetchMode::Auto,
    };
    let mut config = RpConfig::new(&args.cache, args.now.unwrap_or_else(now)).mode(mode);
    config.base_url = args.base_url;
    config.offline = args.offline;
    config.threads = args.threads;
    let (vrps, metrics) = rp::run(&tals, &config)?;
    for f in &metrics.failures {
        log::warn!("{}: {}", f.ca, f.reason);
    }
    for w in &metrics.warnings {
        log::info!("{w}");
    }
    if let Some(path) = &args.metrics {
        fs::write(path, serde_json::to_vec_pretty(&metrics)?).with_context(|| format!("writing {}", path.display()))?;
    }
    emit(&String::from_utf8_lossy(&rp::emit_vrps(&vrps, args.format)))?;
    Ok(())
}

//------------ capacity -------------------------------------------------------

#[derive(Subcommand)]
enum CapacityCommand {
    /// Minimum bandwidth to serve a snapshot to every client in the window.
    Bandwidth {
        /// Snapshot size in MB (10^6 bytes).
        #[arg(long)]
        snapshot_mb: f64,
        /// Multiplier for every client class.
        #[arg(long, default_value_t = 1.0)]
        population_scale: f64,
        #[arg(long, default_value_t = capacity::DEFAULT_WINDOW)]
        window_seconds: f64,
    },
    /// Repository size with post-quantum keys and signatures.
    Pq {
        /// rsa2048, ml_dsa_44, slh_dsa_sha2_256f, or all.
        #[arg(long, default_value = "all")]
        algorithm: String,
        #[command(flatten)]
        inventory: InventoryArgs,
        #[arg(long)]
        total_bytes: Option<f64>,
    },
    /// Signatures in a set of objects before and after conversion.
    DeltaStats {
        #[command(flatten)]
        inventory: InventoryArgs,
    },
    /// Objects expiring before a fetch of the given duration completes.
    Expiry {
        #[arg(long)]
        duration_minutes: f64,
        /// Comma separated remaining validities in minutes.
        #[arg(long, value_delimiter = ',')]
        validities: Vec<f64>,
    },
}

/// Counts default to the global repository for `pq` and to one day of
/// deltas for `delta-stats`.
#[derive(Args)]
struct InventoryArgs {
    #[arg(long)]
    certificates: Option<f64>,
    #[arg(long)]
    roas: Option<f64>,
    #[arg(long)]
    crls: Option<f64>,
    #[arg(long)]
    manifests: Option<f64>,
}

impl InventoryArgs {
    fn apply(&self, mut inv: ObjectInventory) -> ObjectInventory {
        inv.certificates = self.certificates.unwrap_or(inv.certificates);
        inv.roas = self.roas.unwrap_or(inv.roas);
        inv.crls = self.crls.unwrap_or(inv.crls);
        inv.manifests = self.manifests.unwrap_or(inv.manifests);
        inv
    }
}

fn human_bits(bits: f64) -> String {
    if bits >= 1e9 {
        format!("{:.2} Gbit/s", bits / 1e9)
    } else {
        format!("{:.1} Mbit/s", bits / 1e6)
    }
}

fn capacity_cmd(cmd: CapacityCommand) -> Result<()> {
    match cmd {
        CapacityCommand::Bandwidth { snapshot_mb, population_scale, window_seconds } => {
            if snapshot_mb <= 0.0 || population_scale < 0.0 || window_seconds <= 0.0 {
                bail!("sizes and window must be positive");
            }
            let pop = RpPopulation::default().scaled(population_scale);
            let bits = capacity::min_bandwidth(snapshot_mb * 1e6, &pop, window_seconds);
            emit(&format!("{}\n", human_bits(bits)))?;
        }
        CapacityCommand::Pq { algorithm, inventory, total_bytes } => {
            let mut inv = inventory.apply(ObjectInventory::global());
            inv.total_bytes = total_bytes.unwrap_or(inv.total_bytes);
            let algs = if algorithm == "all" {
                PqAlgorithm::presets().to_vec()
            } else {
                vec![PqAlgorithm::by_name(&algorithm).with_context(|| format!("unknown algorithm {algorithm:?}"))?]
            };
            let mut out = String::from("algorithm,signatures,public_keys,bytes,gb\n");
            for alg in algs {
                let bytes = capacity::pq_projection(&inv, &alg);
                out += &format!("{},{},{},{:.0},{:.3}\n", alg.name, inv.signatures(), inv.public_keys(), bytes, bytes / 1e9);
            }
            emit(&out)?;
        }
        CapacityCommand::DeltaStats { inventory } => {
            let stats = capacity::delta_signature_stats(&inventory.apply(ObjectInventory::daily_deltas()));
            emit(&format!("legacy,improved,reduction\n{},{},{:.4}\n", stats.legacy, stats.improved, stats.reduction))?;
        }
        CapacityCommand::Expiry { duration_minutes, validities } => {
            let risk = capacity::expiry_risk(duration_minutes, &validities);
            emit(&format!("at_risk={} timeout={}\n", risk.at_risk, risk.timeout))?;
        }
    }
    Ok(())
}

//------------ bench ----------------------------------------------------------

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Comma separated; legacy is always included.
    #[arg(long, value_delimiter = ',', default_value = "legacy,full")]
    ablations: Vec<Ablation>,
    /// Report path; .txt, .csv and .json files are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Where trees and caches are created; defaults to a temporary directory.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Server rate limit in Mbit/s.
    #[arg(long)]
    rate_limit: Option<f64>,
    /// Read trees from disk instead of local HTTP.
    #[arg(long)]
    no_http: bool,
}

fn bench(args: BenchArgs) -> Result<()> {
    let scenario = load_scenario(Some(&args.scenario))?.expect("path given");
    let temp;
    let work_dir = match &args.work_dir {
        Some(d) => d.clone(),
        None => {
            temp = std::env::temp_dir().join(format!("irpki-bench-{}", std::process::id()));
            temp
        }
    };
    let mut config = BenchConfig::new(scenario, &work_dir);
    config.ablations = args.ablations;
    config.runs = args.runs;
    config.http = !args.no_http;
    config.rate_limit = args.rate_limit.map(|m| m * 1e6);
    let runs = capacity::run_benchmark(&config);
    if args.work_dir.is_none() {
        let _ = fs::remove_dir_all(&work_dir);
    }
    let report = capacity::bench_report(&runs?)?;
    for path in report.write(&args.out)? {
        log::info!("wrote {}", path.display());
    }
    emit(&report.to_table())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Convert(a) => convert(a),
        Command::Serve(a) => serve(a),
        Command::Tamper(a) => tamper(a),
        Command::Validate(a) => validate(a),
        Command::Capacity(c) => capacity_cmd(c),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
