//! Capacity models: repository bandwidth, post-quantum sizes, delta
//! signature counts, expiry risk and benchmark reports.
//!
//! The formulas are generic over the float type. Every type defaults to
//! `f64`; the `*F32` aliases select single precision.

pub mod bench;

use num_traits::Float;
use serde::Serialize;

pub use bench::{bench_report, run_benchmark, BenchConfig, BenchError, BenchReport, BenchRow, BenchRun};

fn c<T: Float>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

/// Seconds in the default bandwidth window.
pub const DEFAULT_WINDOW: f64 = 600.0;

/// Size of an RSA-2048 public key or signature in bytes.
pub const RSA_BYTES: f64 = 256.0;

//------------ RpPopulation ---------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpClass<T = f64> {
    pub name: &'static str,
    pub count: T,
    pub interval_seconds: T,
}

/// Relying party instances by client class and refresh interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RpPopulation<T = f64> {
    pub classes: Vec<RpClass<T>>,
}

impl<T: Float> Default for RpPopulation<T> {
    fn default() -> Self {
        let class = |name, count, minutes: f64| RpClass { name, count: c(count), interval_seconds: c(minutes * 60.0) };
        RpPopulation {
            classes: vec![
                class("routinator", 3125.0, 10.0),
                class("rpki_client", 757.0, 60.0),
                class("fort", 255.0, 60.0),
                class("other", 58.0, 10.0),
            ],
        }
    }
}

impl<T: Float> RpPopulation<T> {
    /// Every class count multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        RpPopulation {
            classes: self.classes.iter().map(|k| RpClass { count: k.count * factor, ..k.clone() }).collect(),
        }
    }

    /// Clients fetching within a window: each class contributes its count
    /// times the fraction of its interval the window covers, at most all.
    pub fn effective_clients(&self, window_seconds: T) -> T {
        self.classes
            .iter()
            .map(|k| k.count * (window_seconds / k.interval_seconds).min(T::one()))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// The bandwidth in bits per second needed to serve a snapshot to every
/// client due within the window.
pub fn min_bandwidth<T: Float>(snapshot_bytes: T, pop: &RpPopulation<T>, window_seconds: T) -> T {
    pop.effective_clients(window_seconds) * snapshot_bytes * c(8.0) / window_seconds
}

//------------ PqAlgorithm ----------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PqAlgorithm<T = f64> {
    pub name: &'static str,
    pub public_key_bytes: T,
    pub signature_bytes: T,
}

impl<T: Float> PqAlgorithm<T> {
    pub fn rsa2048() -> Self {
        PqAlgorithm { name: "rsa2048", public_key_bytes: c(RSA_BYTES), signature_bytes: c(RSA_BYTES) }
    }

    pub fn ml_dsa_44() -> Self {
        PqAlgorithm { name: "ml_dsa_44", public_key_bytes: c(1312.0), signature_bytes: c(2420.0) }
    }

    pub fn slh_dsa_sha2_256f() -> Self {
        PqAlgorithm { name: "slh_dsa_sha2_256f", public_key_bytes: c(64.0), signature_bytes: c(49860.0) }
    }

    pub fn presets() -> [Self; 3] {
        [Self::rsa2048(), Self::ml_dsa_44(), Self::slh_dsa_sha2_256f()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::presets().into_iter().find(|a| a.name == name)
    }
}

//------------ ObjectInventory ------------------------------------------------

/// Object counts and total size of a repository or delta set.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ObjectInventory<T = f64> {
    pub certificates: T,
    /// ROAs with EE certificate and signature.
    pub roas: T,
    pub crls: T,
    /// Manifests with EE certificate.
    pub manifests: T,
    /// Unsigned ROAs without EE certificate.
    pub improved_roas: T,
    /// Directly signed manifests carrying the revocation list.
    pub merged_manifests: T,
    pub total_bytes: T,
}

impl<T: Float> ObjectInventory<T> {
    pub fn legacy(certificates: T, roas: T, crls: T, manifests: T, total_bytes: T) -> Self {
        ObjectInventory {
            certificates,
            roas,
            crls,
            manifests,
            improved_roas: T::zero(),
            merged_manifests: T::zero(),
            total_bytes,
        }
    }

    /// The global repository: 1.2 GB in 427,937 objects of which 290,126
    /// are ROAs, with one manifest and CRL per CA certificate.
    pub fn global() -> Self {
        let cas = c(45937.0);
        Self::legacy(cas, c(290126.0), cas, cas, c(1.2e9))
    }

    /// Objects in one day of deltas.
    pub fn daily_deltas() -> Self {
        Self::legacy(c(53.0), c(4308.0), c(51871.0), c(51879.0), T::zero())
    }

    pub fn objects(&self) -> T {
        self.certificates + self.roas + self.crls + self.manifests + self.improved_roas + self.merged_manifests
    }

    /// Signatures: one per certificate, CRL and merged manifest, two per
    /// legacy ROA and manifest.
    pub fn signatures(&self) -> T {
        let two = c::<T>(2.0);
        self.certificates + two * self.roas + self.crls + two * self.manifests + self.merged_manifests
    }

    /// Public keys: one per certificate, legacy ROA and legacy manifest.
    pub fn public_keys(&self) -> T {
        self.certificates + self.roas + self.manifests
    }
}

/// The total size with every RSA key and signature replaced by those of
/// `alg`.
pub fn pq_projection<T: Float>(inv: &ObjectInventory<T>, alg: &PqAlgorithm<T>) -> T {
    let rsa = c::<T>(RSA_BYTES);
    inv.total_bytes + inv.signatures() * (alg.signature_bytes - rsa) + inv.public_keys() * (alg.public_key_bytes - rsa)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaSignatureStats<T = f64> {
    pub legacy: T,
    pub improved: T,
    /// Fraction of signatures saved, zero if there are none.
    pub reduction: T,
}

/// Signatures needed for `inv` as legacy objects and after conversion, where
/// only certificates and merged manifests remain signed.
pub fn delta_signature_stats<T: Float>(inv: &ObjectInventory<T>) -> DeltaSignatureStats<T> {
    let legacy = inv.signatures();
    let improved = inv.certificates + inv.manifests + inv.merged_manifests;
    let reduction = if legacy > T::zero() { T::one() - improved / legacy } else { T::zero() };
    DeltaSignatureStats { legacy, improved, reduction }
}

//------------ Expiry ---------------------------------------------------------

/// Minutes after which rpki-client abandons a run.
pub const TIMEOUT_MINUTES: f64 = 60.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpiryRisk {
    /// Objects expiring before the fetch completes.
    pub at_risk: usize,
    /// The fetch runs into the client timeout.
    pub timeout: bool,
}

pub fn expiry_risk<T: Float>(fetch_minutes: T, remaining_minutes: &[T]) -> ExpiryRisk {
    ExpiryRisk {
        at_risk: remaining_minutes.iter().filter(|v| **v <= fetch_minutes).count(),
        timeout: fetch_minutes >= c(TIMEOUT_MINUTES),
    }
}

//------------ Aliases --------------------------------------------------------

pub type RpPopulationF32 = RpPopulation<f32>;
pub type PqAlgorithmF32 = PqAlgorithm<f32>;
pub type ObjectInventoryF32 = ObjectInventory<f32>;
pub type DeltaSignatureStatsF32 = DeltaSignatureStats<f32>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_precision() {
        let pop = RpPopulationF32::default();
        let bw = min_bandwidth(15e6f32, &pop, 600.0);
        assert!((bw / 1e6 - 670.333).abs() < 0.01, "{bw}");
        let inv = ObjectInventoryF32::daily_deltas();
        assert_eq!(delta_signature_stats(&inv).legacy, 164298.0);
    }

    #[test]
    fn window_caps_each_class() {
        let pop = RpPopulation::<f64>::default();
        assert_eq!(pop.effective_clients(7200.0), 3125.0 + 757.0 + 255.0 + 58.0);
    }
}
