//! Feature-model guided multi-objective evolutionary optimization for
//! self-adaptive systems.
//!
//! The pipeline has a design-time half and a runtime half. At design time a
//! feature model (categorical and numeric features, in-branch relations,
//! cross-branch dependencies) is transposed into a compact chromosome: the
//! tree is grown with explicit on/off children, the elitist genes are
//! identified, and the dependencies are refactored to gene level and merged
//! into per-gene value trees. At runtime a multi-objective evolutionary
//! engine (NSGA-II, IBEA or MOEA/D with stable-matching selection) searches
//! that chromosome space with dependency-aware operators, and a knee-point
//! rule picks the single most balanced solution from the final front.
//!
//! The `soa` module ships a service-composition benchmark with
//! throughput/cost objectives and a perturbation trace, `stats` the
//! comparison metrics, and `scenario` the end-to-end runners used by the CLI
//! and the Python bindings.

pub mod dependency;
pub mod engine;
pub mod feature_model;
pub mod knee;
pub mod operators;
pub mod reference;
pub mod scenario;
pub mod soa;
pub mod stats;
pub mod transpose;

pub use feature_model::{Configuration, CrossDependency, Feature, FeatureId, FeatureModel};
pub use transpose::{ChromosomeSpec, GeneSpec, GrownModel};

/// The deterministic random source used throughout.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand_chacha::rand_core::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
