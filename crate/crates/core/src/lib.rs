//! Mining foreground knowledge from bucketized (Anatomy-style) anonymized data
//! and auditing each tuple's risk of sensitive-value linkage.
//!
//! The pipeline is:
//!
//! 1. [`dataset`]: load a raw table or a QI/sensitive file pair.
//! 2. [`anonymizer`]: build an l-diverse bucketization.
//! 3. [`lattice`]: find the signatures with enough support.
//! 4. [`miner`]: solve for the global distribution of each attribute set.
//! 5. [`audit`]: compute per-tuple linkage and flag breaches.
//!
//! Probability code is generic over [`Scalar`], so the possible-world
//! computations also run over exact rationals. Mining needs [`Real`].

pub mod anonymizer;
pub mod audit;
pub mod dataset;
pub mod error;
pub mod lattice;
pub mod miner;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod worlds;

pub use anonymizer::{anonymize, check_l_diversity, AnonymizerConfig, Strategy};
pub use audit::{
    audit, delta_metric, query_error, AuditConfig, BreachMetrics, BreachReport, LinkageSource,
    QuerySpec, TupleBreach,
};
pub use dataset::{
    load_anonymized, load_table, matches, read_anonymized, read_table, AGroup, AnonymizedDataset,
    AttributeSet, DatasetConfig, Schema, Signature, Table, Target,
};
pub use error::{Error, Result};
pub use lattice::{enumerate_admitted, required_sample_size, AdmittedSignatures, SampleGate};
pub use miner::{build_system, mine_all, EquationSystem, MinedKnowledge, MinedSystem};
pub use report::Report;
pub use scalar::{Real, Scalar};
pub use solver::{Diagnostics, Method, SolverConfig};
pub use worlds::{
    enumerate_worlds, expected_count, tuple_linkage, weigh_worlds, GlobalDistribution,
    WeightedWorlds, WorldSet, DEFAULT_WORLD_CAP,
};

/// Exact rational probabilities.
pub type Rational64 = num_rational::Ratio<i64>;

pub type GlobalDistributionF64 = GlobalDistribution<f64>;
pub type GlobalDistributionF32 = GlobalDistribution<f32>;
pub type GlobalDistributionExact = GlobalDistribution<Rational64>;
pub type MinedKnowledgeF64 = MinedKnowledge<f64>;
pub type MinedKnowledgeF32 = MinedKnowledge<f32>;
pub type BreachReportF64 = BreachReport<f64>;
pub type BreachReportExact = BreachReport<Rational64>;
