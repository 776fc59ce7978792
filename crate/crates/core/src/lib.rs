//! Mixture-model clustering of objects described by numeric and categorical
//! features with many missing values.
//!
//! Numeric features are Gaussian and categorical features categorical,
//! independent given the cluster, so a missing cell drops out of the
//! likelihood. Precisions carry a Gamma prior and the model is fitted by
//! MAP-EM with random restarts. Around the fit sit model selection
//! (cross-validated likelihood plus must-link agreement), mutual-information
//! feature ranking, a distance network with force-directed layout, and a
//! synthetic generator for ground-truth checks.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod em;
mod error;
pub mod metrics;
pub mod model;
pub mod network;
pub mod ranking;
pub mod rng;
pub mod selection;
pub mod synth;

pub use corpus::{
    compute_anthropometrics, load_dataset, read_dataset, sparsity_report, write_dataset, Dataset,
    FeatureKind, FeatureSpec, RawMeasurements, Schema, SparsityReport,
};
pub use em::{e_step, fit, hard_assign, m_step, FitConfig, FitResult};
pub use error::{Error, Result};
pub use metrics::adjusted_rand_index;
pub use model::{
    log_component_density, log_map_objective, Hyperparams, ModelDocument, ModelParams,
    Responsibilities,
};
pub use network::{
    build_graph, distance_matrix, export_graph, layout_force_directed, DistanceMatrix,
    ExportFormat, NetworkGraph,
};
pub use ranking::{bin_numeric, mutual_information, rank_features, RankConfig, RankReport};
pub use selection::{
    cross_validate, kfold_split, oracle_agreement, select_k, OraclePairs, SelectionConfig,
    SelectionReport,
};
pub use synth::{generate, GeneratorSpec, Synthetic};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
