//! Multi-view intervention consistency for causal discovery on multi-structure,
//! vector-valued ("indefinite") data.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: adjacency types, time-order invariants, intervention views.
//! - [`scm`]: linear SCM decode/encode and row-zeroing interventions.
//! - [`synth`]: seeded multi-structure dataset generation and JSON storage.
//! - [`learner`]: structure scorer, causal classifier, per-view heads, the
//!   combined loss with hand-written gradients, and the training loop.
//! - [`metrics`]: AUROC, F1, inconsistency, C-Dis and seed aggregation.
//! - [`abstraction`]: brute-force checks that interventional strength sets
//!   pin down a linear SCM.
//! - [`llm`]: the iterative prompt/intervention/feedback loop with pluggable oracles.
//! - [`experiment`]: sweeps and plot-data emission.

pub mod abstraction;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod learner;
pub mod llm;
pub mod metrics;
pub mod scm;
pub mod synth;

pub use graph::{
    binarize, enumerate_interventions, hamming_distance, sample_intervention_subset,
    validate_structure, AdjacencyEstimate, CausalStructure, EstimateSource, GraphError,
    InterventionView,
};
pub use learner::{LearnerParams, MlpParams, TrainConfig, TrainReport};
pub use metrics::EvalReport;
pub use scm::{NoiseMatrix, RepresentationMatrix};
pub use synth::{DatasetSpec, IndefiniteDataset, IndefiniteSample, Split};
