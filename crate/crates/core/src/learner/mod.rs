//! Structure scorer, causal classifier and per-view augmentation heads,
//! trained jointly under reconstruction and intervention-consistency losses.

mod config;
mod gradcheck;
mod loss;
mod mlp;
mod model;
mod train;

pub use config::{Distance, Selection, TrainConfig};
pub use gradcheck::{grad_check, GradCheckCell, GradCheckConfig};
pub use loss::{consistency_loss, gradients, total_loss, LossBreakdown};
pub use mlp::{sigmoid, MlpParams};
pub use model::{classify_pairs, estimate_structure, HeadMode, LearnerParams};
pub use train::{
    configured_views, evaluate, init_params, train, train_from, Adam, EpochRecord, TrainReport,
};

use crate::graph::GraphError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("representation dim {got} does not match parameter dim {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("no augmentation head for view {0}")]
    MissingHead(String),
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
