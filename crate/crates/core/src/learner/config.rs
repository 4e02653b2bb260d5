use super::model::HeadMode;
use super::LearnerError;
use serde::{Deserialize, Serialize};

/// Distance between intervened adjacency matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Mse,
    Cosine,
}

/// Which epoch's parameters a run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Highest validation consistency AUROC.
    ConsistencyAuroc,
    /// Lowest validation reconstruction loss (`l_s * L_s + l_r * L_r`).
    ReconstructionLoss,
    /// Parameters after the final epoch.
    #[default]
    LastEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda_s: f64,
    pub lambda_r: f64,
    pub lambda_c: f64,
    pub metric: Distance,
    pub intervention_arity: usize,
    pub intervention_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
    pub shared_augmentation: bool,
    /// Stop consistency gradients from reaching the structure scorer.
    pub detach_structure: bool,
    /// Stop consistency gradients from reaching the shared classifier in offset mode.
    pub detach_base: bool,
    pub head_mode: HeadMode,
    /// Leading fraction of the train split actually used.
    pub train_fraction: f64,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            lambda_s: 1.0,
            lambda_r: 1.0,
            lambda_c: 1.0,
            metric: Distance::Mse,
            intervention_arity: 1,
            intervention_fraction: 1.0,
            hidden: 32,
            seed: 0,
            shared_augmentation: false,
            detach_structure: false,
            detach_base: false,
            head_mode: HeadMode::Offset,
            train_fraction: 1.0,
            selection: Selection::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_vars: usize) -> Result<(), LearnerError> {
        let bad = |m: &str| Err(LearnerError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_r", self.lambda_r),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LearnerError::InvalidConfig(format!(
                    "{name} must be non-negative"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.intervention_fraction) {
            return bad("intervention_fraction must lie in [0, 1]");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad("train_fraction must lie in (0, 1]");
        }
        if self.intervention_arity == 0 || self.intervention_arity > n_vars {
            return Err(LearnerError::InvalidConfig(format!(
                "intervention_arity must lie in [1, {n_vars}]"
            )));
        }
        Ok(())
    }
}
