use super::mlp::MlpParams;
use super::LearnerError;
use crate::graph::{admissible_pairs, AdjacencyEstimate, EstimateSource, InterventionView};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

/// How a view's augmentation head relates to the base classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    /// Head for view `k` is `theta_base + delta_k`; the shared classifier is
    /// trained by every view and `delta_k` holds the view-specific part.
    #[default]
    Offset,
    /// Head for view `k` is `delta_k` alone.
    Independent,
}

/// Shared parameters plus one augmentation block per intervention view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerParams {
    pub theta_struct: MlpParams,
    pub theta_base: MlpParams,
    /// One block per view, or a single aliased block in shared mode.
    pub deltas: Vec<MlpParams>,
    pub views: Vec<InterventionView>,
    pub shared_augmentation: bool,
    pub head_mode: HeadMode,
}

impl LearnerParams {
    /// Random shared parameters; deltas start at zero in offset mode.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng + ?Sized>(
        dim: usize,
        hidden: usize,
        views: Vec<InterventionView>,
        shared_augmentation: bool,
        head_mode: HeadMode,
        struct_rng: &mut R,
        base_rng: &mut R,
        delta_rng: &mut R,
    ) -> Self {
        let theta_struct = MlpParams::init(dim, hidden, struct_rng);
        let theta_base = MlpParams::init(dim, hidden, base_rng);
        let n_blocks = if shared_augmentation {
            usize::from(!views.is_empty())
        } else {
            views.len()
        };
        let deltas = (0..n_blocks)
            .map(|_| match head_mode {
                HeadMode::Offset => MlpParams::zeros(dim, hidden),
                HeadMode::Independent => MlpParams::init(dim, hidden, delta_rng),
            })
            .collect();
        Self {
            theta_struct,
            theta_base,
            deltas,
            views,
            shared_augmentation,
            head_mode,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta_struct.dim()
    }

    /// Index of the delta block serving view `k`.
    pub fn delta_index(&self, k: usize) -> usize {
        if self.shared_augmentation {
            0
        } else {
            k
        }
    }

    pub fn delta_for(&self, k: usize) -> Result<&MlpParams, LearnerError> {
        self.deltas.get(self.delta_index(k)).ok_or_else(|| {
            LearnerError::MissingHead(self.views.get(k).map(|v| v.to_string()).unwrap_or_default())
        })
    }

    /// Effective augmentation head for view `k`.
    pub fn head(&self, k: usize) -> Result<Cow<'_, MlpParams>, LearnerError> {
        let delta = self.delta_for(k)?;
        Ok(match self.head_mode {
            HeadMode::Independent => Cow::Borrowed(delta),
            HeadMode::Offset => {
                let mut h = self.theta_base.clone();
                h.add_assign(delta);
                Cow::Owned(h)
            }
        })
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            theta_struct: self.theta_struct.zeros_like(),
            theta_base: self.theta_base.zeros_like(),
            deltas: self.deltas.iter().map(MlpParams::zeros_like).collect(),
            views: self.views.clone(),
            shared_augmentation: self.shared_augmentation,
            head_mode: self.head_mode,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &MlpParams> {
        [&self.theta_struct, &self.theta_base]
            .into_iter()
            .chain(self.deltas.iter())
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut MlpParams> {
        [&mut self.theta_struct, &mut self.theta_base]
            .into_iter()
            .chain(self.deltas.iter_mut())
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks_mut().zip(other.blocks()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for b in self.blocks_mut() {
            b.scale(k);
        }
    }

    pub fn n_params(&self) -> usize {
        self.blocks().map(|b| b.values().len()).sum()
    }
}

/// Scores every admissible pair of rows of `x` with `head`.
pub(crate) fn score_pairs(head: &MlpParams, x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for (i, j) in admissible_pairs(n) {
        let cause = x.row(j);
        let effect = x.row(i);
        out[[i, j]] = head.forward(
            cause.as_slice().expect("standard layout"),
            effect.as_slice().expect("standard layout"),
        );
    }
    out
}

fn check_dim(head: &MlpParams, x: &Array2<f64>) -> Result<(), LearnerError> {
    if head.dim() != x.ncols() {
        return Err(LearnerError::ShapeMismatch {
            expected: head.dim(),
            got: x.ncols(),
        });
    }
    Ok(())
}

fn standard(x: &Array2<f64>) -> Cow<'_, Array2<f64>> {
    if x.is_standard_layout() {
        Cow::Borrowed(x)
    } else {
        Cow::Owned(x.as_standard_layout().into_owned())
    }
}

/// Structure path: `A_s(i, j) = sigmoid(MLP([x_j; x_i]))` for `j < i`.
pub fn estimate_structure(
    theta_struct: &MlpParams,
    x: &Array2<f64>,
) -> Result<AdjacencyEstimate, LearnerError> {
    check_dim(theta_struct, x)?;
    let w = score_pairs(theta_struct, standard(x).view());
    Ok(AdjacencyEstimate::new(w, EstimateSource::StructurePath)?)
}

/// Representation path: pairwise causal classifier over representations.
pub fn classify_pairs(
    head: &MlpParams,
    x: &Array2<f64>,
) -> Result<AdjacencyEstimate, LearnerError> {
    check_dim(head, x)?;
    let w = score_pairs(head, standard(x).view());
    Ok(AdjacencyEstimate::new(
        w,
        EstimateSource::RepresentationPath,
    )?)
}
