//! Linear SCM algebra over variable representations.
//!
//! A sample's representations satisfy `X = A X + E`, so `X = (I - A)^{-1} E`.
//! `A` is strictly lower-triangular, hence `I - A` is unit lower-triangular and
//! every solve is a forward substitution.

use crate::graph::{GraphError, InterventionView};
use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScmError {
    #[error("adjacency is {adj_rows}x{adj_cols} but operand has {rows} rows")]
    DimensionMismatch {
        adj_rows: usize,
        adj_cols: usize,
        rows: usize,
    },
    #[error("adjacency entry ({0}, {1}) is on or above the diagonal")]
    NotTriangular(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Exogenous noise, one row per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix(pub Array2<f64>);

/// Variable representations, one row per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix(pub Array2<f64>);

fn check_shapes(a: ArrayView2<f64>, rows: usize) -> Result<(), ScmError> {
    let (ar, ac) = a.dim();
    if ar != ac || ar != rows {
        return Err(ScmError::DimensionMismatch {
            adj_rows: ar,
            adj_cols: ac,
            rows,
        });
    }
    for ((i, j), &w) in a.indexed_iter() {
        if j >= i && w != 0.0 {
            return Err(ScmError::NotTriangular(i + 1, j + 1));
        }
    }
    Ok(())
}

/// Solves `(I - A) X = E` by forward substitution. Shapes are trusted.
pub(crate) fn solve_unit_lower(a: ArrayView2<f64>, e: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut x = e.to_owned();
    for i in 0..n {
        for j in 0..i {
            let w = a[[i, j]];
            if w != 0.0 {
                let (done, mut rest) = x.view_mut().split_at(ndarray::Axis(0), i);
                rest.row_mut(0).scaled_add(w, &done.row(j));
            }
        }
    }
    x
}

/// Solves `(I - A)^T Y = G` by back substitution. Shapes are trusted.
pub(crate) fn solve_unit_lower_transposed(a: ArrayView2<f64>, g: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut y = g.to_owned();
    for i in (0..n).rev() {
        for k in i + 1..n {
            let w = a[[k, i]];
            if w != 0.0 {
                let (mut head, tail) = y.view_mut().split_at(ndarray::Axis(0), i + 1);
                head.row_mut(i).scaled_add(w, &tail.row(k - i - 1));
            }
        }
    }
    y
}

/// `(I - A) X`. Shapes are trusted.
pub(crate) fn apply_i_minus(a: ArrayView2<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    &x - &a.dot(&x)
}

pub fn decode(a: &Array2<f64>, e: &NoiseMatrix) -> Result<RepresentationMatrix, ScmError> {
    check_shapes(a.view(), e.0.nrows())?;
    Ok(RepresentationMatrix(solve_unit_lower(a.view(), e.0.view())))
}

pub fn encode(a: &Array2<f64>, x: &RepresentationMatrix) -> Result<NoiseMatrix, ScmError> {
    check_shapes(a.view(), x.0.nrows())?;
    Ok(NoiseMatrix(apply_i_minus(a.view(), x.0.view())))
}

/// Zeroes the rows of every target, leaving the rest untouched.
pub fn intervene_structure(
    a: &Array2<f64>,
    view: &InterventionView,
) -> Result<Array2<f64>, ScmError> {
    view.check_range(a.nrows())?;
    let mut out = a.clone();
    for &t in view.targets() {
        out.row_mut(t).fill(0.0);
    }
    Ok(out)
}

pub fn intervene_representation(
    a: &Array2<f64>,
    e: &NoiseMatrix,
    view: &InterventionView,
) -> Result<RepresentationMatrix, ScmError> {
    decode(&intervene_structure(a, view)?, e)
}
