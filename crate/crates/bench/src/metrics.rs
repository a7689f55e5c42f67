//! Accuracy and registration error.

use frgm::{DeformMatch, FrgmError, PointSet, Result};
use nalgebra::DMatrix;

/// Fraction of ground-truth pairs reproduced exactly by `result`.
///
/// Both slices index set-1 nodes; an empty truth counts as fully correct.
pub fn accuracy(result: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    let hits = result.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Mean Euclidean distance between corresponding rows.
pub fn mean_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(FrgmError::Parameter(format!(
            "matched sets differ in shape: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(frgm::deform::mean_row_distance(a, b))
}

/// Mean distance from the nodes of set 2 picked by `assign` to their
/// ground-truth partners.
pub fn assignment_error(v2: &PointSet<f64>, assign: &[usize], truth: &[usize]) -> Result<f64> {
    mean_error(v2.select(assign)?.matrix(), v2.select(truth)?.matrix())
}

/// The two registration errors of a deformable match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformErrors {
    /// Deformed set 1 against the true partners.
    pub d1: f64,
    /// Binary correspondence against the true partners.
    pub d2: f64,
}

pub fn deform_errors(v2: &PointSet<f64>, result: &DeformMatch<f64>, truth: &[usize]) -> Result<DeformErrors> {
    let target = v2.select(truth)?;
    Ok(DeformErrors {
        d1: mean_error(result.aligned().matrix(), target.matrix())?,
        d2: assignment_error(v2, result.assignment.assign(), truth)?,
    })
}

/// Error of leaving set 1 where it is: mean distance from each node to its
/// true partner.
pub fn unregistered_error(v1: &PointSet<f64>, v2: &PointSet<f64>, truth: &[usize]) -> Result<f64> {
    mean_error(v1.matrix(), v2.select(truth)?.matrix())
}
