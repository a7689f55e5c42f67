//! Ratio-test pruning of set-2 nodes against transformed set-1 nodes.

use crate::assignment::Permutation;
use crate::error::{FrgmError, Result};
use crate::euclid::{match_euclidean, EuclideanConfig, EuclideanMatch, EuclideanProblem};
use crate::graph::{pairwise_distances, PointSet};
use crate::scalar::{lit, to_f64, Real};

/// Which solution supplies the transformed nodes `P V2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformedNodes {
    /// Length-preserving stage (soft).
    Stage1,
    /// Smoothing stage (close to binary).
    #[default]
    Stage2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierConfig {
    pub k: f64,
    pub rounds: usize,
    pub matcher: EuclideanConfig,
    pub transformed: TransformedNodes,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        OutlierConfig {
            k: 2.0,
            rounds: 3,
            matcher: EuclideanConfig::default(),
            transformed: TransformedNodes::Stage2,
        }
    }
}

/// Indices of `v2` (ascending) surviving the ratio test against `tv1`.
///
/// Node `j` survives if some transformed node `i` has `d_ij <= k * min_j d_ij`.
/// When fewer than `m` survive, the closest removed nodes are re-added.
pub fn ratio_prune<T: Real>(tv1: &PointSet<T>, v2: &PointSet<T>, k: f64) -> Result<Vec<usize>> {
    if !(k > 1.0) || !k.is_finite() {
        return Err(FrgmError::param(format!("ratio must exceed 1, got {k}")));
    }
    if tv1.dim() != v2.dim() {
        return Err(FrgmError::param("point sets differ in dimension"));
    }
    let (m, n) = (tv1.len(), v2.len());
    if m > n {
        return Err(FrgmError::param(format!("cannot keep {m} nodes out of {n}")));
    }
    let d = pairwise_distances(tv1.matrix(), v2.matrix());
    let kk = lit::<T>(k);
    let mut keep = vec![false; n];
    for i in 0..m {
        let nearest = d.row(i).min();
        for j in 0..n {
            if d[(i, j)] <= kk * nearest {
                keep[j] = true;
            }
        }
    }
    let kept = keep.iter().filter(|x| **x).count();
    if kept < m {
        let mut removed: Vec<(f64, usize)> = (0..n)
            .filter(|&j| !keep[j])
            .map(|j| (to_f64(d.column(j).min()), j))
            .collect();
        removed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in removed.iter().take(m - kept) {
            keep[j] = true;
        }
    }
    Ok((0..n).filter(|&j| keep[j]).collect())
}

#[derive(Debug, Clone)]
pub struct RemovalResult<T: Real> {
    /// Surviving indices into the original set 2, ascending.
    pub kept: Vec<usize>,
    /// Final correspondence into the original set 2.
    pub assignment: Permutation,
    /// Surviving count after each pruning round.
    pub history: Vec<usize>,
    /// Final match on the pruned set, indices local to `kept`.
    pub matched: EuclideanMatch<T>,
}

/// Alternates Euclidean matching and ratio pruning, then matches once more
/// on the surviving nodes. Stops early when a round removes nothing.
pub fn iterative_removal<T: Real>(
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    config: &OutlierConfig,
) -> Result<RemovalResult<T>> {
    if config.rounds == 0 {
        return Err(FrgmError::param("at least one removal round is required"));
    }
    if !(config.k > 1.0) {
        return Err(FrgmError::param(format!("ratio must exceed 1, got {}", config.k)));
    }
    let mut kept: Vec<usize> = (0..v2.len()).collect();
    let mut history = Vec::with_capacity(config.rounds);
    let mut last: Option<EuclideanMatch<T>> = None;
    for _ in 0..config.rounds {
        let sub = v2.select(&kept)?;
        let prob = EuclideanProblem::new(v1.clone(), sub.clone(), None, &config.matcher)?;
        let result = match_euclidean(&prob)?;
        let p = match config.transformed {
            TransformedNodes::Stage1 => result.stage1.solution.matrix(),
            TransformedNodes::Stage2 => result.stage2.solution.matrix(),
        };
        let tv1 = PointSet::new(p * sub.matrix())?;
        let local = ratio_prune(&tv1, &sub, config.k)?;
        let before = kept.len();
        kept = local.iter().map(|&j| kept[j]).collect();
        history.push(kept.len());
        log::debug!("outlier round: {before} -> {} nodes", kept.len());
        if kept.len() == before {
            last = Some(result);
            break;
        }
    }
    let matched = match last {
        Some(r) => r,
        None => {
            let prob = EuclideanProblem::new(v1.clone(), v2.select(&kept)?, None, &config.matcher)?;
            match_euclidean(&prob)?
        }
    };
    let assign = matched.assignment.assign().iter().map(|&j| kept[j]).collect();
    let assignment = Permutation::new(assign, v2.len())?;
    Ok(RemovalResult {
        kept,
        assignment,
        history,
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn set(rows: &[f64], d: usize) -> PointSet<f64> {
        PointSet::new(DMatrix::from_row_slice(rows.len() / d, d, rows)).unwrap()
    }

    fn line(xs: &[f64]) -> PointSet<f64> {
        PointSet::new(DMatrix::from_fn(xs.len(), 2, |i, k| if k == 0 { xs[i] } else { 0.0 })).unwrap()
    }

    #[test]
    fn far_node_dropped() {
        let kept = ratio_prune(&line(&[0.0]), &line(&[0.1, 10.0]), 2.0).unwrap();
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn exact_copy_keeps_matched_nodes() {
        let v = set(&[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 3.0], 2);
        assert_eq!(ratio_prune(&v, &v, 5.0).unwrap(), vec![0, 1, 2, 3]);
        let tv1 = v.select(&[1, 3]).unwrap();
        assert_eq!(ratio_prune(&tv1, &v, 1.5).unwrap(), vec![1, 3]);
    }

    #[test]
    fn re_adds_closest_when_short() {
        // both transformed nodes pick the same target
        let tv1 = line(&[0.0, 0.0]);
        let v2 = line(&[0.0, 5.0, 3.0, 9.0]);
        assert_eq!(ratio_prune(&tv1, &v2, 2.0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn ratio_must_exceed_one() {
        let v = line(&[0.0, 1.0]);
        assert!(ratio_prune(&v, &v, 1.0).is_err());
        assert!(ratio_prune(&v, &v, f64::NAN).is_err());
    }

    #[test]
    fn no_outliers_keeps_everything() {
        let rows: Vec<f64> = (0..24)
            .map(|i| ((i * 37 % 11) as f64 * 0.31 + (i as f64) * 0.17).sin() * 2.0)
            .collect();
        let v = set(&rows, 2);
        let cfg = OutlierConfig {
            rounds: 2,
            ..OutlierConfig::default()
        };
        let r = iterative_removal(&v, &v, &cfg).unwrap();
        assert_eq!(r.kept, (0..12).collect::<Vec<_>>());
        assert_eq!(r.assignment.len(), 12);
    }

    proptest::proptest! {
        #[test]
        fn keeps_at_least_m(xs in proptest::collection::vec(-5.0f64..5.0, 2..20), m in 1usize..6, k in 1.01f64..4.0) {
            let n = xs.len();
            let m = m.min(n);
            let v2 = line(&xs);
            let tv1 = line(&xs[..m].iter().map(|x| x * 0.5 + 0.3).collect::<Vec<_>>());
            let kept = ratio_prune(&tv1, &v2, k).unwrap();
            proptest::prop_assert!(kept.len() >= m);
            proptest::prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
