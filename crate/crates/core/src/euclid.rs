//! Matching point sets embedded in the plane or in space.
//!
//! A soft assignment moves node `i` of set 1 to `(P V2)_i`, a point in the
//! convex hull of set 2. Stage one preserves edge lengths under that map;
//! stage two removes the residual offsets by asking neighbouring nodes to be
//! displaced alike while pulling each node to its nearest targets.

use nalgebra::{DMatrix, RowDVector};

use crate::assignment::{Permutation, SoftAssignment};
use crate::error::{FrgmError, Result};
use crate::features::{shape_context_cost, Orientation};
use crate::general::discretize;
use crate::graph::{
    build_delaunay_adjacency, build_knn_adjacency, complete_adjacency, laplacian, pairwise_distances, PointSet,
};
use crate::optimizer::{solve, FwOptions, LineQuadratic, Objective, SolveReport, Solver};
use crate::scalar::{lit, to_f64, Real};

/// Pairwise structure of set 1 used by the length-preserving stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjacencyKind {
    #[default]
    Complete,
    Delaunay,
    Knn(usize),
}

impl AdjacencyKind {
    pub fn build<T: Real>(&self, v: &PointSet<T>) -> Result<DMatrix<T>> {
        match *self {
            AdjacencyKind::Complete => Ok(complete_adjacency(v.len())),
            AdjacencyKind::Delaunay => build_delaunay_adjacency(v),
            AdjacencyKind::Knn(k) => build_knn_adjacency(v, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub adjacency: AdjacencyKind,
    pub solver: Solver,
    pub fw: FwOptions,
    /// Shape-context orientation for the unary term when none is supplied.
    pub descriptor: Orientation,
}

impl Default for EuclideanConfig {
    fn default() -> Self {
        EuclideanConfig {
            lambda1: 0.99,
            lambda2: 0.5,
            adjacency: AdjacencyKind::Complete,
            solver: Solver::Fw,
            fw: FwOptions::default(),
            descriptor: Orientation::Absolute,
        }
    }
}

/// Neighbour structure for offset smoothing with its Laplacian.
#[derive(Debug, Clone)]
pub struct SmoothingGraph<T: Real> {
    pub s: DMatrix<T>,
    pub laplacian: DMatrix<T>,
}

impl<T: Real> SmoothingGraph<T> {
    pub fn from_weights(s: DMatrix<T>) -> Self {
        let laplacian = laplacian(&s);
        SmoothingGraph { s, laplacian }
    }
}

/// Optimal two-cluster split of scalar values.
///
/// Returns the threshold `t` such that values `>= t` form the upper
/// cluster, or `None` when all values are equal. Exact: every split of the
/// sorted values between distinct neighbours is tried.
pub fn two_means_threshold(values: &[f64]) -> Option<(f64, f64, f64)> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    let mut prefix = vec![0.0; n + 1];
    let mut prefix_sq = vec![0.0; n + 1];
    for (k, x) in v.iter().enumerate() {
        prefix[k + 1] = prefix[k] + x;
        prefix_sq[k + 1] = prefix_sq[k] + x * x;
    }
    let sse = |a: usize, b: usize| {
        let cnt = (b - a) as f64;
        let s = prefix[b] - prefix[a];
        prefix_sq[b] - prefix_sq[a] - s * s / cnt
    };
    let mut best: Option<(f64, usize)> = None;
    for k in 1..n {
        if v[k] == v[k - 1] {
            continue;
        }
        let cost = sse(0, k) + sse(k, n);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, k));
        }
    }
    best.map(|(_, k)| {
        let low = prefix[k] / k as f64;
        let high = (prefix[n] - prefix[k]) / (n - k) as f64;
        (v[k], low, high)
    })
}

/// Cluster gap below this fraction of the mean length keeps every edge.
pub const SINGLE_CLUSTER_GAP: f64 = 0.05;

/// Delaunay graph of `v1` without its long-edge cluster (k-nearest
/// neighbours with k = 6 in three dimensions).
pub fn build_smoothing_graph<T: Real>(v1: &PointSet<T>) -> Result<SmoothingGraph<T>> {
    let m = v1.len();
    if m < 3 {
        return Err(FrgmError::DegenerateGeometry(format!(
            "smoothing graph needs at least 3 points, got {m}"
        )));
    }
    let mut s = if v1.dim() == 2 {
        build_delaunay_adjacency(v1)?
    } else {
        build_knn_adjacency(v1, 6.min(m - 1))?
    };
    let dist = v1.distance_matrix();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if s[(i, j)] > T::zero() {
                edges.push((i, j, to_f64(dist[(i, j)])));
            }
        }
    }
    let lengths: Vec<f64> = edges.iter().map(|e| e.2).collect();
    let mean = lengths.iter().sum::<f64>() / lengths.len().max(1) as f64;
    if let Some((threshold, low, high)) = two_means_threshold(&lengths) {
        if high - low >= SINGLE_CLUSTER_GAP * mean {
            for &(i, j, l) in &edges {
                if l >= threshold {
                    s[(i, j)] = T::zero();
                    s[(j, i)] = T::zero();
                }
            }
        }
    }
    Ok(SmoothingGraph::from_weights(s))
}

/// `D_ij = ||(P1 V2)_i - V2_j||`.
pub fn offset_distance<T: Real>(p1: &DMatrix<T>, v2: &DMatrix<T>) -> DMatrix<T> {
    pairwise_distances(&(p1 * v2), v2)
}

#[derive(Debug, Clone)]
pub struct EuclideanProblem<T: Real> {
    pub v1: PointSet<T>,
    pub v2: PointSet<T>,
    pub adj1: DMatrix<T>,
    pub unary: DMatrix<T>,
    pub lambda1: T,
    pub lambda2: T,
    pub solver: Solver,
    pub fw: FwOptions,
    /// Edge lengths of set 1.
    lengths1: DMatrix<T>,
}

impl<T: Real> EuclideanProblem<T> {
    pub fn new(v1: PointSet<T>, v2: PointSet<T>, unary: Option<DMatrix<T>>, config: &EuclideanConfig) -> Result<Self> {
        let adj1 = config.adjacency.build(&v1)?;
        Self::with_adjacency(v1, v2, adj1, unary, config)
    }

    pub fn with_adjacency(
        v1: PointSet<T>,
        v2: PointSet<T>,
        adj1: DMatrix<T>,
        unary: Option<DMatrix<T>>,
        config: &EuclideanConfig,
    ) -> Result<Self> {
        let (m, n) = (v1.len(), v2.len());
        if m > n {
            return Err(FrgmError::param(format!(
                "set 1 must not be larger than set 2, got {m} > {n}"
            )));
        }
        if v1.dim() != v2.dim() {
            return Err(FrgmError::param("point sets differ in dimension"));
        }
        for (name, l) in [("lambda1", config.lambda1), ("lambda2", config.lambda2)] {
            if !(0.0..=1.0).contains(&l) {
                return Err(FrgmError::param(format!("{name} must lie in [0, 1], got {l}")));
            }
        }
        if adj1.shape() != (m, m) {
            return Err(FrgmError::param("adjacency shape must match set 1"));
        }
        // every transformed node coincides at the barycenter, where the
        // length term has a zero subgradient; the unary term breaks the tie
        let unary = match unary {
            Some(u) => u,
            None if v1.dim() == 2 && m >= 2 => shape_context_cost(&v1, &v2, config.descriptor)?,
            None => DMatrix::zeros(m, n),
        };
        if unary.shape() != (m, n) || unary.iter().any(|u| !u.is_finite()) {
            return Err(FrgmError::param(format!("unary cost must be a finite {m}x{n} matrix")));
        }
        let lengths1 = v1.distance_matrix();
        Ok(EuclideanProblem {
            v1,
            v2,
            adj1,
            unary,
            lambda1: lit(config.lambda1),
            lambda2: lit(config.lambda2),
            solver: config.solver.clone(),
            fw: config.fw,
            lengths1,
        })
    }

    pub fn nrows(&self) -> usize {
        self.v1.len()
    }

    pub fn ncols(&self) -> usize {
        self.v2.len()
    }
}

/// Below this length a transformed edge contributes a zero subgradient.
const DEGENERATE_LENGTH: f64 = 1e-12;

/// Stage-one objective: unary cost plus squared edge-length distortion
/// between set 1 and its image `P V2`.
pub struct JNon<'a, T: Real> {
    pub prob: &'a EuclideanProblem<T>,
}

impl<T: Real> JNon<'_, T> {
    fn pairwise(&self, p: &DMatrix<T>, want_grad: bool) -> (T, Option<DMatrix<T>>) {
        let pr = self.prob;
        let x = p * pr.v2.matrix();
        let (m, d) = x.shape();
        let mut value = T::zero();
        let mut gx = want_grad.then(|| DMatrix::<T>::zeros(m, d));
        let tiny = lit::<T>(DEGENERATE_LENGTH);
        let two = lit::<T>(2.0);
        for i1 in 0..m {
            for i2 in 0..m {
                let w = pr.adj1[(i1, i2)];
                if w == T::zero() || i1 == i2 {
                    continue;
                }
                let diff: RowDVector<T> = x.row(i1) - x.row(i2);
                let ell = diff.norm();
                let r = pr.lengths1[(i1, i2)] - ell;
                value += w * r * r;
                if let Some(g) = gx.as_mut() {
                    if ell > tiny {
                        let coef = -two * w * r / ell;
                        for k in 0..d {
                            let c = coef * diff[k];
                            g[(i1, k)] += c;
                            g[(i2, k)] -= c;
                        }
                    }
                }
            }
        }
        (value, gx.map(|g| g * pr.v2.matrix().transpose()))
    }
}

impl<T: Real> Objective<T> for JNon<'_, T> {
    fn value(&self, p: &DMatrix<T>) -> T {
        let pr = self.prob;
        (T::one() - pr.lambda1) * pr.unary.dot(p) + pr.lambda1 * self.pairwise(p, false).0
    }

    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T> {
        self.value_and_gradient(p).1
    }

    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        let pr = self.prob;
        let (v, g) = self.pairwise(p, true);
        let w = T::one() - pr.lambda1;
        (
            w * pr.unary.dot(p) + pr.lambda1 * v,
            &pr.unary * w + g.expect("gradient requested") * pr.lambda1,
        )
    }
}

pub fn j_non<T: Real>(prob: &EuclideanProblem<T>, p: &DMatrix<T>) -> (T, DMatrix<T>) {
    JNon { prob }.value_and_gradient(p)
}

/// Stage-two objective `(1 - l2) <P, D> + l2 Tr(X^T L X)` with offsets
/// `X = (P - P1) V2`. Convex quadratic in `P`.
pub struct JCon<'a, T: Real> {
    pub prob: &'a EuclideanProblem<T>,
    pub smoothing: &'a SmoothingGraph<T>,
    pub anchor: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<'a, T: Real> JCon<'a, T> {
    pub fn new(prob: &'a EuclideanProblem<T>, smoothing: &'a SmoothingGraph<T>, p1: &DMatrix<T>) -> Self {
        JCon {
            prob,
            smoothing,
            anchor: p1 * prob.v2.matrix(),
            d: offset_distance(p1, prob.v2.matrix()),
        }
    }

    fn offsets(&self, p: &DMatrix<T>) -> DMatrix<T> {
        p * self.prob.v2.matrix() - &self.anchor
    }
}

impl<T: Real> Objective<T> for JCon<'_, T> {
    fn value(&self, p: &DMatrix<T>) -> T {
        let x = self.offsets(p);
        let l2 = self.prob.lambda2;
        (T::one() - l2) * self.d.dot(p) + l2 * (&self.smoothing.laplacian * &x).dot(&x)
    }

    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T> {
        self.value_and_gradient(p).1
    }

    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        let x = self.offsets(p);
        let lx = &self.smoothing.laplacian * &x;
        let l2 = self.prob.lambda2;
        let w = T::one() - l2;
        let value = w * self.d.dot(p) + l2 * lx.dot(&x);
        let grad = &self.d * w + (lx * self.prob.v2.matrix().transpose()) * (l2 + l2);
        (value, grad)
    }

    fn line_coeffs(&self, p: &DMatrix<T>, dir: &DMatrix<T>) -> Option<LineQuadratic<T>> {
        let x = self.offsets(p);
        let y = dir * self.prob.v2.matrix();
        let ly = &self.smoothing.laplacian * &y;
        let l2 = self.prob.lambda2;
        let w = T::one() - l2;
        Some(LineQuadratic {
            c0: w * self.d.dot(p) + l2 * (&self.smoothing.laplacian * &x).dot(&x),
            c1: w * self.d.dot(dir) + (l2 + l2) * ly.dot(&x),
            c2: l2 * ly.dot(&y),
        })
    }
}

pub fn j_con<T: Real>(
    prob: &EuclideanProblem<T>,
    smoothing: &SmoothingGraph<T>,
    p1: &DMatrix<T>,
    p: &DMatrix<T>,
) -> (T, DMatrix<T>) {
    JCon::new(prob, smoothing, p1).value_and_gradient(p)
}

#[derive(Debug, Clone)]
pub struct EuclideanMatch<T: Real> {
    pub assignment: Permutation,
    pub stage1: SolveReport<T>,
    pub stage2: SolveReport<T>,
    /// Mean over rows of the largest entry of the stage-two solution.
    pub binarity: f64,
}

/// Length-preserving stage, smoothing stage, Hungarian discretization.
pub fn match_euclidean<T: Real>(prob: &EuclideanProblem<T>) -> Result<EuclideanMatch<T>> {
    let smoothing = build_smoothing_graph(&prob.v1)?;
    match_euclidean_with(prob, &smoothing)
}

pub fn match_euclidean_with<T: Real>(
    prob: &EuclideanProblem<T>,
    smoothing: &SmoothingGraph<T>,
) -> Result<EuclideanMatch<T>> {
    let init = SoftAssignment::uniform(prob.nrows(), prob.ncols())?;
    let stage1 = solve(&JNon { prob }, &init, &prob.solver, &prob.fw)?;
    let j_con = JCon::new(prob, smoothing, stage1.solution.matrix());
    let stage2 = solve(&j_con, &stage1.solution, &prob.solver, &prob.fw)?;
    let assignment = discretize(&stage2.solution)?;
    let binarity = to_f64(stage2.solution.binarity());
    Ok(EuclideanMatch {
        assignment,
        stage1,
        stage2,
        binarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::gradient_relative_error;

    fn lcg(seed: u64, len: usize) -> Vec<f64> {
        let mut s = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    fn points(seed: u64, m: usize) -> PointSet<f64> {
        let v = lcg(seed, 2 * m);
        PointSet::new(DMatrix::from_fn(m, 2, |i, k| v[2 * i + k] * 4.0 - 2.0)).unwrap()
    }

    fn feasible(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let v = lcg(seed, m * n);
        let mut p = DMatrix::from_fn(m, n, |i, j| v[i * n + j] + 0.05);
        for i in 0..m {
            let s = p.row(i).sum();
            p.row_mut(i).scale_mut(1.0 / s);
        }
        let r = m as f64 / n as f64;
        p * r + DMatrix::from_element(m, n, (1.0 - r) / n as f64)
    }

    #[test]
    fn two_means_examples() {
        assert!(two_means_threshold(&[1.0, 1.0, 1.0]).is_none());
        let (t, lo, hi) = two_means_threshold(&[1.0, 1.1, 0.9, 5.0, 5.2]).unwrap();
        assert_eq!(t, 5.0);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 5.1).abs() < 1e-12);
    }

    #[test]
    fn equilateral_keeps_all_edges() {
        let v = PointSet::new(DMatrix::from_row_slice(
            3,
            2,
            &[0.0, 0.0, 1.0, 0.0, 0.5, 3f64.sqrt() / 2.0],
        ))
        .unwrap();
        let g = build_smoothing_graph(&v).unwrap();
        assert_eq!(g.s.sum(), 6.0);
    }

    #[test]
    fn far_point_edges_dropped() {
        let mut rows: Vec<Vec<f64>> = lcg(5, 20).chunks(2).map(|c| c.to_vec()).collect();
        rows.push(vec![30.0, 30.0]);
        let v = PointSet::from_rows(&rows).unwrap();
        let g = build_smoothing_graph(&v).unwrap();
        assert_eq!(g.s.row(10).sum(), 0.0);
        assert!(g.s.rows(0, 10).sum() > 0.0);
        let ones = nalgebra::DVector::from_element(11, 1.0);
        assert!((&g.laplacian * ones).abs().max() < 1e-12);
    }

    #[test]
    fn offset_distance_examples() {
        let v2 = points(3, 4);
        let perm: DMatrix<f64> = Permutation::new(vec![2, 0, 3], 4).unwrap().to_matrix();
        let d = offset_distance(&perm, v2.matrix());
        assert_eq!(d[(0, 2)], 0.0);
        let u = DMatrix::from_element(2, 4, 0.25);
        let d = offset_distance(&u, v2.matrix());
        assert_eq!(d.row(0), d.row(1));
    }

    fn instance(m: usize, n: usize, cfg: &EuclideanConfig) -> EuclideanProblem<f64> {
        let u = DMatrix::from_vec(m, n, lcg(77, m * n));
        EuclideanProblem::new(points(1, m), points(2, n), Some(u), cfg).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let prob = instance(8, 10, &EuclideanConfig::default());
        let smoothing = build_smoothing_graph(&prob.v1).unwrap();
        for seed in 0..5 {
            let p = feasible(8, 10, seed);
            assert!(gradient_relative_error(&JNon { prob: &prob }, &p, 1e-6) < 1e-4);
            let p1 = feasible(8, 10, seed + 50);
            let jc = JCon::new(&prob, &smoothing, &p1);
            assert!(gradient_relative_error(&jc, &p, 1e-5) < 1e-6);
        }
    }

    #[test]
    fn j_con_line_coefficients_are_exact() {
        let prob = instance(6, 7, &EuclideanConfig::default());
        let smoothing = build_smoothing_graph(&prob.v1).unwrap();
        let p1 = feasible(6, 7, 1);
        let jc = JCon::new(&prob, &smoothing, &p1);
        let p = feasible(6, 7, 2);
        let dir = feasible(6, 7, 3) - &p;
        let q = jc.line_coeffs(&p, &dir).unwrap();
        for a in [0.0, 0.3, 1.0] {
            assert!((q.eval(a) - jc.value(&(&p + &dir * a))).abs() < 1e-10);
        }
        assert!(q.c2 >= 0.0);
    }

    #[test]
    fn trivial_cases() {
        let v = points(4, 6);
        let prob = EuclideanProblem::new(v.clone(), v, None, &EuclideanConfig::default()).unwrap();
        let (val, _) = j_non(&prob, &DMatrix::identity(6, 6));
        assert!(val.abs() < 1e-20);
        let smoothing = build_smoothing_graph(&prob.v1).unwrap();
        let p1 = feasible(6, 6, 9);
        let prob1 = EuclideanProblem {
            lambda2: 1.0,
            ..prob.clone()
        };
        let (val, _) = j_con(&prob1, &smoothing, &p1, &p1);
        assert!(val.abs() < 1e-20);
    }

    #[test]
    fn shuffled_copy_is_recovered() {
        let v1 = points(21, 20);
        let perm: Vec<usize> = {
            let r = lcg(8, 20);
            let mut idx: Vec<usize> = (0..20).collect();
            idx.sort_by(|&a, &b| r[a].partial_cmp(&r[b]).unwrap());
            idx
        };
        // set 2 row perm[i] holds set-1 point i
        let mut m2 = DMatrix::zeros(20, 2);
        for i in 0..20 {
            m2.row_mut(perm[i]).copy_from(&v1.matrix().row(i));
        }
        let prob = EuclideanProblem::new(v1, PointSet::new(m2).unwrap(), None, &EuclideanConfig::default()).unwrap();
        let r = match_euclidean(&prob).unwrap();
        assert!(r.binarity >= 0.9);
        assert_eq!(r.assignment.assign(), perm.as_slice());
    }
}
