//! Point sets, attributed graphs and the graph-construction utilities.

use nalgebra::{DMatrix, RowDVector};

use crate::delaunay;
use crate::error::{FrgmError, Result};
use crate::scalar::{is_finite, lit, to_f64, Real};

/// Ordered nodes in d-dimensional Euclidean space, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<T: Real> {
    points: DMatrix<T>,
}

impl<T: Real> PointSet<T> {
    pub fn new(points: DMatrix<T>) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(FrgmError::param("point set must contain at least one point"));
        }
        if !(2..=3).contains(&points.ncols()) {
            return Err(FrgmError::param(format!(
                "point dimension must be 2 or 3, got {}",
                points.ncols()
            )));
        }
        if points.iter().any(|v| !is_finite(*v)) {
            return Err(FrgmError::param("point coordinates must be finite"));
        }
        Ok(PointSet { points })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d) {
            return Err(FrgmError::param("ragged point rows"));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), d, &flat))
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.points
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.points
    }

    pub fn point(&self, i: usize) -> RowDVector<T> {
        self.points.row(i).into_owned()
    }

    /// Keeps the rows listed in `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(FrgmError::param("selection is empty"));
        }
        let rows: Vec<usize> = idx.to_vec();
        Ok(PointSet {
            points: self.points.select_rows(rows.iter()),
        })
    }

    pub fn centroid(&self) -> RowDVector<T> {
        self.points.row_mean()
    }

    /// Dense Euclidean distance matrix between the rows.
    pub fn distance_matrix(&self) -> DMatrix<T> {
        pairwise_distances(&self.points, &self.points)
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> T {
        self.distance_matrix().max()
    }
}

/// Euclidean distances between the rows of `a` and the rows of `b`.
pub fn pairwise_distances<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (m, n) = (a.nrows(), b.nrows());
    DMatrix::from_fn(m, n, |i, j| (a.row(i) - b.row(j)).norm())
}

/// Adjacency weights, edge attributes and optional node features of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAttributes<T: Real> {
    pub adjacency: DMatrix<T>,
    pub edge_attr: DMatrix<T>,
    pub node_attr: Option<DMatrix<T>>,
}

impl<T: Real> GraphAttributes<T> {
    pub fn new(adjacency: DMatrix<T>, edge_attr: DMatrix<T>, node_attr: Option<DMatrix<T>>) -> Result<Self> {
        let m = adjacency.nrows();
        if !adjacency.is_square() || edge_attr.shape() != (m, m) {
            return Err(FrgmError::param("adjacency and edge attributes must be m x m"));
        }
        if let Some(v) = &node_attr {
            if v.nrows() != m {
                return Err(FrgmError::param("node attributes need one row per node"));
            }
        }
        check_symmetric(&adjacency, 1e-10, "adjacency")?;
        check_symmetric(&edge_attr, 1e-10, "edge attributes")?;
        for i in 0..m {
            if adjacency[(i, i)] != T::zero() {
                return Err(FrgmError::param("adjacency must have a zero diagonal"));
            }
        }
        if adjacency.iter().chain(edge_attr.iter()).any(|v| *v < T::zero()) {
            return Err(FrgmError::param("adjacency and edge attributes must be nonnegative"));
        }
        Ok(GraphAttributes {
            adjacency,
            edge_attr,
            node_attr,
        })
    }

    /// Complete graph over `points` whose edge attribute is Euclidean distance.
    pub fn complete_from_points(points: &PointSet<T>) -> Self {
        let m = points.len();
        GraphAttributes {
            adjacency: complete_adjacency(m),
            edge_attr: points.distance_matrix(),
            node_attr: None,
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.nrows() == 0
    }
}

fn check_symmetric<T: Real>(m: &DMatrix<T>, tol: f64, what: &str) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if to_f64((m[(i, j)] - m[(j, i)]).abs()) > tol {
                return Err(FrgmError::param(format!("{what} matrix is not symmetric")));
            }
        }
    }
    Ok(())
}

/// All-ones adjacency with a zero diagonal.
pub fn complete_adjacency<T: Real>(m: usize) -> DMatrix<T> {
    DMatrix::from_fn(m, m, |i, j| if i == j { T::zero() } else { T::one() })
}

/// How the directed k-nearest-neighbour relation is made symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnSymmetrization {
    /// Edge when either endpoint selects the other.
    #[default]
    Union,
    /// Edge only when both endpoints select each other.
    Intersection,
}

/// k-nearest-neighbour adjacency, symmetrized by union.
pub fn build_knn_adjacency<T: Real>(v: &PointSet<T>, k: usize) -> Result<DMatrix<T>> {
    build_knn_adjacency_with(v, k, KnnSymmetrization::Union)
}

pub fn build_knn_adjacency_with<T: Real>(v: &PointSet<T>, k: usize, mode: KnnSymmetrization) -> Result<DMatrix<T>> {
    let m = v.len();
    if k < 1 || k + 1 > m {
        return Err(FrgmError::param(format!(
            "k must lie in 1..={}, got {k}",
            m.saturating_sub(1)
        )));
    }
    let dist = v.distance_matrix();
    let mut selects = vec![vec![false; m]; m];
    for i in 0..m {
        let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        // stable sort keeps lower indices first on ties
        others.sort_by(|&a, &b| {
            dist[(i, a)]
                .partial_cmp(&dist[(i, b)])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for &j in others.iter().take(k) {
            selects[i][j] = true;
        }
    }
    Ok(DMatrix::from_fn(m, m, |i, j| {
        let edge = match mode {
            KnnSymmetrization::Union => selects[i][j] || selects[j][i],
            KnnSymmetrization::Intersection => selects[i][j] && selects[j][i],
        };
        if i != j && edge {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// 0/1 adjacency of the Delaunay triangulation of a planar point set.
pub fn build_delaunay_adjacency<T: Real>(v: &PointSet<T>) -> Result<DMatrix<T>> {
    if v.dim() != 2 {
        return Err(FrgmError::param("Delaunay adjacency is only defined for 2D points"));
    }
    let pts: Vec<[f64; 2]> = (0..v.len())
        .map(|i| [to_f64(v.matrix()[(i, 0)]), to_f64(v.matrix()[(i, 1)])])
        .collect();
    let tri = delaunay::triangulate(&pts)?;
    let m = v.len();
    let mut adj = DMatrix::zeros(m, m);
    for (a, b) in tri.edges() {
        adj[(a, b)] = T::one();
        adj[(b, a)] = T::one();
    }
    Ok(adj)
}

/// Graph Laplacian `diag(S 1) - S`.
pub fn laplacian<T: Real>(s: &DMatrix<T>) -> DMatrix<T> {
    let deg = s.column_sum();
    DMatrix::from_diagonal(&deg) - s
}

/// Maps a metric matrix to the Gaussian form `exp(-(E / max E)^2 / sigma^2)`.
///
/// An all-zero input yields the all-ones matrix.
pub fn normalize_edge_attr<T: Real>(e: &DMatrix<T>, sigma: T) -> Result<DMatrix<T>> {
    if sigma <= T::zero() {
        return Err(FrgmError::param("sigma must be positive"));
    }
    if e.iter().any(|v| *v < T::zero() || !is_finite(*v)) {
        return Err(FrgmError::param("edge attributes must be finite and nonnegative"));
    }
    let max = e.max();
    if max <= T::zero() {
        log::warn!("edge attribute matrix is identically zero; returning all-ones");
        return Ok(DMatrix::from_element(e.nrows(), e.ncols(), T::one()));
    }
    let s2 = sigma * sigma;
    Ok(e.map(|v| {
        let r = v / max;
        (-(r * r) / s2).exp()
    }))
}

/// Divides a metric matrix by its largest entry; zero stays zero.
pub fn unit_normalize<T: Real>(e: &DMatrix<T>) -> DMatrix<T> {
    let max = e.max();
    if max <= T::zero() {
        e.clone()
    } else {
        e / max
    }
}

/// Ratio of the smallest to the largest eigenvalue of a symmetric matrix.
pub fn eig_ratio<T: Real>(m: &DMatrix<T>) -> Result<T> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(FrgmError::param("eig_ratio needs a non-empty square matrix"));
    }
    check_symmetric(m, 1e-10, "input")?;
    let eig = m.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if hi == T::zero() {
        return Err(FrgmError::numerical("largest eigenvalue is zero"));
    }
    Ok(lo / hi)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    m.clone().symmetric_eigen().eigenvalues.min()
}

#[allow(dead_code)]
pub(crate) fn mean<T: Real>(xs: impl IntoIterator<Item = T>) -> T {
    let mut acc = T::zero();
    let mut n = 0usize;
    for x in xs {
        acc += x;
        n += 1;
    }
    if n == 0 {
        T::zero()
    } else {
        acc / lit::<T>(n as f64)
    }
}
