//! Relaxed and discrete correspondence matrices.
//!
//! A soft assignment lives on the doubly-stochastic relaxation of partial
//! permutations: every row sums to one, every column sums to at most one and
//! all entries lie in `[0, 1]`. Binary members of that polytope are exactly the
//! injective assignments represented by [`Permutation`].

use nalgebra::DMatrix;

use crate::error::{FrgmError, Result};
use crate::scalar::{lit, to_f64, Real};

/// Absolute tolerance on row and column sums.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Absolute tolerance on the `[0, 1]` entry bounds.
pub const ENTRY_TOL: f64 = 1e-12;

/// Returns true iff `p` lies in the relaxed assignment polytope.
pub fn is_feasible<T: Real>(p: &DMatrix<T>) -> bool {
    let (m, n) = p.shape();
    if m == 0 || m > n {
        return false;
    }
    // sums of n rounded entries carry about n ulps of error in single precision
    let ulp = to_f64(T::default_epsilon());
    let tol = FEASIBILITY_TOL.max(4.0 * n as f64 * ulp);
    let entry_tol = ENTRY_TOL.max(4.0 * ulp);
    for v in p.iter() {
        let v = to_f64(*v);
        if !v.is_finite() || v < -entry_tol || v > 1.0 + entry_tol {
            return false;
        }
    }
    for i in 0..m {
        let s: f64 = p.row(i).iter().map(|v| to_f64(*v)).sum();
        if (s - 1.0).abs() > tol {
            return false;
        }
    }
    for j in 0..n {
        let s: f64 = p.column(j).iter().map(|v| to_f64(*v)).sum();
        if s > 1.0 + tol {
            return false;
        }
    }
    true
}

/// Relaxed correspondence matrix `P` (m x n, m <= n).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment<T: Real> {
    p: DMatrix<T>,
}

impl<T: Real> SoftAssignment<T> {
    /// Wraps `p` after checking feasibility.
    pub fn new(p: DMatrix<T>) -> Result<Self> {
        if !is_feasible(&p) {
            return Err(FrgmError::param("matrix is not in the relaxed assignment polytope"));
        }
        Ok(SoftAssignment { p })
    }

    /// Wraps `p` without checking. Solvers use this for iterates that are
    /// feasible by construction.
    pub fn from_matrix_unchecked(p: DMatrix<T>) -> Self {
        SoftAssignment { p }
    }

    /// The barycenter `P_ij = 1/n`.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(FrgmError::param(format!(
                "uniform assignment needs 1 <= m <= n, got {m}x{n}"
            )));
        }
        let v = T::one() / lit::<T>(n as f64);
        Ok(SoftAssignment {
            p: DMatrix::from_element(m, n, v),
        })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.p
    }

    pub fn nrows(&self) -> usize {
        self.p.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.p.ncols()
    }

    pub fn is_feasible(&self) -> bool {
        is_feasible(&self.p)
    }

    /// Entropy `H(P) = -sum P_ij log P_ij` with `0 log 0 = 0`.
    pub fn entropy(&self) -> T {
        entropy(&self.p)
    }

    /// Mean over rows of the largest entry; 1 for binary matrices.
    pub fn binarity(&self) -> T {
        let m = self.p.nrows();
        let mut acc = T::zero();
        for i in 0..m {
            acc += self.p.row(i).max();
        }
        acc / lit::<T>(m as f64)
    }
}

pub(crate) fn entropy<T: Real>(p: &DMatrix<T>) -> T {
    p.iter()
        .filter(|v| **v > T::zero())
        .fold(T::zero(), |acc, v| acc - *v * v.ln())
}

/// Injective assignment `i -> assign[i]` of m rows into n columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    assign: Vec<usize>,
    n: usize,
}

impl Permutation {
    pub fn new(assign: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &j in &assign {
            if j >= n {
                return Err(FrgmError::param(format!("column {j} out of range 0..{n}")));
            }
            if seen[j] {
                return Err(FrgmError::param(format!("column {j} assigned twice")));
            }
            seen[j] = true;
        }
        Ok(Permutation { assign, n })
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            assign: (0..m).collect(),
            n: m,
        }
    }

    pub fn assign(&self) -> &[usize] {
        &self.assign
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn to_matrix<T: Real>(&self) -> DMatrix<T> {
        let mut p = DMatrix::zeros(self.assign.len(), self.n);
        for (i, &j) in self.assign.iter().enumerate() {
            p[(i, j)] = T::one();
        }
        p
    }

    pub fn to_soft<T: Real>(&self) -> SoftAssignment<T> {
        SoftAssignment::from_matrix_unchecked(self.to_matrix())
    }

    /// `sum_i cost[i, assign[i]]`, accumulated in row order.
    pub fn objective<T: Real>(&self, cost: &DMatrix<T>) -> T {
        self.assign
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &j)| acc + cost[(i, j)])
    }
}
