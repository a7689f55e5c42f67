//! Small-instance checks tying the matching model to the classical
//! quadratic assignment forms.
//!
//! Vectorization is row-major: entry `(i, j)` of an `m x n` assignment sits
//! at position `i * n + j`, so `E1 ⊗ E2` is the Kronecker affinity.

use frgm::{FrgmError, Permutation, Result};
use nalgebra::{DMatrix, DVector};

/// Largest `m * n` for which an explicit affinity matrix is built.
pub const MAX_AFFINITY_SIZE: usize = 400;

/// Edge affinity bandwidth of the synthetic experiments.
pub const EDGE_AFFINITY_SCALE: f64 = 0.15;

fn guard(m: usize, n: usize) -> Result<()> {
    if m * n > MAX_AFFINITY_SIZE {
        return Err(FrgmError::SizeGuard(format!(
            "affinity matrix for {m}x{n} assignments exceeds m*n = {MAX_AFFINITY_SIZE}"
        )));
    }
    Ok(())
}

fn vectorize(p: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(p.len(), p.transpose().iter().copied())
}

/// Quadratic score `vec(P)^T K vec(P)`.
pub fn lawler_score(k: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let v = vectorize(p);
    v.dot(&(k * &v))
}

/// Lawler affinity from edge lengths, with node affinities on the diagonal.
///
/// Off-diagonal entries pair edge `(i1, i2)` with edge `(j1, j2)` through
/// `exp(-(e1 - e2)^2 / 0.15)`; pairs sharing an endpoint on one side only are
/// zero.
pub fn lawler_affinity(e1: &DMatrix<f64>, e2: &DMatrix<f64>, node: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let (m, n) = (e1.nrows(), e2.nrows());
    guard(m, n)?;
    if let Some(u) = node {
        if u.shape() != (m, n) {
            return Err(FrgmError::Parameter("node affinity must be m x n".into()));
        }
    }
    let mut k = DMatrix::zeros(m * n, m * n);
    for i1 in 0..m {
        for j1 in 0..n {
            let a = i1 * n + j1;
            if let Some(u) = node {
                k[(a, a)] = u[(i1, j1)];
            }
            for i2 in 0..m {
                if i2 == i1 {
                    continue;
                }
                for j2 in 0..n {
                    if j2 == j1 {
                        continue;
                    }
                    let d = e1[(i1, i2)] - e2[(j1, j2)];
                    k[(a, i2 * n + j2)] = (-d * d / EDGE_AFFINITY_SCALE).exp();
                }
            }
        }
    }
    Ok(k)
}

/// Linear-similarity form `-<U, P> + lambda tr(E1 P E2 P^T)` (maximized).
pub fn koopmans_beckmann(u: &DMatrix<f64>, e1: &DMatrix<f64>, e2: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> f64 {
    -u.dot(p) + lambda * (e1 * p * e2 * p.transpose()).trace()
}

/// Disagreement form `<U, P> + lambda/2 ||E1 - P E2 P^T||^2` (minimized).
pub fn edge_disagreement(u: &DMatrix<f64>, e1: &DMatrix<f64>, e2: &DMatrix<f64>, p: &DMatrix<f64>, lambda: f64) -> f64 {
    u.dot(p) + 0.5 * lambda * (e1 - p * e2 * p.transpose()).norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QapReport {
    /// `vec(P)^T (E1 ⊗ E2) vec(P)`.
    pub kronecker_score: f64,
    /// `tr(E1 P E2 P^T)`.
    pub trace_score: f64,
    /// `vec(P)^T K vec(P)` under the Lawler affinity of the edge attributes.
    pub lawler_score: f64,
    /// Sum of the disagreement and similarity forms; `None` unless `m == n`.
    pub conversion_sum: Option<f64>,
    /// The constant that sum must equal, `lambda/2 (||E1||^2 + ||E2||^2)`.
    pub conversion_constant: Option<f64>,
}

impl QapReport {
    pub fn kronecker_error(&self) -> f64 {
        (self.kronecker_score - self.trace_score).abs()
    }

    pub fn conversion_error(&self) -> Option<f64> {
        Some((self.conversion_sum? - self.conversion_constant?).abs())
    }
}

/// Evaluates both identities at the permutation `p` of an instance with
/// symmetric edge attributes `e1` (m x m) and `e2` (n x n).
pub fn qap_cross_check(
    e1: &DMatrix<f64>,
    e2: &DMatrix<f64>,
    u: Option<&DMatrix<f64>>,
    p: &Permutation,
    lambda: f64,
) -> Result<QapReport> {
    let (m, n) = (e1.nrows(), e2.nrows());
    guard(m, n)?;
    if !e1.is_square() || !e2.is_square() || p.len() != m || p.ncols() != n {
        return Err(FrgmError::Parameter("instance and assignment shapes disagree".into()));
    }
    let zero = DMatrix::zeros(m, n);
    let u = u.unwrap_or(&zero);
    if u.shape() != (m, n) {
        return Err(FrgmError::Parameter("unary cost must be m x n".into()));
    }
    let pm: DMatrix<f64> = p.to_matrix();
    let kron = e1.kronecker(e2);
    let (conversion_sum, conversion_constant) = if m == n {
        (
            Some(edge_disagreement(u, e1, e2, &pm, lambda) + koopmans_beckmann(u, e1, e2, &pm, lambda)),
            Some(0.5 * lambda * (e1.norm_squared() + e2.norm_squared())),
        )
    } else {
        (None, None)
    };
    Ok(QapReport {
        kronecker_score: lawler_score(&kron, &pm),
        trace_score: (e1 * &pm * e2 * pm.transpose()).trace(),
        lawler_score: lawler_score(&lawler_affinity(e1, e2, None)?, &pm),
        conversion_sum,
        conversion_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_points, rng};
    use rand::seq::SliceRandom;

    fn instance(seed: u64, m: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>, Permutation) {
        let mut r = rng(seed);
        let a = frgm::PointSet::new(gaussian_points(&mut r, m, 2, 1.0)).unwrap();
        let b = frgm::PointSet::new(gaussian_points(&mut r, n, 2, 1.0)).unwrap();
        let mut cols: Vec<usize> = (0..n).collect();
        cols.shuffle(&mut r);
        cols.truncate(m);
        (
            a.distance_matrix(),
            b.distance_matrix(),
            Permutation::new(cols, n).unwrap(),
        )
    }

    #[test]
    fn kronecker_identity_five_nodes() {
        let (e1, e2, p) = instance(1, 5, 5);
        let r = qap_cross_check(&e1, &e2, None, &p, 1.0).unwrap();
        assert!(r.kronecker_error() <= 1e-10);
        assert!(r.conversion_error().unwrap() <= 1e-10);
    }

    #[test]
    fn identity_has_zero_disagreement() {
        let (e1, _, _) = instance(2, 6, 6);
        let i = Permutation::identity(6).to_matrix();
        assert_eq!(edge_disagreement(&DMatrix::zeros(6, 6), &e1, &e1, &i, 1.0), 0.0);
    }

    #[test]
    fn lawler_matches_loop() {
        let (e1, e2, p) = instance(3, 4, 6);
        let k = lawler_affinity(&e1, &e2, None).unwrap();
        let a = p.assign();
        let mut s = 0.0;
        for i1 in 0..4 {
            for i2 in 0..4 {
                if i1 != i2 {
                    let d = e1[(i1, i2)] - e2[(a[i1], a[i2])];
                    s += (-d * d / EDGE_AFFINITY_SCALE).exp();
                }
            }
        }
        assert!((lawler_score(&k, &p.to_matrix()) - s).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let (e1, e2, p) = instance(4, 20, 21);
        assert!(matches!(
            qap_cross_check(&e1, &e2, None, &p, 1.0),
            Err(FrgmError::SizeGuard(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn identities_hold(seed in 0u64..10_000, m in 2usize..7, extra in 0usize..3, lambda in 0.0f64..3.0) {
            let (e1, e2, p) = instance(seed, m, m + extra);
            let u = DMatrix::from_fn(m, m + extra, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1);
            let r = qap_cross_check(&e1, &e2, Some(&u), &p, lambda).unwrap();
            proptest::prop_assert!(r.kronecker_error() <= 1e-10);
            if let Some(c) = r.conversion_error() {
                proptest::prop_assert!(c <= 1e-10);
            }
        }
    }
}
