//! Exact linear assignment.

use nalgebra::DMatrix;

use crate::assignment::Permutation;
use crate::error::{FrgmError, Result};
use crate::scalar::{is_finite, lit, Real};

/// Largest column count accepted by [`brute_force_lap`].
pub const BRUTE_FORCE_MAX_N: usize = 10;

/// Optimal assignment and its objective `sum_i cost[i, assign[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LapSolution<T: Real> {
    pub assignment: Permutation,
    pub objective: T,
}

fn validate<T: Real>(cost: &DMatrix<T>) -> Result<()> {
    let (m, n) = cost.shape();
    if m == 0 {
        return Err(FrgmError::param("cost matrix has no rows"));
    }
    if m > n {
        return Err(FrgmError::param(format!(
            "assignment needs rows <= columns, got {m}x{n}"
        )));
    }
    if cost.iter().any(|c| !is_finite(*c)) {
        return Err(FrgmError::param("cost matrix contains non-finite entries"));
    }
    Ok(())
}

/// Hungarian method (shortest augmenting paths with dual potentials).
///
/// Rows are inserted one at a time; each insertion runs a Dijkstra-like
/// search over columns with reduced costs `c_ij - u_i - v_j >= 0`. For m < n
/// this is the same as padding with zero-cost dummy rows. O(m^2 n).
pub fn hungarian<T: Real>(cost: &DMatrix<T>) -> Result<LapSolution<T>> {
    validate(cost)?;
    let (m, n) = cost.shape();
    let inf = lit::<T>(f64::INFINITY);
    // 1-based arrays with slot 0 as the virtual root
    let mut u = vec![T::zero(); m + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=m {
        row_of[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == 0 {
                return Err(FrgmError::numerical("augmenting path search failed"));
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; m];
    for j in 1..=n {
        if row_of[j] != 0 {
            assign[row_of[j] - 1] = j - 1;
        }
    }
    let assignment = Permutation::new(assign, n)?;
    let objective = assignment.objective(cost);
    Ok(LapSolution { assignment, objective })
}

/// Exhaustive search over all injections; a test oracle for small inputs.
pub fn brute_force_lap<T: Real>(cost: &DMatrix<T>) -> Result<LapSolution<T>> {
    validate(cost)?;
    let (m, n) = cost.shape();
    if n > BRUTE_FORCE_MAX_N {
        return Err(FrgmError::SizeGuard(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut cur = Vec::with_capacity(m);
    let mut used = vec![false; n];
    enumerate(cost, &mut cur, &mut used, &mut best);
    let (_, assign) = best.expect("at least one injection exists");
    let assignment = Permutation::new(assign, n)?;
    let objective = assignment.objective(cost);
    Ok(LapSolution { assignment, objective })
}

fn enumerate<T: Real>(cost: &DMatrix<T>, cur: &mut Vec<usize>, used: &mut [bool], best: &mut Option<(T, Vec<usize>)>) {
    let i = cur.len();
    if i == cost.nrows() {
        let total = cur
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (r, &c)| acc + cost[(r, c)]);
        if best.as_ref().is_none_or(|(b, _)| total < *b) {
            *best = Some((total, cur.clone()));
        }
        return;
    }
    for j in 0..cost.ncols() {
        if !used[j] {
            used[j] = true;
            cur.push(j);
            enumerate(cost, cur, used, best);
            cur.pop();
            used[j] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_favoring() {
        let c = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let s = hungarian(&c).unwrap();
        assert_eq!(s.assignment.assign(), &[0, 1, 2]);
        assert_eq!(s.objective, 0.0);
    }

    #[test]
    fn enumerated_three_by_three() {
        // all six permutations enumerated by hand: 1+2+2 = 5 is the minimum
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let s = hungarian(&c).unwrap();
        assert_eq!(s.objective, 5.0);
        assert_eq!(s.assignment.assign(), &[1, 0, 2]);
        assert_eq!(brute_force_lap(&c).unwrap().objective, 5.0);
    }

    #[test]
    fn brute_force_small_cases() {
        let s = brute_force_lap(&DMatrix::from_element(1, 1, 7.0)).unwrap();
        assert_eq!(s.assignment.assign(), &[0]);
        assert_eq!(s.objective, 7.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(brute_force_lap(&c).unwrap().objective, 2.0);
    }

    #[test]
    fn guards() {
        assert!(matches!(
            brute_force_lap(&DMatrix::<f64>::zeros(2, 11)),
            Err(FrgmError::SizeGuard(_))
        ));
        assert!(hungarian(&DMatrix::<f64>::zeros(3, 2)).is_err());
        let mut c = DMatrix::<f64>::zeros(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(hungarian(&c).is_err());
    }

    #[test]
    fn negative_and_rectangular_costs() {
        let c = DMatrix::from_row_slice(2, 4, &[-1.0, 5.0, 0.5, -3.0, 2.0, -2.0, 1.0, -4.0]);
        let h = hungarian(&c).unwrap();
        let b = brute_force_lap(&c).unwrap();
        assert_eq!(h.objective, b.objective);
    }

    #[test]
    fn single_precision() {
        let c = DMatrix::<f32>::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        assert_eq!(hungarian(&c).unwrap().objective, 5.0f32);
    }

    proptest::proptest! {
        #[test]
        fn matches_brute_force(
            m in 1usize..6,
            extra in 0usize..3,
            vals in proptest::collection::vec(-5.0f64..5.0, 64)
        ) {
            let n = m + extra;
            let c = DMatrix::from_fn(m, n, |i, j| vals[i * 8 + j]);
            let h = hungarian(&c).unwrap();
            let b = brute_force_lap(&c).unwrap();
            proptest::prop_assert!((h.objective - b.objective).abs() < 1e-12);
        }
    }
}
