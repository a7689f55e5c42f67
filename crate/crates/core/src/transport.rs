//! Entropy-regularized optimal transport (Sinkhorn scaling) and the
//! transport-based subsolvers built on it.
//!
//! Iterations run on multiplicative scalings `u`, `v` against a kernel
//! `exp((f_i + g_j - C_ij) / eps)`. When a scaling leaves `[1e-30, 1e30]`
//! it is absorbed into the dual potentials `f`, `g` and the kernel is rebuilt,
//! which is the log-domain stabilization; a kernel row that underflows
//! entirely is repaired with an exact log-sum-exp update.

use nalgebra::{DMatrix, DVector};

use crate::assignment::{entropy, SoftAssignment};
use crate::error::{FrgmError, Result};
use crate::scalar::{is_finite, lit, to_f64, Real};

/// Stopping rule for Sinkhorn iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornOptions {
    pub max_iter: usize,
    /// L1 bound on the row-marginal violation.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            max_iter: 2000,
            tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornReport {
    pub iterations: usize,
    pub marginal_error: f64,
    pub converged: bool,
    /// True when the potentials had to absorb the scalings at least once.
    pub stabilized: bool,
}

/// Coupling between two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan<T: Real> {
    pub pi: DMatrix<T>,
    pub row_marginal: DVector<T>,
    pub col_marginal: DVector<T>,
    pub report: SinkhornReport,
}

impl<T: Real> TransportPlan<T> {
    pub fn cost(&self, cost: &DMatrix<T>) -> T {
        self.pi.dot(cost)
    }

    /// `<pi, C> - eps H(pi)`.
    pub fn regularized_cost(&self, cost: &DMatrix<T>, eps: T) -> T {
        self.pi.dot(cost) - eps * entropy(&self.pi)
    }
}

const SCALING_LIMIT: f64 = 1e30;

fn log_sum_exp<T: Real>(xs: impl Iterator<Item = T>) -> T {
    let v: Vec<T> = xs.collect();
    let neg_inf = lit::<T>(f64::NEG_INFINITY);
    let max = v.iter().copied().fold(neg_inf, |a, b| if b > a { b } else { a });
    if max == neg_inf {
        return neg_inf;
    }
    let s = v.iter().fold(T::zero(), |acc, x| acc + (*x - max).exp());
    max + s.ln()
}

fn safe_ln<T: Real>(x: T) -> T {
    if x > T::zero() {
        x.ln()
    } else {
        lit(f64::NEG_INFINITY)
    }
}

struct Engine<'a, T: Real> {
    cost: &'a DMatrix<T>,
    a: &'a DVector<T>,
    b: &'a DVector<T>,
    eps: T,
    f: DVector<T>,
    g: DVector<T>,
}

impl<T: Real> Engine<'_, T> {
    fn update_f_exact(&mut self) {
        let (m, n) = self.cost.shape();
        for i in 0..m {
            if self.a[i] <= T::zero() {
                self.f[i] = lit(f64::NEG_INFINITY);
                continue;
            }
            let lse = log_sum_exp((0..n).map(|j| (self.g[j] - self.cost[(i, j)]) / self.eps));
            self.f[i] = self.eps * (self.a[i].ln() - lse);
        }
    }

    fn kernel(&self) -> DMatrix<T> {
        let (m, n) = self.cost.shape();
        DMatrix::from_fn(m, n, |i, j| {
            let x = (self.f[i] + self.g[j] - self.cost[(i, j)]) / self.eps;
            if is_finite(x) || x < T::zero() {
                x.exp()
            } else {
                T::zero()
            }
        })
    }

    fn absorb(&mut self, u: &mut DVector<T>, v: &mut DVector<T>) {
        for i in 0..u.len() {
            self.f[i] += self.eps * safe_ln(u[i]);
            u[i] = T::one();
        }
        for j in 0..v.len() {
            self.g[j] += self.eps * safe_ln(v[j]);
            v[j] = T::one();
        }
    }

    fn run(&mut self, opts: &SinkhornOptions, mut stabilized: bool) -> (DMatrix<T>, SinkhornReport) {
        let (m, n) = self.cost.shape();
        let lo = lit::<T>(1.0 / SCALING_LIMIT);
        let hi = lit::<T>(SCALING_LIMIT);
        let mut k = self.kernel();
        let mut u = DVector::from_element(m, T::one());
        let mut v = DVector::from_element(n, T::one());
        let mut err = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < opts.max_iter {
            iterations += 1;
            let kv = &k * &v;
            let mut repair = false;
            for i in 0..m {
                if self.a[i] <= T::zero() {
                    u[i] = T::zero();
                } else if kv[i] > T::zero() {
                    u[i] = self.a[i] / kv[i];
                } else {
                    repair = true;
                }
            }
            if repair {
                self.absorb(&mut u, &mut v);
                self.update_f_exact();
                k = self.kernel();
                stabilized = true;
                continue;
            }
            let ktu = k.tr_mul(&u);
            for j in 0..n {
                v[j] = if self.b[j] <= T::zero() || ktu[j] <= T::zero() {
                    T::zero()
                } else {
                    self.b[j] / ktu[j]
                };
            }
            let out_of_range = u
                .iter()
                .chain(v.iter())
                .any(|x| *x > hi || (*x > T::zero() && *x < lo) || !is_finite(*x));
            if out_of_range {
                self.absorb(&mut u, &mut v);
                k = self.kernel();
                stabilized = true;
            }
            let kv = &k * &v;
            err = (0..m).map(|i| to_f64((u[i] * kv[i] - self.a[i]).abs())).sum::<f64>();
            if err <= opts.tol {
                converged = true;
                break;
            }
        }
        self.absorb(&mut u, &mut v);
        let pi = self.kernel();
        (
            pi,
            SinkhornReport {
                iterations,
                marginal_error: err,
                converged,
                stabilized,
            },
        )
    }
}

fn validate_marginals<T: Real>(cost: &DMatrix<T>, a: &DVector<T>, b: &DVector<T>, eps: T) -> Result<()> {
    if eps <= T::zero() || !is_finite(eps) {
        return Err(FrgmError::param("epsilon must be positive and finite"));
    }
    if a.len() != cost.nrows() || b.len() != cost.ncols() {
        return Err(FrgmError::param("marginal lengths must match the cost shape"));
    }
    if a.iter().chain(b.iter()).any(|x| *x < T::zero() || !is_finite(*x)) {
        return Err(FrgmError::param("marginals must be finite and nonnegative"));
    }
    if cost.iter().any(|c| !is_finite(*c)) {
        return Err(FrgmError::param("cost contains non-finite entries"));
    }
    let (sa, sb) = (to_f64(a.sum()), to_f64(b.sum()));
    if (sa - sb).abs() > 1e-9 * sa.abs().max(1.0) {
        return Err(FrgmError::param(format!("marginal masses differ: {sa} vs {sb}")));
    }
    Ok(())
}

/// Entropic optimal transport between `a` and `b` under `cost`:
/// minimizes `<pi, cost> - eps H(pi)` over couplings with those marginals.
pub fn sinkhorn<T: Real>(
    cost: &DMatrix<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    eps: T,
    opts: &SinkhornOptions,
) -> Result<TransportPlan<T>> {
    validate_marginals(cost, a, b, eps)?;
    let (m, n) = cost.shape();
    // shifting the cost by a constant leaves the plan unchanged
    let shifted = cost.add_scalar(-cost.min());
    let mut engine = Engine {
        cost: &shifted,
        a,
        b,
        eps,
        f: DVector::zeros(m),
        g: DVector::zeros(n),
    };
    let (pi, report) = engine.run(opts, false);
    Ok(TransportPlan {
        pi,
        row_marginal: a.clone(),
        col_marginal: b.clone(),
        report,
    })
}

/// Warm-startable entropic solver used inside the approximate Frank-Wolfe
/// loop. `g0` is a column potential in cost units from a previous solve.
pub(crate) fn sinkhorn_warm<T: Real>(
    cost: &DMatrix<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    eps: T,
    g0: Option<&DVector<T>>,
    opts: &SinkhornOptions,
) -> Result<(DMatrix<T>, DVector<T>, SinkhornReport)> {
    validate_marginals(cost, a, b, eps)?;
    let (m, n) = cost.shape();
    let mut engine = Engine {
        cost,
        a,
        b,
        eps,
        f: DVector::zeros(m),
        g: g0
            .filter(|g| g.len() == n && g.iter().all(|x| is_finite(*x)))
            .cloned()
            .unwrap_or_else(|| DVector::zeros(n)),
    };
    engine.update_f_exact();
    let (pi, report) = engine.run(opts, true);
    let g = engine.g.map(|x| if is_finite(x) { x } else { T::zero() });
    Ok((pi, g, report))
}

/// Projects an approximate coupling onto exact marginals: rows and columns
/// above their targets are scaled down, then the deficit is restored with a
/// rank-one correction.
pub(crate) fn round_to_marginals<T: Real>(pi: &mut DMatrix<T>, a: &DVector<T>, b: &DVector<T>) {
    let (m, n) = pi.shape();
    for i in 0..m {
        let r = pi.row(i).sum();
        if r > a[i] && r > T::zero() {
            let s = a[i] / r;
            pi.row_mut(i).scale_mut(s);
        }
    }
    for j in 0..n {
        let c = pi.column(j).sum();
        if c > b[j] && c > T::zero() {
            let s = b[j] / c;
            pi.column_mut(j).scale_mut(s);
        }
    }
    let err_r = DVector::from_fn(m, |i, _| (a[i] - pi.row(i).sum()).max(T::zero()));
    let err_c = DVector::from_fn(n, |j, _| (b[j] - pi.column(j).sum()).max(T::zero()));
    let total = err_c.sum();
    if total > T::zero() {
        *pi += (&err_r * err_c.transpose()) / total;
    }
}

/// Marginals of the assignment-polytope transport: one unit per real row,
/// `n - m` units on the zero-cost slack row, one unit per column.
fn assignment_marginals<T: Real>(m: usize, n: usize) -> (DVector<T>, DVector<T>) {
    let rows = if n > m { m + 1 } else { m };
    let mut a = DVector::from_element(rows, T::one());
    if n > m {
        a[m] = lit((n - m) as f64);
    }
    (a, DVector::from_element(n, T::one()))
}

fn with_slack_row<T: Real>(grad: &DMatrix<T>) -> DMatrix<T> {
    let (m, n) = grad.shape();
    if n > m {
        let mut c = DMatrix::zeros(m + 1, n);
        c.rows_mut(0, m).copy_from(grad);
        c
    } else {
        grad.clone()
    }
}

/// Minimizes `<grad, P> - eps H(P)` over the relaxed assignment polytope.
///
/// The column inequality is turned into an equality by a zero-cost slack row
/// carrying the surplus `n - m`; the returned matrix is the first `m` rows,
/// rounded onto exact row sums.
pub fn lap_sinkhorn<T: Real>(grad: &DMatrix<T>, eps: T) -> Result<SoftAssignment<T>> {
    lap_sinkhorn_with(grad, eps, &SinkhornOptions::default()).map(|(p, _)| p)
}

pub fn lap_sinkhorn_with<T: Real>(
    grad: &DMatrix<T>,
    eps: T,
    opts: &SinkhornOptions,
) -> Result<(SoftAssignment<T>, SinkhornReport)> {
    let (p, _, report) = lap_sinkhorn_warm(grad, eps, None, opts)?;
    Ok((p, report))
}

pub(crate) fn lap_sinkhorn_warm<T: Real>(
    grad: &DMatrix<T>,
    eps: T,
    g0: Option<&DVector<T>>,
    opts: &SinkhornOptions,
) -> Result<(SoftAssignment<T>, DVector<T>, SinkhornReport)> {
    let (m, n) = grad.shape();
    if m == 0 || m > n {
        return Err(FrgmError::param(format!(
            "assignment needs 1 <= rows <= columns, got {m}x{n}"
        )));
    }
    let cost = with_slack_row(grad);
    let (a, b) = assignment_marginals::<T>(m, n);
    let (mut pi, g, report) = sinkhorn_warm(&cost, &a, &b, eps, g0, opts)?;
    round_to_marginals(&mut pi, &a, &b);
    let p = pi.rows(0, m).into_owned();
    Ok((SoftAssignment::from_matrix_unchecked(p), g, report))
}

/// Entropic Wasserstein cost `<pi*, E>` between two weight vectors on a
/// common node set with ground metric `E`.
pub fn wasserstein_metric<T: Real>(a: &DVector<T>, b: &DVector<T>, e: &DMatrix<T>, eps: T) -> Result<T> {
    if !e.is_square() {
        return Err(FrgmError::param("ground metric must be square"));
    }
    let plan = sinkhorn(e, a, b, eps, &SinkhornOptions::default())?;
    Ok(plan.cost(e))
}
