//! Matching graphs known only through their edge-attribute matrices.
//!
//! A soft assignment `P` transports the basis functions of graph 2 onto the
//! nodes of graph 1, and the inner-product functional of graph 2 evaluated on
//! the transported functions is `F(P) = P E2 P^T`. Stage one fits `F(P)` to
//! `E1`; stage two pulls the result toward an extreme point by adding the
//! function-space distance of every transported node to every target node.

use nalgebra::DMatrix;

use crate::assignment::{Permutation, SoftAssignment};
use crate::error::{FrgmError, Result};
use crate::graph::{complete_adjacency, normalize_edge_attr, unit_normalize};
use crate::lap::hungarian;
use crate::optimizer::{solve, FwOptions, Objective, SolveReport, Solver};
use crate::scalar::{lit, Real};

/// Distance between a transported node and a target node used in stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    /// Optimal-transport cost to the Dirac at the target under the metric.
    #[default]
    Wasserstein,
    /// The metric induced by the exp-normalized inner product.
    InnerProduct,
}

/// Weights and solver settings for [`match_general`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Bandwidth of the exp-normalization of both attribute matrices.
    pub sigma: f64,
    pub solver: Solver,
    pub fw: FwOptions,
    pub distance: DistanceKind,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        GeneralConfig {
            alpha1: 0.99,
            alpha2: 0.5,
            sigma: 0.5,
            solver: Solver::Fw,
            fw: FwOptions::default(),
            distance: DistanceKind::Wasserstein,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralProblem<T: Real> {
    /// exp-normalized attributes of graph 1 (m x m).
    pub e1_hat: DMatrix<T>,
    /// exp-normalized attributes of graph 2 (n x n).
    pub e2_hat: DMatrix<T>,
    /// Max-normalized metric of graph 2, the ground cost for stage two.
    pub e2_metric: DMatrix<T>,
    /// Pairwise weights of graph 1.
    pub adj1: DMatrix<T>,
    pub unary: DMatrix<T>,
    pub alpha1: T,
    pub alpha2: T,
    pub solver: Solver,
    pub fw: FwOptions,
    pub distance: DistanceKind,
}

impl<T: Real> GeneralProblem<T> {
    /// Builds a problem from raw metric edge attributes. Missing adjacency
    /// defaults to the complete graph and a missing unary term to zero.
    pub fn new(
        e1: &DMatrix<T>,
        e2: &DMatrix<T>,
        adj1: Option<DMatrix<T>>,
        unary: Option<DMatrix<T>>,
        config: &GeneralConfig,
    ) -> Result<Self> {
        let (m, n) = (e1.nrows(), e2.nrows());
        if !e1.is_square() || !e2.is_square() {
            return Err(FrgmError::param("edge attributes must be square"));
        }
        if m == 0 || m > n {
            return Err(FrgmError::param(format!(
                "graph 1 must have 1..=n nodes, got m={m}, n={n}"
            )));
        }
        for (name, a) in [("alpha1", config.alpha1), ("alpha2", config.alpha2)] {
            if !(0.0..=1.0).contains(&a) {
                return Err(FrgmError::param(format!("{name} must lie in [0, 1], got {a}")));
            }
        }
        let adj1 = adj1.unwrap_or_else(|| complete_adjacency(m));
        if adj1.shape() != (m, m) {
            return Err(FrgmError::param("adjacency shape must match graph 1"));
        }
        let unary = unary.unwrap_or_else(|| DMatrix::zeros(m, n));
        if unary.shape() != (m, n) {
            return Err(FrgmError::param(format!(
                "unary cost must be {m}x{n}, got {}x{}",
                unary.nrows(),
                unary.ncols()
            )));
        }
        if unary.iter().any(|u| !u.is_finite()) {
            return Err(FrgmError::param("unary cost contains non-finite entries"));
        }
        let sigma = lit::<T>(config.sigma);
        Ok(GeneralProblem {
            e1_hat: normalize_edge_attr(e1, sigma)?,
            e2_hat: normalize_edge_attr(e2, sigma)?,
            e2_metric: unit_normalize(e2),
            adj1,
            unary,
            alpha1: lit(config.alpha1),
            alpha2: lit(config.alpha2),
            solver: config.solver.clone(),
            fw: config.fw,
            distance: config.distance,
        })
    }

    pub fn nrows(&self) -> usize {
        self.e1_hat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.e2_hat.nrows()
    }
}

/// `F(P) = P E2 P^T`, the inner products of the transported basis functions.
pub fn transported_attr<T: Real>(p: &DMatrix<T>, e2_hat: &DMatrix<T>) -> DMatrix<T> {
    (p * e2_hat) * p.transpose()
}

/// `sum adj .* (target - P E P^T)^2` and its gradient in `P`.
fn weighted_fit<T: Real>(adj: &DMatrix<T>, target: &DMatrix<T>, e: &DMatrix<T>, p: &DMatrix<T>) -> (T, DMatrix<T>) {
    let pe = p * e;
    let pet = p * e.transpose();
    let f = &pe * p.transpose();
    let r = target - f;
    let m = adj.component_mul(&r);
    let value = m.dot(&r);
    let two = lit::<T>(2.0);
    let grad = (&m * pet + m.transpose() * pe) * (-two);
    (value, grad)
}

fn weighted_fit_value<T: Real>(adj: &DMatrix<T>, target: &DMatrix<T>, e: &DMatrix<T>, p: &DMatrix<T>) -> T {
    let r = target - transported_attr(p, e);
    adj.component_mul(&r).dot(&r)
}

/// Stage-one objective `(1 - a1) <P, U> + a1 ||E1 - F(P)||^2` weighted by
/// the adjacency of graph 1.
pub struct JOri<'a, T: Real> {
    pub prob: &'a GeneralProblem<T>,
}

impl<T: Real> Objective<T> for JOri<'_, T> {
    fn value(&self, p: &DMatrix<T>) -> T {
        let pr = self.prob;
        (T::one() - pr.alpha1) * pr.unary.dot(p) + pr.alpha1 * weighted_fit_value(&pr.adj1, &pr.e1_hat, &pr.e2_hat, p)
    }

    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T> {
        self.value_and_gradient(p).1
    }

    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        let pr = self.prob;
        let (v, g) = weighted_fit(&pr.adj1, &pr.e1_hat, &pr.e2_hat, p);
        let w = T::one() - pr.alpha1;
        (w * pr.unary.dot(p) + pr.alpha1 * v, &pr.unary * w + g * pr.alpha1)
    }
}

pub fn j_ori<T: Real>(prob: &GeneralProblem<T>, p: &DMatrix<T>) -> (T, DMatrix<T>) {
    JOri { prob }.value_and_gradient(p)
}

/// Distance from each transported node `P1* row i` to each target node `j`.
///
/// The Wasserstein form uses that coupling any measure to a Dirac is forced,
/// so the transport cost is the linear expression `(P1* E2)_ij`.
pub fn function_space_distance<T: Real>(
    p1: &DMatrix<T>,
    e2_metric: &DMatrix<T>,
    e2_hat: &DMatrix<T>,
    kind: DistanceKind,
) -> DMatrix<T> {
    match kind {
        DistanceKind::Wasserstein => p1 * e2_metric,
        DistanceKind::InnerProduct => {
            let pe = p1 * e2_hat;
            let (m, n) = (p1.nrows(), e2_hat.nrows());
            DMatrix::from_fn(m, n, |i, j| {
                let self_term = pe.row(i).dot(&p1.row(i));
                let sq = self_term - lit::<T>(2.0) * pe[(i, j)] + e2_hat[(j, j)];
                sq.max(T::zero()).sqrt()
            })
        }
    }
}

/// Stage-two objective `(1 - a2) <P, D> + a2 ||F(P1*) - F(P)||^2`.
pub struct JInt<'a, T: Real> {
    pub prob: &'a GeneralProblem<T>,
    pub target: DMatrix<T>,
    pub d: DMatrix<T>,
}

impl<'a, T: Real> JInt<'a, T> {
    pub fn new(prob: &'a GeneralProblem<T>, p1: &DMatrix<T>) -> Self {
        JInt {
            prob,
            target: transported_attr(p1, &prob.e2_hat),
            d: function_space_distance(p1, &prob.e2_metric, &prob.e2_hat, prob.distance),
        }
    }
}

impl<T: Real> Objective<T> for JInt<'_, T> {
    fn value(&self, p: &DMatrix<T>) -> T {
        let pr = self.prob;
        (T::one() - pr.alpha2) * self.d.dot(p) + pr.alpha2 * weighted_fit_value(&pr.adj1, &self.target, &pr.e2_hat, p)
    }

    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T> {
        self.value_and_gradient(p).1
    }

    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        let pr = self.prob;
        let (v, g) = weighted_fit(&pr.adj1, &self.target, &pr.e2_hat, p);
        let w = T::one() - pr.alpha2;
        (w * self.d.dot(p) + pr.alpha2 * v, &self.d * w + g * pr.alpha2)
    }
}

pub fn j_int<T: Real>(prob: &GeneralProblem<T>, p1: &DMatrix<T>, p: &DMatrix<T>) -> (T, DMatrix<T>) {
    JInt::new(prob, p1).value_and_gradient(p)
}

/// Rounds a soft assignment to the permutation carrying the most mass.
pub fn discretize<T: Real>(p: &SoftAssignment<T>) -> Result<Permutation> {
    Ok(hungarian(&(-p.matrix()))?.assignment)
}

#[derive(Debug, Clone)]
pub struct GeneralMatch<T: Real> {
    pub assignment: Permutation,
    pub stage1: SolveReport<T>,
    pub stage2: SolveReport<T>,
}

/// Two-stage matching: `J_ori` from the barycenter, then `J_int` around the
/// stage-one solution, then Hungarian discretization.
pub fn match_general<T: Real>(prob: &GeneralProblem<T>) -> Result<GeneralMatch<T>> {
    let init = SoftAssignment::uniform(prob.nrows(), prob.ncols())?;
    let stage1 = solve(&JOri { prob }, &init, &prob.solver, &prob.fw)?;
    let j_int = JInt::new(prob, stage1.solution.matrix());
    let stage2 = solve(&j_int, &stage1.solution, &prob.solver, &prob.fw)?;
    let assignment = discretize(&stage2.solution)?;
    Ok(GeneralMatch {
        assignment,
        stage1,
        stage2,
    })
}
