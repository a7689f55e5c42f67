//! Frank-Wolfe and approximate (entropic) Frank-Wolfe over the relaxed
//! assignment polytope.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assignment::{entropy, SoftAssignment};
use crate::error::{FrgmError, Result};
use crate::lap::hungarian;
use crate::scalar::{is_finite, lit, to_f64, Real};
use crate::transport::{lap_sinkhorn_warm, SinkhornOptions};

/// `g(alpha) = c0 + c1 alpha + c2 alpha^2`, the restriction of a quadratic
/// objective to the segment `P + alpha D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineQuadratic<T> {
    pub c0: T,
    pub c1: T,
    pub c2: T,
}

impl<T: Real> LineQuadratic<T> {
    pub fn eval(&self, alpha: T) -> T {
        self.c0 + alpha * (self.c1 + alpha * self.c2)
    }

    /// Minimizer over `[0, 1]`.
    pub fn argmin_unit(&self) -> T {
        if self.c2 > T::zero() {
            let a = -self.c1 / (self.c2 + self.c2);
            a.max(T::zero()).min(T::one())
        } else if self.c1 + self.c2 < T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// Differentiable objective over m x n soft assignments.
pub trait Objective<T: Real> {
    fn value(&self, p: &DMatrix<T>) -> T;

    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T>;

    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        (self.value(p), self.gradient(p))
    }

    /// Exact restriction to `P + alpha D` when the objective is quadratic.
    fn line_coeffs(&self, _p: &DMatrix<T>, _d: &DMatrix<T>) -> Option<LineQuadratic<T>> {
        None
    }
}

impl<T: Real, O: Objective<T> + ?Sized> Objective<T> for &O {
    fn value(&self, p: &DMatrix<T>) -> T {
        (**self).value(p)
    }
    fn gradient(&self, p: &DMatrix<T>) -> DMatrix<T> {
        (**self).gradient(p)
    }
    fn value_and_gradient(&self, p: &DMatrix<T>) -> (T, DMatrix<T>) {
        (**self).value_and_gradient(p)
    }
    fn line_coeffs(&self, p: &DMatrix<T>, d: &DMatrix<T>) -> Option<LineQuadratic<T>> {
        (**self).line_coeffs(p, d)
    }
}

/// `f(P) = <C, P>`.
#[derive(Debug, Clone)]
pub struct LinearObjective<T: Real> {
    pub cost: DMatrix<T>,
}

impl<T: Real> Objective<T> for LinearObjective<T> {
    fn value(&self, p: &DMatrix<T>) -> T {
        self.cost.dot(p)
    }
    fn gradient(&self, _p: &DMatrix<T>) -> DMatrix<T> {
        self.cost.clone()
    }
    fn line_coeffs(&self, p: &DMatrix<T>, d: &DMatrix<T>) -> Option<LineQuadratic<T>> {
        Some(LineQuadratic {
            c0: self.cost.dot(p),
            c1: self.cost.dot(d),
            c2: T::zero(),
        })
    }
}

/// `f(P) - eps H(P)`; coincides with `f` on binary assignments.
pub fn entropic_value<T: Real, O: Objective<T> + ?Sized>(obj: &O, p: &DMatrix<T>, eps: T) -> T {
    obj.value(p) - eps * entropy(p)
}

/// Central finite-difference gradient with step `h`.
pub fn finite_difference_gradient<T: Real, O: Objective<T> + ?Sized>(obj: &O, p: &DMatrix<T>, h: T) -> DMatrix<T> {
    let mut q = p.clone();
    let two_h = h + h;
    DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
        let orig = q[(i, j)];
        q[(i, j)] = orig + h;
        let up = obj.value(&q);
        q[(i, j)] = orig - h;
        let down = obj.value(&q);
        q[(i, j)] = orig;
        (up - down) / two_h
    })
}

/// `max |G - G_fd| / max(max |G_fd|, 1)`.
pub fn gradient_relative_error<T: Real, O: Objective<T> + ?Sized>(obj: &O, p: &DMatrix<T>, h: T) -> f64 {
    let g = obj.gradient(p);
    let fd = finite_difference_gradient(obj, p, h);
    let err = to_f64((&g - &fd).abs().max());
    err / to_f64(fd.abs().max()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GapTolerance,
    Stalled,
    NoDecrease,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    /// Relative objective change counted as a stall.
    pub stall_tol: f64,
    /// Consecutive stalled iterations before stopping.
    pub stall_iters: usize,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            max_iter: 100,
            gap_tol: 1e-6,
            stall_tol: 1e-9,
            stall_iters: 3,
        }
    }
}

/// Regularization weight for the k-th entropic subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsSchedule {
    /// `eps0 / (k + 1)`.
    Harmonic {
        eps0: f64,
    },
    Constant(f64),
    /// Explicit values; the last one repeats.
    Explicit(Vec<f64>),
}

impl EpsSchedule {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            EpsSchedule::Harmonic { eps0 } => eps0 / (k as f64 + 1.0),
            EpsSchedule::Constant(e) => *e,
            EpsSchedule::Explicit(v) => v.get(k).or(v.last()).copied().unwrap_or(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfwOptions {
    pub fw: FwOptions,
    pub schedule: EpsSchedule,
    /// Multiply each eps by the current gradient's max-abs entry, which makes
    /// the schedule invariant to the objective's scale.
    pub scale_by_gradient: bool,
    pub sinkhorn: SinkhornOptions,
}

impl Default for AfwOptions {
    fn default() -> Self {
        AfwOptions {
            fw: FwOptions::default(),
            schedule: EpsSchedule::Harmonic { eps0: 0.05 },
            scale_by_gradient: true,
            sinkhorn: SinkhornOptions::default(),
        }
    }
}

impl AfwOptions {
    pub fn with_eps0(eps0: f64) -> Self {
        AfwOptions {
            schedule: EpsSchedule::Harmonic { eps0 },
            ..Default::default()
        }
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f: f64,
    pub gap: f64,
    pub eps: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Real> {
    pub solution: SoftAssignment<T>,
    /// Objective at the initial point followed by one value per accepted step.
    pub objective_trace: Vec<f64>,
    pub fw_gaps: Vec<f64>,
    pub steps: Vec<f64>,
    pub eps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
}

impl<T: Real> SolveReport<T> {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }

    pub fn trace_rows(&self) -> Vec<TraceRow> {
        (0..self.fw_gaps.len())
            .map(|k| TraceRow {
                iter: k,
                f: self.objective_trace[k],
                gap: self.fw_gaps[k],
                eps: self.eps.get(k).copied().unwrap_or(0.0),
                alpha: self.steps.get(k).copied().unwrap_or(0.0),
            })
            .collect()
    }

    /// The trace as JSON lines `{iter, f, gap, eps, alpha}`.
    pub fn trace_json_lines(&self) -> String {
        self.trace_rows()
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace rows serialize") + "\n")
            .collect()
    }
}

/// Step size on `P + alpha D`: exact for quadratic objectives, Armijo
/// backtracking otherwise. Returns 0 when no decrease is found.
pub fn line_search<T: Real, O: Objective<T> + ?Sized>(obj: &O, p: &DMatrix<T>, d: &DMatrix<T>) -> T {
    let (f, g) = obj.value_and_gradient(p);
    line_search_with(obj, p, d, f, &g)
}

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_MAX_HALVINGS: usize = 40;

fn line_search_with<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    p: &DMatrix<T>,
    d: &DMatrix<T>,
    f: T,
    g: &DMatrix<T>,
) -> T {
    if let Some(q) = obj.line_coeffs(p, d) {
        return q.argmin_unit();
    }
    let slope = g.dot(d);
    if slope >= T::zero() {
        return T::zero();
    }
    let c = lit::<T>(ARMIJO_C);
    let shrink = lit::<T>(ARMIJO_SHRINK);
    let mut alpha = T::one();
    for _ in 0..ARMIJO_MAX_HALVINGS {
        let trial = obj.value(&(p + d * alpha));
        if trial <= f + c * alpha * slope {
            return alpha;
        }
        alpha *= shrink;
    }
    T::zero()
}

fn numerical_failure<T: Real>(msg: &str, p: &DMatrix<T>) -> FrgmError {
    let mut dump = Vec::with_capacity(p.len());
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            dump.push(to_f64(p[(i, j)]));
        }
    }
    FrgmError::Numerical {
        message: msg.to_string(),
        iterate: Some(dump),
    }
}

/// Smallest unscaled eps tried before the entropic oracle gives up.
const EPS_FLOOR: f64 = 1e-7;

enum Oracle<'a> {
    Exact,
    Entropic {
        opts: &'a AfwOptions,
        dual: Option<DVector<f64>>,
        /// Upper bound on the unscaled eps, lowered whenever the regularized
        /// vertex fails to give descent.
        cap: f64,
    },
}

struct Step<T: Real> {
    gap: f64,
    eps: f64,
    alpha: T,
    candidate: DMatrix<T>,
    f: T,
    g: DMatrix<T>,
}

fn entropic_vertex<T: Real>(
    g: &DMatrix<T>,
    eps: f64,
    dual: &mut Option<DVector<f64>>,
    opts: &AfwOptions,
) -> Result<DMatrix<T>> {
    let warm = dual.as_ref().map(|d| d.map(|x| lit::<T>(x)));
    let (sol, new_dual, rep) = lap_sinkhorn_warm(g, lit(eps), warm.as_ref(), &opts.sinkhorn)?;
    if !rep.converged {
        log::debug!(
            "sinkhorn stopped at marginal error {:.3e} after {} iterations",
            rep.marginal_error,
            rep.iterations
        );
    }
    *dual = Some(new_dual.map(|x| to_f64(x)));
    Ok(sol.into_matrix())
}

/// One oracle call plus line search. `None` when no descent was found.
fn try_step<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    p: &DMatrix<T>,
    f: T,
    g: &DMatrix<T>,
    s: DMatrix<T>,
    eps: f64,
    gap_tol: f64,
) -> (f64, Option<Step<T>>) {
    let d = &s - p;
    let gap = -to_f64(g.dot(&d));
    if gap <= gap_tol {
        return (gap, None);
    }
    let alpha = line_search_with(obj, p, &d, f, g);
    if alpha <= T::zero() {
        return (gap, None);
    }
    let candidate = p + &d * alpha;
    let (f_new, g_new) = obj.value_and_gradient(&candidate);
    if !(f_new <= f) {
        return (gap, None);
    }
    (
        gap,
        Some(Step {
            gap,
            eps,
            alpha,
            candidate,
            f: f_new,
            g: g_new,
        }),
    )
}

fn run<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &SoftAssignment<T>,
    fw: &FwOptions,
    mut oracle: Oracle<'_>,
) -> Result<SolveReport<T>> {
    if !init.is_feasible() {
        return Err(FrgmError::param("initial assignment is not feasible"));
    }
    let mut p = init.matrix().clone();
    let (m, n) = p.shape();
    #[cfg(debug_assertions)]
    if m * n <= 64 {
        let err = gradient_relative_error(obj, &p, lit(1e-6));
        if err > 1e-4 {
            log::warn!("objective gradient disagrees with finite differences: {err:.3e}");
        }
    }
    let (mut f, mut g) = obj.value_and_gradient(&p);
    let mut report = SolveReport {
        solution: init.clone(),
        objective_trace: vec![to_f64(f)],
        fw_gaps: Vec::new(),
        steps: Vec::new(),
        eps: Vec::new(),
        iterations: 0,
        converged: false,
        stop: StopReason::MaxIterations,
    };
    if !is_finite(f) {
        return Err(numerical_failure("objective is not finite at the initial point", &p));
    }
    let mut stalled = 0;

    for k in 0..fw.max_iter {
        if g.iter().any(|x| !is_finite(*x)) {
            return Err(numerical_failure("gradient is not finite", &p));
        }
        report.iterations = k + 1;
        let (gap, step) = match &mut oracle {
            Oracle::Exact => {
                let s = hungarian(&g)?.assignment.to_matrix::<T>();
                try_step(obj, &p, f, &g, s, 0.0, fw.gap_tol)
            }
            Oracle::Entropic { opts, dual, cap } => {
                let scale = if opts.scale_by_gradient {
                    Some(to_f64(g.abs().max())).filter(|x| *x > 0.0).unwrap_or(1.0)
                } else {
                    1.0
                };
                loop {
                    let unscaled = opts.schedule.at(k).min(*cap);
                    let eps = unscaled * scale;
                    let s = entropic_vertex(&g, eps, dual, opts)?;
                    let (gap, step) = try_step(obj, &p, f, &g, s, eps, fw.gap_tol);
                    if step.is_some() || unscaled <= EPS_FLOOR {
                        break (gap, step);
                    }
                    *cap = unscaled * 0.5;
                    log::trace!("iter {k}: no descent at eps {eps:.3e}, lowering");
                }
            }
        };
        let Some(step) = step else {
            report.fw_gaps.push(gap);
            report.eps.push(0.0);
            report.steps.push(0.0);
            report.converged = true;
            report.stop = if gap <= fw.gap_tol {
                StopReason::GapTolerance
            } else {
                StopReason::NoDecrease
            };
            break;
        };
        report.fw_gaps.push(step.gap);
        report.eps.push(step.eps);
        report.steps.push(to_f64(step.alpha));
        log::trace!(
            "iter {k}: f={:.6e} gap={:.3e} eps={:.3e} alpha={:.3e}",
            to_f64(step.f),
            step.gap,
            step.eps,
            to_f64(step.alpha)
        );
        let rel = to_f64((f - step.f).abs()) / to_f64(f.abs()).max(f64::MIN_POSITIVE);
        p = step.candidate;
        f = step.f;
        g = step.g;
        report.objective_trace.push(to_f64(f));
        stalled = if rel < fw.stall_tol { stalled + 1 } else { 0 };
        if stalled >= fw.stall_iters {
            report.converged = true;
            report.stop = StopReason::Stalled;
            break;
        }
    }
    debug_assert_eq!(p.shape(), (m, n));
    report.solution = SoftAssignment::from_matrix_unchecked(p);
    Ok(report)
}

/// Frank-Wolfe with an exact (Hungarian) linear oracle.
pub fn fw_solve<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &SoftAssignment<T>,
    opts: &FwOptions,
) -> Result<SolveReport<T>> {
    run(obj, init, opts, Oracle::Exact)
}

/// Frank-Wolfe whose linear subproblem is entropy-regularized and solved by
/// Sinkhorn scaling, warm-started from the previous iteration's potentials.
pub fn afw_solve<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &SoftAssignment<T>,
    opts: &AfwOptions,
) -> Result<SolveReport<T>> {
    run(
        obj,
        init,
        &opts.fw,
        Oracle::Entropic {
            opts,
            dual: None,
            cap: f64::INFINITY,
        },
    )
}

/// Which subproblem solver a matcher uses.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Solver {
    #[default]
    Fw,
    Afw(AfwOptions),
}

impl Solver {
    pub fn afw() -> Self {
        Solver::Afw(AfwOptions::default())
    }
}

/// Runs the configured solver with shared stopping options.
pub fn solve<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    init: &SoftAssignment<T>,
    solver: &Solver,
    fw: &FwOptions,
) -> Result<SolveReport<T>> {
    match solver {
        Solver::Fw => fw_solve(obj, init, fw),
        Solver::Afw(a) => {
            let opts = AfwOptions { fw: *fw, ..a.clone() };
            afw_solve(obj, init, &opts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Permutation;

    struct Quadratic {
        target: DMatrix<f64>,
    }

    impl Objective<f64> for Quadratic {
        fn value(&self, p: &DMatrix<f64>) -> f64 {
            (p - &self.target).norm_squared()
        }
        fn gradient(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
            (p - &self.target) * 2.0
        }
        fn line_coeffs(&self, p: &DMatrix<f64>, d: &DMatrix<f64>) -> Option<LineQuadratic<f64>> {
            let r = p - &self.target;
            Some(LineQuadratic {
                c0: r.norm_squared(),
                c1: 2.0 * r.dot(d),
                c2: d.norm_squared(),
            })
        }
    }

    struct Quartic;

    impl Objective<f64> for Quartic {
        fn value(&self, p: &DMatrix<f64>) -> f64 {
            p.iter().map(|x| (x - 0.3).powi(4)).sum()
        }
        fn gradient(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
            p.map(|x| 4.0 * (x - 0.3).powi(3))
        }
    }

    fn cost() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 4, &[0.2, 0.9, 0.4, 0.7, 0.6, 0.1, 0.8, 0.3, 0.5, 0.5, 0.2, 0.9])
    }

    #[test]
    fn linear_objective_one_step() {
        let obj = LinearObjective { cost: cost() };
        let init = SoftAssignment::uniform(3, 4).unwrap();
        let r = fw_solve(&obj, &init, &FwOptions::default()).unwrap();
        let h = hungarian(&cost()).unwrap();
        assert_eq!(r.steps[0], 1.0);
        assert!((r.final_objective() - h.objective).abs() < 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn quadratic_reaches_interior_target() {
        let target = DMatrix::from_row_slice(2, 3, &[0.5, 0.3, 0.2, 0.1, 0.4, 0.5]);
        let obj = Quadratic { target: target.clone() };
        let init = SoftAssignment::uniform(2, 3).unwrap();
        let opts = FwOptions {
            max_iter: 2000,
            gap_tol: 1e-10,
            ..Default::default()
        };
        let r = fw_solve(&obj, &init, &opts).unwrap();
        assert!((r.solution.matrix() - target).abs().max() < 1e-4);
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn afw_linear_close_to_lap() {
        let obj = LinearObjective { cost: cost() };
        let init = SoftAssignment::uniform(3, 4).unwrap();
        let r = afw_solve(&obj, &init, &AfwOptions::with_eps0(1e-3)).unwrap();
        let h = hungarian(&cost()).unwrap();
        assert!((r.final_objective() - h.objective).abs() < 1e-2);
        assert!(r.solution.is_feasible());
    }

    #[test]
    fn constant_objective_keeps_trace_flat() {
        let obj = LinearObjective {
            cost: DMatrix::<f64>::zeros(2, 2),
        };
        let init = SoftAssignment::uniform(2, 2).unwrap();
        let r = afw_solve(&obj, &init, &AfwOptions::default()).unwrap();
        assert!(r.objective_trace.iter().all(|f| *f == 0.0));
        assert!(r.solution.is_feasible());
    }

    #[test]
    fn line_search_examples() {
        let q = LineQuadratic {
            c0: 0.09f64,
            c1: -0.6,
            c2: 1.0,
        };
        assert!((q.argmin_unit() - 0.3).abs() < 1e-15);
        assert_eq!(
            LineQuadratic {
                c0: 0.0,
                c1: 1.0,
                c2: 0.0
            }
            .argmin_unit(),
            0.0
        );
        assert_eq!(
            LineQuadratic {
                c0: 0.0,
                c1: -1.0,
                c2: 0.0
            }
            .argmin_unit(),
            1.0
        );
    }

    #[test]
    fn armijo_decreases_quartic() {
        let p = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]);
        let d = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]) - &p;
        let alpha = line_search(&Quartic, &p, &d);
        assert!(alpha > 0.0);
        assert!(Quartic.value(&(&p + &d * alpha)) <= Quartic.value(&p));
        let r = fw_solve(&Quartic, &SoftAssignment::uniform(3, 3).unwrap(), &FwOptions::default()).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn infeasible_init_is_rejected() {
        let obj = LinearObjective { cost: cost() };
        let bad = SoftAssignment::from_matrix_unchecked(DMatrix::from_element(3, 4, 0.5));
        assert!(matches!(
            fw_solve(&obj, &bad, &FwOptions::default()),
            Err(FrgmError::Parameter(_))
        ));
    }

    #[test]
    fn entropic_value_agrees_on_permutations() {
        let obj = Quartic;
        let p: DMatrix<f64> = Permutation::new(vec![2, 0, 1], 3).unwrap().to_matrix();
        assert_eq!(entropic_value(&obj, &p, 0.7), obj.value(&p));
    }

    #[test]
    fn finite_differences_of_quadratic() {
        let obj = Quadratic {
            target: DMatrix::from_element(2, 2, 0.5),
        };
        let p = DMatrix::from_row_slice(2, 2, &[0.2, 0.8, 0.7, 0.3]);
        assert!(gradient_relative_error(&obj, &p, 1e-5) < 1e-8);
    }

    #[test]
    fn trace_lines_are_json() {
        let obj = LinearObjective { cost: cost() };
        let r = fw_solve(&obj, &SoftAssignment::uniform(3, 4).unwrap(), &FwOptions::default()).unwrap();
        let lines = r.trace_json_lines();
        let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        assert_eq!(first["iter"], 0);
    }
}
