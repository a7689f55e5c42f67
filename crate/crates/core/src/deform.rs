//! Joint estimation of correspondence and geometric deformation.
//!
//! A soft assignment `P` sends node `i` of set 1 to `Y_i = (P V2)_i`. Given
//! `P`, the deformation `tau` moving set 1 toward `Y` minimizes
//!
//! ```text
//! J(tau) = Tr(Z^T (I + lambda L1) Z),   Z = tau(V1) - Y,
//! ```
//!
//! plus `sigma^2 Tr(W^T K W)` for the nonrigid model, where `L1` is the
//! Laplacian of the adjacency of set 1. The pairwise part equals the sum over
//! undirected edges of squared differences of edge vectors. All three models
//! have closed-form minimizers. [`match_deformable`] alternates Euclidean
//! matching with these fits.

use nalgebra::{DMatrix, RowDVector};

use crate::assignment::Permutation;
use crate::error::{FrgmError, Result};
use crate::euclid::{match_euclidean, AdjacencyKind, EuclideanConfig, EuclideanMatch, EuclideanProblem};
use crate::features::Orientation;
use crate::graph::{laplacian, pairwise_distances, PointSet};
use crate::scalar::{lit, to_f64, Real};

/// Largest condition number accepted for the nonrigid system.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub enum Transform<T: Real> {
    /// `s V R + 1 t`.
    Similarity { s: T, r: DMatrix<T>, t: RowDVector<T> },
    /// `V A + 1 t`.
    Affine { a: DMatrix<T>, t: RowDVector<T> },
    /// `V + K(V, basis) W` with a Gaussian kernel of bandwidth `sigma_w`.
    Nonrigid {
        basis: PointSet<T>,
        w: DMatrix<T>,
        sigma_w: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeformVariant {
    #[default]
    Similarity,
    Affine,
    Nonrigid,
}

impl std::str::FromStr for DeformVariant {
    type Err = FrgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(DeformVariant::Similarity),
            "affine" => Ok(DeformVariant::Affine),
            "nonrigid" => Ok(DeformVariant::Nonrigid),
            other => Err(FrgmError::param(format!("unknown deformation variant {other:?}"))),
        }
    }
}

impl<T: Real> Transform<T> {
    pub fn identity(d: usize) -> Self {
        Transform::Similarity {
            s: T::one(),
            r: DMatrix::identity(d, d),
            t: RowDVector::zeros(d),
        }
    }

    pub fn variant(&self) -> DeformVariant {
        match self {
            Transform::Similarity { .. } => DeformVariant::Similarity,
            Transform::Affine { .. } => DeformVariant::Affine,
            Transform::Nonrigid { .. } => DeformVariant::Nonrigid,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Transform::Similarity { r, .. } => r.nrows(),
            Transform::Affine { a, .. } => a.nrows(),
            Transform::Nonrigid { basis, .. } => basis.dim(),
        }
    }

    /// Checks the invariants of the variant.
    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::Similarity { s, r, t } => {
                let d = r.nrows();
                if !r.is_square() || t.len() != d {
                    return Err(FrgmError::param("similarity shapes are inconsistent"));
                }
                if *s <= T::zero() {
                    return Err(FrgmError::param("similarity scale must be positive"));
                }
                let ortho = (r.transpose() * r - DMatrix::identity(d, d)).abs().max();
                let det = r.determinant();
                if to_f64(ortho) > 1e-9 || (to_f64(det) - 1.0).abs() > 1e-9 {
                    return Err(FrgmError::param("similarity matrix is not a proper rotation"));
                }
            }
            Transform::Affine { a, t } => {
                if !a.is_square() || t.len() != a.nrows() {
                    return Err(FrgmError::param("affine shapes are inconsistent"));
                }
                if to_f64(a.determinant()).abs() <= 1e-12 {
                    return Err(FrgmError::param("affine matrix is singular"));
                }
            }
            Transform::Nonrigid { basis, w, sigma_w } => {
                if *sigma_w <= T::zero() {
                    return Err(FrgmError::param("kernel bandwidth must be positive"));
                }
                if w.shape() != (basis.len(), basis.dim()) {
                    return Err(FrgmError::param("weight matrix must match the basis"));
                }
            }
        }
        Ok(())
    }

    /// `self` after `first`; `None` when either is nonrigid.
    pub fn after(&self, first: &Transform<T>) -> Option<Transform<T>> {
        if let (Transform::Similarity { s: s1, r: r1, t: t1 }, Transform::Similarity { s: s2, r: r2, t: t2 }) =
            (first, self)
        {
            return Some(Transform::Similarity {
                s: *s1 * *s2,
                r: r1 * r2,
                t: t1 * r2 * *s2 + t2,
            });
        }
        let (a1, t1) = first.linear_part()?;
        let (a2, t2) = self.linear_part()?;
        Some(Transform::Affine {
            a: &a1 * &a2,
            t: t1 * &a2 + t2,
        })
    }

    fn linear_part(&self) -> Option<(DMatrix<T>, RowDVector<T>)> {
        match self {
            Transform::Similarity { s, r, t } => Some((r * *s, t.clone())),
            Transform::Affine { a, t } => Some((a.clone(), t.clone())),
            Transform::Nonrigid { .. } => None,
        }
    }

    /// Rotation angle of a planar similarity, for row vectors.
    pub fn angle(&self) -> Option<f64> {
        match self {
            Transform::Similarity { r, .. } if r.nrows() == 2 => Some(to_f64(r[(0, 1)]).atan2(to_f64(r[(0, 0)]))),
            _ => None,
        }
    }
}

/// `K_ij = exp(-|V_i - V_j|^2 / sigma_w^2)`.
pub fn gaussian_rbf_kernel<T: Real>(basis: &PointSet<T>, sigma_w: T) -> Result<DMatrix<T>> {
    rbf_cross_kernel(basis, basis, sigma_w)
}

/// Kernel between evaluation points (rows) and basis points (columns).
pub fn rbf_cross_kernel<T: Real>(points: &PointSet<T>, basis: &PointSet<T>, sigma_w: T) -> Result<DMatrix<T>> {
    if sigma_w <= T::zero() {
        return Err(FrgmError::param("kernel bandwidth must be positive"));
    }
    if points.dim() != basis.dim() {
        return Err(FrgmError::param("kernel inputs differ in dimension"));
    }
    let s2 = sigma_w * sigma_w;
    let (a, b) = (points.matrix(), basis.matrix());
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (-(a.row(i) - b.row(j)).norm_squared() / s2).exp()
    }))
}

pub fn apply_transform<T: Real>(tau: &Transform<T>, v: &PointSet<T>) -> Result<PointSet<T>> {
    if tau.dim() != v.dim() {
        return Err(FrgmError::param(format!(
            "transform acts in {} dimensions, points have {}",
            tau.dim(),
            v.dim()
        )));
    }
    let x = v.matrix();
    let out = match tau {
        Transform::Similarity { s, r, t } => add_row(&(x * r * *s), t),
        Transform::Affine { a, t } => add_row(&(x * a), t),
        Transform::Nonrigid { basis, w, sigma_w } => x + rbf_cross_kernel(v, basis, *sigma_w)? * w,
    };
    PointSet::new(out)
}

fn add_row<T: Real>(x: &DMatrix<T>, t: &RowDVector<T>) -> DMatrix<T> {
    let mut out = x.clone();
    for mut row in out.row_iter_mut() {
        row += t;
    }
    out
}

fn centered<T: Real>(x: &DMatrix<T>) -> (DMatrix<T>, RowDVector<T>) {
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    (c, mean)
}

struct FitInput<T: Real> {
    x: DMatrix<T>,
    y: DMatrix<T>,
    q: DMatrix<T>,
}

fn fit_input<T: Real>(
    p: &DMatrix<T>,
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    adj1: &DMatrix<T>,
    lambda: f64,
) -> Result<FitInput<T>> {
    let (m, n) = (v1.len(), v2.len());
    if p.shape() != (m, n) {
        return Err(FrgmError::param(format!("assignment must be {m}x{n}")));
    }
    if v1.dim() != v2.dim() {
        return Err(FrgmError::param("point sets differ in dimension"));
    }
    if adj1.shape() != (m, m) {
        return Err(FrgmError::param("adjacency shape must match set 1"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(FrgmError::param(format!("lambda must be nonnegative, got {lambda}")));
    }
    if m < 2 {
        return Err(FrgmError::param("deformation fits need at least 2 points"));
    }
    let q = DMatrix::identity(m, m) + laplacian(adj1) * lit::<T>(lambda);
    Ok(FitInput {
        x: v1.matrix().clone(),
        y: p * v2.matrix(),
        q,
    })
}

/// Value of the deformation objective for `tau`. For the nonrigid model the
/// smoothness penalty uses `sigma^2` from [`nonrigid_damping`].
pub fn deformation_objective<T: Real>(
    tau: &Transform<T>,
    p: &DMatrix<T>,
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    adj1: &DMatrix<T>,
    lambda: f64,
) -> Result<T> {
    let input = fit_input(p, v1, v2, adj1, lambda)?;
    let z = apply_transform(tau, v1)?.into_matrix() - &input.y;
    let mut value = (z.transpose() * &input.q * &z).trace();
    if let Transform::Nonrigid { basis, w, sigma_w } = tau {
        let k = gaussian_rbf_kernel(basis, *sigma_w)?;
        value += nonrigid_damping(p, v1, v2) * (w.transpose() * k * w).trace();
    }
    Ok(value)
}

/// `(1 / mn) sum_ij P_ij |V1_i - V2_j|^2`.
pub fn nonrigid_damping<T: Real>(p: &DMatrix<T>, v1: &PointSet<T>, v2: &PointSet<T>) -> T {
    let d = pairwise_distances(v1.matrix(), v2.matrix());
    let (m, n) = p.shape();
    p.zip_map(&d, |a, b| a * b * b).sum() / lit::<T>((m * n) as f64)
}

/// Scaled rotation plus translation minimizing the deformation objective.
///
/// The rotation comes from the SVD of `Xc^T Q Yc` with a sign correction so
/// that `det R = 1`; a cross-covariance of rank below `d - 1` does not fix a
/// rotation and yields `R = I`.
pub fn fit_similarity<T: Real>(
    p: &DMatrix<T>,
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    adj1: &DMatrix<T>,
    lambda: f64,
) -> Result<Transform<T>> {
    let FitInput { x, y, q } = fit_input(p, v1, v2, adj1, lambda)?;
    let d = x.ncols();
    let (xc, mx) = centered(&x);
    let (yc, my) = centered(&y);
    let cross = xc.transpose() * &q * &yc;
    let svd = cross.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(FrgmError::numerical("SVD failed in similarity fit")),
    };
    let sv = &svd.singular_values;
    let top = to_f64(sv.max());
    let rank = sv.iter().filter(|x| to_f64(**x) > 1e-12 * top.max(1e-300)).count();
    let r = if top <= 0.0 || rank + 1 < d {
        log::warn!("rank-deficient cross-covariance in similarity fit; using R = I");
        DMatrix::identity(d, d)
    } else {
        let mut sign = DMatrix::identity(d, d);
        if (&u * &vt).determinant() < T::zero() {
            // flip the direction of the smallest singular value
            let k = (0..d)
                .min_by(|&a, &b| sv[a].partial_cmp(&sv[b]).expect("finite"))
                .expect("d > 0");
            sign[(k, k)] = -T::one();
        }
        u * sign * vt
    };
    let denom = (xc.transpose() * &q * &xc).trace();
    if denom <= T::zero() {
        return Err(FrgmError::numerical("set 1 collapses to a point"));
    }
    let mut s = (r.transpose() * &cross).trace() / denom;
    let floor = lit::<T>(1e-12);
    if s <= floor {
        log::warn!("similarity scale {} is not positive; clamped", to_f64(s));
        s = floor;
    }
    let t = my - &mx * &r * s;
    Ok(Transform::Similarity { s, r, t })
}

/// Linear map plus translation minimizing the deformation objective.
pub fn fit_affine<T: Real>(
    p: &DMatrix<T>,
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    adj1: &DMatrix<T>,
    lambda: f64,
) -> Result<Transform<T>> {
    let FitInput { x, y, q } = fit_input(p, v1, v2, adj1, lambda)?;
    let (xc, mx) = centered(&x);
    let (yc, my) = centered(&y);
    let gram = xc.transpose() * &q * &xc;
    let rhs = xc.transpose() * &q * &yc;
    let a = gram
        .cholesky()
        .ok_or_else(|| FrgmError::numerical("set 1 does not span the space"))?
        .solve(&rhs);
    let t = my - &mx * &a;
    let tau = Transform::Affine { a, t };
    tau.validate()
        .map_err(|_| FrgmError::numerical("fitted affine map is singular"))?;
    Ok(tau)
}

/// Gaussian RBF displacement on the basis `V1` minimizing the deformation
/// objective plus `sigma^2 Tr(W^T K W)`:
/// `W = -(Q K + sigma^2 I)^-1 Q (V1 - P V2)`.
pub fn fit_nonrigid<T: Real>(
    p: &DMatrix<T>,
    v1: &PointSet<T>,
    v2: &PointSet<T>,
    adj1: &DMatrix<T>,
    lambda: f64,
    sigma_w: T,
) -> Result<Transform<T>> {
    let FitInput { x, y, q } = fit_input(p, v1, v2, adj1, lambda)?;
    let k = gaussian_rbf_kernel(v1, sigma_w)?;
    let m = x.nrows();
    let damping = nonrigid_damping(p, v1, v2);
    let system = &q * &k + DMatrix::identity(m, m) * damping;
    let sv = system.clone().singular_values();
    let (lo, hi) = (to_f64(sv.min()), to_f64(sv.max()));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(FrgmError::numerical(format!(
            "nonrigid system is singular (condition {:.3e})",
            hi / lo
        )));
    }
    let rhs = -(&q * (x - y));
    let w = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| FrgmError::numerical("nonrigid system is singular"))?;
    Ok(Transform::Nonrigid {
        basis: v1.clone(),
        w,
        sigma_w,
    })
}

/// Mean distance between matched rows.
pub fn mean_row_distance<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    let m = a.nrows();
    if m == 0 {
        return 0.0;
    }
    (0..m).map(|i| to_f64((a.row(i) - b.row(i)).norm())).sum::<f64>() / m as f64
}

/// Whether each round refines the current estimate or refits from set 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Composition {
    #[default]
    Cumulative,
    Refit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformConfig {
    pub variant: DeformVariant,
    pub lambda: f64,
    pub rounds: usize,
    /// Kernel bandwidth in the units of set 1; `None` picks half the mean
    /// pairwise distance.
    pub sigma_w: Option<f64>,
    /// Adjacency of the deformation objective; `None` picks Delaunay in the
    /// plane and 6 nearest neighbours otherwise.
    pub adjacency: Option<AdjacencyKind>,
    pub composition: Composition,
    /// Stop once the mean displacement of set 1 in a round falls below this.
    pub tol: f64,
    pub matcher: EuclideanConfig,
}

impl Default for DeformConfig {
    fn default() -> Self {
        DeformConfig {
            variant: DeformVariant::Similarity,
            lambda: 0.5,
            rounds: 10,
            sigma_w: None,
            adjacency: None,
            composition: Composition::Cumulative,
            tol: 1e-6,
            matcher: EuclideanConfig {
                descriptor: Orientation::Centroid,
                ..EuclideanConfig::default()
            },
        }
    }
}

/// Affine change of coordinates mapping both sets to zero mean and unit
/// root-mean-square norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T: Real> {
    pub mean1: RowDVector<T>,
    pub scale1: T,
    pub mean2: RowDVector<T>,
    pub scale2: T,
}

impl<T: Real> Frame<T> {
    fn of(v1: &PointSet<T>, v2: &PointSet<T>) -> Result<Self> {
        let spread = |v: &PointSet<T>| {
            let (c, mean) = centered(v.matrix());
            let rms = (c.norm_squared() / lit::<T>(v.len() as f64)).sqrt();
            (mean, rms)
        };
        let (mean1, scale1) = spread(v1);
        let (mean2, scale2) = spread(v2);
        if scale1 <= T::zero() || scale2 <= T::zero() {
            return Err(FrgmError::DegenerateGeometry("point set collapses to a point".into()));
        }
        Ok(Frame {
            mean1,
            scale1,
            mean2,
            scale2,
        })
    }

    fn identity(d: usize) -> Self {
        Frame {
            mean1: RowDVector::zeros(d),
            scale1: T::one(),
            mean2: RowDVector::zeros(d),
            scale2: T::one(),
        }
    }

    fn to_unit(x: &DMatrix<T>, mean: &RowDVector<T>, scale: T) -> DMatrix<T> {
        let mut out = x.clone();
        for mut row in out.row_iter_mut() {
            row -= mean;
        }
        out / scale
    }

    fn from_unit(x: &DMatrix<T>, mean: &RowDVector<T>, scale: T) -> DMatrix<T> {
        add_row(&(x * scale), mean)
    }
}

/// Fitted deformation: set-1 coordinates are normalized, the steps applied
/// in order, and the result mapped back to set-2 coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Deformation<T: Real> {
    pub frame: Frame<T>,
    pub steps: Vec<Transform<T>>,
}

impl<T: Real> Deformation<T> {
    pub fn apply(&self, v: &PointSet<T>) -> Result<PointSet<T>> {
        let f = &self.frame;
        let mut x = PointSet::new(Frame::to_unit(v.matrix(), &f.mean1, f.scale1))?;
        for step in &self.steps {
            x = apply_transform(step, &x)?;
        }
        PointSet::new(Frame::from_unit(x.matrix(), &f.mean2, f.scale2))
    }

    /// Single transform in original coordinates, available when every step
    /// is a similarity or affine map.
    pub fn collapse(&self) -> Option<Transform<T>> {
        let d = self.frame.mean1.len();
        let mut acc = Transform::identity(d);
        for step in &self.steps {
            acc = step.after(&acc)?;
        }
        let f = &self.frame;
        let ratio = f.scale2 / f.scale1;
        Some(match acc {
            Transform::Similarity { s, r, t } => {
                let s = s * ratio;
                let t = &f.mean2 + t * f.scale2 - &f.mean1 * &r * s;
                Transform::Similarity { s, r, t }
            }
            Transform::Affine { a, t } => {
                let a = a * ratio;
                let t = &f.mean2 + t * f.scale2 - &f.mean1 * &a;
                Transform::Affine { a, t }
            }
            Transform::Nonrigid { .. } => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct DeformProblem<T: Real> {
    pub v1: PointSet<T>,
    pub v2: PointSet<T>,
    pub adj1: DMatrix<T>,
    pub config: DeformConfig,
}

impl<T: Real> DeformProblem<T> {
    pub fn new(v1: PointSet<T>, v2: PointSet<T>, config: &DeformConfig) -> Result<Self> {
        if config.rounds == 0 {
            return Err(FrgmError::param("at least one alternation round is required"));
        }
        if v1.len() > v2.len() {
            return Err(FrgmError::param("set 1 must not be larger than set 2"));
        }
        if v1.dim() != v2.dim() {
            return Err(FrgmError::param("point sets differ in dimension"));
        }
        if let Some(s) = config.sigma_w {
            if !(s > 0.0) {
                return Err(FrgmError::param("kernel bandwidth must be positive"));
            }
        }
        let kind = config.adjacency.unwrap_or(if v1.dim() == 2 {
            AdjacencyKind::Delaunay
        } else {
            AdjacencyKind::Knn(6)
        });
        let adj1 = kind.build(&v1)?;
        Ok(DeformProblem {
            v1,
            v2,
            adj1,
            config: config.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RoundRecord<T: Real> {
    pub assignment: Permutation,
    /// Set 1 after this round's fit, in set-2 coordinates.
    pub aligned: PointSet<T>,
    /// Mean distance from aligned nodes to their soft targets, in set-2 units.
    pub residual: f64,
    /// Mean movement of set 1 during this round, in normalized units.
    pub displacement: f64,
}

#[derive(Debug, Clone)]
pub struct DeformMatch<T: Real> {
    pub assignment: Permutation,
    pub deformation: Deformation<T>,
    pub rounds: Vec<RoundRecord<T>>,
    pub last: EuclideanMatch<T>,
}

impl<T: Real> DeformMatch<T> {
    /// Set 1 under the fitted deformation.
    pub fn aligned(&self) -> &PointSet<T> {
        &self.rounds.last().expect("at least one round").aligned
    }
}

fn mean_pairwise_distance<T: Real>(v: &PointSet<T>) -> T {
    let m = v.len();
    if m < 2 {
        return T::one();
    }
    v.distance_matrix().sum() / lit::<T>((m * (m - 1)) as f64)
}

/// Alternates Euclidean matching of the current set 1 against set 2 with a
/// closed-form deformation fit to the soft assignment.
pub fn match_deformable<T: Real>(prob: &DeformProblem<T>) -> Result<DeformMatch<T>> {
    let cfg = &prob.config;
    let frame = Frame::of(&prob.v1, &prob.v2).or_else(|e| {
        if prob.v1.len() < 2 {
            Ok(Frame::identity(prob.v1.dim()))
        } else {
            Err(e)
        }
    })?;
    let origin = PointSet::new(Frame::to_unit(prob.v1.matrix(), &frame.mean1, frame.scale1))?;
    let v2 = PointSet::new(Frame::to_unit(prob.v2.matrix(), &frame.mean2, frame.scale2))?;
    let sigma_w = match cfg.sigma_w {
        Some(s) => lit::<T>(s) / frame.scale1,
        None => mean_pairwise_distance(&origin) * lit::<T>(0.5),
    };
    let mut current = origin.clone();
    let mut steps: Vec<Transform<T>> = Vec::new();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut last = None;
    for round in 0..cfg.rounds {
        let euclid = EuclideanProblem::new(current.clone(), v2.clone(), None, &cfg.matcher)?;
        let result = match_euclidean(&euclid)?;
        let p = result.stage2.solution.matrix();
        let base = match cfg.composition {
            Composition::Cumulative => &current,
            Composition::Refit => &origin,
        };
        let tau = match cfg.variant {
            DeformVariant::Similarity => fit_similarity(p, base, &v2, &prob.adj1, cfg.lambda)?,
            DeformVariant::Affine => fit_affine(p, base, &v2, &prob.adj1, cfg.lambda)?,
            DeformVariant::Nonrigid => fit_nonrigid(p, base, &v2, &prob.adj1, cfg.lambda, sigma_w)?,
        };
        let next = apply_transform(&tau, base)?;
        match cfg.composition {
            Composition::Cumulative => steps.push(tau),
            Composition::Refit => steps = vec![tau],
        }
        let displacement = mean_row_distance(next.matrix(), current.matrix());
        let targets = p * v2.matrix();
        let residual = mean_row_distance(next.matrix(), &targets) * to_f64(frame.scale2);
        let aligned = PointSet::new(Frame::from_unit(next.matrix(), &frame.mean2, frame.scale2))?;
        log::debug!("deform round {round}: displacement {displacement:.3e}, residual {residual:.3e}");
        rounds.push(RoundRecord {
            assignment: result.assignment.clone(),
            aligned,
            residual,
            displacement,
        });
        current = next;
        last = Some(result);
        if displacement < cfg.tol {
            break;
        }
    }
    let last = last.expect("rounds >= 1");
    Ok(DeformMatch {
        assignment: last.assignment.clone(),
        deformation: Deformation { frame, steps },
        rounds,
        last,
    })
}
