//! Graph matching and point-set registration on function spaces.
//!
//! The crate covers three matchers sharing one optimizer layer:
//!
//! * [`general`]: matching graphs given only edge-attribute matrices.
//! * [`euclid`]: matching point sets embedded in the plane or space.
//! * [`deform`]: alternating correspondence and deformation estimation.
//!
//! Every matcher minimizes a smooth objective over the relaxed assignment
//! polytope with Frank-Wolfe ([`optimizer::fw_solve`]) or its
//! entropy-regularized variant ([`optimizer::afw_solve`]) and discretizes
//! the result with the Hungarian method.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64` or `f32`.

pub mod assignment;
pub mod deform;
pub mod delaunay;
pub mod error;
pub mod euclid;
pub mod features;
pub mod general;
pub mod graph;
pub mod io;
pub mod lap;
pub mod optimizer;
pub mod outlier;
pub mod scalar;
pub mod transport;

pub use assignment::{is_feasible, Permutation, SoftAssignment};
pub use deform::{
    apply_transform, fit_affine, fit_nonrigid, fit_similarity, gaussian_rbf_kernel, match_deformable, DeformConfig,
    DeformMatch, DeformProblem, DeformVariant, Transform,
};
pub use error::{FrgmError, Result};
pub use euclid::{match_euclidean, EuclideanConfig, EuclideanMatch, EuclideanProblem};
pub use general::{match_general, GeneralConfig, GeneralMatch, GeneralProblem};
pub use graph::{GraphAttributes, PointSet};
pub use lap::{brute_force_lap, hungarian, LapSolution};
pub use optimizer::{AfwOptions, FwOptions, SolveReport, Solver};
pub use outlier::{iterative_removal, ratio_prune, OutlierConfig, RemovalResult};
pub use scalar::Real;
pub use transport::{lap_sinkhorn, sinkhorn, wasserstein_metric, SinkhornOptions, TransportPlan};

pub type PointSet64 = PointSet<f64>;
pub type PointSet32 = PointSet<f32>;
pub type SoftAssignment64 = SoftAssignment<f64>;
pub type SoftAssignment32 = SoftAssignment<f32>;
pub type GraphAttributes64 = GraphAttributes<f64>;
pub type GraphAttributes32 = GraphAttributes<f32>;
pub type TransportPlan64 = TransportPlan<f64>;
pub type TransportPlan32 = TransportPlan<f32>;
pub type Transform64 = Transform<f64>;
pub type Transform32 = Transform<f32>;
pub type EuclideanProblem64 = EuclideanProblem<f64>;
pub type EuclideanProblem32 = EuclideanProblem<f32>;
pub type GeneralProblem64 = GeneralProblem<f64>;
pub type GeneralProblem32 = GeneralProblem<f32>;
pub type DeformProblem64 = DeformProblem<f64>;
pub type DeformProblem32 = DeformProblem<f32>;
