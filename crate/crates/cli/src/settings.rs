//! Matcher settings from flags and an optional config file.
//!
//! Every setting is optional in both places; a flag wins over the file and
//! the file wins over the library default.

use std::path::Path;

use clap::{Args, ValueEnum};
use frgm::deform::Composition;
use frgm::euclid::AdjacencyKind;
use frgm::features::Orientation;
use frgm::general::DistanceKind;
use frgm::outlier::TransformedNodes;
use frgm::{
    AfwOptions, DeformConfig, DeformVariant, EuclideanConfig, FrgmError, FwOptions, GeneralConfig, OutlierConfig,
    Result, Solver,
};
use serde::{Deserialize, Serialize};

macro_rules! merge_fields {
    ($a:ident, $b:ident; $($f:ident),*) => {
        Self { $($f: $a.$f.or($b.$f)),* }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Fw,
    Afw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptorArg {
    Absolute,
    Centroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceArg {
    Wasserstein,
    InnerProduct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Similarity,
    Affine,
    Nonrigid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompositionArg {
    Cumulative,
    Refit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageArg {
    Stage1,
    Stage2,
}

/// `complete`, `delaunay` or `knn:K`.
pub fn parse_adjacency(s: &str) -> Result<AdjacencyKind> {
    match s {
        "complete" => Ok(AdjacencyKind::Complete),
        "delaunay" => Ok(AdjacencyKind::Delaunay),
        _ => s
            .strip_prefix("knn:")
            .and_then(|k| k.parse().ok())
            .filter(|&k: &usize| k > 0)
            .map(AdjacencyKind::Knn)
            .ok_or_else(|| FrgmError::Parameter(format!("unknown adjacency {s:?}; use complete, delaunay or knn:K"))),
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Exact (fw) or entropic (afw) linear subproblems.
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Initial entropic weight of the afw schedule eps0 / (k + 1).
    #[arg(long)]
    pub eps0: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop once the Frank-Wolfe gap falls below this.
    #[arg(long)]
    pub gap_tol: Option<f64>,
}

impl SolverSettings {
    pub fn merged(self, file: Self) -> Self {
        let a = self;
        merge_fields!(a, file; solver, eps0, max_iter, gap_tol)
    }

    fn fw(&self) -> FwOptions {
        let d = FwOptions::default();
        FwOptions {
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            gap_tol: self.gap_tol.unwrap_or(d.gap_tol),
            ..d
        }
    }

    fn solver(&self) -> Result<Solver> {
        if let Some(e) = self.eps0 {
            if !(e > 0.0) {
                return Err(FrgmError::Parameter(format!("eps0 must be positive, got {e}")));
            }
        }
        Ok(match self.solver.unwrap_or(SolverArg::Fw) {
            SolverArg::Fw => Solver::Fw,
            SolverArg::Afw => {
                let mut o = match self.eps0 {
                    Some(e) => AfwOptions::with_eps0(e),
                    None => AfwOptions::default(),
                };
                o.fw = self.fw();
                Solver::Afw(o)
            }
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EuclidSettings {
    /// Weight of the edge-length term against the unary term, stage one.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the smoothness term against the offset term, stage two.
    #[arg(long)]
    pub lambda2: Option<f64>,
    /// complete, delaunay or knn:K.
    #[arg(long)]
    pub adjacency: Option<String>,
    /// Reference direction of the shape-context unary term.
    #[arg(long, value_enum)]
    pub descriptor: Option<DescriptorArg>,
}

impl EuclidSettings {
    pub fn merged(self, file: Self) -> Self {
        let a = self;
        merge_fields!(a, file; lambda1, lambda2, adjacency, descriptor)
    }

    pub fn config(&self, solver: &SolverSettings, base: EuclideanConfig) -> Result<EuclideanConfig> {
        Ok(EuclideanConfig {
            lambda1: self.lambda1.unwrap_or(base.lambda1),
            lambda2: self.lambda2.unwrap_or(base.lambda2),
            adjacency: match &self.adjacency {
                Some(s) => parse_adjacency(s)?,
                None => base.adjacency,
            },
            descriptor: match self.descriptor {
                Some(DescriptorArg::Absolute) => Orientation::Absolute,
                Some(DescriptorArg::Centroid) => Orientation::Centroid,
                None => base.descriptor,
            },
            solver: solver.solver()?,
            fw: solver.fw(),
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralSettings {
    /// Weight of the pairwise term against the unary term, stage one.
    #[arg(long)]
    pub alpha1: Option<f64>,
    /// Weight of the pairwise term against the unary term, stage two.
    #[arg(long)]
    pub alpha2: Option<f64>,
    /// Bandwidth of the edge-attribute normalization.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub distance: Option<DistanceArg>,
}

impl GeneralSettings {
    pub fn merged(self, file: Self) -> Self {
        let a = self;
        merge_fields!(a, file; alpha1, alpha2, sigma, distance)
    }

    pub fn config(&self, solver: &SolverSettings) -> Result<GeneralConfig> {
        let d = GeneralConfig::default();
        let sigma = self.sigma.unwrap_or(d.sigma);
        if !(sigma > 0.0) {
            return Err(FrgmError::Parameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(GeneralConfig {
            alpha1: self.alpha1.unwrap_or(d.alpha1),
            alpha2: self.alpha2.unwrap_or(d.alpha2),
            sigma,
            distance: match self.distance {
                Some(DistanceArg::Wasserstein) => DistanceKind::Wasserstein,
                Some(DistanceArg::InnerProduct) => DistanceKind::InnerProduct,
                None => d.distance,
            },
            solver: solver.solver()?,
            fw: solver.fw(),
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformSettings {
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Alternation rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Weight of the neighbourhood term in the deformation fit.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Kernel bandwidth of the nonrigid warp, in the units of set 1.
    #[arg(long)]
    pub sigma_w: Option<f64>,
    #[arg(long, value_enum)]
    pub composition: Option<CompositionArg>,
    /// Stop once set 1 moves less than this in a round.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Adjacency of the deformation fit: complete, delaunay or knn:K.
    #[arg(long)]
    pub deform_adjacency: Option<String>,
}

impl DeformSettings {
    pub fn merged(self, file: Self) -> Self {
        let a = self;
        merge_fields!(a, file; variant, rounds, lambda, sigma_w, composition, tol, deform_adjacency)
    }

    pub fn config(&self, euclid: &EuclidSettings, solver: &SolverSettings) -> Result<DeformConfig> {
        let d = DeformConfig::default();
        let lambda = self.lambda.unwrap_or(d.lambda);
        if !(lambda >= 0.0) {
            return Err(FrgmError::Parameter(format!(
                "lambda must be non-negative, got {lambda}"
            )));
        }
        Ok(DeformConfig {
            variant: match self.variant {
                Some(VariantArg::Similarity) => DeformVariant::Similarity,
                Some(VariantArg::Affine) => DeformVariant::Affine,
                Some(VariantArg::Nonrigid) => DeformVariant::Nonrigid,
                None => d.variant,
            },
            lambda,
            rounds: self.rounds.unwrap_or(d.rounds),
            sigma_w: self.sigma_w.or(d.sigma_w),
            adjacency: match &self.deform_adjacency {
                Some(s) => Some(parse_adjacency(s)?),
                None => d.adjacency,
            },
            composition: match self.composition {
                Some(CompositionArg::Cumulative) => Composition::Cumulative,
                Some(CompositionArg::Refit) => Composition::Refit,
                None => d.composition,
            },
            tol: self.tol.unwrap_or(d.tol),
            matcher: euclid.config(solver, d.matcher.clone())?,
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierSettings {
    /// Ratio-test threshold; must exceed 1.
    #[arg(long)]
    pub outlier_k: Option<f64>,
    /// Matching and pruning rounds.
    #[arg(long)]
    pub outlier_rounds: Option<usize>,
    /// Which stage's solution supplies the transformed nodes.
    #[arg(long, value_enum)]
    pub outlier_stage: Option<StageArg>,
}

impl OutlierSettings {
    pub fn merged(self, file: Self) -> Self {
        let a = self;
        merge_fields!(a, file; outlier_k, outlier_rounds, outlier_stage)
    }

    pub fn config(&self, matcher: EuclideanConfig) -> OutlierConfig {
        let d = OutlierConfig::default();
        OutlierConfig {
            k: self.outlier_k.unwrap_or(d.k),
            rounds: self.outlier_rounds.unwrap_or(d.rounds),
            transformed: match self.outlier_stage {
                Some(StageArg::Stage1) => TransformedNodes::Stage1,
                Some(StageArg::Stage2) => TransformedNodes::Stage2,
                None => d.transformed,
            },
            matcher,
        }
    }
}

/// Contents of a `--config` file; every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub solver: SolverSettings,
    pub euclid: EuclidSettings,
    pub general: GeneralSettings,
    pub deform: DeformSettings,
    pub outlier: OutlierSettings,
}

impl ConfigFile {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| FrgmError::Input(format!("cannot read {}: {e}", path.display())))?;
        let json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if json {
            serde_json::from_str(&text).map_err(|e| FrgmError::Parameter(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| FrgmError::Parameter(format!("{}: {e}", path.display())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let flags = EuclidSettings {
            lambda1: Some(0.3),
            ..Default::default()
        };
        let file = EuclidSettings {
            lambda1: Some(0.7),
            lambda2: Some(0.2),
            ..Default::default()
        };
        let m = flags.merged(file);
        let cfg = m
            .config(&SolverSettings::default(), EuclideanConfig::default())
            .unwrap();
        assert_eq!(cfg.lambda1, 0.3);
        assert_eq!(cfg.lambda2, 0.2);
        assert_eq!(cfg.adjacency, AdjacencyKind::Complete);
    }

    #[test]
    fn adjacency_strings() {
        assert_eq!(parse_adjacency("knn:4").unwrap(), AdjacencyKind::Knn(4));
        assert!(parse_adjacency("knn:0").is_err());
        assert!(parse_adjacency("ring").is_err());
    }

    #[test]
    fn config_sections_parse() {
        let c: ConfigFile =
            toml::from_str("[solver]\nsolver = \"afw\"\neps0 = 0.01\n[outlier]\noutlier_k = 3.0\n").unwrap();
        assert_eq!(c.solver.solver, Some(SolverArg::Afw));
        assert_eq!(c.outlier.outlier_k, Some(3.0));
        assert!(toml::from_str::<ConfigFile>("[euclid]\nbogus = 1\n").is_err());
    }
}
