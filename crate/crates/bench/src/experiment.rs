//! Grids of synthetic matching trials.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use frgm::euclid::AdjacencyKind;
use frgm::features::{shape_context_cost, Orientation};
use frgm::{
    iterative_removal, match_euclidean, match_general, EuclideanConfig, EuclideanProblem, FrgmError, GeneralConfig,
    GeneralProblem, OutlierConfig, Result, Solver,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{accuracy, assignment_error};
use crate::synth::{gen_synthetic, Instance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Edge attributes only.
    General,
    /// Point coordinates.
    Euclid,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::General => "general",
            Method::Euclid => "euclid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Fw,
    Afw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAdjacency {
    #[default]
    Complete,
    Delaunay,
}

/// A grid of synthetic cells, each run over the same list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub n_in: Vec<usize>,
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    /// Absolute outlier counts; ignored when `outlier_ratio` is non-empty.
    #[serde(default = "default_n_out")]
    pub n_out: Vec<usize>,
    /// Outlier counts as fractions of `n_in`.
    #[serde(default)]
    pub outlier_ratio: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// First seed; trial `s` of every cell uses `seed + s`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub adjacency: GridAdjacency,
    /// Run iterative outlier removal before the Euclidean match.
    #[serde(default)]
    pub remove_outliers: bool,
    /// Worker threads; all available cores when unset.
    #[serde(default)]
    pub workers: Option<usize>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Euclid]
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_n_out() -> Vec<usize> {
    vec![0]
}

fn default_seeds() -> usize {
    20
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            methods: default_methods(),
            n_in: vec![20],
            noise: default_noise(),
            n_out: default_n_out(),
            outlier_ratio: Vec::new(),
            seeds: default_seeds(),
            seed: 0,
            solver: SolverKind::Fw,
            adjacency: GridAdjacency::Complete,
            remove_outliers: false,
            workers: None,
        }
    }
}

fn steps(lo: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| ((lo + step * i as f64) * 1e9).round() / 1e9)
        .collect()
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 4] = [
    "paper-noise",
    "paper-outlier",
    "large-scale-noise",
    "large-scale-outlier",
];

/// Shipped grids: the small noise and outlier sweeps and the large-scale
/// table rows.
pub fn preset(name: &str) -> Option<GridConfig> {
    let both = vec![Method::General, Method::Euclid];
    let large = vec![100, 300, 500, 1000];
    let cfg = match name {
        "paper-noise" => GridConfig {
            methods: both,
            n_in: vec![20],
            noise: steps(0.0, 0.05, 11),
            ..GridConfig::default()
        },
        "paper-outlier" => GridConfig {
            methods: both,
            n_in: vec![20],
            n_out: (0..=20).step_by(2).collect(),
            ..GridConfig::default()
        },
        "large-scale-noise" => GridConfig {
            methods: both,
            n_in: large,
            noise: steps(0.02, 0.02, 5),
            ..GridConfig::default()
        },
        "large-scale-outlier" => GridConfig {
            methods: both,
            n_in: large,
            outlier_ratio: steps(0.2, 0.2, 5),
            ..GridConfig::default()
        },
        _ => return None,
    };
    Some(cfg)
}

impl GridConfig {
    /// Reads a JSON (`.json`) or TOML grid file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FrgmError::Input(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: GridConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| FrgmError::Input(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| FrgmError::Input(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FrgmError::Parameter(m.into()));
        if self.methods.is_empty() || self.n_in.is_empty() || self.noise.is_empty() {
            return bad("methods, n_in and noise must be non-empty");
        }
        if self.outlier_ratio.is_empty() && self.n_out.is_empty() {
            return bad("n_out must be non-empty");
        }
        if self.seeds == 0 {
            return bad("at least one seed is required");
        }
        if self.n_in.iter().any(|&n| n < 2) {
            return bad("n_in must be at least 2");
        }
        if self.noise.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise levels must be finite and non-negative");
        }
        if self.outlier_ratio.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("outlier ratios must be finite and non-negative");
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        Ok(())
    }

    /// Cells in emission order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        let mut out = Vec::new();
        for &method in &methods {
            for &n_in in &self.n_in {
                for &noise in &self.noise {
                    let counts: Vec<usize> = if self.outlier_ratio.is_empty() {
                        self.n_out.clone()
                    } else {
                        self.outlier_ratio
                            .iter()
                            .map(|r| (r * n_in as f64).round() as usize)
                            .collect()
                    };
                    for n_out in counts {
                        out.push(Cell {
                            method,
                            n_in,
                            noise,
                            n_out,
                        });
                    }
                }
            }
        }
        out.sort_by(|a, b| a.cmp_key(b));
        out
    }

    fn solver(&self) -> Solver {
        match self.solver {
            SolverKind::Fw => Solver::Fw,
            SolverKind::Afw => Solver::afw(),
        }
    }

    fn adjacency(&self) -> AdjacencyKind {
        match self.adjacency {
            GridAdjacency::Complete => AdjacencyKind::Complete,
            GridAdjacency::Delaunay => AdjacencyKind::Delaunay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub n_in: usize,
    pub noise: f64,
    pub n_out: usize,
}

impl Cell {
    fn cmp_key(&self, other: &Cell) -> std::cmp::Ordering {
        self.method
            .cmp(&other.method)
            .then(self.n_in.cmp(&other.n_in))
            .then(self.noise.total_cmp(&other.noise))
            .then(self.n_out.cmp(&other.n_out))
    }
}

/// Outcome of one matcher run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub accuracy: f64,
    pub error: f64,
    pub seconds: f64,
}

/// Runs one matcher on one instance, timing only the solve.
pub fn run_trial(method: Method, inst: &Instance, config: &GridConfig) -> Result<Trial> {
    let start = Instant::now();
    let assign: Vec<usize> = match method {
        Method::Euclid => {
            let cfg = EuclideanConfig {
                adjacency: config.adjacency(),
                solver: config.solver(),
                ..EuclideanConfig::default()
            };
            if config.remove_outliers {
                let oc = OutlierConfig {
                    matcher: cfg,
                    ..OutlierConfig::default()
                };
                iterative_removal(&inst.v1, &inst.v2, &oc)?.assignment.assign().to_vec()
            } else {
                let prob = EuclideanProblem::new(inst.v1.clone(), inst.v2.clone(), None, &cfg)?;
                match_euclidean(&prob)?.assignment.assign().to_vec()
            }
        }
        Method::General => {
            let cfg = GeneralConfig {
                solver: config.solver(),
                ..GeneralConfig::default()
            };
            let adj = match config.adjacency {
                GridAdjacency::Complete => None,
                GridAdjacency::Delaunay => Some(config.adjacency().build(&inst.v1)?),
            };
            let unary = shape_context_cost(&inst.v1, &inst.v2, Orientation::Absolute)?;
            let prob = GeneralProblem::new(
                &inst.v1.distance_matrix(),
                &inst.v2.distance_matrix(),
                adj,
                Some(unary),
                &cfg,
            )?;
            match_general(&prob)?.assignment.assign().to_vec()
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(Trial {
        accuracy: accuracy(&assign, &inst.truth),
        error: assignment_error(&inst.v2, &assign, &inst.truth)?,
        seconds,
    })
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub method: Method,
    pub n_in: usize,
    pub noise: f64,
    pub n_out: usize,
    pub mean_acc: f64,
    /// Population standard deviation over successful seeds.
    pub std_acc: f64,
    pub mean_err: f64,
    pub mean_time_s: f64,
    pub n_seeds: usize,
    /// Seeds whose trial returned an error.
    pub failures: usize,
}

impl CellResult {
    pub fn cell(&self) -> Cell {
        Cell {
            method: self.method,
            n_in: self.n_in,
            noise: self.noise,
            n_out: self.n_out,
        }
    }
}

fn summarize(cell: Cell, trials: &[Result<Trial>]) -> CellResult {
    let ok: Vec<&Trial> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let k = ok.len() as f64;
    let mean = |f: fn(&Trial) -> f64| {
        if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|t| f(t)).sum::<f64>() / k
        }
    };
    let mean_acc = mean(|t| t.accuracy);
    let std_acc = if ok.is_empty() {
        f64::NAN
    } else {
        (ok.iter().map(|t| (t.accuracy - mean_acc).powi(2)).sum::<f64>() / k).sqrt()
    };
    CellResult {
        method: cell.method,
        n_in: cell.n_in,
        noise: cell.noise,
        n_out: cell.n_out,
        mean_acc,
        std_acc,
        mean_err: mean(|t| t.error),
        mean_time_s: mean(|t| t.seconds),
        n_seeds: ok.len(),
        failures: trials.len() - ok.len(),
    }
}

/// Runs every cell over every seed. Trials run concurrently; failed trials
/// are counted per cell and logged.
pub fn run_experiment(config: &GridConfig) -> Result<Vec<CellResult>> {
    config.validate()?;
    let cells = config.cells();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..config.seeds as u64).map(move |s| (c, s)))
        .collect();
    let run = || -> Vec<Result<Trial>> {
        jobs.par_iter()
            .map(|&(c, s)| {
                let cell = cells[c];
                let seed = config.seed.wrapping_add(s);
                let trial = gen_synthetic(cell.n_in, cell.noise, cell.n_out, seed)
                    .and_then(|inst| run_trial(cell.method, &inst, config));
                if let Err(e) = &trial {
                    log::warn!("{cell:?} seed {seed}: {e}");
                }
                trial
            })
            .collect()
    };
    let trials = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| FrgmError::Parameter(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };
    Ok(trials
        .chunks(config.seeds)
        .zip(&cells)
        .map(|(t, &cell)| summarize(cell, t))
        .collect())
}

/// CSV table with a header row.
pub fn results_to_csv(results: &[CellResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(r).map_err(|e| FrgmError::Input(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| FrgmError::Input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| FrgmError::Input(e.to_string()))
}

/// Quantity on the horizontal axis of a plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Noise,
    Outliers,
}

impl PlotAxis {
    /// Noise when the noise level varies, outlier count otherwise.
    pub fn infer(results: &[CellResult]) -> Self {
        let first = results.first().map(|r| r.noise);
        if results.iter().any(|r| Some(r.noise) != first) {
            PlotAxis::Noise
        } else {
            PlotAxis::Outliers
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line plot of mean accuracy, one line per method and size.
pub fn results_to_svg(results: &[CellResult], axis: PlotAxis) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 420.0, 60.0, 160.0, 20.0, 50.0);
    let xv = |r: &CellResult| match axis {
        PlotAxis::Noise => r.noise,
        PlotAxis::Outliers => r.n_out as f64,
    };
    let xmax = results.iter().map(xv).fold(0.0f64, f64::max).max(1e-12);
    let xmin = results.iter().map(xv).fold(xmax, f64::min).min(0.0);
    let px = |x: f64| left + (x - xmin) / (xmax - xmin) * (w - left - right);
    let py = |y: f64| top + (1.0 - y) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let (x0, x1, y0, y1) = (px(xmin), px(xmax), py(0.0), py(1.0));
    let _ = writeln!(s, "<path d=\"M{x0},{y1}V{y0}H{x1}\" stroke=\"black\" fill=\"none\"/>");
    for k in 0..=5 {
        let y = k as f64 / 5.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y:.1}</text>",
            x0 - 6.0,
            py(y) + 4.0
        );
        let xv = xmin + (xmax - xmin) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            px(xv),
            y0 + 16.0,
            (xv * 1000.0).round() / 1000.0
        );
    }
    let label = match axis {
        PlotAxis::Noise => "noise sigma",
        PlotAxis::Outliers => "outliers",
    };
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
        (x0 + x1) / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        "<text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">accuracy</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let mut series: Vec<(Method, usize)> = results.iter().map(|r| (r.method, r.n_in)).collect();
    series.dedup();
    for (k, &(method, n_in)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = results
            .iter()
            .filter(|r| r.method == method && r.n_in == n_in && r.mean_acc.is_finite())
            .map(|r| (px(xv(r)), py(r.mean_acc)))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>",
            path.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>");
        }
        let ly = top + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\">{} n={n_in}</text>",
            w - right + 12.0,
            method.name()
        );
    }
    s.push_str("</svg>\n");
    s
}
