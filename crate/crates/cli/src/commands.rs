//! Subcommand bodies. Inputs are read and settings resolved before any
//! solver runs.

use std::path::{Path, PathBuf};

use frgm::io::{read_matrix, read_points, write_matrix, write_points};
use frgm::{
    hungarian, iterative_removal, match_deformable, match_euclidean, match_general, DeformProblem, EuclideanConfig,
    EuclideanProblem, FrgmError, GeneralProblem, Result, SolveReport,
};
use frgm_bench::experiment::{preset, results_to_csv, results_to_svg, GridConfig, PlotAxis, PRESETS};
use frgm_bench::synth::{gen_deformed, gen_synthetic, load_template, template, Instance, Warp};
use serde_json::{json, Value};

use crate::output::{deformation_json, transform_json, write_json};
use crate::settings::{ConfigFile, VariantArg};
use crate::{
    BenchArgs, Cli, Command, LapArgs, MatchDArgs, MatchEArgs, MatchGArgs, MatchOutput, RemoveOutliersArgs,
    SynthCommand, SynthDeformedArgs, SynthPointsArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let verbose = cli.verbose;
    match cli.command {
        Command::MatchG(a) => match_g(a, file, verbose),
        Command::MatchE(a) => match_e(a, file, verbose),
        Command::MatchD(a) => match_d(a, file, verbose),
        Command::RemoveOutliers(a) => remove_outliers(a, file, verbose),
        Command::Bench(a) => bench(a, verbose),
        Command::Lap(a) => lap(a),
        Command::Synth(SynthCommand::Points(a)) => synth_points(a),
        Command::Synth(SynthCommand::Deformed(a)) => synth_deformed(a),
    }
}

fn show<T: std::fmt::Debug>(verbose: bool, what: &str, settings: &T) {
    if verbose {
        eprintln!("{what}: {settings:#?}");
    }
}

fn path_value(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| json!(p.display().to_string()))
}

fn write_match(
    out: &MatchOutput,
    assignment: &[usize],
    stage1: &SolveReport<f64>,
    stage2: &SolveReport<f64>,
) -> Result<()> {
    if let Some(p) = &out.soft {
        write_matrix(p, stage2.solution.matrix())?;
    }
    log::info!(
        "objectives: stage one {:.6e}, stage two {:.6e}",
        stage1.final_objective(),
        stage2.final_objective()
    );
    write_json(
        &out.out,
        &json!({
            "assignment": assignment,
            "soft": path_value(&out.soft),
            "objective_trace": stage2.objective_trace,
            "stage1_objective_trace": stage1.objective_trace,
        }),
    )
}

fn match_g(a: MatchGArgs, file: ConfigFile, verbose: bool) -> Result<()> {
    let e1 = read_matrix(&a.e1)?;
    let e2 = read_matrix(&a.e2)?;
    let adj1 = a.adj1.as_ref().map(read_matrix).transpose()?;
    let unary = a.unary.as_ref().map(read_matrix).transpose()?;
    let solver = a.solver.merged(file.solver);
    let cfg = a.general.merged(file.general).config(&solver)?;
    show(verbose, "general matching settings", &cfg);
    let prob = GeneralProblem::new(&e1, &e2, adj1, unary, &cfg)?;
    let r = match_general(&prob)?;
    write_match(&a.output, r.assignment.assign(), &r.stage1, &r.stage2)
}

fn match_e(a: MatchEArgs, file: ConfigFile, verbose: bool) -> Result<()> {
    let v1 = read_points(&a.inputs.v1)?;
    let v2 = read_points(&a.inputs.v2)?;
    let unary = a.unary.as_ref().map(read_matrix).transpose()?;
    let solver = a.solver.merged(file.solver);
    let cfg = a
        .euclid
        .merged(file.euclid)
        .config(&solver, EuclideanConfig::default())?;
    show(verbose, "euclidean matching settings", &cfg);
    let prob = EuclideanProblem::new(v1, v2, unary, &cfg)?;
    let r = match_euclidean(&prob)?;
    write_match(&a.output, r.assignment.assign(), &r.stage1, &r.stage2)
}

fn match_d(a: MatchDArgs, file: ConfigFile, verbose: bool) -> Result<()> {
    let v1 = read_points(&a.inputs.v1)?;
    let v2 = read_points(&a.inputs.v2)?;
    let solver = a.solver.merged(file.solver);
    let euclid = a.euclid.merged(file.euclid);
    let cfg = a.deform.merged(file.deform).config(&euclid, &solver)?;
    show(verbose, "deformable matching settings", &cfg);
    let prob = DeformProblem::new(v1, v2, &cfg)?;
    let r = match_deformable(&prob)?;
    let transform = deformation_json(&r.deformation);
    if let Some(p) = &a.transform {
        write_json(p, &transform)?;
    }
    if let Some(p) = &a.aligned {
        write_points(p, r.aligned())?;
    }
    let rounds: Vec<Value> = r
        .rounds
        .iter()
        .map(|x| json!({"residual": x.residual, "displacement": x.displacement}))
        .collect();
    write_json(
        &a.out,
        &json!({
            "assignment": r.assignment.assign(),
            "transform": transform,
            "rounds": rounds,
            "objective_trace": r.last.stage2.objective_trace,
        }),
    )
}

fn remove_outliers(a: RemoveOutliersArgs, file: ConfigFile, verbose: bool) -> Result<()> {
    let v1 = read_points(&a.inputs.v1)?;
    let v2 = read_points(&a.inputs.v2)?;
    let solver = a.solver.merged(file.solver);
    let matcher = a
        .euclid
        .merged(file.euclid)
        .config(&solver, EuclideanConfig::default())?;
    let cfg = a.outlier.merged(file.outlier).config(matcher);
    show(verbose, "outlier removal settings", &cfg);
    let r = iterative_removal(&v1, &v2, &cfg)?;
    write_json(
        &a.out,
        &json!({
            "kept": r.kept,
            "assignment": r.assignment.assign(),
            "history": r.history,
            "objective_trace": r.matched.stage2.objective_trace,
        }),
    )
}

fn bench(a: BenchArgs, verbose: bool) -> Result<()> {
    let mut grid = match (&a.preset, &a.grid) {
        (Some(name), _) => preset(name).ok_or_else(|| {
            FrgmError::Parameter(format!("unknown preset {name:?}; choose one of {}", PRESETS.join(", ")))
        })?,
        (None, Some(path)) => GridConfig::from_path(path)?,
        (None, None) => return Err(FrgmError::Parameter("give --preset or --grid".into())),
    };
    grid.seed = a.seed;
    if let Some(s) = a.seeds {
        grid.seeds = s;
    }
    if a.workers.is_some() {
        grid.workers = a.workers;
    }
    grid.validate()?;
    show(verbose, "experiment grid", &grid);
    let results = frgm_bench::run_experiment(&grid)?;
    let csv = results_to_csv(&results)?;
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &a.plot {
        write_text(p, &results_to_svg(&results, PlotAxis::infer(&results)))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| FrgmError::Input(format!("cannot write {}: {e}", path.display())))
}

fn lap(a: LapArgs) -> Result<()> {
    let cost = read_matrix(&a.cost)?;
    let s = hungarian(&cost)?;
    let v = json!({"assignment": s.assignment.assign(), "objective": s.objective});
    println!(
        "{}",
        serde_json::to_string(&v).map_err(|e| FrgmError::Input(e.to_string()))?
    );
    if let Some(p) = &a.out {
        write_json(p, &v)?;
    }
    Ok(())
}

fn write_instance(dir: &Path, inst: &Instance) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| FrgmError::Input(format!("cannot create {}: {e}", dir.display())))?;
    write_points(dir.join("v1.csv"), &inst.v1)?;
    write_points(dir.join("v2.csv"), &inst.v2)?;
    write_json(&dir.join("truth.json"), &json!({"truth": inst.truth}))
}

fn synth_points(a: SynthPointsArgs) -> Result<()> {
    if a.n_in < 1 {
        return Err(FrgmError::Parameter("n-in must be at least 1".into()));
    }
    let inst = gen_synthetic(a.n_in, a.noise, a.n_out, a.seed)?;
    write_instance(&a.out_dir, &inst)
}

fn parse_list<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| FrgmError::Parameter(format!("{what}: expected {N} comma-separated numbers, got {s:?}")))?;
    v.try_into()
        .map_err(|_| FrgmError::Parameter(format!("{what}: expected {N} comma-separated numbers, got {s:?}")))
}

fn synth_deformed(a: SynthDeformedArgs) -> Result<()> {
    let t = match &a.template_file {
        Some(p) => load_template(p)?,
        None => template(a.template.parse()?, a.points)?,
    };
    let translation: [f64; 2] = parse_list(&a.translation, "translation")?;
    let warp = match a.warp {
        VariantArg::Similarity => Warp::Similarity {
            theta: a.theta,
            scale: a.scale,
            translation,
        },
        VariantArg::Affine => {
            let m: [f64; 4] = parse_list(&a.matrix, "matrix")?;
            Warp::Affine {
                a: [[m[0], m[1]], [m[2], m[3]]],
                translation,
            }
        }
        VariantArg::Nonrigid => Warp::Nonrigid {
            sigma: a.warp_sigma,
            sigma_w: a.warp_bandwidth,
        },
    };
    let d = gen_deformed(&t, &warp, a.noise, a.outlier_ratio, a.missing_ratio, a.seed)?;
    write_instance(&a.out_dir, &d.instance)?;
    write_json(&a.out_dir.join("transform.json"), &transform_json(&d.transform))
}
