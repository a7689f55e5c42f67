//! Seeded instance generators.

use frgm::{FrgmError, PointSet, Result, Transform};
use nalgebra::{DMatrix, RowDVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A matching instance with its planted correspondence: node `i` of `v1`
/// corresponds to node `truth[i]` of `v2`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub v1: PointSet<f64>,
    pub v2: PointSet<f64>,
    pub truth: Vec<usize>,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_points(rng: &mut ChaCha8Rng, m: usize, d: usize, sd: f64) -> DMatrix<f64> {
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    let mut out = DMatrix::zeros(m, d);
    for i in 0..m {
        for k in 0..d {
            out[(i, k)] = normal.sample(rng);
        }
    }
    out
}

/// Shuffles the rows of `points` and returns the new row of each old row.
pub fn shuffle_rows(rng: &mut ChaCha8Rng, points: &DMatrix<f64>) -> (DMatrix<f64>, Vec<usize>) {
    let n = points.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = DMatrix::zeros(n, points.ncols());
    let mut position = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        out.row_mut(new).copy_from(&points.row(old));
        position[old] = new;
    }
    (out, position)
}

/// Inliers from a standard normal in the plane; set 2 is a noisy, shuffled
/// copy with `n_out` extra standard-normal outliers.
pub fn gen_synthetic(n_in: usize, noise_sigma: f64, n_out: usize, seed: u64) -> Result<Instance> {
    let mut rng = rng(seed);
    let v1 = gaussian_points(&mut rng, n_in, 2, 1.0);
    let mut v2 = DMatrix::zeros(n_in + n_out, 2);
    let noise = if noise_sigma > 0.0 {
        gaussian_points(&mut rng, n_in, 2, noise_sigma)
    } else {
        DMatrix::zeros(n_in, 2)
    };
    v2.rows_mut(0, n_in).copy_from(&(&v1 + noise));
    if n_out > 0 {
        v2.rows_mut(n_in, n_out)
            .copy_from(&gaussian_points(&mut rng, n_out, 2, 1.0));
    }
    let (v2, position) = shuffle_rows(&mut rng, &v2);
    Ok(Instance {
        v1: PointSet::new(v1)?,
        v2: PointSet::new(v2)?,
        truth: position[..n_in].to_vec(),
    })
}

/// Built-in planar shapes, centred with largest coordinate magnitude 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Fish,
    Spiral,
    /// Two interleaved half circles of unequal size.
    Moons,
    Grid,
    Circle,
}

impl std::str::FromStr for Template {
    type Err = FrgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fish" => Ok(Template::Fish),
            "spiral" => Ok(Template::Spiral),
            "moons" => Ok(Template::Moons),
            "grid" => Ok(Template::Grid),
            "circle" => Ok(Template::Circle),
            other => Err(FrgmError::Parameter(format!("unknown template {other:?}"))),
        }
    }
}

fn unit_box(points: DMatrix<f64>) -> Result<PointSet<f64>> {
    let mean = points.row_mean();
    let mut c = points;
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let max = c.abs().max();
    if max > 0.0 {
        c /= max;
    }
    PointSet::new(c)
}

/// Procedural template with `n` points (`n >= 4`; the grid rounds down to a
/// square).
pub fn template(kind: Template, n: usize) -> Result<PointSet<f64>> {
    if n < 4 {
        return Err(FrgmError::Parameter("templates need at least 4 points".into()));
    }
    let tau = std::f64::consts::TAU;
    let pts: Vec<[f64; 2]> = match kind {
        Template::Fish => (0..n)
            .map(|i| {
                let t = tau * i as f64 / n as f64;
                [
                    t.cos() - t.sin().powi(2) / 2f64.sqrt(),
                    t.cos() * t.sin() * (1.0 + 0.3 * t.cos()),
                ]
            })
            .collect(),
        Template::Spiral => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let (r, a) = (0.15 + t, 1.6 * tau * t);
                [r * a.cos(), r * a.sin()]
            })
            .collect(),
        Template::Moons => {
            let big = (3 * n) / 5;
            let small = n - big;
            let mut v = Vec::with_capacity(n);
            for i in 0..big {
                let a = std::f64::consts::PI * i as f64 / (big - 1) as f64;
                v.push([a.cos(), a.sin()]);
            }
            for i in 0..small {
                let a = std::f64::consts::PI * i as f64 / (small - 1).max(1) as f64;
                v.push([1.0 - 0.7 * a.cos(), 0.35 - 0.7 * a.sin()]);
            }
            v
        }
        Template::Grid => {
            let side = (n as f64).sqrt().floor() as usize;
            (0..side * side)
                .map(|k| [(k % side) as f64, (k / side) as f64])
                .collect()
        }
        Template::Circle => (0..n)
            .map(|i| {
                let a = tau * i as f64 / n as f64;
                [a.cos(), a.sin()]
            })
            .collect(),
    };
    unit_box(DMatrix::from_fn(pts.len(), 2, |i, k| pts[i][k]))
}

/// Reads a user template from CSV or JSON, centred and scaled like the
/// built-in ones.
pub fn load_template(path: impl AsRef<std::path::Path>) -> Result<PointSet<f64>> {
    let v = frgm::io::read_points(path)?;
    unit_box(v.into_matrix())
}

/// Ground-truth deformation applied to a template.
#[derive(Debug, Clone, PartialEq)]
pub enum Warp {
    Similarity {
        theta: f64,
        scale: f64,
        translation: [f64; 2],
    },
    Affine {
        a: [[f64; 2]; 2],
        translation: [f64; 2],
    },
    /// RBF displacement with weights drawn from `N(0, sigma^2)` and kernel
    /// bandwidth `sigma_w`.
    Nonrigid {
        sigma: f64,
        sigma_w: f64,
    },
}

impl Warp {
    pub fn identity() -> Self {
        Warp::Similarity {
            theta: 0.0,
            scale: 1.0,
            translation: [0.0, 0.0],
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Warp::Similarity {
            theta,
            scale: 1.0,
            translation: [0.0, 0.0],
        }
    }

    pub fn scaling(scale: f64) -> Self {
        Warp::Similarity {
            theta: 0.0,
            scale,
            translation: [0.0, 0.0],
        }
    }
}

/// Planar rotation by `theta` acting on row vectors.
pub fn rotation_matrix(theta: f64) -> DMatrix<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

#[derive(Debug, Clone)]
pub struct DeformedInstance {
    pub instance: Instance,
    /// The transform that produced the inliers of set 2 from the full template.
    pub transform: Transform<f64>,
    /// Template rows kept in set 1.
    pub kept: Vec<usize>,
}

/// Largest accepted mean displacement of a nonrigid warp, in template diameters.
pub const MAX_WARP_DISPLACEMENT: f64 = 3.0;
const MAX_WARP_DRAWS: usize = 100;

/// Deformed copy of `template` with noise, outliers and missing points.
///
/// Set 2 is the warped template plus `N(0, noise_sigma^2)` noise and
/// `round(outlier_ratio * n)` outliers drawn around its centroid with
/// standard deviation `0.25` times the warp's scale, shuffled. Set 1 is the
/// template with a `missing_ratio` fraction of rows removed at random.
pub fn gen_deformed(
    template: &PointSet<f64>,
    warp: &Warp,
    noise_sigma: f64,
    outlier_ratio: f64,
    missing_ratio: f64,
    seed: u64,
) -> Result<DeformedInstance> {
    if template.dim() != 2 {
        return Err(FrgmError::Parameter("deformed instances are planar".into()));
    }
    if !(noise_sigma >= 0.0) || !(outlier_ratio >= 0.0) || !(0.0..1.0).contains(&missing_ratio) {
        return Err(FrgmError::Parameter(
            "noise, outlier and missing ratios out of range".into(),
        ));
    }
    let mut rng = rng(seed);
    let n = template.len();
    let (transform, scale) = match *warp {
        Warp::Similarity {
            theta,
            scale,
            translation,
        } => {
            if !(scale > 0.0) {
                return Err(FrgmError::Parameter("scale must be positive".into()));
            }
            let t = Transform::Similarity {
                s: scale,
                r: rotation_matrix(theta),
                t: RowDVector::from_row_slice(&translation),
            };
            (t, scale)
        }
        Warp::Affine { a, translation } => {
            let a = DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
            let scale = a.determinant().abs().sqrt();
            let t = Transform::Affine {
                a,
                t: RowDVector::from_row_slice(&translation),
            };
            t.validate()?;
            (t, scale)
        }
        Warp::Nonrigid { sigma, sigma_w } => {
            if !(sigma >= 0.0) || !(sigma_w > 0.0) {
                return Err(FrgmError::Parameter(
                    "nonrigid warp needs sigma >= 0 and sigma_w > 0".into(),
                ));
            }
            let k = frgm::gaussian_rbf_kernel(template, sigma_w)?;
            let limit = MAX_WARP_DISPLACEMENT * template.diameter();
            let mut accepted = None;
            for _ in 0..MAX_WARP_DRAWS {
                let w = if sigma > 0.0 {
                    gaussian_points(&mut rng, n, 2, sigma)
                } else {
                    DMatrix::zeros(n, 2)
                };
                let shift = &k * &w;
                let mean = shift.row_iter().map(|r| r.norm()).sum::<f64>() / n as f64;
                if mean <= limit {
                    accepted = Some(w);
                    break;
                }
                log::debug!("rejected warp with mean displacement {mean:.3}");
            }
            let w = accepted.ok_or_else(|| FrgmError::Parameter("warp too strong: every draw rejected".into()))?;
            let t = Transform::Nonrigid {
                basis: template.clone(),
                w,
                sigma_w,
            };
            (t, 1.0)
        }
    };
    let mut image = frgm::apply_transform(&transform, template)?.into_matrix();
    if noise_sigma > 0.0 {
        image += gaussian_points(&mut rng, n, 2, noise_sigma);
    }
    let n_out = (outlier_ratio * n as f64).round() as usize;
    let mut v2 = DMatrix::zeros(n + n_out, 2);
    v2.rows_mut(0, n).copy_from(&image);
    if n_out > 0 {
        let centroid = image.row_mean();
        let mut out = gaussian_points(&mut rng, n_out, 2, 0.25 * scale);
        for mut row in out.row_iter_mut() {
            row += &centroid;
        }
        v2.rows_mut(n, n_out).copy_from(&out);
    }
    let (v2, position) = shuffle_rows(&mut rng, &v2);
    let n_missing = (missing_ratio * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut kept: Vec<usize> = order[n_missing..].to_vec();
    kept.sort_unstable();
    let v1 = template.select(&kept)?;
    let truth = kept.iter().map(|&i| position[i]).collect();
    Ok(DeformedInstance {
        instance: Instance {
            v1,
            v2: PointSet::new(v2)?,
            truth,
        },
        transform,
        kept,
    })
}
