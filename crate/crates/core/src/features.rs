//! Node descriptors for the unary term.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{FrgmError, Result};
use crate::graph::PointSet;
use crate::scalar::{lit, to_f64, Real};

pub const DEFAULT_RADIAL_BINS: usize = 5;
pub const DEFAULT_ANGULAR_BINS: usize = 12;
/// Radial bin edges as multiples of the median pairwise distance.
pub const INNER_RADIUS: f64 = 0.125;
pub const OUTER_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Angles measured from the positive x axis.
    #[default]
    Absolute,
    /// Angles measured from the direction to the centroid.
    Centroid,
}

/// Log-polar histograms of relative positions, one row per point, with
/// `radial_bins * angular_bins` columns (radial index major). Rows sum to 1;
/// a point whose neighbours all fall outside the outer radius gets the
/// uniform histogram.
pub fn shape_context<T: Real>(v: &PointSet<T>, radial_bins: usize, angular_bins: usize) -> Result<DMatrix<T>> {
    histograms(v, radial_bins, angular_bins, Orientation::Absolute)
}

/// [`shape_context`] with the angular origin of each point turned toward
/// the centroid, which makes the descriptor invariant to rotations.
pub fn rotation_invariant_shape_context<T: Real>(
    v: &PointSet<T>,
    radial_bins: usize,
    angular_bins: usize,
) -> Result<DMatrix<T>> {
    histograms(v, radial_bins, angular_bins, Orientation::Centroid)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn histograms<T: Real>(
    v: &PointSet<T>,
    radial_bins: usize,
    angular_bins: usize,
    orientation: Orientation,
) -> Result<DMatrix<T>> {
    let m = v.len();
    if m < 2 {
        return Err(FrgmError::param("shape context needs at least 2 points"));
    }
    if v.dim() != 2 {
        return Err(FrgmError::param("shape context is defined for 2D points"));
    }
    if radial_bins == 0 || angular_bins == 0 {
        return Err(FrgmError::param("bin counts must be positive"));
    }
    let pts: Vec<[f64; 2]> = (0..m)
        .map(|i| [to_f64(v.matrix()[(i, 0)]), to_f64(v.matrix()[(i, 1)])])
        .collect();
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt());
        }
    }
    let scale = median(dists);
    let width = radial_bins * angular_bins;
    if scale <= 0.0 {
        return Ok(DMatrix::from_element(m, width, lit(1.0 / width as f64)));
    }
    let (lo, hi) = (INNER_RADIUS.ln(), OUTER_RADIUS.ln());
    let edges: Vec<f64> = (0..=radial_bins)
        .map(|k| (lo + (hi - lo) * k as f64 / radial_bins as f64).exp() * scale)
        .collect();
    let centroid = [
        pts.iter().map(|p| p[0]).sum::<f64>() / m as f64,
        pts.iter().map(|p| p[1]).sum::<f64>() / m as f64,
    ];
    let sector = 2.0 * PI / angular_bins as f64;

    let mut out = DMatrix::<f64>::zeros(m, width);
    for i in 0..m {
        let origin = match orientation {
            Orientation::Absolute => 0.0,
            Orientation::Centroid => {
                let (dx, dy) = (centroid[0] - pts[i][0], centroid[1] - pts[i][1]);
                if dx.hypot(dy) > 1e-12 * scale {
                    dy.atan2(dx)
                } else {
                    0.0
                }
            }
        };
        for j in 0..m {
            if i == j {
                continue;
            }
            let (dx, dy) = (pts[j][0] - pts[i][0], pts[j][1] - pts[i][1]);
            let r = dx.hypot(dy);
            if r >= edges[radial_bins] {
                continue;
            }
            let rb = (1..radial_bins).take_while(|&k| r >= edges[k]).count();
            let theta = (dy.atan2(dx) - origin).rem_euclid(2.0 * PI);
            let ab = ((theta / sector) as usize).min(angular_bins - 1);
            out[(i, rb * angular_bins + ab)] += 1.0;
        }
        let total = out.row(i).sum();
        if total > 0.0 {
            out.row_mut(i).scale_mut(1.0 / total);
        } else {
            out.row_mut(i).fill(1.0 / width as f64);
        }
    }
    Ok(out.map(lit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnaryKind {
    #[default]
    ChiSquared,
    L2,
}

/// Pairwise descriptor dissimilarity scaled to `[0, 1]` by its maximum.
pub fn unary_cost<T: Real>(f1: &DMatrix<T>, f2: &DMatrix<T>, kind: UnaryKind) -> Result<DMatrix<T>> {
    let u = unary_cost_raw(f1, f2, kind)?;
    let max = u.max();
    Ok(if max > T::zero() { u / max } else { u })
}

/// [`unary_cost`] without the max normalization.
pub fn unary_cost_raw<T: Real>(f1: &DMatrix<T>, f2: &DMatrix<T>, kind: UnaryKind) -> Result<DMatrix<T>> {
    if f1.ncols() != f2.ncols() {
        return Err(FrgmError::param(format!(
            "descriptor widths differ: {} vs {}",
            f1.ncols(),
            f2.ncols()
        )));
    }
    let half = lit::<T>(0.5);
    let tiny = lit::<T>(1e-12);
    Ok(DMatrix::from_fn(f1.nrows(), f2.nrows(), |i, j| match kind {
        UnaryKind::ChiSquared => {
            let mut acc = T::zero();
            for k in 0..f1.ncols() {
                let (a, b) = (f1[(i, k)], f2[(j, k)]);
                let diff = a - b;
                acc += diff * diff / (a + b + tiny);
            }
            acc * half
        }
        UnaryKind::L2 => (f1.row(i) - f2.row(j)).norm(),
    }))
}

/// Chi-squared shape-context cost between two planar point sets.
pub fn shape_context_cost<T: Real>(v1: &PointSet<T>, v2: &PointSet<T>, orientation: Orientation) -> Result<DMatrix<T>> {
    let f1 = histograms(v1, DEFAULT_RADIAL_BINS, DEFAULT_ANGULAR_BINS, orientation)?;
    let f2 = histograms(v2, DEFAULT_RADIAL_BINS, DEFAULT_ANGULAR_BINS, orientation)?;
    unary_cost(&f1, &f2, UnaryKind::ChiSquared)
}
