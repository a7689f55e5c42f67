//! Incremental Bowyer-Watson triangulation of planar point sets.
//!
//! The outer face is represented by ghost triangles sharing one vertex at
//! infinity instead of a finite super-triangle, so hull edges never go
//! missing. Every input point receives a deterministic perturbation of
//! relative magnitude 1e-9 derived from its index, which separates exact
//! duplicates and breaks cocircular ties reproducibly.

use crate::error::{FrgmError, Result};

const GHOST: usize = usize::MAX;
const PERTURBATION: f64 = 1e-9;

/// Triangles of a planar Delaunay triangulation, as counter-clockwise index
/// triples into the input points.
#[derive(Debug, Clone)]
pub struct Triangulation {
    pub triangles: Vec<[usize; 3]>,
}

impl Triangulation {
    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn unit_jitter(i: usize, axis: u64) -> f64 {
    let h = splitmix((i as u64) << 1 | axis);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies strictly inside the circumcircle of ccw `(a, b, c)`.
fn incircle(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

fn in_conflict(tri: &[usize; 3], pts: &[[f64; 2]], p: [f64; 2]) -> bool {
    if tri[2] == GHOST {
        // outer half-plane of hull edge tri[0] -> tri[1], plus the open edge
        let (u, v) = (pts[tri[0]], pts[tri[1]]);
        let o = orient(u, v, p);
        if o > 0.0 {
            return true;
        }
        if o == 0.0 {
            let dot = (p[0] - u[0]) * (v[0] - u[0]) + (p[1] - u[1]) * (v[1] - u[1]);
            let len2 = (v[0] - u[0]).powi(2) + (v[1] - u[1]).powi(2);
            return dot > 0.0 && dot < len2;
        }
        false
    } else {
        incircle(pts[tri[0]], pts[tri[1]], pts[tri[2]], p) > 0.0
    }
}

fn normalize_ghost(t: [usize; 3]) -> [usize; 3] {
    if t[0] == GHOST {
        [t[1], t[2], t[0]]
    } else if t[1] == GHOST {
        [t[2], t[0], t[1]]
    } else {
        t
    }
}

/// Delaunay-triangulates `points` (at least three, not all collinear).
pub fn triangulate(points: &[[f64; 2]]) -> Result<Triangulation> {
    let m = points.len();
    if m < 3 {
        return Err(FrgmError::DegenerateGeometry(format!(
            "triangulation needs at least 3 points, got {m}"
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(FrgmError::param("non-finite point coordinate"));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if scale <= 0.0 {
        return Err(FrgmError::DegenerateGeometry("all points coincide".into()));
    }

    // collinearity is judged on the unperturbed input
    let a0 = 0;
    let b0 = (1..m)
        .max_by(|&i, &j| {
            dist2(points[a0], points[i])
                .partial_cmp(&dist2(points[a0], points[j]))
                .unwrap()
        })
        .unwrap();
    let lin_tol = 1e-12 * scale * scale;
    let c0 = (0..m)
        .filter(|&i| i != a0 && i != b0)
        .max_by(|&i, &j| {
            orient(points[a0], points[b0], points[i])
                .abs()
                .partial_cmp(&orient(points[a0], points[b0], points[j]).abs())
                .unwrap()
        })
        .unwrap();
    if orient(points[a0], points[b0], points[c0]).abs() <= lin_tol {
        return Err(FrgmError::DegenerateGeometry("all points are collinear".into()));
    }

    let pts: Vec<[f64; 2]> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            [
                p[0] + PERTURBATION * scale * unit_jitter(i, 0),
                p[1] + PERTURBATION * scale * unit_jitter(i, 1),
            ]
        })
        .collect();

    let (a, b, c) = if orient(pts[a0], pts[b0], pts[c0]) > 0.0 {
        (a0, b0, c0)
    } else {
        (a0, c0, b0)
    };
    let mut tris: Vec<[usize; 3]> = vec![[a, b, c], [b, a, GHOST], [c, b, GHOST], [a, c, GHOST]];

    for p_idx in 0..m {
        if p_idx == a || p_idx == b || p_idx == c {
            continue;
        }
        let p = pts[p_idx];
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris.into_iter().partition(|t| in_conflict(t, &pts, p));
        if bad.is_empty() {
            return Err(FrgmError::numerical(format!(
                "point {p_idx} conflicts with no triangle"
            )));
        }
        let mut directed: Vec<(usize, usize)> = Vec::with_capacity(bad.len() * 3);
        for t in &bad {
            directed.extend([(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]);
        }
        tris = keep;
        for &(u, v) in &directed {
            if !directed.contains(&(v, u)) {
                if u == GHOST && v == GHOST {
                    continue;
                }
                tris.push(normalize_ghost([u, v, p_idx]));
            }
        }
    }

    // slivers of three distinct collinear input points only exist because of
    // the perturbation; they lie on the hull and are dropped
    let triangles: Vec<[usize; 3]> = tris
        .into_iter()
        .filter(|t| t[2] != GHOST)
        .filter(|t| {
            let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
            let has_duplicate = a == b || b == c || a == c;
            has_duplicate || orient(a, b, c).abs() > lin_tol
        })
        .collect();
    Ok(Triangulation { triangles })
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent check: for every triangle no other input point lies
    /// strictly inside its circumcircle (tolerance relative to the radius).
    fn brute_force_empty_circles(points: &[[f64; 2]], tri: &Triangulation) -> bool {
        tri.triangles.iter().all(|t| {
            let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
            let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
            let ux = ((a[0] * a[0] + a[1] * a[1]) * (b[1] - c[1])
                + (b[0] * b[0] + b[1] * b[1]) * (c[1] - a[1])
                + (c[0] * c[0] + c[1] * c[1]) * (a[1] - b[1]))
                / d;
            let uy = ((a[0] * a[0] + a[1] * a[1]) * (c[0] - b[0])
                + (b[0] * b[0] + b[1] * b[1]) * (a[0] - c[0])
                + (c[0] * c[0] + c[1] * c[1]) * (b[0] - a[0]))
                / d;
            let r = ((a[0] - ux).powi(2) + (a[1] - uy).powi(2)).sqrt();
            points
                .iter()
                .enumerate()
                .all(|(i, p)| t.contains(&i) || ((p[0] - ux).powi(2) + (p[1] - uy).powi(2)).sqrt() >= r - 1e-7 * r)
        })
    }

    fn hull_size(points: &[[f64; 2]]) -> usize {
        // gift wrapping, strict turns only
        let n = points.len();
        let start = (0..n)
            .min_by(|&i, &j| points[i].partial_cmp(&points[j]).unwrap())
            .unwrap();
        let mut count = 0;
        let mut cur = start;
        loop {
            count += 1;
            let mut next = (cur + 1) % n;
            for k in 0..n {
                if orient(points[cur], points[next], points[k]) < 0.0 {
                    next = k;
                }
            }
            cur = next;
            if cur == start {
                break;
            }
        }
        count
    }

    #[test]
    fn single_triangle() {
        let t = triangulate(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert_eq!(t.edges(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn square_has_one_diagonal() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.edges().len(), 5);
        assert!(brute_force_empty_circles(&pts, &t));
    }

    #[test]
    fn regular_pentagon_has_seven_edges() {
        let pts: Vec<[f64; 2]> = (0..5)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.edges().len(), 7);
        assert_eq!(t.triangles.len(), 3);
    }

    #[test]
    fn collinear_is_rejected() {
        let err = triangulate(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap_err();
        assert!(matches!(err, FrgmError::DegenerateGeometry(_)));
    }

    #[test]
    fn duplicates_are_separated() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.5, 0.5]];
        let t = triangulate(&pts).unwrap();
        assert!(t.triangles.len() >= 3);
        let e = t.edges();
        assert!((0..5).all(|i| e.iter().any(|&(a, b)| a == i || b == i)));
    }

    #[test]
    fn grid_is_complete() {
        let pts: Vec<[f64; 2]> = (0..16).map(|i| [(i % 4) as f64, (i / 4) as f64]).collect();
        let t = triangulate(&pts).unwrap();
        // 2m - 2 - h with the perturbed hull containing all 12 boundary points
        assert_eq!(t.triangles.len(), 18);
        assert!(brute_force_empty_circles(&pts, &t));
    }

    proptest::proptest! {
        #[test]
        fn random_sets_satisfy_empty_circumcircle(
            coords in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..13)
        ) {
            let pts: Vec<[f64; 2]> = coords.iter().map(|&(x, y)| [x, y]).collect();
            match triangulate(&pts) {
                Ok(t) => {
                    proptest::prop_assert!(brute_force_empty_circles(&pts, &t));
                    let h = hull_size(&pts);
                    proptest::prop_assert_eq!(t.triangles.len(), 2 * pts.len() - 2 - h);
                }
                Err(FrgmError::DegenerateGeometry(_)) => {}
                Err(e) => return Err(proptest::test_runner::TestCaseError::fail(e.to_string())),
            }
        }
    }
}
