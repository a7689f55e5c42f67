//! JSON payloads written by the subcommands.

use std::path::Path;

use frgm::deform::Deformation;
use frgm::{FrgmError, Result, Transform};
use nalgebra::{DMatrix, RowDVector};
use serde_json::{json, Value};

pub fn rows(m: &DMatrix<f64>) -> Value {
    json!(m
        .row_iter()
        .map(|r| r.iter().copied().collect::<Vec<f64>>())
        .collect::<Vec<_>>())
}

fn row(v: &RowDVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

/// Maps row vectors `x` to `x * linear + t`.
pub fn transform_json(t: &Transform<f64>) -> Value {
    match t {
        Transform::Similarity { s, r, t: tr } => {
            let mut v = json!({
                "type": "similarity",
                "s": s,
                "r": rows(r),
                "t": row(tr),
            });
            if let Some(a) = t.angle() {
                v["angle_deg"] = json!(a.to_degrees());
            }
            v
        }
        Transform::Affine { a, t } => json!({
            "type": "affine",
            "a": rows(a),
            "t": row(t),
        }),
        Transform::Nonrigid { basis, w, sigma_w } => json!({
            "type": "nonrigid",
            "basis": rows(basis.matrix()),
            "w": rows(w),
            "sigma_w": sigma_w,
        }),
    }
}

/// A single transform in input coordinates when the steps compose, otherwise
/// the normalizing frame and the per-round steps in normalized coordinates.
pub fn deformation_json(d: &Deformation<f64>) -> Value {
    match d.collapse() {
        Some(t) => transform_json(&t),
        None => {
            let f = &d.frame;
            json!({
                "type": "composite",
                "frame": {
                    "mean1": row(&f.mean1),
                    "scale1": f.scale1,
                    "mean2": row(&f.mean2),
                    "scale2": f.scale2,
                },
                "steps": d.steps.iter().map(transform_json).collect::<Vec<_>>(),
            })
        }
    }
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| FrgmError::Input(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| FrgmError::Input(format!("cannot write {}: {e}", path.display())))
}
