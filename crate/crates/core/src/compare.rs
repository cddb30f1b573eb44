//! Dense-surface error metrics and the unconstrained least-squares blendshape fit used as
//! a comparison method.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jaw::{JawPose, Skinning};
use crate::library::{unskin_point, ShapeLibrary, ShapeWeights, Source};
use crate::mesh::{load_obj, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameError {
    pub frame: usize,
    pub rms: f64,
    pub max: f64,
    /// Distance between each observed bundle and the reconstructed surface (empty when
    /// not applicable).
    pub bundle_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub method: String,
    /// RMS over all frames and vertices.
    pub rms: f64,
    pub max: f64,
    pub frames: Vec<FrameError>,
    /// Per frame, per vertex error.
    #[serde(skip)]
    pub per_vertex: Vec<Vec<f64>>,
}

/// Per-vertex distances between two position sets of the same mesh.
pub fn vertex_errors(a: &[Vec3], b: &[Vec3]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).norm()).collect())
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|x| x * x).sum::<f64>() / values.len() as f64).sqrt()
}

impl CompareReport {
    /// Compares `got` against `truth` frame by frame; frames are numbered from zero.
    pub fn new(method: impl Into<String>, got: &[Vec<Vec3>], truth: &[Vec<Vec3>]) -> Result<Self> {
        if got.len() != truth.len() {
            return Err(Error::InvalidArgument(format!(
                "sequence lengths differ: {} vs {} frames",
                got.len(),
                truth.len()
            )));
        }
        let per_vertex = got
            .iter()
            .zip(truth)
            .map(|(a, b)| vertex_errors(a, b))
            .collect::<Result<Vec<_>>>()?;
        let frames = per_vertex
            .iter()
            .enumerate()
            .map(|(frame, e)| FrameError {
                frame,
                rms: rms(e),
                max: e.iter().copied().fold(0.0, f64::max),
                bundle_residuals: vec![],
            })
            .collect::<Vec<_>>();
        let all: Vec<f64> = per_vertex.iter().flatten().copied().collect();
        Ok(CompareReport {
            method: method.into(),
            rms: rms(&all),
            max: all.iter().copied().fold(0.0, f64::max),
            frames,
            per_vertex,
        })
    }

    /// Attaches per-frame bundle residuals.
    pub fn with_residuals(mut self, residuals: Vec<Vec<f64>>) -> Result<Self> {
        if residuals.len() != self.frames.len() {
            return Err(Error::LengthMismatch {
                expected: self.frames.len(),
                actual: residuals.len(),
            });
        }
        for (f, r) in self.frames.iter_mut().zip(residuals) {
            f.bundle_residuals = r;
        }
        Ok(self)
    }

    /// Writes `frame,vertex,error` rows.
    pub fn write_vertex_errors(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvalidArgument(format!("{other:?}")),
        })?;
        w.write_record(["frame", "vertex", "error"])?;
        for (f, errs) in self.per_vertex.iter().enumerate() {
            for (v, e) in errs.iter().enumerate() {
                w.write_record([f.to_string(), v.to_string(), e.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads two OBJ sequences and compares them; every mesh must share the first mesh's
/// faces.
pub fn compare_obj_sequences(method: &str, got: &[impl AsRef<Path>], truth: &[impl AsRef<Path>]) -> Result<CompareReport> {
    let a = got.iter().map(load_obj).collect::<Result<Vec<_>>>()?;
    let b = truth.iter().map(load_obj).collect::<Result<Vec<_>>>()?;
    if let Some(first) = a.first().or(b.first()) {
        for (i, m) in a.iter().chain(&b).enumerate() {
            if m.faces != first.faces {
                return Err(Error::InvalidMesh(format!("mesh {i} has different topology than the first mesh")));
            }
        }
    }
    let pos = |ms: Vec<crate::mesh::TriMesh>| ms.into_iter().map(|m| m.positions).collect::<Vec<_>>();
    CompareReport::new(method, &pos(a), &pos(b))
}

/// Unconstrained least-squares shape weights: minimizes the distance between the
/// unskinned observed bundles and `x0 + sum_n w_n b*_n` over all shapes by solving the
/// normal equations. Rank-deficient systems get the minimum-norm solution.
pub fn lsq_blendshape_weights(lib: &ShapeLibrary, observed: &[Option<Vec3>], jaw: &JawPose) -> Result<ShapeWeights> {
    let n = lib.shapes.len();
    let mut rows: Vec<[f64; 3]> = Vec::new();
    let mut cols: Vec<Vec<[f64; 3]>> = vec![Vec::new(); n];
    for (b, obs) in observed.iter().enumerate() {
        let Some(p) = obs else { continue };
        let def = lib.bundles.get(b).ok_or_else(|| Error::UnknownBundle(format!("#{b}")))?;
        let target = unskin_point(lib, &def.attach, p, jaw)? - lib.bundle_rest(b)?;
        rows.push(target.into());
        let face = lib.neutral.face(def.attach.face)?;
        for (s, col) in lib.shapes.iter().zip(&mut cols) {
            let d = face
                .iter()
                .zip(def.attach.bary)
                .fold(Vec3::zeros(), |acc, (v, w)| acc + s.disp_unskinned[*v] * w);
            col.push(d.into());
        }
    }
    if rows.is_empty() {
        return Ok(ShapeWeights::default());
    }
    let m = rows.len() * 3;
    let a = DMatrix::from_fn(m, n, |r, c| cols[c][r / 3][r % 3]);
    let y = DVector::from_fn(m, |r, _| rows[r / 3][r % 3]);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * y;
    let svd = ata.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max();
    let w = svd
        .solve(&aty, tol)
        .map_err(|e| Error::InvalidArgument(format!("least-squares fit failed: {e}")))?;
    Ok(ShapeWeights::from_pairs(
        w.iter().enumerate().map(|(i, x)| (Source::Shape(i as u32), *x)),
    ))
}

/// Dense surface `T(theta)(x0 + sum_n w_n b*_n)` for one weight vector.
pub fn dense_from_weights(lib: &ShapeLibrary, weights: &ShapeWeights, jaw: &JawPose) -> Vec<Vec3> {
    let skin = Skinning::new(&lib.jaw_model, jaw);
    (0..lib.vertex_count())
        .map(|v| skin.at(lib.skin_weights[v]).apply(&lib.unskinned_vertex(v, weights)))
        .collect()
}
