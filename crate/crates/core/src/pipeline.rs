//! End-to-end operations: building the per-library products, reconstructing a track,
//! the per-shape round trip and usage-based pruning.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::blend::{baseline_displacement_interp, blend_frame, BlendField, BlendModel, NnMode, DEFAULT_RESOLUTION};
use crate::compare::{dense_from_weights, lsq_blendshape_weights, vertex_errors};
use crate::error::{Error, Result};
use crate::index::{IndexConfig, LgiIndex};
use crate::library::{eval_bundle, ShapeLibrary, ShapeWeights, Source};
use crate::mesh::{eval_surface_point, Vec3};
use crate::solver::{observations_by_bundle, record_usage, smooth_track, solve_frame, solve_track, FrameSolution, Selection, SolverConfig};
use crate::track::TrackFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub resolution: usize,
    pub nn_mode: NnMode,
    pub index: IndexConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            resolution: DEFAULT_RESOLUTION,
            nn_mode: NnMode::Uv,
            index: IndexConfig::default(),
        }
    }
}

/// Builds the blending model first, since its Voronoi adjacency defines the bundle
/// neighborhoods stored in the index.
pub fn build(lib: &ShapeLibrary, cfg: &BuildConfig) -> Result<(BlendModel, LgiIndex)> {
    let blend = BlendModel::build(lib, cfg.resolution, cfg.nn_mode)?;
    let index = LgiIndex::build(lib, &blend.adjacency, &cfg.index)?;
    Ok((blend, index))
}

/// How per-bundle weights become a dense surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlendMethod {
    /// Natural-neighbor weights (interpolates the bundles).
    Nn,
    /// Gaussian weights of geodesic distance; `None` uses the default width.
    Rbf { sigma: Option<f64> },
    /// Bundle displacements spread over the neutral mesh; ignores the shape library.
    Baseline,
    /// One global, unconstrained least-squares fit of all shape weights.
    Lsq,
}

impl BlendMethod {
    pub fn label(&self) -> &'static str {
        match self {
            BlendMethod::Nn => "nn",
            BlendMethod::Rbf { .. } => "rbf",
            BlendMethod::Baseline => "baseline",
            BlendMethod::Lsq => "lsq",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub method: BlendMethod,
    /// Odd moving-average window over the per-bundle weights (1 disables smoothing).
    pub window: usize,
    pub solver: SolverConfig,
}

impl ReconstructOptions {
    pub fn for_library(lib: &ShapeLibrary) -> Self {
        ReconstructOptions {
            method: BlendMethod::Nn,
            window: 1,
            solver: SolverConfig::for_library(lib),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub solutions: Vec<FrameSolution>,
    /// Dense positions per frame.
    pub meshes: Vec<Vec<Vec3>>,
    /// Per frame and bundle: distance between the observed position and the bundle's
    /// surface point on the reconstruction (`None` when unobserved).
    pub surface_residuals: Vec<Vec<Option<f64>>>,
}

impl Reconstruction {
    /// Largest surface residual over bundles that were neither projected nor missing.
    pub fn max_interpolated_residual(&self) -> f64 {
        self.solutions
            .iter()
            .zip(&self.surface_residuals)
            .flat_map(|(f, r)| f.per_bundle.iter().zip(r))
            .filter(|(s, _)| !s.projected && s.selection != Selection::Missing)
            .filter_map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }
}

/// Bundle positions on a posed copy of the neutral mesh, for driving a reconstruction
/// from another deformer's output.
pub fn sample_bundles(lib: &ShapeLibrary, positions: &[Vec3]) -> Result<Vec<(String, Vec3)>> {
    if positions.len() != lib.neutral.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: lib.neutral.vertex_count(),
            actual: positions.len(),
        });
    }
    lib.bundles
        .iter()
        .map(|b| Ok((b.name.clone(), eval_surface_point(positions, &lib.neutral, &b.attach)?)))
        .collect()
}

/// Every bundle name in the track that the library does not know, sorted.
pub fn unknown_bundles(lib: &ShapeLibrary, frames: &[TrackFrame]) -> Vec<String> {
    frames
        .iter()
        .flat_map(|f| &f.bundles)
        .filter(|(name, _)| lib.bundle_index(name).is_none())
        .map(|(name, _)| name.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn surface_residuals(lib: &ShapeLibrary, mesh: &[Vec3], observed: &[Option<Vec3>]) -> Result<Vec<Option<f64>>> {
    lib.bundles
        .iter()
        .zip(observed)
        .map(|(b, o)| match o {
            Some(p) => Ok(Some((eval_surface_point(mesh, &lib.neutral, &b.attach)? - p).norm())),
            None => Ok(None),
        })
        .collect()
}

/// Solves every frame in order (the temporal criterion needs the previous frame),
/// optionally smooths the weights, and blends each frame into a dense surface.
pub fn reconstruct(
    lib: &ShapeLibrary,
    index: &LgiIndex,
    blend: &BlendModel,
    frames: &[TrackFrame],
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    index.check_library(lib)?;
    let unknown = unknown_bundles(lib, frames);
    if !unknown.is_empty() {
        return Err(Error::UnknownBundle(unknown.join(", ")));
    }
    let observed = frames
        .iter()
        .map(|f| Ok((f.frame, observations_by_bundle(lib, &f.bundles)?, f.jaw)))
        .collect::<Result<Vec<_>>>()?;
    let mut solutions = solve_track(lib, index, &observed, &opts.solver)?;
    if opts.window != 1 {
        solutions = smooth_track(lib, &solutions, opts.window, opts.solver.residual_tol)?;
    }
    let rbf: Option<BlendField> = match opts.method {
        BlendMethod::Rbf { sigma } => Some(blend.rbf_field(sigma)),
        _ => None,
    };
    let meshes = solutions
        .par_iter()
        .zip(&observed)
        .map(|(sol, (_, obs, jaw))| match opts.method {
            BlendMethod::Nn => blend_frame(lib, sol, &blend.nn),
            BlendMethod::Rbf { .. } => blend_frame(lib, sol, rbf.as_ref().expect("rbf field")),
            BlendMethod::Baseline => baseline_displacement_interp(lib, obs, jaw, &blend.nn),
            BlendMethod::Lsq => Ok(dense_from_weights(lib, &lsq_blendshape_weights(lib, obs, jaw)?, jaw)),
        })
        .collect::<Result<Vec<_>>>()?;
    let surface_residuals = meshes
        .iter()
        .zip(&observed)
        .map(|(m, (_, obs, _))| surface_residuals(lib, m, obs))
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstruction {
        solutions,
        meshes,
        surface_residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeRoundtrip {
    pub name: String,
    pub rms: f64,
    pub max: f64,
    /// Whether any bundle cloud still holds a point of this shape.
    pub reachable: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundtripReport {
    /// Absolute RMS tolerance.
    pub tolerance: f64,
    pub shapes: Vec<ShapeRoundtrip>,
    pub passed: bool,
}

impl RoundtripReport {
    pub fn failures(&self) -> impl Iterator<Item = &ShapeRoundtrip> {
        self.shapes.iter().filter(|s| !s.pass)
    }
}

/// Reconstruction of one dataset source from its own bundle positions.
pub fn reconstruct_source(lib: &ShapeLibrary, index: &LgiIndex, blend: &BlendModel, source: Source, cfg: &SolverConfig) -> Result<Vec<Vec3>> {
    let jaw = lib.jaw_pose(source);
    let w = ShapeWeights::single(source);
    let observed = (0..lib.bundles.len())
        .map(|b| eval_bundle(lib, b, &w, &jaw).map(Some))
        .collect::<Result<Vec<_>>>()?;
    let sol = solve_frame(lib, index, 0, &observed, &jaw, None, cfg)?;
    blend_frame(lib, &sol, &blend.nn)
}

/// Feeds every dataset shape (and the neutral) its own bundle positions and compares
/// the reconstruction with the shape. `tol` is the RMS bound in length units.
pub fn roundtrip(lib: &ShapeLibrary, index: &LgiIndex, blend: &BlendModel, tol: f64) -> Result<RoundtripReport> {
    index.check_library(lib)?;
    let cfg = SolverConfig::for_library(lib);
    let sources: Vec<Source> = std::iter::once(Source::Neutral)
        .chain((0..lib.shapes.len()).map(|i| Source::Shape(i as u32)))
        .collect();
    let shapes = sources
        .par_iter()
        .map(|&src| {
            let got = reconstruct_source(lib, index, blend, src, &cfg)?;
            let err = vertex_errors(&got, &lib.posed_positions(src))?;
            let rms = (err.iter().map(|e| e * e).sum::<f64>() / err.len().max(1) as f64).sqrt();
            let reachable = src == Source::Neutral || index.reaches(src);
            Ok(ShapeRoundtrip {
                name: lib.source_name(src).to_string(),
                rms,
                max: err.iter().copied().fold(0.0, f64::max),
                reachable,
                pass: reachable && rms <= tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RoundtripReport {
        tolerance: tol,
        passed: shapes.iter().all(|s| s.pass),
        shapes,
    })
}

/// Solves `frames`, adds the selected tets to the usage counts, and drops tets used
/// fewer than `min_usage` times. Returns the number of tets removed.
pub fn prune_by_usage(lib: &ShapeLibrary, index: &mut LgiIndex, frames: &[TrackFrame], min_usage: u64) -> Result<usize> {
    let unknown = unknown_bundles(lib, frames);
    if !unknown.is_empty() {
        return Err(Error::UnknownBundle(unknown.join(", ")));
    }
    let observed = frames
        .iter()
        .map(|f| Ok((f.frame, observations_by_bundle(lib, &f.bundles)?, f.jaw)))
        .collect::<Result<Vec<_>>>()?;
    let sols = solve_track(lib, index, &observed, &SolverConfig::for_library(lib))?;
    record_usage(index, &sols);
    Ok(index
        .bundles
        .iter_mut()
        .flat_map(|b| &mut b.clouds)
        .map(|c| c.prune(min_usage, &[]))
        .sum())
}
