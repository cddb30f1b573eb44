//! Per-frame selection of shape weights for every bundle.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{BundleIndex, CloudIndex, LgiIndex};
use crate::jaw::JawPose;
use crate::library::{eval_bundle, unskin_point, ShapeLibrary, ShapeWeights};
use crate::mesh::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Rank candidates sharing more points with the previous frame's simplex first.
    pub temporal: bool,
    /// Use the neighbor-distance criterion as the second ranking key.
    pub neighbor_score: bool,
    /// Projection targets within this fraction of the cloud diagonal count as ties.
    pub tie_frac: f64,
    /// Residuals above this (length units) mark a bundle as projected.
    pub residual_tol: f64,
}

impl SolverConfig {
    pub fn for_library(lib: &ShapeLibrary) -> Self {
        SolverConfig {
            temporal: true,
            neighbor_score: true,
            tie_frac: 1e-9,
            residual_tol: 1e-9 * lib.diagonal(),
        }
    }
}

/// How a bundle's weights were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Coincided with a cloud point.
    Snapped,
    /// Inside at least one tetrahedron.
    Contained,
    /// Outside the data; moved to the nearest simplex.
    Projected,
    /// Not observed in the frame.
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleSolution {
    pub bundle: usize,
    /// Which of the bundle's clouds (jaw bins) was used.
    pub cloud: usize,
    /// Cloud point ids (1-4).
    pub simplex: Vec<u32>,
    pub weights_on_points: Vec<f64>,
    /// Selected tetrahedron, if any.
    pub tet: Option<u32>,
    pub shape_weights: ShapeWeights,
    pub selection: Selection,
    pub projected: bool,
    pub residual: f64,
    /// Unskinned observed position.
    pub target: Option<Vec3>,
}

impl BundleSolution {
    fn missing(bundle: usize, index: &BundleIndex) -> Self {
        let neutral = index.clouds[0].cloud.neutral_point() as u32;
        BundleSolution {
            bundle,
            cloud: 0,
            simplex: vec![neutral],
            weights_on_points: vec![1.0],
            tet: None,
            shape_weights: ShapeWeights::neutral(),
            selection: Selection::Missing,
            projected: false,
            residual: 0.0,
            target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    pub frame: usize,
    /// Library bundle order.
    pub per_bundle: Vec<BundleSolution>,
    pub jaw: JawPose,
}

/// RMS distance between the neighbors' observed positions and where the candidate
/// weights would put them. Unobserved neighbors are skipped.
pub fn neighbor_score(cloud: &CloudIndex, simplex: &[u32], weights: &[f64], observed: &[Option<Vec3>]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, nb) in cloud.cloud.neighbors.iter().enumerate() {
        let Some(obs) = observed.get(*nb).copied().flatten() else {
            continue;
        };
        let est = simplex
            .iter()
            .zip(weights)
            .fold(Vec3::zeros(), |acc, (i, w)| acc + cloud.cloud.points[*i as usize].neighbor_evals[k] * *w);
        sum += (est - obs).norm_squared();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Number of cloud points shared with the previous simplex (0 without one, or when the
/// previous frame used a different cloud).
pub fn temporal_priority(simplex: &[u32], cloud: usize, prev: Option<&BundleSolution>) -> usize {
    match prev {
        Some(p) if p.cloud == cloud && p.selection != Selection::Missing => {
            simplex.iter().filter(|i| p.simplex.contains(i)).count()
        }
        _ => 0,
    }
}

struct Choice {
    simplex: Vec<u32>,
    weights: Vec<f64>,
    tet: Option<u32>,
    selection: Selection,
    distance: f64,
}

/// Orders `(simplex, weights, canonical key)` candidates by temporal priority (desc),
/// neighbor score (asc), then key (asc) and returns the winner's position.
fn rank<'a>(
    cands: impl Iterator<Item = (&'a [u32], &'a [f64], Vec<u32>)>,
    cloud: &CloudIndex,
    cloud_id: usize,
    observed: &[Option<Vec3>],
    prev: Option<&BundleSolution>,
    cfg: &SolverConfig,
) -> Option<usize> {
    cands
        .enumerate()
        .map(|(i, (s, w, key))| {
            let prio = if cfg.temporal { temporal_priority(s, cloud_id, prev) } else { 0 };
            let score = if cfg.neighbor_score { neighbor_score(cloud, s, w, observed) } else { 0.0 };
            (i, prio, score, key)
        })
        .min_by(|a, b| {
            b.1.cmp(&a.1)
                .then_with(|| a.2.total_cmp(&b.2))
                .then_with(|| a.3.cmp(&b.3))
        })
        .map(|c| c.0)
}

fn choose_in_cloud(
    cloud: &CloudIndex,
    cloud_id: usize,
    p: &Vec3,
    snap_eps: f64,
    observed: &[Option<Vec3>],
    prev: Option<&BundleSolution>,
    cfg: &SolverConfig,
) -> Choice {
    if let Some(i) = cloud.coincident_point(p, snap_eps) {
        return Choice {
            simplex: vec![i as u32],
            weights: vec![1.0],
            tet: None,
            selection: Selection::Snapped,
            distance: (cloud.positions()[i] - p).norm(),
        };
    }
    let contained = cloud.query_containing(p);
    if !contained.is_empty() {
        let best = rank(
            contained.iter().map(|c| (&c.ids[..], &c.weights[..], vec![c.tet])),
            cloud,
            cloud_id,
            observed,
            prev,
            cfg,
        )
        .unwrap();
        let c = &contained[best];
        return Choice {
            simplex: c.ids.to_vec(),
            weights: c.weights.to_vec(),
            tet: Some(c.tet),
            selection: Selection::Contained,
            distance: 0.0,
        };
    }
    let ties = cloud.project_ties(p, cfg.tie_frac * cloud.diagonal());
    let best = rank(
        ties.iter().map(|t| (&t.ids[..], &t.weights[..], t.ids.clone())),
        cloud,
        cloud_id,
        observed,
        prev,
        cfg,
    )
    .expect("cloud without points");
    let t = &ties[best];
    Choice {
        simplex: t.ids.clone(),
        weights: t.weights.clone(),
        tet: t.tet,
        selection: Selection::Projected,
        distance: t.distance,
    }
}

/// Picks weights for one bundle at unskinned position `p`. `observed` holds the same
/// frame's unskinned positions of every bundle (library order).
pub fn select_candidate(
    index: &BundleIndex,
    snap_eps: f64,
    p: &Vec3,
    jaw_rot: f64,
    observed: &[Option<Vec3>],
    prev: Option<&BundleSolution>,
    cfg: &SolverConfig,
) -> BundleSolution {
    let first = index.cloud_for(jaw_rot);
    let mut order = vec![first];
    order.extend((0..index.clouds.len()).filter(|c| *c != first));
    let mut best: Option<(usize, Choice)> = None;
    for c in order {
        let choice = choose_in_cloud(&index.clouds[c], c, p, snap_eps, observed, prev, cfg);
        let done = choice.selection != Selection::Projected;
        if best.as_ref().map_or(true, |(_, b)| done || choice.distance < b.distance) {
            best = Some((c, choice));
        }
        if done {
            break;
        }
    }
    let (cloud_id, choice) = best.expect("bundle without clouds");
    let cloud = &index.clouds[cloud_id];
    let shape_weights = ShapeWeights::from_pairs(
        choice
            .simplex
            .iter()
            .zip(&choice.weights)
            .map(|(i, w)| (cloud.cloud.points[*i as usize].source, *w)),
    );
    let recon = choice
        .simplex
        .iter()
        .zip(&choice.weights)
        .fold(Vec3::zeros(), |acc, (i, w)| acc + cloud.positions()[*i as usize] * *w);
    let residual = (recon - p).norm();
    BundleSolution {
        bundle: index.bundle,
        cloud: cloud_id,
        simplex: choice.simplex,
        weights_on_points: choice.weights,
        tet: choice.tet,
        shape_weights,
        selection: choice.selection,
        projected: residual > cfg.residual_tol,
        residual,
        target: Some(*p),
    }
}

/// Maps `(bundle name, position)` pairs to library order, rejecting unknown names
/// (all of them are listed).
pub fn observations_by_bundle(lib: &ShapeLibrary, bundles: &[(String, Vec3)]) -> Result<Vec<Option<Vec3>>> {
    let mut out = vec![None; lib.bundles.len()];
    let mut unknown = Vec::new();
    for (name, p) in bundles {
        match lib.bundle_index(name) {
            Some(b) => out[b] = Some(*p),
            None => unknown.push(name.as_str()),
        }
    }
    if !unknown.is_empty() {
        unknown.sort_unstable();
        unknown.dedup();
        return Err(Error::UnknownBundle(unknown.join(", ")));
    }
    Ok(out)
}

/// Solves one frame. `observed` holds skinned bundle positions in library order.
pub fn solve_frame(
    lib: &ShapeLibrary,
    index: &LgiIndex,
    frame: usize,
    observed: &[Option<Vec3>],
    jaw: &JawPose,
    prev: Option<&FrameSolution>,
    cfg: &SolverConfig,
) -> Result<FrameSolution> {
    if observed.len() != lib.bundles.len() {
        return Err(Error::LengthMismatch {
            expected: lib.bundles.len(),
            actual: observed.len(),
        });
    }
    jaw.validate()?;
    let unskinned = observed
        .iter()
        .enumerate()
        .map(|(b, o)| o.map(|p| unskin_point(lib, &lib.bundles[b].attach, &p, jaw)).transpose())
        .collect::<Result<Vec<_>>>()?;
    let per_bundle = index
        .bundles
        .par_iter()
        .enumerate()
        .map(|(b, bi)| match &unskinned[b] {
            None => Ok(BundleSolution::missing(b, bi)),
            Some(p) => Ok(select_candidate(
                bi,
                index.prune.dedupe_eps,
                p,
                jaw.rot,
                &unskinned,
                prev.map(|f| &f.per_bundle[b]),
                cfg,
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSolution {
        frame,
        per_bundle,
        jaw: *jaw,
    })
}

/// Solves a sequence in order, feeding each frame's result to the next.
pub fn solve_track(
    lib: &ShapeLibrary,
    index: &LgiIndex,
    frames: &[(usize, Vec<Option<Vec3>>, JawPose)],
    cfg: &SolverConfig,
) -> Result<Vec<FrameSolution>> {
    let mut out: Vec<FrameSolution> = Vec::with_capacity(frames.len());
    for (frame, obs, jaw) in frames {
        let sol = solve_frame(lib, index, *frame, obs, jaw, out.last(), cfg)?;
        out.push(sol);
    }
    Ok(out)
}

/// Adds every selected tetrahedron to the index's usage counters.
pub fn record_usage(index: &mut LgiIndex, frames: &[FrameSolution]) {
    for f in frames {
        for s in &f.per_bundle {
            if let Some(t) = s.tet {
                index.bundles[s.bundle].clouds[s.cloud].record_usage(t);
            }
        }
    }
}

/// Number of simplex points that change between consecutive frames, summed over bundles.
pub fn simplex_changes(frames: &[FrameSolution]) -> usize {
    frames
        .windows(2)
        .map(|w| {
            w[0].per_bundle
                .iter()
                .zip(&w[1].per_bundle)
                .map(|(a, b)| {
                    if a.cloud != b.cloud {
                        b.simplex.len()
                    } else {
                        b.simplex.iter().filter(|i| !a.simplex.contains(i)).count()
                    }
                })
                .sum::<usize>()
        })
        .sum()
}

/// Central moving average of every bundle's shape weights over `window` frames
/// (truncated at the ends), renormalized. Jaw poses are left alone; residuals are
/// recomputed against the stored targets.
pub fn smooth_track(
    lib: &ShapeLibrary,
    frames: &[FrameSolution],
    window: usize,
    residual_tol: f64,
) -> Result<Vec<FrameSolution>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("smoothing window must be odd, got {window}")));
    }
    if window == 1 {
        return Ok(frames.to_vec());
    }
    let half = window / 2;
    let n = frames.len();
    let n_bundles = frames.first().map_or(0, |f| f.per_bundle.len());
    let smoothed: Vec<Vec<BundleSolution>> = (0..n_bundles)
        .into_par_iter()
        .map(|b| {
            (0..n)
                .map(|t| {
                    let lo = t.saturating_sub(half);
                    let hi = (t + half).min(n - 1);
                    let k = (hi - lo + 1) as f64;
                    let w = ShapeWeights::combine(
                        frames[lo..=hi].iter().map(|f| (1.0 / k, &f.per_bundle[b].shape_weights)),
                    )
                    .normalized();
                    let mut s = frames[t].per_bundle[b].clone();
                    if let Some(target) = s.target {
                        s.residual = (eval_bundle(lib, b, &w, &JawPose::REST)? - target).norm();
                        s.projected = s.residual > residual_tol;
                    }
                    s.shape_weights = w;
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n)
        .map(|t| FrameSolution {
            frame: frames[t].frame,
            per_bundle: smoothed.iter().map(|b| b[t].clone()).collect(),
            jaw: frames[t].jaw,
        })
        .collect())
}

#[derive(Serialize)]
struct BundleDump<'a> {
    bundle: &'a str,
    cloud: usize,
    simplex: &'a [u32],
    weights: &'a [f64],
    tet: Option<u32>,
    shape_weights: Vec<(&'a str, f64)>,
    selection: Selection,
    projected: bool,
    residual: f64,
}

#[derive(Serialize)]
struct FrameDump<'a> {
    frame: usize,
    jaw: JawPose,
    bundles: Vec<BundleDump<'a>>,
}

/// Debug dump: one JSON object per frame.
pub fn solutions_to_json(lib: &ShapeLibrary, frames: &[FrameSolution]) -> serde_json::Value {
    let dumps: Vec<FrameDump> = frames
        .iter()
        .map(|f| FrameDump {
            frame: f.frame,
            jaw: f.jaw,
            bundles: f
                .per_bundle
                .iter()
                .map(|s| BundleDump {
                    bundle: &lib.bundles[s.bundle].name,
                    cloud: s.cloud,
                    simplex: &s.simplex,
                    weights: &s.weights_on_points,
                    tet: s.tet,
                    shape_weights: s.shape_weights.iter().map(|(src, w)| (lib.source_name(src), w)).collect(),
                    selection: s.selection,
                    projected: s.projected,
                    residual: s.residual,
                })
                .collect(),
        })
        .collect();
    serde_json::to_value(dumps).expect("serializable")
}
