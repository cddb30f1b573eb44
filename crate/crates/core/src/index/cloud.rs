use crate::error::Result;
use crate::jaw::JawPose;
use crate::library::{eval_bundle, ShapeLibrary, ShapeWeights, Source};
use crate::mesh::Vec3;

/// Thresholds for dropping redundant points from a bundle's cloud (absolute lengths).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    /// Shapes that move the bundle less than this are left out.
    pub min_disp: f64,
    /// Points closer than this to an earlier point are merged into it.
    pub dedupe_eps: f64,
}

impl PruneConfig {
    pub const MIN_DISP_FRAC: f64 = 1e-3;
    pub const DEDUPE_FRAC: f64 = 1e-4;

    pub fn for_library(lib: &ShapeLibrary) -> Self {
        Self::from_fractions(lib, Self::MIN_DISP_FRAC, Self::DEDUPE_FRAC)
    }

    pub fn from_fractions(lib: &ShapeLibrary, min_disp_frac: f64, dedupe_frac: f64) -> Self {
        let d = lib.diagonal();
        PruneConfig {
            min_disp: min_disp_frac * d,
            dedupe_eps: dedupe_frac * d,
        }
    }
}

/// Range of jaw rotations covered by a cloud: `[lo, hi)`, or `[lo, hi]` for the last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JawBin {
    pub lo: f64,
    pub hi: f64,
    pub closed_hi: bool,
}

impl JawBin {
    pub fn contains(&self, rot: f64) -> bool {
        rot >= self.lo && (rot < self.hi || (self.closed_hi && rot <= self.hi))
    }
}

/// Splits the real line at ascending `edges` into closed-open intervals, the last closed.
pub fn jaw_bins(edges: &[f64]) -> Vec<JawBin> {
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend_from_slice(edges);
    bounds.push(f64::INFINITY);
    let n = bounds.len() - 1;
    (0..n)
        .map(|i| JawBin {
            lo: bounds[i],
            hi: bounds[i + 1],
            closed_hi: i + 1 == n,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub source: Source,
    /// Unskinned bundle position on the source shape.
    pub pos: Vec3,
    /// Unskinned positions of the neighboring bundles on the same shape, aligned with
    /// [`BundleCloud::neighbors`].
    pub neighbor_evals: Vec<Vec3>,
}

/// Positions one bundle takes across the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleCloud {
    pub bundle: usize,
    /// Neighboring bundle ids (library order).
    pub neighbors: Vec<usize>,
    pub points: Vec<CloudPoint>,
    pub jaw_bin: Option<JawBin>,
}

impl BundleCloud {
    pub fn positions(&self) -> Vec<Vec3> {
        self.points.iter().map(|p| p.pos).collect()
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = crate::mesh::bbox(&self.positions());
        (hi - lo).norm()
    }

    pub fn sources(&self) -> impl Iterator<Item = Source> + '_ {
        self.points.iter().map(|p| p.source)
    }

    /// Index of the neutral point (always present).
    pub fn neutral_point(&self) -> usize {
        self.points
            .iter()
            .position(|p| p.source == Source::Neutral)
            .expect("cloud without neutral point")
    }
}

fn shape_relevant(lib: &ShapeLibrary, bundle: usize, shape: usize, cfg: &PruneConfig) -> Result<bool> {
    let s = &lib.shapes[shape];
    let b = &lib.bundles[bundle];
    // an empty tag set on either side matches every region
    if !s.tags.is_empty() && !b.region_tags.is_empty() && s.tags.is_disjoint(&b.region_tags) {
        return Ok(false);
    }
    // measured where the cloud lives, before jaw skinning
    let f = lib.neutral.face(b.attach.face)?;
    let disp = f
        .iter()
        .zip(b.attach.bary)
        .fold(Vec3::zeros(), |acc, (v, w)| acc + s.disp_unskinned[*v] * w);
    Ok(disp.norm() >= cfg.min_disp)
}

fn cloud_point(lib: &ShapeLibrary, bundle: usize, neighbors: &[usize], source: Source) -> Result<CloudPoint> {
    let w = ShapeWeights::single(source);
    Ok(CloudPoint {
        source,
        pos: eval_bundle(lib, bundle, &w, &JawPose::REST)?,
        neighbor_evals: neighbors
            .iter()
            .map(|nb| eval_bundle(lib, *nb, &w, &JawPose::REST))
            .collect::<Result<_>>()?,
    })
}

fn build_filtered(
    lib: &ShapeLibrary,
    bundle: usize,
    neighbors: &[usize],
    cfg: &PruneConfig,
    jaw_bin: Option<JawBin>,
) -> Result<BundleCloud> {
    let mut points = vec![cloud_point(lib, bundle, neighbors, Source::Neutral)?];
    for (i, shape) in lib.shapes.iter().enumerate() {
        if let Some(bin) = &jaw_bin {
            if !bin.contains(shape.jaw.rot) {
                continue;
            }
        }
        if !shape_relevant(lib, bundle, i, cfg)? {
            continue;
        }
        let p = cloud_point(lib, bundle, neighbors, Source::Shape(i as u32))?;
        if points.iter().all(|q| (q.pos - p.pos).norm() >= cfg.dedupe_eps) {
            points.push(p);
        }
    }
    Ok(BundleCloud {
        bundle,
        neighbors: neighbors.to_vec(),
        points,
        jaw_bin,
    })
}

/// Evaluates the bundle on every relevant shape (unskinned), dropping shapes from other
/// regions, shapes that barely move the bundle, and near-duplicate points. The neutral
/// point is always first.
pub fn build_cloud(lib: &ShapeLibrary, bundle: usize, neighbors: &[usize], cfg: &PruneConfig) -> Result<BundleCloud> {
    build_filtered(lib, bundle, neighbors, cfg, None)
}

/// One cloud per jaw-rotation interval. All positions stay unskinned to the rest pose and
/// the neutral point is part of every bin.
pub fn bin_clouds_by_jaw(
    lib: &ShapeLibrary,
    bundle: usize,
    neighbors: &[usize],
    cfg: &PruneConfig,
    bin_edges: &[f64],
) -> Result<Vec<BundleCloud>> {
    if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(crate::Error::InvalidArgument(format!(
            "jaw bin edges must be strictly ascending: {bin_edges:?}"
        )));
    }
    if bin_edges.is_empty() {
        return Ok(vec![build_cloud(lib, bundle, neighbors, cfg)?]);
    }
    jaw_bins(bin_edges)
        .into_iter()
        .map(|bin| build_filtered(lib, bundle, neighbors, cfg, Some(bin)))
        .collect()
}
