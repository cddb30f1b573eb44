//! Per-bundle point clouds, their overlapping tetrahedra, and the point-location grid.

mod cloud;
mod grid;
pub mod io;
mod tets;

use rayon::prelude::*;

pub use cloud::{bin_clouds_by_jaw, build_cloud, jaw_bins, BundleCloud, CloudPoint, JawBin, PruneConfig};
pub use grid::UniformGrid;
pub use tets::{binomial4, enumerate_tets, QualityConfig, TetSet};

use crate::error::Result;
use crate::library::{ShapeLibrary, Source};
use crate::mesh::Vec3;
use crate::simplex::{clamp_convex, closest_point_on_simplex, tet_barycentric, Tetra, CONTAIN_TOL};

/// A tetrahedron containing the query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Position in the cloud's tet list.
    pub tet: u32,
    pub ids: [u32; 4],
    /// Clamped, renormalized barycentric weights.
    pub weights: [f64; 4],
}

/// Closest point of the indexed volume to a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Position in the cloud's tet list when the target is a tetrahedron.
    pub tet: Option<u32>,
    /// Cloud point ids of the simplex (1-4).
    pub ids: Vec<u32>,
    pub weights: Vec<f64>,
    pub point: Vec3,
    pub distance: f64,
}

/// One cloud with its tetrahedra, grid, and usage statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudIndex {
    pub cloud: BundleCloud,
    pub tets: TetSet,
    pub grid: UniformGrid,
    /// Times each tet was selected by the solver.
    pub usage: Vec<u64>,
    /// Tets excluded by hand (canonical ids).
    pub blacklist: Vec<Tetra>,
    positions: Vec<Vec3>,
    /// Axis-aligned bounds per tet, lower bounds for projection.
    boxes: Vec<(Vec3, Vec3)>,
}

fn tet_boxes(tets: &TetSet, positions: &[Vec3]) -> Vec<(Vec3, Vec3)> {
    tets.tets.iter().map(|t| crate::mesh::bbox(&t.corners(positions))).collect()
}

fn box_distance(p: &Vec3, (lo, hi): &(Vec3, Vec3)) -> f64 {
    Vec3::from_fn(|k, _| (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0)).norm()
}

/// Largest distance from `p` to a face plane it lies outside of; a lower bound on its
/// distance to the tet.
fn plane_distance(p: &Vec3, c: &[Vec3; 4]) -> f64 {
    let mut lb = 0.0f64;
    for i in 0..4 {
        let (a, b, d) = (c[(i + 1) % 4], c[(i + 2) % 4], c[(i + 3) % 4]);
        let n = (b - a).cross(&(d - a));
        let len = n.norm();
        if len == 0.0 {
            return 0.0;
        }
        // orient away from the opposite corner
        let side = n.dot(&(c[i] - a));
        let s = n.dot(&(p - a)) / len;
        lb = lb.max(if side > 0.0 { -s } else { s });
    }
    lb
}

impl CloudIndex {
    pub fn new(cloud: BundleCloud, quality: &QualityConfig, name: &str, blacklist: Vec<Tetra>) -> Result<Self> {
        let positions = cloud.positions();
        let mut tets = enumerate_tets(&positions, quality, name)?;
        if !blacklist.is_empty() {
            tets.retain(|t| !blacklist.contains(t));
        }
        Ok(Self::from_parts(cloud, tets, vec![], blacklist))
    }

    /// Assembles an index from precomputed parts; `usage` is zero-filled when empty.
    pub fn from_parts(cloud: BundleCloud, tets: TetSet, usage: Vec<u64>, blacklist: Vec<Tetra>) -> Self {
        let positions = cloud.positions();
        let grid = UniformGrid::build(&tets.tets, &positions);
        let usage = if usage.is_empty() { vec![0; tets.len()] } else { usage };
        CloudIndex {
            boxes: tet_boxes(&tets, &positions),
            cloud,
            tets,
            grid,
            usage,
            blacklist,
            positions,
        }
    }

    /// Reassembles an index whose grid was stored on disk.
    pub(crate) fn from_stored(
        cloud: BundleCloud,
        tets: TetSet,
        grid: UniformGrid,
        usage: Vec<u64>,
        blacklist: Vec<Tetra>,
    ) -> Self {
        let positions = cloud.positions();
        CloudIndex {
            boxes: tet_boxes(&tets, &positions),
            cloud,
            tets,
            grid,
            usage,
            blacklist,
            positions,
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn diagonal(&self) -> f64 {
        self.cloud.diagonal()
    }

    fn candidate(&self, ti: usize, p: &Vec3, tol: f64) -> Option<Candidate> {
        let tet = self.tets.tets[ti];
        let w = tet_barycentric(p, &tet.corners(&self.positions)).ok()?;
        w.iter().all(|x| *x >= -tol).then(|| Candidate {
            tet: ti as u32,
            ids: tet.ids(),
            weights: clamp_convex(w),
        })
    }

    /// All tets containing `p` (within the default tolerance), in canonical order.
    pub fn query_containing(&self, p: &Vec3) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = self
            .grid
            .candidates(p)
            .iter()
            .filter_map(|&ti| self.candidate(ti as usize, p, CONTAIN_TOL))
            .collect();
        out.sort_by_key(|c| c.tet);
        out
    }

    /// Same as [`query_containing`](Self::query_containing) without the grid.
    pub fn query_containing_brute(&self, p: &Vec3) -> Vec<Candidate> {
        (0..self.tets.len())
            .filter_map(|ti| self.candidate(ti, p, CONTAIN_TOL))
            .collect()
    }

    /// Every closest simplex whose distance is within `tie_tol` of the minimum, nearest
    /// first and then in canonical order. Tets are treated as solids; without tets the
    /// cloud's triangles, edges and points are used.
    pub fn project_ties(&self, p: &Vec3, tie_tol: f64) -> Vec<Projection> {
        let all: Vec<Projection> = if self.tets.is_empty() {
            self.lower_simplices()
                .into_iter()
                .map(|ids| {
                    let verts: Vec<Vec3> = ids.iter().map(|i| self.positions[*i as usize]).collect();
                    let (x, w) = closest_point_on_simplex(p, &verts);
                    Projection {
                        tet: None,
                        weights: w[..ids.len()].to_vec(),
                        ids,
                        point: x,
                        distance: (x - p).norm(),
                    }
                })
                .collect()
        } else {
            // tets in the query's grid cell give a tight bound; the full scan then only
            // projects onto tets whose box is not already too far
            let mut best = f64::INFINITY;
            let margin = 1e-12 * self.diagonal();
            let mut seen = vec![false; self.tets.len()];
            let mut found = Vec::new();
            let cell = self.grid.candidates(p).iter().map(|t| *t as usize);
            for ti in cell.chain(0..self.tets.len()) {
                if seen[ti] || box_distance(p, &self.boxes[ti]) > best + tie_tol {
                    continue;
                }
                seen[ti] = true;
                let t = self.tets.tets[ti];
                let corners = t.corners(&self.positions);
                // margin keeps rounding in the bound from dropping a true tie
                if plane_distance(p, &corners) > (best + tie_tol) * (1.0 + 1e-9) + margin {
                    continue;
                }
                let (x, w) = closest_point_on_simplex(p, &corners);
                let distance = (x - p).norm();
                best = best.min(distance);
                if distance <= best + tie_tol {
                    found.push(Projection {
                        tet: Some(ti as u32),
                        ids: t.ids().to_vec(),
                        weights: w.to_vec(),
                        point: x,
                        distance,
                    });
                }
            }
            found
        };
        let best = all.iter().map(|c| c.distance).fold(f64::INFINITY, f64::min);
        let mut ties: Vec<Projection> = all.into_iter().filter(|c| c.distance <= best + tie_tol).collect();
        ties.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.ids.cmp(&b.ids)));
        ties
    }

    /// Nearest point of the indexed volume.
    pub fn project(&self, p: &Vec3) -> Projection {
        self.project_ties(p, 0.0).swap_remove(0)
    }

    fn lower_simplices(&self) -> Vec<Vec<u32>> {
        let n = self.positions.len() as u32;
        match n {
            0 => vec![],
            1 => vec![vec![0]],
            2 => vec![vec![0, 1]],
            _ => {
                let mut out = Vec::new();
                for a in 0..n {
                    for b in a + 1..n {
                        for c in b + 1..n {
                            out.push(vec![a, b, c]);
                        }
                    }
                }
                out
            }
        }
    }

    /// Nearest cloud point within `eps` of `p`, if any.
    pub fn coincident_point(&self, p: &Vec3, eps: f64) -> Option<usize> {
        self.positions
            .iter()
            .enumerate()
            .map(|(i, q)| (i, (q - p).norm()))
            .filter(|(_, d)| *d <= eps)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    pub fn record_usage(&mut self, tet: u32) {
        self.usage[tet as usize] += 1;
    }

    /// Drops blacklisted tets and tets selected fewer than `min_usage` times.
    pub fn prune(&mut self, min_usage: u64, blacklist: &[Tetra]) -> usize {
        for t in blacklist {
            if !self.blacklist.contains(t) {
                self.blacklist.push(*t);
            }
        }
        self.blacklist.sort();
        let before = self.tets.len();
        let keep: Vec<bool> = self
            .tets
            .tets
            .iter()
            .zip(&self.usage)
            .map(|(t, u)| *u >= min_usage && self.blacklist.binary_search(t).is_err())
            .collect();
        let mut it = keep.iter();
        self.tets.retain(|_| *it.next().unwrap());
        self.usage = self.usage.iter().zip(&keep).filter(|(_, k)| **k).map(|(u, _)| *u).collect();
        self.grid = UniformGrid::build(&self.tets.tets, &self.positions);
        self.boxes = tet_boxes(&self.tets, &self.positions);
        before - self.tets.len()
    }
}

/// All clouds of one bundle (one per jaw bin).
#[derive(Debug, Clone, PartialEq)]
pub struct BundleIndex {
    pub bundle: usize,
    pub name: String,
    pub clouds: Vec<CloudIndex>,
}

impl BundleIndex {
    /// Cloud whose jaw bin contains `rot` (the only cloud when unbinned).
    pub fn cloud_for(&self, rot: f64) -> usize {
        self.clouds
            .iter()
            .position(|c| c.cloud.jaw_bin.map_or(true, |b| b.contains(rot)))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexConfig {
    pub min_disp_frac: f64,
    pub dedupe_frac: f64,
    pub quality: QualityConfig,
    /// Ascending jaw-rotation breakpoints; empty for a single cloud per bundle.
    pub jaw_bin_edges: Vec<f64>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            min_disp_frac: PruneConfig::MIN_DISP_FRAC,
            dedupe_frac: PruneConfig::DEDUPE_FRAC,
            quality: QualityConfig::default(),
            jaw_bin_edges: vec![],
        }
    }
}

/// The full index over a library.
#[derive(Debug, Clone, PartialEq)]
pub struct LgiIndex {
    pub prune: PruneConfig,
    pub quality: QualityConfig,
    pub jaw_bin_edges: Vec<f64>,
    pub shape_names: Vec<String>,
    pub bundles: Vec<BundleIndex>,
}

impl LgiIndex {
    /// Builds every bundle's clouds and tets in parallel. `adjacency[b]` lists the
    /// neighbors of bundle `b`.
    pub fn build(lib: &ShapeLibrary, adjacency: &[Vec<usize>], cfg: &IndexConfig) -> Result<Self> {
        let prune = PruneConfig::from_fractions(lib, cfg.min_disp_frac, cfg.dedupe_frac);
        let bundles = (0..lib.bundles.len())
            .into_par_iter()
            .map(|b| {
                let name = lib.bundles[b].name.clone();
                let neighbors = adjacency.get(b).cloned().unwrap_or_default();
                let clouds = bin_clouds_by_jaw(lib, b, &neighbors, &prune, &cfg.jaw_bin_edges)?
                    .into_iter()
                    .map(|c| CloudIndex::new(c, &cfg.quality, &name, vec![]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(BundleIndex { bundle: b, name, clouds })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LgiIndex {
            prune,
            quality: cfg.quality,
            jaw_bin_edges: cfg.jaw_bin_edges.clone(),
            shape_names: lib.shapes.iter().map(|s| s.name.clone()).collect(),
            bundles,
        })
    }

    /// Removes every point of `source` from all clouds and re-enumerates their tets.
    /// Usage counts and blacklists refer to old point ids and are reset. Returns the
    /// number of points removed.
    pub fn remove_source(&mut self, source: Source) -> Result<usize> {
        if source == Source::Neutral {
            return Err(crate::Error::InvalidArgument("the neutral point cannot be removed".into()));
        }
        let mut removed = 0;
        for b in &mut self.bundles {
            for c in &mut b.clouds {
                let before = c.cloud.points.len();
                if c.cloud.sources().all(|s| s != source) {
                    continue;
                }
                let mut cloud = c.cloud.clone();
                cloud.points.retain(|p| p.source != source);
                removed += before - cloud.points.len();
                *c = CloudIndex::new(cloud, &self.quality, &b.name, vec![])?;
            }
        }
        Ok(removed)
    }

    /// True when some cloud still holds a point of `source`.
    pub fn reaches(&self, source: Source) -> bool {
        self.bundles
            .iter()
            .flat_map(|b| &b.clouds)
            .any(|c| c.cloud.sources().any(|s| s == source))
    }

    /// Checks that the index was built from a library with the same shapes and bundles.
    pub fn check_library(&self, lib: &ShapeLibrary) -> Result<()> {
        let names: Vec<&str> = lib.shapes.iter().map(|s| s.name.as_str()).collect();
        if names != self.shape_names.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(crate::Error::InvalidIndex("shape list differs from the library".into()));
        }
        if self.bundles.len() != lib.bundles.len()
            || self.bundles.iter().zip(&lib.bundles).any(|(b, d)| b.name != d.name)
        {
            return Err(crate::Error::InvalidIndex("bundle list differs from the library".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
