//! From per-bundle shape weights to a dense surface: geodesic Voronoi cells of the
//! bundles, natural-neighbor weights, and per-vertex blending with jaw re-skinning.

pub mod cache;
pub mod fmm;
pub mod nn;
pub mod uv;
pub mod voronoi;

use rayon::prelude::*;

pub use fmm::{fast_march, Marcher};
pub use nn::{mesh_natural_neighbor_field, natural_neighbor_field, rbf_blend_field, BlendField, MeshGraph};
pub use uv::{rasterize_uv, UvGrid};
pub use voronoi::{adjacency_lists, cell_adjacency, voronoi_partition, write_label_pgm, write_pgm, VoronoiPartition};

use crate::error::{Error, Result};
use crate::jaw::{JawPose, Skinning};
use crate::library::{eval_bundle, ShapeLibrary, ShapeWeights};
use crate::mesh::{Vec3, TriMesh};
use crate::solver::FrameSolution;

pub const DEFAULT_RESOLUTION: usize = 512;

/// Where the Voronoi diagram and natural-neighbor insertion are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnMode {
    /// Texel lattice of the UV chart with fast-marched geodesics.
    Uv,
    /// Mesh vertex graph with Dijkstra distances.
    Mesh,
}

/// Intermediate UV-space products, kept for debugging images.
#[derive(Debug, Clone)]
pub struct UvProducts {
    pub grid: UvGrid,
    /// Per-bundle distance maps over covered texels.
    pub fields: Vec<Vec<f64>>,
    pub site_texels: Vec<usize>,
    pub vertex_texels: Vec<usize>,
    pub partition: VoronoiPartition,
}

/// Everything the blending stage needs, computed once on the neutral mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendModel {
    pub mode: NnMode,
    pub resolution: usize,
    pub nn: BlendField,
    /// Bundles whose Voronoi cells touch.
    pub adjacency: Vec<Vec<usize>>,
    /// `vertex_dist[b][v]`: geodesic distance from bundle `b` to vertex `v`.
    pub vertex_dist: Vec<Vec<f64>>,
    /// `site_dist[a][b]`: geodesic distance from bundle `a` to bundle `b`'s site.
    pub site_dist: Vec<Vec<f64>>,
    /// Longest 3D edge between lattice-adjacent texels (zero in mesh mode).
    pub quantization: f64,
}

/// Bundle ids sorted by name, the tie-break order of the partition.
pub fn name_order(lib: &ShapeLibrary) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lib.bundles.len()).collect();
    order.sort_by(|a, b| lib.bundles[*a].name.cmp(&lib.bundles[*b].name));
    order
}

/// Rasterizes the chart, marches from every bundle, and partitions the texels.
pub fn uv_products(lib: &ShapeLibrary, resolution: usize) -> Result<UvProducts> {
    if lib.bundles.is_empty() {
        return Err(Error::InvalidLibrary("no bundles".into()));
    }
    let mesh = &lib.neutral;
    let grid = rasterize_uv(mesh, resolution)?;
    let site_texels = lib
        .bundles
        .iter()
        .map(|b| Ok(grid.texel_at(&b.attach.uv(mesh)?)))
        .collect::<Result<Vec<_>>>()?;
    let vertex_texels = mesh.uvs.iter().map(|uv| grid.texel_at(uv)).collect();
    let fields: Vec<Vec<f64>> = site_texels.par_iter().map(|s| fast_march(&grid, *s)).collect();
    let partition = voronoi_partition(&fields, &name_order(lib))?;
    Ok(UvProducts {
        grid,
        fields,
        site_texels,
        vertex_texels,
        partition,
    })
}

fn texel_quantization(grid: &UvGrid) -> f64 {
    (0..grid.len())
        .flat_map(|t| grid.edge_neighbors(t).map(move |n| (t, n)))
        .map(|(t, n)| (grid.positions[t] - grid.positions[n]).norm())
        .fold(0.0, f64::max)
}

fn mesh_seeds(lib: &ShapeLibrary, b: usize) -> Result<Vec<(usize, f64)>> {
    let sp = &lib.bundles[b].attach;
    let p = crate::mesh::eval_surface_point(&lib.neutral.positions, &lib.neutral, sp)?;
    Ok(lib
        .neutral
        .face(sp.face)?
        .iter()
        .map(|v| (*v, (lib.neutral.positions[*v] - p).norm()))
        .collect())
}

impl BlendModel {
    pub fn build(lib: &ShapeLibrary, resolution: usize, mode: NnMode) -> Result<Self> {
        match mode {
            NnMode::Uv => Ok(Self::from_uv(lib, &uv_products(lib, resolution)?)),
            NnMode::Mesh => Self::build_mesh(lib),
        }
    }

    pub fn from_uv(lib: &ShapeLibrary, p: &UvProducts) -> Self {
        let n = lib.bundles.len();
        let nn = natural_neighbor_field(&p.grid, &p.partition, n, &p.vertex_texels);
        let adjacency = adjacency_lists(n, &cell_adjacency(&p.grid, &p.partition));
        let vertex_dist = p
            .fields
            .iter()
            .map(|f| p.vertex_texels.iter().map(|t| f[*t]).collect())
            .collect();
        let site_dist = p
            .fields
            .iter()
            .map(|f| p.site_texels.iter().map(|t| f[*t]).collect())
            .collect();
        BlendModel {
            mode: NnMode::Uv,
            resolution: p.grid.resolution,
            nn,
            adjacency,
            vertex_dist,
            site_dist,
            quantization: texel_quantization(&p.grid),
        }
    }

    fn build_mesh(lib: &ShapeLibrary) -> Result<Self> {
        let n = lib.bundles.len();
        if n == 0 {
            return Err(Error::InvalidLibrary("no bundles".into()));
        }
        let mesh = &lib.neutral;
        let graph = MeshGraph::new(mesh);
        let seeds = (0..n).map(|b| mesh_seeds(lib, b)).collect::<Result<Vec<_>>>()?;
        let vertex_dist: Vec<Vec<f64>> = seeds.par_iter().map(|s| graph.distances(s)).collect();
        let part = voronoi_partition(&vertex_dist, &name_order(lib))?;
        let nn = mesh_natural_neighbor_field(mesh, &graph, &part, n);
        let mut pairs: Vec<(usize, usize)> = mesh
            .edges()
            .into_iter()
            .map(|(a, b)| (part.owner[a as usize] as usize, part.owner[b as usize] as usize))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let site_dist = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        let sp = &lib.bundles[b].attach;
                        let f = mesh.face(sp.face)?;
                        Ok(f.iter().zip(sp.bary).map(|(v, w)| vertex_dist[a][*v] * w).sum())
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BlendModel {
            mode: NnMode::Mesh,
            resolution: 0,
            nn,
            adjacency: adjacency_lists(n, &pairs),
            vertex_dist,
            site_dist,
            quantization: 0.0,
        })
    }

    /// Median over bundles of the geodesic distance to the nearest other bundle.
    pub fn median_spacing(&self) -> f64 {
        let n = self.site_dist.len();
        let mut near: Vec<f64> = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|b| *b != a)
                    .map(|b| self.site_dist[a][b])
                    .fold(f64::INFINITY, f64::min)
            })
            .filter(|d| d.is_finite())
            .collect();
        if near.is_empty() {
            return 1.0;
        }
        near.sort_by(f64::total_cmp);
        near[near.len() / 2]
    }

    /// Gaussian-of-geodesic weights; `sigma` defaults to half the median bundle spacing.
    pub fn rbf_field(&self, sigma: Option<f64>) -> BlendField {
        rbf_blend_field(&self.vertex_dist, sigma.unwrap_or(0.5 * self.median_spacing()))
    }
}

/// Per-vertex shape weights: the field's bundle weights applied to each bundle's solution.
pub fn vertex_shape_weights(field: &BlendField, frame: &FrameSolution, v: usize) -> Result<ShapeWeights> {
    let terms = field.weights[v]
        .iter()
        .map(|(b, w)| {
            frame
                .per_bundle
                .get(*b as usize)
                .map(|s| (*w, &s.shape_weights))
                .ok_or_else(|| Error::UnknownBundle(format!("#{b} missing from frame {}", frame.frame)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShapeWeights::combine(terms))
}

/// Dense surface for a solved frame: `x = T(theta)(x0 + sum_n w_n b*_n)` per vertex.
pub fn blend_frame(lib: &ShapeLibrary, frame: &FrameSolution, field: &BlendField) -> Result<Vec<Vec3>> {
    if field.vertex_count() != lib.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: lib.vertex_count(),
            actual: field.vertex_count(),
        });
    }
    let skin = Skinning::new(&lib.jaw_model, &frame.jaw);
    (0..lib.vertex_count())
        .into_par_iter()
        .map(|v| {
            let w = vertex_shape_weights(field, frame, v)?;
            Ok(skin.at(lib.skin_weights[v]).apply(&lib.unskinned_vertex(v, &w)))
        })
        .collect()
}

/// Comparison baseline: the bundles' displacements from their jaw-skinned rest positions,
/// spread with the field's weights over the jaw-skinned neutral mesh.
pub fn baseline_displacement_interp(
    lib: &ShapeLibrary,
    observed: &[Option<Vec3>],
    jaw: &JawPose,
    field: &BlendField,
) -> Result<Vec<Vec3>> {
    let rest = ShapeWeights::neutral();
    let disp = observed
        .iter()
        .enumerate()
        .map(|(b, o)| match o {
            Some(p) => Ok(p - eval_bundle(lib, b, &rest, jaw)?),
            None => Ok(Vec3::zeros()),
        })
        .collect::<Result<Vec<_>>>()?;
    let skin = Skinning::new(&lib.jaw_model, jaw);
    (0..lib.vertex_count())
        .into_par_iter()
        .map(|v| {
            let base = skin.at(lib.skin_weights[v]).apply(&lib.neutral.positions[v]);
            field.weights[v].iter().try_fold(base, |acc, (b, w)| {
                disp.get(*b as usize)
                    .map(|d| acc + d * *w)
                    .ok_or_else(|| Error::UnknownBundle(format!("#{b}")))
            })
        })
        .collect()
}

/// Writes one grayscale image of a bundle's weight field, sampled per texel through the
/// mesh vertices (barycentric interpolation).
pub fn write_weight_pgm(
    path: impl AsRef<std::path::Path>,
    mesh: &TriMesh,
    grid: &UvGrid,
    field: &BlendField,
    bundle: usize,
) -> Result<()> {
    let per_vertex: Vec<f64> = (0..mesh.vertex_count()).map(|v| field.get(v, bundle)).collect();
    write_pgm(path, grid, |t| {
        let w = grid.samples[t].interpolate_scalar(mesh, &per_vertex).unwrap_or(0.0);
        (w.clamp(0.0, 1.0) * 255.0).round() as u8
    })
}

#[cfg(test)]
mod tests;
