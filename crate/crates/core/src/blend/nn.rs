use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::fmm::Marcher;
use super::uv::UvGrid;
use super::voronoi::VoronoiPartition;
use crate::mesh::TriMesh;

/// Sparse per-vertex weights over bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendField {
    /// Per vertex: `(bundle, weight)` sorted by bundle, weights summing to 1.
    pub weights: Vec<Vec<(u32, f64)>>,
    /// Vertices that stole no area and fell back to their nearest bundle.
    pub flagged: Vec<usize>,
}

impl BlendField {
    pub fn get(&self, v: usize, bundle: usize) -> f64 {
        self.weights[v]
            .binary_search_by_key(&(bundle as u32), |e| e.0)
            .map_or(0.0, |i| self.weights[v][i].1)
    }

    pub fn vertex_count(&self) -> usize {
        self.weights.len()
    }
}

fn normalize(stolen: &[f64]) -> Vec<(u32, f64)> {
    let total: f64 = stolen.iter().sum();
    stolen
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 0.0)
        .map(|(b, a)| (b as u32, a / total))
        .collect()
}

/// Discrete natural-neighbor weights on the UV lattice: each vertex is inserted as a new
/// site at `vertex_texels[v]`, and the 3D area it steals from every existing cell is
/// normalized. Only texels closer to the vertex than to their owner are marched, since
/// that region is connected to the vertex through itself.
pub fn natural_neighbor_field(
    grid: &UvGrid,
    part: &VoronoiPartition,
    n_sites: usize,
    vertex_texels: &[usize],
) -> BlendField {
    let results: Vec<(Vec<(u32, f64)>, bool)> = vertex_texels
        .par_iter()
        .map_init(
            || (Marcher::new(grid.len()), vec![0.0; n_sites]),
            |(marcher, stolen), &t0| {
                if part.dist[t0] == 0.0 {
                    return (vec![(part.owner[t0], 1.0)], false);
                }
                stolen.iter_mut().for_each(|s| *s = 0.0);
                marcher.run(
                    grid,
                    &[(t0, 0.0)],
                    |t, d| d < part.dist[t],
                    |t, _| stolen[part.owner[t] as usize] += grid.areas[t],
                );
                if stolen.iter().all(|a| *a == 0.0) {
                    return (vec![(part.owner[t0], 1.0)], true);
                }
                (normalize(stolen), false)
            },
        )
        .collect();
    collect_field(results)
}

fn collect_field(results: Vec<(Vec<(u32, f64)>, bool)>) -> BlendField {
    let flagged: Vec<usize> = results.iter().enumerate().filter(|r| r.1 .1).map(|r| r.0).collect();
    if !flagged.is_empty() {
        log::warn!("{} vertices stole no area and use their nearest bundle", flagged.len());
    }
    BlendField {
        weights: results.into_iter().map(|r| r.0).collect(),
        flagged,
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, u32);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Vertex adjacency with edge lengths.
pub struct MeshGraph {
    pub adj: Vec<Vec<(u32, f64)>>,
}

impl MeshGraph {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut adj = vec![Vec::new(); mesh.vertex_count()];
        for (a, b) in mesh.edges() {
            let l = (mesh.positions[a as usize] - mesh.positions[b as usize]).norm();
            adj[a as usize].push((b, l));
            adj[b as usize].push((a, l));
        }
        MeshGraph { adj }
    }

    /// Dijkstra from several seeds; `accept` can stop expansion at a vertex.
    pub fn dijkstra(
        &self,
        seeds: &[(usize, f64)],
        mut accept: impl FnMut(usize, f64) -> bool,
        mut visit: impl FnMut(usize, f64),
    ) {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for &(s, d) in seeds {
            if d < dist[s] {
                dist[s] = d;
                heap.push(Item(d, s as u32));
            }
        }
        while let Some(Item(d, v)) = heap.pop() {
            let v = v as usize;
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            if !accept(v, d) {
                continue;
            }
            visit(v, d);
            for &(u, l) in &self.adj[v] {
                let nd = d + l;
                if !done[u as usize] && nd < dist[u as usize] {
                    dist[u as usize] = nd;
                    heap.push(Item(nd, u));
                }
            }
        }
    }

    pub fn distances(&self, seeds: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.adj.len()];
        self.dijkstra(seeds, |_, _| true, |v, d| out[v] = d);
        out
    }
}

/// Natural-neighbor weights on the vertex graph: Voronoi cells and stolen regions are
/// sets of vertices, measured with their lumped areas.
pub fn mesh_natural_neighbor_field(mesh: &TriMesh, graph: &MeshGraph, part: &VoronoiPartition, n_sites: usize) -> BlendField {
    let areas = mesh.vertex_areas();
    let results: Vec<(Vec<(u32, f64)>, bool)> = (0..mesh.vertex_count())
        .into_par_iter()
        .map(|v| {
            if part.dist[v] == 0.0 {
                return (vec![(part.owner[v], 1.0)], false);
            }
            let mut stolen = vec![0.0; n_sites];
            graph.dijkstra(&[(v, 0.0)], |u, d| d < part.dist[u], |u, _| stolen[part.owner[u] as usize] += areas[u]);
            if stolen.iter().all(|a| *a == 0.0) {
                return (vec![(part.owner[v], 1.0)], true);
            }
            (normalize(&stolen), false)
        })
        .collect();
    collect_field(results)
}

/// Gaussian weights of geodesic distance, normalized per vertex. `vertex_dist[b][v]` is
/// the distance from bundle `b` to vertex `v`.
pub fn rbf_blend_field(vertex_dist: &[Vec<f64>], sigma: f64) -> BlendField {
    assert!(sigma > 0.0, "sigma must be positive");
    let n = vertex_dist.first().map_or(0, |d| d.len());
    let weights = (0..n)
        .map(|v| {
            let g2: Vec<f64> = vertex_dist.iter().map(|d| d[v] * d[v]).collect();
            // shift by the smallest exponent so the nearest bundle never underflows
            let m = g2.iter().copied().fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = g2.iter().map(|x| (-(x - m) / (2.0 * sigma * sigma)).exp()).collect();
            normalize(&raw)
        })
        .collect();
    BlendField { weights, flagged: vec![] }
}
