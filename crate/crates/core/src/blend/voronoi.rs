use std::io::Write;
use std::path::Path;

use super::uv::UvGrid;
use crate::error::{Error, Result};

/// Nearest-site assignment of every covered texel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiPartition {
    /// Owning site per covered texel.
    pub owner: Vec<u32>,
    /// Distance to the owner.
    pub dist: Vec<f64>,
    /// Runner-up distance minus owner distance (+inf with a single site).
    pub gap: Vec<f64>,
}

/// Per-texel argmin over the distance maps. `order` ranks the sites for tie-breaking
/// (earlier wins), e.g. the sites sorted by name.
pub fn voronoi_partition(fields: &[Vec<f64>], order: &[usize]) -> Result<VoronoiPartition> {
    if fields.is_empty() {
        return Err(Error::InvalidArgument("Voronoi partition needs at least one site".into()));
    }
    let n = fields[0].len();
    if let Some(f) = fields.iter().find(|f| f.len() != n) {
        return Err(Error::LengthMismatch { expected: n, actual: f.len() });
    }
    let mut owner = vec![0u32; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut gap = vec![f64::INFINITY; n];
    for t in 0..n {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = f64::INFINITY;
        for &s in order {
            let d = fields[s][t];
            if d < best.0 || best.1 == usize::MAX {
                second = best.0;
                best = (d, s);
            } else if d < second {
                second = d;
            }
        }
        owner[t] = best.1 as u32;
        dist[t] = best.0;
        gap[t] = second - best.0;
    }
    Ok(VoronoiPartition { owner, dist, gap })
}

/// Site pairs `(a, b)` with `a < b` whose cells share a texel edge, sorted.
pub fn cell_adjacency(grid: &UvGrid, part: &VoronoiPartition) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for t in 0..grid.len() {
        for n in grid.edge_neighbors(t) {
            let (a, b) = (part.owner[t] as usize, part.owner[n] as usize);
            if a < b {
                pairs.push((a, b));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Adjacency lists for `n` sites.
pub fn adjacency_lists(n: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for &(a, b) in pairs {
        out[a].push(b);
        out[b].push(a);
    }
    out.iter_mut().for_each(|l| l.sort_unstable());
    out
}

/// Writes a binary PGM (`P5`) of `values` laid out on the UV lattice, flipped so v points
/// up. Uncovered texels are black.
pub fn write_pgm(path: impl AsRef<Path>, grid: &UvGrid, values: impl Fn(usize) -> u8) -> Result<()> {
    let path = path.as_ref();
    let r = grid.resolution;
    let mut img = vec![0u8; r * r];
    for t in 0..grid.len() {
        let (x, y) = grid.coords(t);
        img[(r - 1 - y) * r + x] = values(t);
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(f, "P5\n{r} {r}\n255\n").map_err(|e| Error::io(path, e))?;
    f.write_all(&img).map_err(|e| Error::io(path, e))
}

/// Label image of the partition; sites are spread over gray levels 32..=255.
pub fn write_label_pgm(path: impl AsRef<Path>, grid: &UvGrid, part: &VoronoiPartition, sites: usize) -> Result<()> {
    let step = if sites > 1 { 223.0 / (sites - 1) as f64 } else { 0.0 };
    write_pgm(path, grid, |t| (32.0 + step * part.owner[t] as f64).round() as u8)
}
