use crate::error::{Error, Result};
use crate::mesh::{eval_surface_point, SurfacePoint, TriMesh, Vec2, Vec3};

pub const MIN_RESOLUTION: usize = 16;
pub const NONE: u32 = u32::MAX;

/// Lattice offsets of the 8 neighbors in counter-clockwise order.
pub const RING: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// Texels of the UV square whose centers fall inside the mesh's UV chart.
#[derive(Debug, Clone)]
pub struct UvGrid {
    pub resolution: usize,
    /// Lattice index (`y * resolution + x`) to covered index, or [`NONE`].
    pub lattice: Vec<u32>,
    /// Covered index to lattice index.
    pub texels: Vec<u32>,
    /// Surface point under each covered texel center.
    pub samples: Vec<SurfacePoint>,
    /// 3D embedding of each covered texel center.
    pub positions: Vec<Vec3>,
    /// 3D area of each covered texel.
    pub areas: Vec<f64>,
    /// Covered neighbors in [`RING`] order ([`NONE`] where absent).
    pub neighbors: Vec<[u32; 8]>,
}

impl UvGrid {
    pub fn len(&self) -> usize {
        self.texels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texels.is_empty()
    }

    pub fn coords(&self, texel: usize) -> (usize, usize) {
        let l = self.texels[texel] as usize;
        (l % self.resolution, l / self.resolution)
    }

    pub fn center_uv(&self, texel: usize) -> Vec2 {
        let (x, y) = self.coords(texel);
        let r = self.resolution as f64;
        Vec2::new((x as f64 + 0.5) / r, (y as f64 + 0.5) / r)
    }

    /// Covered texel whose cell contains `uv`, else the covered texel with the nearest center.
    pub fn texel_at(&self, uv: &Vec2) -> usize {
        let r = self.resolution;
        let cell = |t: f64| ((t * r as f64).floor().max(0.0) as usize).min(r - 1);
        let (x, y) = (cell(uv.x), cell(uv.y));
        let c = self.lattice[y * r + x];
        if c != NONE {
            return c as usize;
        }
        (0..self.len())
            .min_by(|a, b| {
                let da = (self.center_uv(*a) - uv).norm_squared();
                let db = (self.center_uv(*b) - uv).norm_squared();
                da.total_cmp(&db).then(a.cmp(b))
            })
            .expect("empty grid")
    }

    /// Lattice-adjacent covered texels sharing an edge (4-neighborhood).
    pub fn edge_neighbors(&self, texel: usize) -> impl Iterator<Item = usize> + '_ {
        [0, 2, 4, 6]
            .into_iter()
            .map(move |k| self.neighbors[texel][k])
            .filter(|n| *n != NONE)
            .map(|n| n as usize)
    }
}

fn uv_barycentric(p: &Vec2, a: &Vec2, b: &Vec2, c: &Vec2) -> Option<[f64; 3]> {
    let det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    if det.abs() < 1e-300 {
        return None;
    }
    let l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / det;
    let l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / det;
    Some([1.0 - l1 - l2, l1, l2])
}

/// Rasterizes the UV chart: a texel is covered when its center lies in some UV triangle
/// (the first face in order wins on shared edges).
pub fn rasterize_uv(mesh: &TriMesh, resolution: usize) -> Result<UvGrid> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "UV resolution {resolution} is below the minimum of {MIN_RESOLUTION}"
        )));
    }
    let r = resolution;
    let rf = r as f64;
    let mut lattice = vec![NONE; r * r];
    let mut texels = Vec::new();
    let mut samples = Vec::new();
    let mut areas = Vec::new();
    const TOL: f64 = 1e-12;
    for (fi, f) in mesh.faces.iter().enumerate() {
        let [a, b, c] = f.map(|v| mesh.uvs[v as usize]);
        let [pa, pb, pc] = f.map(|v| mesh.positions[v as usize]);
        let (du1, dv1) = (b.x - a.x, b.y - a.y);
        let (du2, dv2) = (c.x - a.x, c.y - a.y);
        let det = du1 * dv2 - du2 * dv1;
        if det.abs() < 1e-300 {
            continue;
        }
        // parallelogram area of the embedding differentials over one texel
        let xu = ((pb - pa) * dv2 - (pc - pa) * dv1) / det;
        let xv = ((pc - pa) * du1 - (pb - pa) * du2) / det;
        let texel_area = xu.cross(&xv).norm() / (rf * rf);

        let lo = |t: f64| ((t * rf - 0.5).floor().max(0.0) as usize).min(r - 1);
        let hi = |t: f64| ((t * rf - 0.5).ceil().max(0.0) as usize).min(r - 1);
        for y in lo(a.y.min(b.y).min(c.y))..=hi(a.y.max(b.y).max(c.y)) {
            for x in lo(a.x.min(b.x).min(c.x))..=hi(a.x.max(b.x).max(c.x)) {
                let l = y * r + x;
                if lattice[l] != NONE {
                    continue;
                }
                let p = Vec2::new((x as f64 + 0.5) / rf, (y as f64 + 0.5) / rf);
                let Some(w) = uv_barycentric(&p, &a, &b, &c) else { continue };
                if w.iter().any(|x| *x < -TOL) {
                    continue;
                }
                let w = crate::simplex::clamp_convex(w);
                lattice[l] = texels.len() as u32;
                texels.push(l as u32);
                samples.push(SurfacePoint { face: fi, bary: w });
                areas.push(texel_area);
            }
        }
    }
    let positions = samples
        .iter()
        .map(|s| eval_surface_point(&mesh.positions, mesh, s))
        .collect::<Result<Vec<_>>>()?;
    let neighbors = texels
        .iter()
        .map(|&l| {
            let (x, y) = ((l as usize % r) as i32, (l as usize / r) as i32);
            RING.map(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= r as i32 || ny >= r as i32 {
                    NONE
                } else {
                    lattice[ny as usize * r + nx as usize]
                }
            })
        })
        .collect();
    Ok(UvGrid {
        resolution,
        lattice,
        texels,
        samples,
        positions,
        areas,
        neighbors,
    })
}
