use crate::mesh::{bbox, Vec3};
use crate::simplex::Tetra;

/// Expected number of tets per cell when sizing the grid.
const TETS_PER_CELL: f64 = 8.0;
const MAX_DIM: usize = 64;

/// Uniform grid over the cloud's (inflated) bounding box; each cell lists the tets whose
/// bounding boxes overlap it.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    pub lo: Vec3,
    pub hi: Vec3,
    pub dims: [usize; 3],
    pub cells: Vec<Vec<u32>>,
}

impl UniformGrid {
    pub fn build(tets: &[Tetra], points: &[Vec3]) -> Self {
        let (mut lo, mut hi) = bbox(points);
        let ext = hi - lo;
        let floor = ext.max().max(1e-12) * 0.05;
        for k in 0..3 {
            let pad = (0.05 * ext[k]).max(floor);
            lo[k] -= pad;
            hi[k] += pad;
        }
        let per_axis = (tets.len() as f64 / TETS_PER_CELL).cbrt().ceil() as usize;
        let n = per_axis.clamp(1, MAX_DIM);
        let dims = [n; 3];
        let mut grid = UniformGrid {
            lo,
            hi,
            dims,
            cells: vec![Vec::new(); n * n * n],
        };
        for (ti, tet) in tets.iter().enumerate() {
            let (tlo, thi) = bbox(&tet.corners(points));
            // widen slightly so tolerance-contained points on cell borders still find the tet
            let eps = (thi - tlo).max() * 1e-6;
            let a = grid.cell_coords_clamped(&tlo.add_scalar(-eps));
            let b = grid.cell_coords_clamped(&thi.add_scalar(eps));
            for z in a[2]..=b[2] {
                for y in a[1]..=b[1] {
                    for x in a[0]..=b[0] {
                        let c = grid.flat([x, y, z]);
                        grid.cells[c].push(ti as u32);
                    }
                }
            }
        }
        grid
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_coords_clamped(&self, p: &Vec3) -> [usize; 3] {
        std::array::from_fn(|k| {
            let t = (p[k] - self.lo[k]) / (self.hi[k] - self.lo[k]);
            ((t * self.dims[k] as f64).floor().max(0.0) as usize).min(self.dims[k] - 1)
        })
    }

    /// Tets registered in the cell containing `p`; empty outside the grid bounds.
    pub fn candidates(&self, p: &Vec3) -> &[u32] {
        if (0..3).any(|k| !(p[k] >= self.lo[k] && p[k] <= self.hi[k])) {
            return &[];
        }
        &self.cells[self.flat(self.cell_coords_clamped(p))]
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }
}
