//! Small fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jaw::{JawModel, JawPose};
use crate::library::{BundleDef, ShapeInput, ShapeLibrary, Tags};
use crate::mesh::{SurfacePoint, TriMesh, Vec2, Vec3};

/// `nx` by `ny` vertex sheet in the xy plane with unit-square UVs.
pub fn sheet(nx: usize, ny: usize, spacing: f64) -> TriMesh {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            positions.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
            uvs.push(Vec2::new(i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64));
        }
    }
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = (j * nx + i) as u32;
            let w = nx as u32;
            faces.push([a, a + 1, a + w + 1]);
            faces.push([a, a + w + 1, a + w]);
        }
    }
    TriMesh::new(positions, faces, uvs).unwrap()
}

/// Surface point sitting exactly on vertex `v`.
pub fn at_vertex(mesh: &TriMesh, v: usize) -> SurfacePoint {
    for (f, face) in mesh.faces.iter().enumerate() {
        if let Some(c) = face.iter().position(|x| *x as usize == v) {
            return SurfacePoint::at_corner(f, c);
        }
    }
    panic!("vertex {v} unused");
}

/// 5x5 sheet, four bundles on interior vertices, `n` random shapes (each with a global
/// offset plus per-vertex noise) and random jaw poses when `jaw` is set.
pub fn library(n: usize, seed: u64, jaw: bool) -> ShapeLibrary {
    let mesh = sheet(5, 5, 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = (0..n)
        .map(|i| {
            let d = Vec3::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            let positions = mesh
                .positions
                .iter()
                .map(|p| p + d + Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let pose = if jaw {
                JawPose {
                    rot: rng.gen_range(-0.3..0.3),
                    protrude: rng.gen_range(-1.0..1.0),
                    lateral: rng.gen_range(-1.0..1.0),
                }
            } else {
                JawPose::REST
            };
            ShapeInput {
                name: format!("s{i:02}"),
                positions,
                jaw: pose,
                tags: Tags::new(),
            }
        })
        .collect();
    let bundles = [("b0", 6), ("b1", 8), ("b2", 16), ("b3", 18)]
        .iter()
        .map(|(name, v)| BundleDef {
            name: name.to_string(),
            attach: at_vertex(&mesh, *v),
            region_tags: Tags::new(),
        })
        .collect();
    let skin = (0..25).map(|v| (v / 5) as f64 / 4.0).collect();
    let model = JawModel {
        hinge_point: [20.0, 50.0, -30.0],
        ..JawModel::default()
    };
    ShapeLibrary::new(mesh, shapes, bundles, skin, model).unwrap()
}

/// Adjacency used by the fixtures: every bundle neighbors every other.
pub fn all_pairs(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|b| (0..n).filter(|o| *o != b).collect()).collect()
}
