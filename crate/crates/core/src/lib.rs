//! Dense facial reconstruction from sparse marker tracks by local geometric indexing.
//!
//! Each marker ("bundle") gets a point cloud of its positions across a library of facial
//! shapes. The cloud is covered by an overlapping set of tetrahedra. An observed bundle
//! position selects a containing tetrahedron, and its barycentric weights blend the
//! corresponding shapes. Per-bundle results are stitched into one surface with natural
//! neighbor weights computed on a geodesic Voronoi diagram of the bundles.

pub mod blend;
pub mod compare;
pub mod error;
pub mod index;
pub mod jaw;
pub mod library;
pub mod mesh;
pub mod pipeline;
pub mod simplex;
pub mod solver;
pub mod synth;
pub mod track;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use index::{IndexConfig, LgiIndex};
pub use jaw::{jaw_transform, AffineMap, JawModel, JawPose};
pub use library::{
    eval_bundle, load_library, skin_positions, unskin_shape, BundleDef, Shape, ShapeLibrary,
    ShapeWeights, Source,
};
pub use mesh::{eval_surface_point, load_obj, save_obj, SurfacePoint, TriMesh, Vec2, Vec3};
pub use simplex::{closest_point_on_simplex, tet_barycentric, tet_contains, Tetra};
