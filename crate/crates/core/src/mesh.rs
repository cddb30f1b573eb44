//! Triangle mesh container, surface points and ASCII OBJ input/output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;

const BARY_TOL: f64 = 1e-9;

/// Triangle mesh with one UV per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Vec<Vec2>,
}

impl TriMesh {
    /// Builds a mesh and checks all structural invariants.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>, uvs: Vec<Vec2>) -> Result<Self> {
        let mesh = TriMesh {
            positions,
            faces,
            uvs,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face(&self, face: usize) -> Result<[usize; 3]> {
        self.faces
            .get(face)
            .map(|f| [f[0] as usize, f[1] as usize, f[2] as usize])
            .ok_or(Error::FaceOutOfRange {
                face,
                count: self.faces.len(),
            })
    }

    /// Checks index ranges, vertex usage, face areas, UV range and that the UV chart is a
    /// single connected piece.
    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 || self.faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices or faces".into()));
        }
        if self.uvs.len() != n {
            return Err(Error::InvalidMesh(format!(
                "{} uvs for {} vertices (one uv per vertex required)",
                self.uvs.len(),
                n
            )));
        }
        let mut used = vec![false; n];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v as usize >= n {
                    return Err(Error::InvalidMesh(format!(
                        "face {fi} references vertex {v} of {n}"
                    )));
                }
                used[v as usize] = true;
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not referenced")));
        }
        let diag = self.bbox_diagonal();
        for (fi, f) in self.faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| self.positions[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if !(area > 1e-14 * diag * diag) {
                return Err(Error::InvalidMesh(format!("face {fi} has zero area")));
            }
        }
        for (i, uv) in self.uvs.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
                return Err(Error::InvalidMesh(format!(
                    "uv of vertex {i} ({}, {}) outside [0,1]^2",
                    uv.x, uv.y
                )));
            }
        }
        let charts = self.chart_count();
        if charts != 1 {
            return Err(Error::InvalidMesh(format!(
                "mesh has {charts} uv charts; a single chart is required"
            )));
        }
        Ok(())
    }

    /// Number of connected face components (each one a separate UV chart).
    pub fn chart_count(&self) -> usize {
        let n = self.positions.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for f in &self.faces {
            let a = find(&mut parent, f[0] as usize);
            for &v in &f[1..] {
                let b = find(&mut parent, v as usize);
                if a != b {
                    parent[b] = a;
                }
            }
        }
        let mut roots: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        bbox(&self.positions)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Surface point on vertex `v`, through the first face that uses it.
    pub fn vertex_point(&self, v: usize) -> Option<SurfacePoint> {
        self.faces.iter().enumerate().find_map(|(f, face)| {
            face.iter()
                .position(|x| *x as usize == v)
                .map(|c| SurfacePoint::at_corner(f, c))
        })
    }

    /// Barycentric (one third of incident face area) vertex areas.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.positions.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.positions[i as usize]);
            let third = (b - a).cross(&(c - a)).norm() / 6.0;
            for &v in f {
                areas[v as usize] += third;
            }
        }
        areas
    }
}

pub fn bbox(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// A point on the mesh surface given as a face and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    pub fn new(face: usize, bary: [f64; 3]) -> Result<Self> {
        let sp = SurfacePoint { face, bary };
        sp.check_bary()?;
        Ok(sp)
    }

    fn check_bary(&self) -> Result<()> {
        let sum: f64 = self.bary.iter().sum();
        if self.bary.iter().any(|b| !(*b >= -BARY_TOL)) || (sum - 1.0).abs() > BARY_TOL {
            return Err(Error::InvalidArgument(format!(
                "barycentric coordinates {:?} are not convex",
                self.bary
            )));
        }
        Ok(())
    }

    pub fn validate(&self, mesh: &TriMesh) -> Result<()> {
        mesh.face(self.face)?;
        self.check_bary()
    }

    /// Surface point sitting exactly on a vertex corner of `face`.
    pub fn at_corner(face: usize, corner: usize) -> Self {
        let mut bary = [0.0; 3];
        bary[corner] = 1.0;
        SurfacePoint { face, bary }
    }

    pub fn uv(&self, mesh: &TriMesh) -> Result<Vec2> {
        let f = mesh.face(self.face)?;
        Ok(f.iter()
            .zip(self.bary)
            .fold(Vec2::zeros(), |acc, (&v, b)| acc + mesh.uvs[v] * b))
    }

    /// Skin weight (or any per-vertex scalar) interpolated at the point.
    pub fn interpolate_scalar(&self, mesh: &TriMesh, values: &[f64]) -> Result<f64> {
        let f = mesh.face(self.face)?;
        Ok(f.iter().zip(self.bary).map(|(&v, b)| values[v] * b).sum())
    }
}

/// Barycentric combination of the three vertex positions of the point's face.
pub fn eval_surface_point(positions: &[Vec3], mesh: &TriMesh, sp: &SurfacePoint) -> Result<Vec3> {
    if positions.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: mesh.vertex_count(),
            actual: positions.len(),
        });
    }
    let f = mesh.face(sp.face)?;
    Ok(positions[f[0]] * sp.bary[0] + positions[f[1]] * sp.bary[1] + positions[f[2]] * sp.bary[2])
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    // 1-based line of the first face that referenced a uv index, used for error reports.
    let mut first_face_line = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        let floats = |n: usize| -> Result<Vec<f64>> {
            if rest.len() < n {
                return Err(err(line_no, format!("expected {n} numbers after `{tag}`")));
            }
            rest[..n]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| err(line_no, format!("invalid number `{s}`")))
                })
                .collect()
        };
        match tag {
            "v" => {
                let v = floats(3)?;
                positions.push(Vec3::new(v[0], v[1], v[2]));
            }
            "vt" => {
                let v = floats(2)?;
                uvs.push(Vec2::new(v[0], v[1]));
            }
            "f" => {
                if rest.len() != 3 {
                    return Err(err(
                        line_no,
                        format!("face with {} vertices; only triangles are supported", rest.len()),
                    ));
                }
                first_face_line.get_or_insert(line_no);
                let mut face = [0u32; 3];
                for (slot, token) in face.iter_mut().zip(&rest) {
                    let mut refs = token.split('/');
                    let v = parse_index(refs.next().unwrap_or(""), positions.len())
                        .ok_or_else(|| err(line_no, format!("invalid vertex reference `{token}`")))?;
                    if let Some(t) = refs.next().filter(|t| !t.is_empty()) {
                        let t = parse_index(t, uvs.len()).ok_or_else(|| {
                            err(line_no, format!("invalid uv reference `{token}`"))
                        })?;
                        if t != v {
                            return Err(err(
                                line_no,
                                format!("uv index differs from vertex index in `{token}`; one uv per vertex required"),
                            ));
                        }
                    }
                    *slot = v as u32;
                }
                faces.push(face);
            }
            _ => {}
        }
    }
    if uvs.is_empty() {
        return Err(err(first_face_line.unwrap_or(1), "mesh has no uv coordinates".into()));
    }
    if uvs.len() != positions.len() {
        return Err(err(
            first_face_line.unwrap_or(1),
            format!("{} uvs for {} vertices", uvs.len(), positions.len()),
        ));
    }
    TriMesh::new(positions, faces, uvs)
}

fn parse_index(s: &str, count: usize) -> Option<usize> {
    let i: i64 = s.parse().ok()?;
    let idx = if i < 0 { count as i64 + i } else { i - 1 };
    (0..count as i64).contains(&idx).then_some(idx as usize)
}

/// Writes `mesh` with its vertex positions replaced by `positions`.
///
/// Numbers use the shortest representation that parses back to the same `f64`, so a
/// save/load cycle is lossless.
pub fn save_obj(mesh: &TriMesh, positions: &[Vec3], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, obj_string(mesh, positions)?).map_err(|e| Error::io(path, e))
}

pub fn obj_string(mesh: &TriMesh, positions: &[Vec3]) -> Result<String> {
    if positions.len() != mesh.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: mesh.vertex_count(),
            actual: positions.len(),
        });
    }
    let mut out = String::with_capacity(64 * positions.len());
    for p in positions {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for uv in &mesh.uvs {
        let _ = writeln!(out, "vt {} {}", uv.x, uv.y);
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i + 1);
        let _ = writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn vertex_corner_evaluates_to_vertex() {
        let m = quad();
        let sp = SurfacePoint::new(1, [1.0, 0.0, 0.0]).unwrap();
        assert_eq!(eval_surface_point(&m.positions, &m, &sp).unwrap(), m.positions[0]);
    }

    #[test]
    fn equal_bary_is_centroid() {
        let h = 3f64.sqrt() / 2.0;
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, h, 0.0)],
            vec![[0, 1, 2]],
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.5, 1.0)],
        )
        .unwrap();
        let t = 1.0 / 3.0;
        let sp = SurfacePoint::new(0, [t, t, t]).unwrap();
        let p = eval_surface_point(&m.positions, &m, &sp).unwrap();
        assert!((p - Vec3::new(0.5, h / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn face_out_of_range_is_an_error() {
        let m = quad();
        let sp = SurfacePoint { face: 7, bary: [1.0, 0.0, 0.0] };
        assert!(matches!(
            eval_surface_point(&m.positions, &m, &sp),
            Err(Error::FaceOutOfRange { face: 7, .. })
        ));
    }

    #[test]
    fn quad_round_trip() {
        let m = quad();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.obj");
        save_obj(&m, &m.positions, &path).unwrap();
        let back = load_obj(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quad_face_names_its_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1 2 3 4\n";
        let e = parse_obj(text, Path::new("q.obj")).unwrap_err();
        match e {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 9);
                assert!(message.contains("triangles"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_uvs_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1 2 3\n";
        let e = parse_obj(text, Path::new("t.obj")).unwrap_err();
        assert!(e.to_string().contains("uv"), "{e}");
    }

    #[test]
    fn two_charts_rejected() {
        let p = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(6.0, 0.0, 0.0),
            Vec3::new(5.0, 1.0, 0.0),
        ];
        let uv = vec![Vec2::new(0.1, 0.1); 6];
        let e = TriMesh::new(p, vec![[0, 1, 2], [3, 4, 5]], uv).unwrap_err();
        assert!(e.to_string().contains("chart"), "{e}");
    }

    #[test]
    fn degenerate_face_rejected() {
        let p = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        let uv = vec![Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0), Vec2::new(1.0, 1.0)];
        assert!(TriMesh::new(p, vec![[0, 1, 2]], uv).is_err());
    }
}
