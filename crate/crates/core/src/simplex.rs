//! Tetrahedron and simplex kernels: barycentric coordinates, containment, closest points
//! and shape quality.

use crate::error::{Error, Result};
use crate::mesh::{bbox, Vec3};

/// Default containment tolerance on barycentric weights.
pub const CONTAIN_TOL: f64 = 1e-9;

/// Four distinct point indices, stored in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tetra {
    ids: [u32; 4],
}

impl Tetra {
    /// Canonicalizes the ids; returns `None` when they are not distinct.
    pub fn new(mut ids: [u32; 4]) -> Option<Self> {
        ids.sort_unstable();
        (ids[0] != ids[1] && ids[1] != ids[2] && ids[2] != ids[3]).then_some(Tetra { ids })
    }

    pub fn ids(&self) -> [u32; 4] {
        self.ids
    }

    pub fn shared(&self, other: &[u32]) -> usize {
        self.ids.iter().filter(|i| other.contains(i)).count()
    }

    pub fn corners(&self, points: &[Vec3]) -> [Vec3; 4] {
        self.ids.map(|i| points[i as usize])
    }
}

fn det3(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

pub fn signed_volume(q: &[Vec3; 4]) -> f64 {
    det3(&(q[1] - q[0]), &(q[2] - q[0]), &(q[3] - q[0])) / 6.0
}

/// Degeneracy threshold for a tet: a fixed fraction of its bounding-box diagonal cubed.
pub fn volume_eps(q: &[Vec3; 4]) -> f64 {
    let (lo, hi) = bbox(q);
    1e-12 * (hi - lo).norm().powi(3)
}

/// Barycentric weights of `p` with respect to `q` from signed-volume ratios.
///
/// Weights sum to one and are negative outside the tet.
pub fn tet_barycentric(p: &Vec3, q: &[Vec3; 4]) -> Result<[f64; 4]> {
    let e1 = q[1] - q[0];
    let e2 = q[2] - q[0];
    let e3 = q[3] - q[0];
    let six_vol = det3(&e1, &e2, &e3);
    let eps = volume_eps(q);
    if !(six_vol.abs() / 6.0 > eps) {
        return Err(Error::DegenerateTet {
            volume: six_vol / 6.0,
            eps,
        });
    }
    let d = p - q[0];
    let w1 = det3(&d, &e2, &e3) / six_vol;
    let w2 = det3(&e1, &d, &e3) / six_vol;
    let w3 = det3(&e1, &e2, &d) / six_vol;
    Ok([1.0 - w1 - w2 - w3, w1, w2, w3])
}

pub fn tet_contains(p: &Vec3, q: &[Vec3; 4], tol: f64) -> Result<bool> {
    Ok(tet_barycentric(p, q)?.iter().all(|w| *w >= -tol))
}

/// Clamps negative weights to zero and renormalizes to a convex vector.
pub fn clamp_convex<const N: usize>(mut w: [f64; N]) -> [f64; N] {
    for x in &mut w {
        *x = x.max(0.0);
    }
    let sum: f64 = w.iter().sum();
    if sum > 0.0 {
        for x in &mut w {
            *x /= sum;
        }
    }
    w
}

/// Closest point of a 1–4 vertex simplex to `p`.
///
/// Returns the point and convex weights aligned with `verts` (unused slots are zero).
/// Degenerate simplices fall back to their lower-dimensional faces.
pub fn closest_point_on_simplex(p: &Vec3, verts: &[Vec3]) -> (Vec3, [f64; 4]) {
    match verts.len() {
        1 => (verts[0], [1.0, 0.0, 0.0, 0.0]),
        2 => {
            let (x, [a, b]) = closest_on_segment(p, &verts[0], &verts[1]);
            (x, [a, b, 0.0, 0.0])
        }
        3 => {
            let (x, [a, b, c]) = closest_on_triangle(p, &verts[0], &verts[1], &verts[2]);
            (x, [a, b, c, 0.0])
        }
        4 => closest_on_tet(p, &[verts[0], verts[1], verts[2], verts[3]]),
        n => panic!("simplex with {n} vertices"),
    }
}

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> (Vec3, [f64; 2]) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (*a, [1.0, 0.0]);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t, [1.0 - t, t])
}

fn closest_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let longest = ab.norm_squared().max(ac.norm_squared()).max((c - b).norm_squared());
    if ab.cross(&ac).norm_squared() <= 1e-24 * longest * longest {
        // collinear or coincident corners: best of the three edges
        let cands = [
            (closest_on_segment(p, a, b), [0, 1]),
            (closest_on_segment(p, b, c), [1, 2]),
            (closest_on_segment(p, a, c), [0, 2]),
        ];
        let mut best: Option<(f64, Vec3, [f64; 3])> = None;
        for ((x, w), slots) in cands {
            let d = (x - p).norm_squared();
            if best.as_ref().map_or(true, |b| d < b.0) {
                let mut full = [0.0; 3];
                full[slots[0]] = w[0];
                full[slots[1]] = w[1];
                best = Some((d, x, full));
            }
        }
        let (_, x, w) = best.unwrap();
        return (x, w);
    }

    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

fn closest_on_tet(p: &Vec3, q: &[Vec3; 4]) -> (Vec3, [f64; 4]) {
    if let Ok(w) = tet_barycentric(p, q) {
        if w.iter().all(|x| *x >= 0.0) {
            return (*p, w);
        }
    }
    const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    let mut best: Option<(f64, Vec3, [f64; 4])> = None;
    for f in FACES {
        let (x, w) = closest_on_triangle(p, &q[f[0]], &q[f[1]], &q[f[2]]);
        let d = (x - p).norm_squared();
        if best.as_ref().map_or(true, |b| d < b.0) {
            let mut full = [0.0; 4];
            for (slot, wi) in f.iter().zip(w) {
                full[*slot] = wi;
            }
            best = Some((d, x, full));
        }
    }
    let (_, x, w) = best.unwrap();
    (x, w)
}

/// Shape measures used by the tetrahedron quality filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetQuality {
    /// Absolute volume.
    pub volume: f64,
    /// Longest edge divided by the smallest altitude.
    pub aspect: f64,
    pub longest_edge: f64,
}

impl TetQuality {
    pub fn of(q: &[Vec3; 4]) -> Self {
        let volume = signed_volume(q).abs();
        let mut longest = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                longest = longest.max((q[i] - q[j]).norm());
            }
        }
        let max_face_area = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
            .iter()
            .map(|f| 0.5 * (q[f[1]] - q[f[0]]).cross(&(q[f[2]] - q[f[0]])).norm())
            .fold(0.0, f64::max);
        // altitude_i = 3V / area_i, so the smallest altitude sits opposite the largest face
        let aspect = if volume > 0.0 {
            longest * max_face_area / (3.0 * volume)
        } else {
            f64::INFINITY
        };
        TetQuality {
            volume,
            aspect,
            longest_edge: longest,
        }
    }
}
