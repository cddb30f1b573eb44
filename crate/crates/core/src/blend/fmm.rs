use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::uv::{UvGrid, NONE};
use crate::mesh::Vec3;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then texel id
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const FAR: u8 = 0;
const TRIAL: u8 = 1;
const KNOWN: u8 = 2;
const REJECTED: u8 = 3;

/// Arrival time at `c` through the triangle `(c, a, b)` with known times `ta`, `tb`,
/// when the front crosses the edge `ab`.
pub fn triangle_update(c: &Vec3, a: &Vec3, b: &Vec3, ta: f64, tb: f64) -> Option<f64> {
    let e1 = a - c;
    let e2 = b - c;
    let (g00, g01, g11) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
    let det = g00 * g11 - g01 * g01;
    if det <= 1e-14 * g00 * g11 {
        return None;
    }
    let (q00, q01, q11) = (g11 / det, -g01 / det, g00 / det);
    let qa = q00 + 2.0 * q01 + q11;
    let qb = (q00 + q01) * ta + (q01 + q11) * tb;
    let qc = q00 * ta * ta + 2.0 * q01 * ta * tb + q11 * tb * tb - 1.0;
    let disc = qb * qb - qa * qc;
    if disc < 0.0 || qa <= 0.0 {
        return None;
    }
    let t = (qb + disc.sqrt()) / qa;
    if t < ta.max(tb) {
        return None;
    }
    // the characteristic must enter c from inside the triangle
    let l0 = q00 * (ta - t) + q01 * (tb - t);
    let l1 = q01 * (ta - t) + q11 * (tb - t);
    let tol = 1e-12 * qa.sqrt();
    (l0 <= tol && l1 <= tol).then_some(t)
}

/// Reusable fast-marching state over one grid.
#[derive(Debug, Default)]
pub struct Marcher {
    dist: Vec<f64>,
    state: Vec<u8>,
    heap: BinaryHeap<Entry>,
    touched: Vec<u32>,
}

impl std::fmt::Debug for Entry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

impl Marcher {
    pub fn new(n: usize) -> Self {
        Marcher {
            dist: vec![f64::INFINITY; n],
            state: vec![FAR; n],
            heap: BinaryHeap::new(),
            touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &t in &self.touched {
            self.dist[t as usize] = f64::INFINITY;
            self.state[t as usize] = FAR;
        }
        self.touched.clear();
        self.heap.clear();
    }

    fn offer(&mut self, t: u32, d: f64) {
        let i = t as usize;
        if d < self.dist[i] {
            if self.state[i] == FAR {
                self.touched.push(t);
            }
            self.dist[i] = d;
            self.state[i] = TRIAL;
            self.heap.push(Entry(d, t));
        }
    }

    /// Marches from `seeds` in increasing arrival time. Each texel reached is offered to
    /// `accept`; rejected texels are not expanded. `visit` sees every accepted texel once,
    /// in order.
    pub fn run(
        &mut self,
        grid: &UvGrid,
        seeds: &[(usize, f64)],
        mut accept: impl FnMut(usize, f64) -> bool,
        mut visit: impl FnMut(usize, f64),
    ) {
        self.reset();
        for &(t, d) in seeds {
            self.offer(t as u32, d);
        }
        while let Some(Entry(d, t)) = self.heap.pop() {
            let i = t as usize;
            if self.state[i] >= KNOWN || d > self.dist[i] {
                continue;
            }
            if !accept(i, d) {
                self.state[i] = REJECTED;
                continue;
            }
            self.state[i] = KNOWN;
            visit(i, d);
            let pt = grid.positions[i];
            let ring = &grid.neighbors[i];
            for (k, &n) in ring.iter().enumerate() {
                if n == NONE || self.state[n as usize] >= KNOWN {
                    continue;
                }
                let ni = n as usize;
                let pn = grid.positions[ni];
                let mut best = d + (pn - pt).norm();
                // in n's ring, t sits opposite to k; try the triangles on either side
                let j = (k + 4) % 8;
                for m in [grid.neighbors[ni][(j + 1) % 8], grid.neighbors[ni][(j + 7) % 8]] {
                    if m == NONE || self.state[m as usize] != KNOWN {
                        continue;
                    }
                    let mi = m as usize;
                    if let Some(x) = triangle_update(&pn, &pt, &grid.positions[mi], d, self.dist[mi]) {
                        best = best.min(x);
                    }
                }
                self.offer(n, best);
            }
        }
    }

    pub fn distance(&self, t: usize) -> f64 {
        if self.state[t] == KNOWN {
            self.dist[t]
        } else {
            f64::INFINITY
        }
    }
}

/// Geodesic distances from `seed` to every covered texel; unreachable texels get +inf.
pub fn fast_march(grid: &UvGrid, seed: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; grid.len()];
    let mut m = Marcher::new(grid.len());
    m.run(grid, &[(seed, 0.0)], |_, _| true, |t, d| out[t] = d);
    let unreached = out.iter().filter(|d| d.is_infinite()).count();
    if unreached > 0 {
        log::warn!("{unreached} texels are not connected to texel {seed}");
    }
    out
}
