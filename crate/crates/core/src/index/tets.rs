use crate::error::{Error, Result};
use crate::mesh::{bbox, Vec3};
use crate::simplex::{volume_eps, signed_volume, TetQuality, Tetra};

/// Filters applied to every enumerated tetrahedron. Lengths are fractions of the cloud
/// bounding-box diagonal `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityConfig {
    /// Minimum |volume| as a fraction of `d^3`.
    pub min_vol_frac: f64,
    /// Maximum longest-edge / smallest-altitude ratio.
    pub max_aspect: f64,
    /// Maximum longest edge as a fraction of `d`.
    pub max_extent_frac: f64,
    /// Abort when the number of 4-point combinations exceeds this.
    pub cap: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            min_vol_frac: 1e-6,
            max_aspect: 25.0,
            max_extent_frac: 0.75,
            cap: 250_000,
        }
    }
}

impl QualityConfig {
    /// Keeps every non-degenerate tetrahedron.
    pub fn disabled() -> Self {
        QualityConfig {
            min_vol_frac: 0.0,
            max_aspect: f64::INFINITY,
            max_extent_frac: f64::INFINITY,
            cap: u64::MAX,
        }
    }

    pub fn accepts(&self, q: &TetQuality, diag: f64) -> bool {
        q.volume >= self.min_vol_frac * diag.powi(3)
            && q.aspect <= self.max_aspect
            && q.longest_edge <= self.max_extent_frac * diag
    }
}

/// Overlapping tetrahedra over a cloud, canonical and sorted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TetSet {
    pub tets: Vec<Tetra>,
    pub quality: Vec<TetQuality>,
}

impl TetSet {
    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    /// No usable tetrahedron: queries fall back to projection onto lower simplices.
    pub fn is_projection_only(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn retain(&mut self, mut keep: impl FnMut(&Tetra) -> bool) {
        let (tets, quality) = self
            .tets
            .iter()
            .zip(&self.quality)
            .filter(|(t, _)| keep(t))
            .map(|(t, q)| (*t, *q))
            .unzip();
        self.tets = tets;
        self.quality = quality;
    }
}

pub fn binomial4(n: usize) -> u64 {
    if n < 4 {
        return 0;
    }
    let n = n as u128;
    (n * (n - 1) * (n - 2) * (n - 3) / 24) as u64
}

/// Enumerates every 4-point combination and keeps the well-shaped ones.
///
/// `name` is used in the cap diagnostic.
pub fn enumerate_tets(points: &[Vec3], cfg: &QualityConfig, name: &str) -> Result<TetSet> {
    let n = points.len();
    let count = binomial4(n);
    if count > cfg.cap {
        return Err(Error::CombinatorialCap {
            bundle: name.to_string(),
            count,
            cap: cfg.cap,
        });
    }
    let (lo, hi) = bbox(points);
    let diag = (hi - lo).norm();
    let mut set = TetSet::default();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let q = [points[a], points[b], points[c], points[d]];
                    if !(signed_volume(&q).abs() > volume_eps(&q)) {
                        continue;
                    }
                    let quality = TetQuality::of(&q);
                    if cfg.accepts(&quality, diag) {
                        set.tets.push(Tetra::new([a as u32, b as u32, c as u32, d as u32]).unwrap());
                        set.quality.push(quality);
                    }
                }
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_good_tet() {
        let p = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        // any 4-point cloud has an edge near its own diagonal, so the extent filter is relaxed
        let cfg = QualityConfig { max_extent_frac: 1.0, ..QualityConfig::default() };
        let set = enumerate_tets(&p, &cfg, "b").unwrap();
        assert_eq!(set.len(), 1);
        assert!(enumerate_tets(&p, &QualityConfig::default(), "b").unwrap().is_empty());
        assert_eq!(set.tets[0].ids(), [0, 1, 2, 3]);
    }

    #[test]
    fn coplanar_points_give_projection_only() {
        let p = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let set = enumerate_tets(&p, &QualityConfig::disabled(), "b").unwrap();
        assert!(set.is_projection_only());
    }

    #[test]
    fn unfiltered_count_is_binomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p: Vec<Vec3> = (0..10)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let set = enumerate_tets(&p, &QualityConfig::disabled(), "b").unwrap();
        // C(10,4) counted independently by subset enumeration
        let subsets = (0u32..1 << 10).filter(|m| m.count_ones() == 4).count();
        assert_eq!(subsets, 210);
        assert_eq!(set.len(), subsets);
        assert!(set.tets.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cap_is_enforced() {
        let p: Vec<Vec3> = (0..60).map(|i| Vec3::new(i as f64, (i * i) as f64, (i * i * i) as f64)).collect();
        let e = enumerate_tets(&p, &QualityConfig::default(), "chin").unwrap_err();
        match e {
            Error::CombinatorialCap { bundle, count, cap } => {
                assert_eq!(bundle, "chin");
                assert_eq!(count, 487_635);
                assert_eq!(cap, 250_000);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn sliver_and_extent_filters() {
        let mut p = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.3, 0.3, 1e-4),
        ];
        let set = enumerate_tets(&p, &QualityConfig::default(), "b").unwrap();
        assert!(set.is_empty(), "sliver kept");
        p[3] = Vec3::new(0.3, 0.3, 0.5);
        let cfg = QualityConfig { max_extent_frac: 0.5, ..QualityConfig::default() };
        assert!(enumerate_tets(&p, &cfg, "b").unwrap().is_empty());
    }
}
