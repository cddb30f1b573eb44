//! `LGI1` binary cache: little-endian, bit-exact.

use std::path::Path;

use super::{BundleCloud, BundleIndex, CloudIndex, CloudPoint, JawBin, LgiIndex, PruneConfig, QualityConfig, TetSet, UniformGrid};
use crate::error::{Error, Result};
use crate::library::Source;
use crate::mesh::Vec3;
use crate::simplex::{TetQuality, Tetra};

const MAGIC: &[u8; 4] = b"LGI1";

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn len(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("count exceeds u32"));
    }
    pub fn vec3(&mut self, v: &Vec3) {
        v.iter().for_each(|x| self.f64(*x));
    }
    pub fn str(&mut self, s: &str) {
        self.len(s.len());
        self.buf.extend_from_slice(s.as_bytes());
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    make_err: fn(String) -> Error,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8], make_err: fn(String) -> Error) -> Self {
        Reader { data, pos: 0, make_err }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        (self.make_err)(format!("{} at byte {}", msg.into(), self.pos))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    /// A count, sanity-checked against the bytes left (each item is at least `min_item` bytes).
    pub fn len(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.data.len() - self.pos {
            return Err(self.err(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }
    pub fn vec3(&mut self) -> Result<Vec3> {
        Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))
    }
    pub fn str(&mut self) -> Result<String> {
        let n = self.len(1)?;
        String::from_utf8(self.bytes(n)?.to_vec()).map_err(|_| self.err("invalid utf-8"))
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(self.err("trailing bytes"));
        }
        Ok(())
    }
    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.bytes(4)? != magic {
            return Err(self.err(format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        Ok(())
    }
}

fn write_cloud(w: &mut Writer, c: &CloudIndex) {
    let cloud = &c.cloud;
    match &cloud.jaw_bin {
        None => w.u8(0),
        Some(b) => {
            w.u8(1);
            w.f64(b.lo);
            w.f64(b.hi);
            w.u8(b.closed_hi as u8);
        }
    }
    w.len(cloud.neighbors.len());
    cloud.neighbors.iter().for_each(|n| w.len(*n));
    w.len(cloud.points.len());
    for p in &cloud.points {
        w.u32(p.source.to_code());
        w.vec3(&p.pos);
        p.neighbor_evals.iter().for_each(|e| w.vec3(e));
    }
    w.len(c.tets.len());
    for (t, q) in c.tets.tets.iter().zip(&c.tets.quality) {
        t.ids().iter().for_each(|i| w.u32(*i));
        w.f64(q.volume);
        w.f64(q.aspect);
        w.f64(q.longest_edge);
    }
    w.vec3(&c.grid.lo);
    w.vec3(&c.grid.hi);
    c.grid.dims.iter().for_each(|d| w.len(*d));
    for cell in &c.grid.cells {
        w.len(cell.len());
        cell.iter().for_each(|t| w.u32(*t));
    }
    c.usage.iter().for_each(|u| w.u64(*u));
    w.len(c.blacklist.len());
    c.blacklist.iter().for_each(|t| t.ids().iter().for_each(|i| w.u32(*i)));
}

fn read_cloud(r: &mut Reader, bundle: usize, n_shapes: usize) -> Result<CloudIndex> {
    let jaw_bin = match r.u8()? {
        0 => None,
        1 => Some(JawBin {
            lo: r.f64()?,
            hi: r.f64()?,
            closed_hi: r.u8()? != 0,
        }),
        t => return Err(r.err(format!("bad jaw-bin tag {t}"))),
    };
    let n_nb = r.len(4)?;
    let neighbors = (0..n_nb).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let n_pts = r.len(28)?;
    let mut points = Vec::with_capacity(n_pts);
    for _ in 0..n_pts {
        let source = Source::from_code(r.u32()?);
        if let Source::Shape(s) = source {
            if s as usize >= n_shapes {
                return Err(r.err(format!("shape id {s} out of range")));
            }
        }
        let pos = r.vec3()?;
        let neighbor_evals = (0..n_nb).map(|_| r.vec3()).collect::<Result<_>>()?;
        points.push(CloudPoint { source, pos, neighbor_evals });
    }
    let n_tets = r.len(40)?;
    let mut tets = TetSet::default();
    for _ in 0..n_tets {
        let ids = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        if ids.iter().any(|i| *i as usize >= n_pts) {
            return Err(r.err("tet vertex out of range"));
        }
        let t = Tetra::new(ids).filter(|t| t.ids() == ids).ok_or_else(|| r.err("tet not canonical"))?;
        tets.tets.push(t);
        tets.quality.push(TetQuality {
            volume: r.f64()?,
            aspect: r.f64()?,
            longest_edge: r.f64()?,
        });
    }
    let lo = r.vec3()?;
    let hi = r.vec3()?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let n_cells = dims.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).unwrap_or(usize::MAX);
    if n_cells == 0 || n_cells > 64 * 64 * 64 {
        return Err(r.err(format!("bad grid dims {dims:?}")));
    }
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let n = r.len(4)?;
        let cell = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if cell.iter().any(|t| *t as usize >= n_tets) {
            return Err(r.err("grid cell references a missing tet"));
        }
        cells.push(cell);
    }
    let usage = (0..n_tets).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let n_black = r.len(16)?;
    let mut blacklist = Vec::with_capacity(n_black);
    for _ in 0..n_black {
        let ids = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        blacklist.push(Tetra::new(ids).ok_or_else(|| r.err("blacklisted tet has repeated ids"))?);
    }
    let cloud = BundleCloud { bundle, neighbors, points, jaw_bin };
    let grid = UniformGrid { lo, hi, dims, cells };
    Ok(CloudIndex::from_stored(cloud, tets, grid, usage, blacklist))
}

/// Serializes the index.
pub fn index_to_bytes(index: &LgiIndex) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.f64(index.prune.min_disp);
    w.f64(index.prune.dedupe_eps);
    w.f64(index.quality.min_vol_frac);
    w.f64(index.quality.max_aspect);
    w.f64(index.quality.max_extent_frac);
    w.u64(index.quality.cap);
    w.len(index.jaw_bin_edges.len());
    index.jaw_bin_edges.iter().for_each(|e| w.f64(*e));
    w.len(index.shape_names.len());
    index.shape_names.iter().for_each(|s| w.str(s));
    w.len(index.bundles.len());
    for b in &index.bundles {
        w.str(&b.name);
        w.len(b.clouds.len());
        b.clouds.iter().for_each(|c| write_cloud(&mut w, c));
    }
    w.buf
}

pub fn index_from_bytes(data: &[u8]) -> Result<LgiIndex> {
    let mut r = Reader::new(data, Error::InvalidIndex);
    r.magic(MAGIC)?;
    let prune = PruneConfig {
        min_disp: r.f64()?,
        dedupe_eps: r.f64()?,
    };
    let quality = QualityConfig {
        min_vol_frac: r.f64()?,
        max_aspect: r.f64()?,
        max_extent_frac: r.f64()?,
        cap: r.u64()?,
    };
    let n_edges = r.len(8)?;
    let jaw_bin_edges = (0..n_edges).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let n_shapes = r.len(4)?;
    let shape_names = (0..n_shapes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let n_bundles = r.len(8)?;
    let mut bundles = Vec::with_capacity(n_bundles);
    for b in 0..n_bundles {
        let name = r.str()?;
        let n_clouds = r.len(1)?;
        let clouds = (0..n_clouds)
            .map(|_| read_cloud(&mut r, b, n_shapes))
            .collect::<Result<Vec<_>>>()?;
        if clouds.is_empty() {
            return Err(r.err(format!("bundle `{name}` has no cloud")));
        }
        bundles.push(BundleIndex { bundle: b, name, clouds });
    }
    r.finish()?;
    Ok(LgiIndex {
        prune,
        quality,
        jaw_bin_edges,
        shape_names,
        bundles,
    })
}

pub fn save_index(path: impl AsRef<Path>, index: &LgiIndex) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, index_to_bytes(index)).map_err(|e| Error::io(path, e))
}

pub fn load_index(path: impl AsRef<Path>) -> Result<LgiIndex> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    index_from_bytes(&data)
}
