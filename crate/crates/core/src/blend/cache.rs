//! `LGNN` binary cache of a [`BlendModel`]: per-vertex `(bundle id, f32 weight)` lists
//! followed by the adjacency and geodesic distance tables.

use std::path::Path;

use super::{BlendField, BlendModel, NnMode};
use crate::error::{Error, Result};
use crate::index::io::{Reader, Writer};

const MAGIC: &[u8; 4] = b"LGNN";

pub fn blend_to_bytes(m: &BlendModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u8(match m.mode {
        NnMode::Uv => 0,
        NnMode::Mesh => 1,
    });
    w.len(m.resolution);
    w.f64(m.quantization);
    let n_bundles = m.adjacency.len();
    w.len(n_bundles);
    w.len(m.nn.weights.len());
    for list in &m.nn.weights {
        w.len(list.len());
        for (b, x) in list {
            w.u32(*b);
            w.f32(*x as f32);
        }
    }
    w.len(m.nn.flagged.len());
    m.nn.flagged.iter().for_each(|v| w.len(*v));
    for list in &m.adjacency {
        w.len(list.len());
        list.iter().for_each(|b| w.len(*b));
    }
    for row in m.vertex_dist.iter().chain(&m.site_dist) {
        row.iter().for_each(|d| w.f64(*d));
    }
    w.buf
}

pub fn blend_from_bytes(data: &[u8]) -> Result<BlendModel> {
    let mut r = Reader::new(data, Error::InvalidWeightCache);
    r.magic(MAGIC)?;
    let mode = match r.u8()? {
        0 => NnMode::Uv,
        1 => NnMode::Mesh,
        t => return Err(r.err(format!("bad mode {t}"))),
    };
    let resolution = r.u32()? as usize;
    let quantization = r.f64()?;
    let n_bundles = r.len(4)?;
    let n_verts = r.len(4)?;
    let mut weights = Vec::with_capacity(n_verts);
    for v in 0..n_verts {
        let k = r.len(8)?;
        let mut list = Vec::with_capacity(k);
        for _ in 0..k {
            let b = r.u32()?;
            if b as usize >= n_bundles {
                return Err(r.err(format!("vertex {v} references bundle {b}")));
            }
            list.push((b, r.f32()? as f64));
        }
        // restore the unit sum lost to f32 storage
        let s: f64 = list.iter().map(|e| e.1).sum();
        if s > 0.0 {
            list.iter_mut().for_each(|e| e.1 /= s);
        }
        weights.push(list);
    }
    let n_flag = r.len(4)?;
    let flagged = (0..n_flag).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let mut adjacency = Vec::with_capacity(n_bundles);
    for _ in 0..n_bundles {
        let k = r.len(4)?;
        adjacency.push((0..k).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?);
    }
    let mut table = |cols: usize| -> Result<Vec<Vec<f64>>> {
        (0..n_bundles).map(|_| (0..cols).map(|_| r.f64()).collect()).collect()
    };
    let vertex_dist = table(n_verts)?;
    let site_dist = table(n_bundles)?;
    r.finish()?;
    Ok(BlendModel {
        mode,
        resolution,
        nn: BlendField { weights, flagged },
        adjacency,
        vertex_dist,
        site_dist,
        quantization,
    })
}

pub fn save_blend(path: impl AsRef<Path>, m: &BlendModel) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, blend_to_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn load_blend(path: impl AsRef<Path>) -> Result<BlendModel> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    blend_from_bytes(&data)
}
