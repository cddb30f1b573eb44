//! Bundle and jaw track files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jaw::JawPose;
use crate::mesh::Vec3;

#[derive(Debug, Serialize, Deserialize)]
struct BundleRow {
    frame: usize,
    bundle: String,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct JawRow {
    frame: usize,
    rot: f64,
    protrude: f64,
    lateral: f64,
}

/// One frame of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackFrame {
    pub frame: usize,
    pub bundles: Vec<(String, Vec3)>,
    pub jaw: JawPose,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Reads `frame,bundle,x,y,z` rows and an optional `frame,rot,protrude,lateral` jaw
/// track. Frames come out sorted; frames without a jaw row use the rest pose.
pub fn read_track(bundles: impl AsRef<Path>, jaw: Option<&Path>) -> Result<Vec<TrackFrame>> {
    let path = bundles.as_ref();
    let mut frames: BTreeMap<usize, TrackFrame> = BTreeMap::new();
    for row in csv_reader(path)?.deserialize() {
        let row: BundleRow = row?;
        let p = Vec3::new(row.x, row.y, row.z);
        if !p.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{}: non-finite position for `{}` in frame {}",
                path.display(),
                row.bundle,
                row.frame
            )));
        }
        let f = frames.entry(row.frame).or_insert_with(|| TrackFrame {
            frame: row.frame,
            bundles: vec![],
            jaw: JawPose::REST,
        });
        if f.bundles.iter().any(|(n, _)| *n == row.bundle) {
            return Err(Error::DuplicateName {
                kind: "bundle in frame",
                name: format!("{} (frame {})", row.bundle, row.frame),
            });
        }
        f.bundles.push((row.bundle, p));
    }
    if let Some(jaw_path) = jaw {
        for (frame, pose) in read_jaw_track(jaw_path)? {
            match frames.get_mut(&frame) {
                Some(f) => f.jaw = pose,
                None => log::warn!("jaw track frame {frame} has no bundle data"),
            }
        }
    }
    Ok(frames.into_values().collect())
}

/// Reads a `frame,rot,protrude,lateral` jaw track.
pub fn read_jaw_track(path: impl AsRef<Path>) -> Result<BTreeMap<usize, JawPose>> {
    let mut out = BTreeMap::new();
    for row in csv_reader(path.as_ref())?.deserialize() {
        let row: JawRow = row?;
        let pose = JawPose {
            rot: row.rot,
            protrude: row.protrude,
            lateral: row.lateral,
        };
        pose.validate()?;
        out.insert(row.frame, pose);
    }
    Ok(out)
}

pub fn write_track(bundles: impl AsRef<Path>, jaw: impl AsRef<Path>, frames: &[TrackFrame]) -> Result<()> {
    let mut w = csv_writer(bundles.as_ref())?;
    for f in frames {
        for (name, p) in &f.bundles {
            w.serialize(BundleRow {
                frame: f.frame,
                bundle: name.clone(),
                x: p.x,
                y: p.y,
                z: p.z,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(bundles.as_ref(), e))?;
    let mut w = csv_writer(jaw.as_ref())?;
    for f in frames {
        w.serialize(JawRow {
            frame: f.frame,
            rot: f.jaw.rot,
            protrude: f.jaw.protrude,
            lateral: f.jaw.lateral,
        })?;
    }
    w.flush().map_err(|e| Error::io(jaw.as_ref(), e))
}
