//! The facial shape dataset: neutral mesh, displacement shapes, bundles and the jaw
//! skinning model.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jaw::{JawModel, JawPose, Skinning, MIN_BLEND_DET};
use crate::mesh::{eval_surface_point, load_obj, SurfacePoint, TriMesh, Vec3};

pub type Tags = BTreeSet<String>;

/// Where a dataset point comes from: the neutral mesh or one of the shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Neutral,
    Shape(u32),
}

impl Source {
    pub fn to_code(self) -> u32 {
        match self {
            Source::Neutral => u32::MAX,
            Source::Shape(i) => i,
        }
    }

    pub fn from_code(code: u32) -> Self {
        if code == u32::MAX {
            Source::Neutral
        } else {
            Source::Shape(code)
        }
    }
}

/// Sparse weights over shapes, sorted by source with no repeated entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShapeWeights {
    entries: Vec<(Source, f64)>,
}

impl ShapeWeights {
    pub fn single(source: Source) -> Self {
        ShapeWeights {
            entries: vec![(source, 1.0)],
        }
    }

    pub fn neutral() -> Self {
        Self::single(Source::Neutral)
    }

    /// Sums repeated sources. Zero weights are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Source, f64)>) -> Self {
        let mut entries: Vec<(Source, f64)> = pairs.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Source, f64)> = Vec::with_capacity(entries.len());
        for (s, w) in entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == s => *acc += w,
                _ => merged.push((s, w)),
            }
        }
        merged.retain(|(_, w)| *w != 0.0);
        ShapeWeights { entries: merged }
    }

    /// Resolves shape names (`"neutral"` maps to the neutral mesh).
    pub fn from_names<'a>(
        lib: &ShapeLibrary,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let resolved = pairs
            .into_iter()
            .map(|(name, w)| Ok((lib.source_by_name(name)?, w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_pairs(resolved))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Source, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, source: Source) -> f64 {
        self.entries
            .binary_search_by(|e| e.0.cmp(&source))
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn is_convex(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.1 >= -tol) && (self.sum() - 1.0).abs() <= tol
    }

    /// Scales to unit sum (no-op for an empty or zero-sum vector).
    pub fn normalized(mut self) -> Self {
        let s = self.sum();
        if s != 0.0 {
            for e in &mut self.entries {
                e.1 /= s;
            }
        }
        self
    }

    /// `sum_k alpha_k * w_k`.
    pub fn combine<'a>(terms: impl IntoIterator<Item = (f64, &'a ShapeWeights)>) -> Self {
        Self::from_pairs(
            terms
                .into_iter()
                .flat_map(|(a, w)| w.entries.iter().map(move |(s, x)| (*s, a * x))),
        )
    }
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub name: String,
    /// Per-vertex displacement from the neutral mesh.
    pub disp: Vec<Vec3>,
    /// Displacement with the jaw motion removed.
    pub disp_unskinned: Vec<Vec3>,
    pub jaw: JawPose,
    pub tags: Tags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleDef {
    pub name: String,
    pub attach: SurfacePoint,
    pub region_tags: Tags,
}

/// A shape before unskinning: name, posed vertex positions, jaw pose and tags.
#[derive(Debug, Clone)]
pub struct ShapeInput {
    pub name: String,
    pub positions: Vec<Vec3>,
    pub jaw: JawPose,
    pub tags: Tags,
}

#[derive(Debug, Clone)]
pub struct ShapeLibrary {
    pub neutral: TriMesh,
    pub shapes: Vec<Shape>,
    pub bundles: Vec<BundleDef>,
    pub skin_weights: Vec<f64>,
    pub jaw_model: JawModel,
}

impl ShapeLibrary {
    /// Builds a library from posed shapes, computing displacements and their unskinned
    /// counterparts, and validates every invariant.
    pub fn new(
        neutral: TriMesh,
        shapes: Vec<ShapeInput>,
        bundles: Vec<BundleDef>,
        skin_weights: Vec<f64>,
        jaw_model: JawModel,
    ) -> Result<Self> {
        neutral.validate()?;
        jaw_model.validate()?;
        let n = neutral.vertex_count();
        if skin_weights.len() != n {
            return Err(Error::InvalidLibrary(format!(
                "{} skin weights for {} vertices",
                skin_weights.len(),
                n
            )));
        }
        if let Some(v) = skin_weights.iter().position(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::InvalidLibrary(format!(
                "skin weight {} at vertex {v} outside [0,1]",
                skin_weights[v]
            )));
        }
        let mut names = HashSet::new();
        for b in &bundles {
            if !names.insert(b.name.as_str()) {
                return Err(Error::DuplicateName { kind: "bundle", name: b.name.clone() });
            }
            b.attach.validate(&neutral).map_err(|e| {
                Error::InvalidLibrary(format!("bundle `{}`: {e}", b.name))
            })?;
        }
        let mut names = HashSet::new();
        for s in &shapes {
            if s.name == NEUTRAL_NAME || !names.insert(s.name.as_str()) {
                return Err(Error::DuplicateName { kind: "shape", name: s.name.clone() });
            }
            if s.positions.len() != n {
                return Err(Error::TopologyMismatch {
                    shape: s.name.clone(),
                    expected: n,
                    actual: s.positions.len(),
                });
            }
            s.jaw.validate()?;
        }

        let mut lib = ShapeLibrary {
            neutral,
            shapes: Vec::with_capacity(shapes.len()),
            bundles,
            skin_weights,
            jaw_model,
        };
        let diag = lib.diagonal();
        for input in shapes {
            let disp: Vec<Vec3> = input
                .positions
                .iter()
                .zip(&lib.neutral.positions)
                .map(|(p, x0)| p - x0)
                .collect();
            let mut shape = Shape {
                name: input.name,
                disp,
                disp_unskinned: Vec::new(),
                jaw: input.jaw,
                tags: input.tags,
            };
            shape.disp_unskinned = unskin_shape(&lib, &shape)?;
            let err = unskin_error(&lib, &shape)?;
            if err > 1e-9 * diag {
                return Err(Error::InvalidLibrary(format!(
                    "shape `{}` fails the unskinning identity (error {err:e})",
                    shape.name
                )));
            }
            lib.shapes.push(shape);
        }
        Ok(lib)
    }

    /// Bounding-box diagonal of the neutral mesh.
    pub fn diagonal(&self) -> f64 {
        self.neutral.bbox_diagonal()
    }

    pub fn vertex_count(&self) -> usize {
        self.neutral.vertex_count()
    }

    pub fn shape_index(&self, name: &str) -> Option<usize> {
        self.shapes.iter().position(|s| s.name == name)
    }

    pub fn bundle_index(&self, name: &str) -> Option<usize> {
        self.bundles.iter().position(|b| b.name == name)
    }

    pub fn source_by_name(&self, name: &str) -> Result<Source> {
        if name == NEUTRAL_NAME {
            return Ok(Source::Neutral);
        }
        self.shape_index(name)
            .map(|i| Source::Shape(i as u32))
            .ok_or_else(|| Error::UnknownShape(name.to_string()))
    }

    pub fn source_name(&self, source: Source) -> &str {
        match source {
            Source::Neutral => NEUTRAL_NAME,
            Source::Shape(i) => &self.shapes[i as usize].name,
        }
    }

    pub fn jaw_pose(&self, source: Source) -> JawPose {
        match source {
            Source::Neutral => JawPose::REST,
            Source::Shape(i) => self.shapes[i as usize].jaw,
        }
    }

    /// Posed vertex positions of a dataset source (`x0 + b_n`).
    pub fn posed_positions(&self, source: Source) -> Vec<Vec3> {
        match source {
            Source::Neutral => self.neutral.positions.clone(),
            Source::Shape(i) => self.neutral.positions
                .iter()
                .zip(&self.shapes[i as usize].disp)
                .map(|(x, d)| x + d)
                .collect(),
        }
    }

    fn unskinned_disp(&self, source: Source, v: usize) -> Vec3 {
        match source {
            Source::Neutral => Vec3::zeros(),
            Source::Shape(i) => self.shapes[i as usize].disp_unskinned[v],
        }
    }

    fn check_weights(&self, weights: &ShapeWeights) -> Result<()> {
        for (s, _) in weights.iter() {
            if let Source::Shape(i) = s {
                if i as usize >= self.shapes.len() {
                    return Err(Error::UnknownShape(format!("#{i}")));
                }
            }
        }
        Ok(())
    }

    /// `x0[v] + sum_n w_n b*_n[v]` for one vertex.
    pub fn unskinned_vertex(&self, v: usize, weights: &ShapeWeights) -> Vec3 {
        weights
            .iter()
            .fold(self.neutral.positions[v], |acc, (s, w)| acc + self.unskinned_disp(s, v) * w)
    }

    /// Skin weight interpolated at a surface point.
    pub fn skin_weight_at(&self, sp: &SurfacePoint) -> Result<f64> {
        sp.interpolate_scalar(&self.neutral, &self.skin_weights)
    }

    pub fn bundle_rest(&self, bundle: usize) -> Result<Vec3> {
        eval_surface_point(&self.neutral.positions, &self.neutral, &self.bundles[bundle].attach)
    }
}

/// Name reserved for the neutral mesh in weight maps and reports.
pub const NEUTRAL_NAME: &str = "neutral";

/// Applies the jaw skinning for pose `pose` to every vertex.
pub fn skin_positions(lib: &ShapeLibrary, positions: &[Vec3], pose: &JawPose) -> Result<Vec<Vec3>> {
    if positions.len() != lib.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: lib.vertex_count(),
            actual: positions.len(),
        });
    }
    if pose.is_rest() {
        return Ok(positions.to_vec());
    }
    let skin = Skinning::new(&lib.jaw_model, pose);
    Ok(positions
        .iter()
        .zip(&lib.skin_weights)
        .enumerate()
        .map(|(v, (p, s))| {
            let m = skin.at(*s);
            if m.determinant().abs() < MIN_BLEND_DET {
                log::warn!("skinning transform at vertex {v} is near-singular");
            }
            m.apply(p)
        })
        .collect())
}

/// `b*_n = T(theta_n)^-1 (x0 + b_n) - x0`.
pub fn unskin_shape(lib: &ShapeLibrary, shape: &Shape) -> Result<Vec<Vec3>> {
    if shape.disp.len() != lib.vertex_count() {
        return Err(Error::LengthMismatch {
            expected: lib.vertex_count(),
            actual: shape.disp.len(),
        });
    }
    if shape.jaw.is_rest() {
        return Ok(shape.disp.clone());
    }
    let skin = Skinning::new(&lib.jaw_model, &shape.jaw);
    lib.neutral
        .positions
        .iter()
        .zip(&shape.disp)
        .zip(&lib.skin_weights)
        .enumerate()
        .map(|(v, ((x0, b), s))| Ok(skin.inverse_at(*s, v)?.apply(&(x0 + b)) - x0))
        .collect()
}

/// Max per-vertex error of `skin(x0 + b*, theta) - (x0 + b)`.
pub fn unskin_error(lib: &ShapeLibrary, shape: &Shape) -> Result<f64> {
    let rest: Vec<Vec3> = lib
        .neutral
        .positions
        .iter()
        .zip(&shape.disp_unskinned)
        .map(|(x, d)| x + d)
        .collect();
    let skinned = skin_positions(lib, &rest, &shape.jaw)?;
    Ok(skinned
        .iter()
        .zip(&lib.neutral.positions)
        .zip(&shape.disp)
        .map(|((p, x0), b)| (p - (x0 + b)).norm())
        .fold(0.0, f64::max))
}

/// Bundle position for `x = T(theta)(x0 + sum_n w_n b*_n)` evaluated on the three
/// vertices of the bundle's face and interpolated barycentrically.
pub fn eval_bundle(
    lib: &ShapeLibrary,
    bundle: usize,
    weights: &ShapeWeights,
    pose: &JawPose,
) -> Result<Vec3> {
    lib.check_weights(weights)?;
    let def = lib
        .bundles
        .get(bundle)
        .ok_or_else(|| Error::UnknownBundle(format!("#{bundle}")))?;
    eval_surface(lib, &def.attach, weights, pose)
}

/// Same as [`eval_bundle`] for an arbitrary surface point.
pub fn eval_surface(
    lib: &ShapeLibrary,
    sp: &SurfacePoint,
    weights: &ShapeWeights,
    pose: &JawPose,
) -> Result<Vec3> {
    let face = lib.neutral.face(sp.face)?;
    let skin = (!pose.is_rest()).then(|| Skinning::new(&lib.jaw_model, pose));
    let mut out = Vec3::zeros();
    for (v, b) in face.iter().zip(sp.bary) {
        if b == 0.0 {
            continue;
        }
        let mut x = lib.unskinned_vertex(*v, weights);
        if let Some(skin) = &skin {
            x = skin.at(lib.skin_weights[*v]).apply(&x);
        }
        out += x * b;
    }
    Ok(out)
}

/// Removes the jaw motion from an observed point on the surface using the transform
/// blended with the skin weight interpolated at that point.
pub fn unskin_point(lib: &ShapeLibrary, sp: &SurfacePoint, observed: &Vec3, pose: &JawPose) -> Result<Vec3> {
    if pose.is_rest() {
        return Ok(*observed);
    }
    let s = lib.skin_weight_at(sp)?;
    let skin = Skinning::new(&lib.jaw_model, pose);
    Ok(skin.inverse_at(s, sp.face)?.apply(observed))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestShape {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub jaw: Option<JawPose>,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// On-disk library description. Relative paths resolve against the manifest directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub neutral: PathBuf,
    #[serde(default)]
    pub shapes: Vec<ManifestShape>,
    #[serde(default)]
    pub bundles: Option<PathBuf>,
    #[serde(default)]
    pub jaw_model: JawModel,
    #[serde(default)]
    pub skin_weights: Option<PathBuf>,
}

pub fn load_library(manifest_path: impl AsRef<Path>) -> Result<ShapeLibrary> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

    let neutral = load_obj(resolve(&manifest.neutral))?;
    let n = neutral.vertex_count();
    let mut shapes = Vec::with_capacity(manifest.shapes.len());
    for s in &manifest.shapes {
        let jaw = s.jaw.ok_or_else(|| Error::MissingJawPose(s.name.clone()))?;
        let mesh = load_obj(resolve(&s.path))?;
        if mesh.vertex_count() != n {
            return Err(Error::TopologyMismatch {
                shape: s.name.clone(),
                expected: n,
                actual: mesh.vertex_count(),
            });
        }
        if mesh.faces != neutral.faces {
            return Err(Error::InvalidLibrary(format!(
                "shape `{}` has different face connectivity than the neutral",
                s.name
            )));
        }
        shapes.push(ShapeInput {
            name: s.name.clone(),
            positions: mesh.positions,
            jaw,
            tags: s.tags.iter().cloned().collect(),
        });
    }
    let bundles = match &manifest.bundles {
        Some(p) => read_bundles(resolve(p))?,
        None => Vec::new(),
    };
    let skin_weights = match &manifest.skin_weights {
        Some(p) => read_scalars(resolve(p))?,
        None => vec![0.0; n],
    };
    ShapeLibrary::new(neutral, shapes, bundles, skin_weights, manifest.jaw_model)
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleRecord {
    name: String,
    face: usize,
    b0: f64,
    b1: f64,
    b2: f64,
    #[serde(default)]
    tags: String,
}

/// Reads `name,face,b0,b1,b2,tags` rows; tags are `;`-separated.
pub fn read_bundles(path: impl AsRef<Path>) -> Result<Vec<BundleDef>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidLibrary(format!("{}: {other:?}", path.display())),
    })?;
    rdr.deserialize::<BundleRecord>()
        .map(|rec| {
            let rec = rec?;
            Ok(BundleDef {
                name: rec.name,
                attach: SurfacePoint::new(rec.face, [rec.b0, rec.b1, rec.b2])?,
                region_tags: split_tags(&rec.tags),
            })
        })
        .collect()
}

pub fn write_bundles(path: impl AsRef<Path>, bundles: &[BundleDef]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidLibrary(format!("{other:?}")),
    })?;
    for b in bundles {
        w.serialize(BundleRecord {
            name: b.name.clone(),
            face: b.attach.face,
            b0: b.attach.bary[0],
            b1: b.attach.bary[1],
            b2: b.attach.bary[2],
            tags: b.region_tags.iter().cloned().collect::<Vec<_>>().join(";"),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn split_tags(s: &str) -> Tags {
    s.split(';')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// One scalar per line.
pub fn read_scalars(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("invalid number `{}`", l.trim()),
            })
        })
        .collect()
}

pub fn write_scalars(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `lib` as a manifest directory: `library.json`, `neutral.obj`, one OBJ per shape
/// under `shapes/`, `bundles.csv` and `skin_weights.txt`. Returns the manifest path.
pub fn save_library(dir: impl AsRef<Path>, lib: &ShapeLibrary) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let shape_dir = dir.join("shapes");
    fs::create_dir_all(&shape_dir).map_err(|e| Error::io(&shape_dir, e))?;
    crate::mesh::save_obj(&lib.neutral, &lib.neutral.positions, dir.join("neutral.obj"))?;
    let mut shapes = Vec::with_capacity(lib.shapes.len());
    for (i, s) in lib.shapes.iter().enumerate() {
        let rel = PathBuf::from("shapes").join(format!("{}.obj", s.name));
        crate::mesh::save_obj(&lib.neutral, &lib.posed_positions(Source::Shape(i as u32)), dir.join(&rel))?;
        shapes.push(ManifestShape {
            name: s.name.clone(),
            path: rel,
            jaw: Some(s.jaw),
            tags: s.tags.iter().cloned().collect(),
        });
    }
    write_bundles(dir.join("bundles.csv"), &lib.bundles)?;
    write_scalars(dir.join("skin_weights.txt"), &lib.skin_weights)?;
    let manifest = Manifest {
        neutral: "neutral.obj".into(),
        shapes,
        bundles: Some("bundles.csv".into()),
        jaw_model: lib.jaw_model,
        skin_weights: Some("skin_weights.txt".into()),
    };
    let path = dir.join("library.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
