//! Synthetic face-like libraries and performances with known ground truth.
//!
//! The "face" is a gently domed rectangular sheet. Each extreme expression combines a
//! small global offset, broad bumps, a fine wrinkle and a jaw pose. Activating an
//! extreme at level `a` scales its linear part by `a` and adds a vertical bulge of
//! height `4 N a (1 - a)` whose center slides with `a`, so partial activations are not
//! linear blends of the library shapes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jaw::{JawModel, JawPose, Skinning};
use crate::library::{save_library, BundleDef, ShapeInput, ShapeLibrary, Tags};
use crate::mesh::{eval_surface_point, save_obj, TriMesh, Vec2, Vec3};
use crate::track::{write_track, TrackFrame};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Vertex columns and rows of the sheet.
    pub nx: usize,
    pub ny: usize,
    /// Sheet extent in length units (millimeters).
    pub width: f64,
    pub height: f64,
    /// Library shapes in total, including the in-betweens.
    pub shapes: usize,
    /// Half-activated copies of the first extremes.
    pub inbetweens: usize,
    pub bundles: usize,
    /// Peak height `N` of the nonlinear bulge.
    pub nonlinearity: f64,
    /// Fraction of extremes that carry a jaw pose.
    pub jaw_fraction: f64,
    pub seed: u64,
    /// Frames in the ground-truth performance.
    pub frames: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            nx: 32,
            ny: 64,
            width: 120.0,
            height: 160.0,
            shapes: 30,
            inbetweens: 10,
            bundles: 40,
            nonlinearity: 4.0,
            jaw_fraction: 0.3,
            seed: 7,
            frames: 48,
        }
    }
}

impl SynthConfig {
    pub fn extremes(&self) -> usize {
        self.shapes - self.inbetweens
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.nx < 4 || self.ny < 4 {
            return bad(format!("sheet needs at least 4 x 4 vertices, got {} x {}", self.nx, self.ny));
        }
        if self.shapes < 2 {
            return bad(format!("need at least 2 shapes, got {}", self.shapes));
        }
        if self.inbetweens >= self.shapes || self.inbetweens > self.extremes() {
            return bad(format!(
                "{} in-betweens need as many extremes among {} shapes",
                self.inbetweens, self.shapes
            ));
        }
        if self.bundles < 4 {
            return bad(format!("need at least 4 bundles, got {}", self.bundles));
        }
        if self.bundles * 4 > self.nx * self.ny {
            return bad(format!("{} bundles do not fit on {} vertices", self.bundles, self.nx * self.ny));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("sheet extent must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.jaw_fraction) {
            return bad(format!("jaw fraction {} outside [0,1]", self.jaw_fraction));
        }
        if !(self.nonlinearity >= 0.0 && self.nonlinearity.is_finite()) {
            return bad(format!("nonlinearity {} must be finite and nonnegative", self.nonlinearity));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Bump {
    center: Vec2,
    radius: f64,
    amp: Vec3,
}

#[derive(Debug, Clone)]
struct Wrinkle {
    center: Vec2,
    dir: Vec2,
    wavelength: f64,
    radius: f64,
    amp: f64,
}

#[derive(Debug, Clone)]
struct Bulge {
    center: Vec2,
    shift: Vec2,
    radius: f64,
}

#[derive(Debug, Clone)]
struct Extreme {
    offset: Vec3,
    bumps: Vec<Bump>,
    wrinkle: Wrinkle,
    bulge: Bulge,
    jaw: JawPose,
}

fn gauss(p: Vec2, c: Vec2, r: f64) -> f64 {
    (-(p - c).norm_squared() / (r * r)).exp()
}

impl Extreme {
    fn linear(&self, p: Vec2) -> Vec3 {
        let mut d = self.offset;
        for b in &self.bumps {
            d += b.amp * gauss(p, b.center, b.radius);
        }
        let w = &self.wrinkle;
        let phase = (p - w.center).dot(&w.dir) * std::f64::consts::TAU / w.wavelength;
        d.z += w.amp * phase.sin() * gauss(p, w.center, w.radius);
        d
    }

    fn bulge(&self, p: Vec2, a: f64) -> f64 {
        let b = &self.bulge;
        gauss(p, b.center + b.shift * (a - 0.5), b.radius)
    }

    fn at(&self, p: Vec2, a: f64, nonlinearity: f64) -> Vec3 {
        let mut d = self.linear(p) * a;
        d.z += 4.0 * nonlinearity * a * (1.0 - a) * self.bulge(p, a);
        d
    }
}

/// Smallest bundle displacement a library shape may have, so default cloud pruning keeps
/// every shape in every cloud.
const MIN_BUNDLE_MOTION: f64 = 0.5;

/// Synthetic rig: neutral sheet, extremes, skinning and bundle placement.
#[derive(Debug, Clone)]
pub struct Generator {
    pub config: SynthConfig,
    pub neutral: TriMesh,
    pub skin_weights: Vec<f64>,
    pub jaw_model: JawModel,
    pub bundles: Vec<BundleDef>,
    extremes: Vec<Extreme>,
}

/// One frame of a ground-truth performance.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFrame {
    /// Activation per extreme.
    pub activation: Vec<f64>,
    pub jaw: JawPose,
    /// Posed vertex positions.
    pub positions: Vec<Vec3>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

fn build_sheet(cfg: &SynthConfig) -> Result<TriMesh> {
    let (nx, ny) = (cfg.nx, cfg.ny);
    let mut positions = Vec::with_capacity(nx * ny);
    let mut uvs = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let u = i as f64 / (nx - 1) as f64;
            let v = j as f64 / (ny - 1) as f64;
            // shallow dome so geodesics differ from UV distances
            let z = 12.0 * (1.0 - 0.5 * ((2.0 * u - 1.0).powi(2) + (2.0 * v - 1.0).powi(2)));
            positions.push(Vec3::new(u * cfg.width, v * cfg.height, z));
            uvs.push(Vec2::new(u, v));
        }
    }
    let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = (j * nx + i) as u32;
            let w = nx as u32;
            faces.push([a, a + 1, a + w + 1]);
            faces.push([a, a + w + 1, a + w]);
        }
    }
    TriMesh::new(positions, faces, uvs)
}

/// Bundles on vertices of a jittered grid covering the sheet interior.
fn place_bundles(cfg: &SynthConfig, mesh: &TriMesh, rng: &mut ChaCha8Rng) -> Result<Vec<BundleDef>> {
    let aspect = cfg.height / cfg.width;
    let cols = ((cfg.bundles as f64 / aspect).sqrt().round() as usize).max(1);
    let rows = cfg.bundles.div_ceil(cols);
    let mut taken = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(cfg.bundles);
    'cells: for k in 0..rows * cols {
        if out.len() == cfg.bundles {
            break;
        }
        let (r, c) = (k / cols, k % cols);
        for _ in 0..64 {
            let u = (c as f64 + 0.5 + rng.gen_range(-0.3..0.3)) / cols as f64;
            let v = (r as f64 + 0.5 + rng.gen_range(-0.3..0.3)) / rows as f64;
            let i = ((u * (cfg.nx - 1) as f64).round() as usize).clamp(1, cfg.nx - 2);
            let j = ((v * (cfg.ny - 1) as f64).round() as usize).clamp(1, cfg.ny - 2);
            let vid = j * cfg.nx + i;
            if taken.insert(vid) {
                let attach = mesh
                    .vertex_point(vid)
                    .ok_or_else(|| Error::InvalidMesh(format!("vertex {vid} is unused")))?;
                out.push(BundleDef {
                    name: format!("b{:03}", out.len()),
                    attach,
                    region_tags: Tags::new(),
                });
                continue 'cells;
            }
        }
    }
    if out.len() < cfg.bundles {
        return Err(Error::InvalidArgument(format!(
            "could only place {} of {} bundles",
            out.len(),
            cfg.bundles
        )));
    }
    Ok(out)
}

fn random_extreme(cfg: &SynthConfig, rng: &mut ChaCha8Rng, jaw: JawPose) -> Extreme {
    let point = |rng: &mut ChaCha8Rng| Vec2::new(rng.gen_range(0.1..0.9) * cfg.width, rng.gen_range(0.1..0.9) * cfg.height);
    let dir3 = |rng: &mut ChaCha8Rng| {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        v / v.norm().max(1e-3)
    };
    let offset = dir3(rng) * rng.gen_range(0.5..2.0);
    let bumps = (0..2)
        .map(|_| Bump {
            center: point(rng),
            radius: rng.gen_range(15.0..35.0),
            amp: Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(2.0..6.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            ),
        })
        .collect();
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let wrinkle = Wrinkle {
        center: point(rng),
        dir: Vec2::new(angle.cos(), angle.sin()),
        wavelength: rng.gen_range(6.0..10.0),
        radius: rng.gen_range(12.0..20.0),
        amp: rng.gen_range(0.8..1.6),
    };
    let shift_angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let bulge = Bulge {
        center: point(rng),
        shift: Vec2::new(shift_angle.cos(), shift_angle.sin()) * rng.gen_range(8.0..16.0),
        radius: rng.gen_range(10.0..16.0),
    };
    Extreme {
        offset,
        bumps,
        wrinkle,
        bulge,
        jaw,
    }
}

impl Generator {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let neutral = build_sheet(&config)?;
        let h = config.height;
        let skin_weights = neutral
            .positions
            .iter()
            .map(|p| 1.0 - smoothstep((p.y - 0.25 * h) / (0.2 * h)))
            .collect();
        let jaw_model = JawModel {
            hinge_point: [0.5 * config.width, 0.65 * h, -60.0],
            ..JawModel::default()
        };
        let bundles = place_bundles(&config, &neutral, &mut rng)?;
        let bundle_uv = bundles
            .iter()
            .map(|b| eval_surface_point(&neutral.positions, &neutral, &b.attach).map(|x| Vec2::new(x.x, x.y)))
            .collect::<Result<Vec<_>>>()?;
        let n_ext = config.extremes();
        let n_jaw = (config.jaw_fraction * n_ext as f64).round() as usize;
        let extremes = (0..n_ext)
            .map(|e| {
                // jaw extremes are spread evenly up to a 0.4 rad opening
                let jaw = if e < n_jaw {
                    JawPose {
                        rot: 0.4 * (e + 1) as f64 / n_jaw as f64,
                        protrude: rng.gen_range(-1.5..1.5),
                        lateral: rng.gen_range(-1.0..1.0),
                    }
                } else {
                    JawPose::REST
                };
                let levels: &[f64] = if e < config.inbetweens { &[1.0, 0.5] } else { &[1.0] };
                let moves_all = |x: &Extreme| {
                    bundle_uv.iter().all(|p| {
                        levels
                            .iter()
                            .all(|a| x.at(*p, *a, config.nonlinearity).norm() >= MIN_BUNDLE_MOTION)
                    })
                };
                let mut x = random_extreme(&config, &mut rng, jaw);
                for _ in 0..1000 {
                    if moves_all(&x) {
                        break;
                    }
                    x = random_extreme(&config, &mut rng, jaw);
                }
                x
            })
            .collect();
        Ok(Generator {
            config,
            neutral,
            skin_weights,
            jaw_model,
            bundles,
            extremes,
        })
    }

    pub fn extreme_count(&self) -> usize {
        self.extremes.len()
    }

    fn check(&self, activation: &[f64]) -> Result<()> {
        if activation.len() != self.extremes.len() {
            return Err(Error::LengthMismatch {
                expected: self.extremes.len(),
                actual: activation.len(),
            });
        }
        Ok(())
    }

    /// Jaw pose of an activation: the activation-weighted sum of the extremes' poses.
    pub fn jaw(&self, activation: &[f64]) -> Result<JawPose> {
        self.check(activation)?;
        let mut pose = JawPose::REST;
        for (e, a) in self.extremes.iter().zip(activation) {
            pose.rot += a * e.jaw.rot;
            pose.protrude += a * e.jaw.protrude;
            pose.lateral += a * e.jaw.lateral;
        }
        Ok(pose)
    }

    fn displacement_at(&self, x: &Vec3, activation: &[f64]) -> Vec3 {
        let p = Vec2::new(x.x, x.y);
        let n = self.config.nonlinearity;
        self.extremes
            .iter()
            .zip(activation)
            .filter(|(_, a)| **a != 0.0)
            .fold(Vec3::zeros(), |d, (e, a)| d + e.at(p, *a, n))
    }

    /// Displacements before jaw skinning.
    pub fn displacement(&self, activation: &[f64]) -> Result<Vec<Vec3>> {
        self.check(activation)?;
        Ok(self.neutral.positions.iter().map(|x| self.displacement_at(x, activation)).collect())
    }

    fn pose(&self, disp: &[Vec3], pose: &JawPose) -> Vec<Vec3> {
        let skin = Skinning::new(&self.jaw_model, pose);
        disp.iter()
            .zip(&self.neutral.positions)
            .zip(&self.skin_weights)
            .map(|((d, x0), s)| skin.at(*s).apply(&(x0 + d)))
            .collect()
    }

    /// Posed vertex positions of an activation.
    pub fn expression(&self, activation: &[f64]) -> Result<Vec<Vec3>> {
        Ok(self.pose(&self.displacement(activation)?, &self.jaw(activation)?))
    }

    /// An asymmetric expression: `left` on the left part of the sheet, `right` on the
    /// right, blended smoothly across the middle fifth. The jaw follows the mean
    /// activation, which is also what the returned frame records.
    pub fn regional_frame(&self, left: &[f64], right: &[f64]) -> Result<TruthFrame> {
        self.check(left)?;
        self.check(right)?;
        let w = self.config.width;
        let disp: Vec<Vec3> = self
            .neutral
            .positions
            .iter()
            .map(|x| {
                let t = smoothstep((x.x / w - 0.4) / 0.2);
                let act: Vec<f64> = left.iter().zip(right).map(|(l, r)| l + (r - l) * t).collect();
                self.displacement_at(x, &act)
            })
            .collect();
        let activation: Vec<f64> = left.iter().zip(right).map(|(l, r)| 0.5 * (l + r)).collect();
        let jaw = self.jaw(&activation)?;
        Ok(TruthFrame {
            positions: self.pose(&disp, &jaw),
            jaw,
            activation,
        })
    }

    fn one_hot(&self, e: usize, a: f64) -> Vec<f64> {
        let mut act = vec![0.0; self.extremes.len()];
        act[e] = a;
        act
    }

    /// Activations of the library shapes in order: every extreme at 1, then the first
    /// extremes at 1/2.
    pub fn shape_activations(&self) -> Vec<(String, Vec<f64>)> {
        let ext = (0..self.extremes.len()).map(|e| (format!("ex{e:02}"), self.one_hot(e, 1.0)));
        let mid = (0..self.config.inbetweens).map(|e| (format!("ex{e:02}_half"), self.one_hot(e, 0.5)));
        ext.chain(mid).collect()
    }

    pub fn library(&self) -> Result<ShapeLibrary> {
        let shapes = self
            .shape_activations()
            .into_iter()
            .map(|(name, act)| {
                Ok(ShapeInput {
                    name,
                    positions: self.expression(&act)?,
                    jaw: self.jaw(&act)?,
                    tags: Tags::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ShapeLibrary::new(
            self.neutral.clone(),
            shapes,
            self.bundles.clone(),
            self.skin_weights.clone(),
            self.jaw_model,
        )
    }

    /// Ground truth for one activation vector.
    pub fn truth_frame(&self, activation: Vec<f64>) -> Result<TruthFrame> {
        Ok(TruthFrame {
            jaw: self.jaw(&activation)?,
            positions: self.expression(&activation)?,
            activation,
        })
    }

    /// A performance starting at rest: sparse random key activations every eight frames
    /// (one to three extremes, total at most 1), eased with smoothstep in between.
    pub fn performance(&self, frames: usize, rng: &mut impl Rng) -> Result<Vec<TruthFrame>> {
        const KEY_SPACING: usize = 8;
        let n = self.extremes.len();
        let n_keys = frames.div_ceil(KEY_SPACING) + 1;
        let mut keys = vec![vec![0.0; n]];
        for _ in 1..n_keys {
            let mut key = vec![0.0; n];
            for _ in 0..rng.gen_range(1..=3.min(n)) {
                key[rng.gen_range(0..n)] = rng.gen_range(0.1..1.0);
            }
            let total: f64 = key.iter().sum();
            if total > 1.0 {
                key.iter_mut().for_each(|a| *a /= total);
            }
            keys.push(key);
        }
        (0..frames)
            .map(|f| {
                let k = f / KEY_SPACING;
                let t = smoothstep((f % KEY_SPACING) as f64 / KEY_SPACING as f64);
                let act = keys[k].iter().zip(&keys[k + 1]).map(|(a, b)| a + (b - a) * t).collect();
                self.truth_frame(act)
            })
            .collect()
    }

    /// Exact bundle positions on a posed surface.
    pub fn bundle_positions(&self, positions: &[Vec3]) -> Result<Vec<(String, Vec3)>> {
        self.bundles
            .iter()
            .map(|b| Ok((b.name.clone(), eval_surface_point(positions, &self.neutral, &b.attach)?)))
            .collect()
    }
}

/// Files written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub track_bundles: PathBuf,
    pub track_jaw: PathBuf,
    pub truth_dir: PathBuf,
}

pub fn frame_file_name(frame: usize) -> String {
    format!("frame_{frame:04}.obj")
}

/// Writes `library/`, the performance's `track_bundles.csv` and `track_jaw.csv`, and one
/// ground-truth OBJ per frame under `truth/`.
pub fn write_synth(dir: impl AsRef<Path>, cfg: &SynthConfig) -> Result<SynthOutput> {
    let dir = dir.as_ref();
    let gen = Generator::new(cfg.clone())?;
    let lib = gen.library()?;
    let manifest = save_library(dir.join("library"), &lib)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6163_6b00);
    let perf = gen.performance(cfg.frames, &mut rng)?;
    let truth_dir = dir.join("truth");
    fs::create_dir_all(&truth_dir).map_err(|e| Error::io(&truth_dir, e))?;
    let mut frames = Vec::with_capacity(perf.len());
    for (f, t) in perf.iter().enumerate() {
        save_obj(&gen.neutral, &t.positions, truth_dir.join(frame_file_name(f)))?;
        frames.push(TrackFrame {
            frame: f,
            bundles: gen.bundle_positions(&t.positions)?,
            jaw: t.jaw,
        });
    }
    let track_bundles = dir.join("track_bundles.csv");
    let track_jaw = dir.join("track_jaw.csv");
    write_track(&track_bundles, &track_jaw, &frames)?;
    Ok(SynthOutput {
        manifest,
        track_bundles,
        track_jaw,
        truth_dir,
    })
}
