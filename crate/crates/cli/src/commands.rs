use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lgi_core::blend::cache::{load_blend, save_blend};
use lgi_core::blend::{BlendModel, NnMode};
use lgi_core::compare::CompareReport;
use lgi_core::index::io::{load_index, save_index};
use lgi_core::index::{IndexConfig, PruneConfig, QualityConfig};
use lgi_core::pipeline::{
    build, prune_by_usage, reconstruct, roundtrip, sample_bundles, BlendMethod, BuildConfig, ReconstructOptions,
};
use lgi_core::solver::{solutions_to_json, Selection};
use lgi_core::synth::{frame_file_name, write_synth, SynthConfig};
use lgi_core::track::{read_jaw_track, read_track, TrackFrame};
use lgi_core::{load_library, load_obj, save_obj, Error, JawPose, LgiIndex, Result, ShapeLibrary, Tetra, Vec3};
use serde_json::{json, Value};

use crate::{
    BlendArg, BuildArgs, Cli, Command, CompareArgs, ModelArgs, NnModeArg, PruneArgs, ReconstructArgs, RoundtripArgs,
    SynthArgs,
};

/// What a command prints, and whether its acceptance check held.
pub struct Outcome {
    pub json: Value,
    pub passed: bool,
}

impl Outcome {
    fn ok(json: Value) -> Self {
        Outcome { json, passed: true }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed),
        Command::BuildIndex(a) => build_index(a),
        Command::Reconstruct(a) => reconstruct_cmd(a, cli.tol),
        Command::Roundtrip(a) => roundtrip_cmd(a, cli.tol),
        Command::Compare(a) => compare(a),
        Command::PruneIndex(a) => prune_index(a),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn synth(a: &SynthArgs, seed: u64) -> Result<Outcome> {
    let cfg = SynthConfig {
        nx: a.nx,
        ny: a.ny,
        shapes: a.shapes,
        inbetweens: a.inbetweens,
        bundles: a.bundles,
        nonlinearity: a.nonlinearity,
        jaw_fraction: a.jaw_fraction,
        seed,
        frames: a.frames,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    let out = write_synth(&a.out, &cfg)?;
    log::info!("wrote synthetic library and {} frames to {}", cfg.frames, a.out.display());
    Ok(Outcome::ok(json!({
        "library": out.manifest,
        "track_bundles": out.track_bundles,
        "track_jaw": out.track_jaw,
        "truth": out.truth_dir,
        "vertices": cfg.nx * cfg.ny,
        "shapes": cfg.shapes,
        "bundles": cfg.bundles,
        "frames": cfg.frames,
        "seed": seed,
    })))
}

fn weights_path(m: &ModelArgs) -> PathBuf {
    m.weights.clone().unwrap_or_else(|| m.index.with_extension("lgnn"))
}

fn load_model(lib: &ShapeLibrary, m: &ModelArgs) -> Result<(LgiIndex, BlendModel)> {
    let index = load_index(&m.index)?;
    index.check_library(lib)?;
    let blend = load_blend(weights_path(m))?;
    if blend.nn.vertex_count() != lib.neutral.vertex_count() || blend.adjacency.len() != lib.bundles.len() {
        return Err(Error::InvalidWeightCache("weight cache was built for a different library".into()));
    }
    Ok((index, blend))
}

fn build_index(a: &BuildArgs) -> Result<Outcome> {
    let lib = load_library(&a.lib.library)?;
    let defaults = QualityConfig::default();
    if a.jaw_bins.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("jaw bin edges must be strictly ascending"));
    }
    let cfg = BuildConfig {
        resolution: a.resolution,
        nn_mode: match a.nn_mode {
            NnModeArg::Uv => NnMode::Uv,
            NnModeArg::Mesh => NnMode::Mesh,
        },
        index: IndexConfig {
            min_disp_frac: a.min_disp_frac.unwrap_or(PruneConfig::MIN_DISP_FRAC),
            dedupe_frac: a.dedupe_frac.unwrap_or(PruneConfig::DEDUPE_FRAC),
            quality: QualityConfig {
                min_vol_frac: a.min_vol_frac.unwrap_or(defaults.min_vol_frac),
                max_aspect: a.max_aspect.unwrap_or(defaults.max_aspect),
                max_extent_frac: a.max_extent_frac.unwrap_or(defaults.max_extent_frac),
                cap: a.cap.unwrap_or(defaults.cap),
            },
            jaw_bin_edges: a.jaw_bins.clone(),
        },
    };
    let start = Instant::now();
    let (blend, index) = build(&lib, &cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    save_index(&a.out, &index)?;
    let weights = a.out.with_extension("lgnn");
    save_blend(&weights, &blend)?;
    log::info!("built index for {} bundles in {seconds:.2} s", index.bundles.len());

    let bundles: Vec<Value> = index
        .bundles
        .iter()
        .map(|b| {
            json!({
                "name": b.name,
                "clouds": b.clouds.iter().map(|c| json!({
                    "points": c.cloud.points.len(),
                    "tets": c.tets.len(),
                    "grid_dims": c.grid.dims,
                    "grid_refs": c.grid.cells.iter().map(Vec::len).sum::<usize>(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let total_tets: usize = index.bundles.iter().flat_map(|b| &b.clouds).map(|c| c.tets.len()).sum();
    Ok(Outcome::ok(json!({
        "index": a.out,
        "weights": weights,
        "resolution": blend.resolution,
        "quantization": blend.quantization,
        "total_tets": total_tets,
        "seconds": seconds,
        "bundles": bundles,
    })))
}

/// OBJ files of a directory in name order, or the path itself when it is a file.
fn obj_sequence(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(invalid(format!("{}: no OBJ files", path.display())));
    }
    Ok(files)
}

fn load_positions(files: &[PathBuf]) -> Result<Vec<Vec<Vec3>>> {
    files.iter().map(|f| Ok(load_obj(f)?.positions)).collect()
}

fn mesh_track(lib: &ShapeLibrary, dir: &Path, jaw: Option<&Path>) -> Result<Vec<TrackFrame>> {
    let poses = jaw.map(read_jaw_track).transpose()?.unwrap_or_default();
    load_positions(&obj_sequence(dir)?)?
        .iter()
        .enumerate()
        .map(|(frame, p)| {
            Ok(TrackFrame {
                frame,
                bundles: sample_bundles(lib, p)?,
                jaw: poses.get(&frame).copied().unwrap_or(JawPose::REST),
            })
        })
        .collect()
}

fn reconstruct_cmd(a: &ReconstructArgs, tol: f64) -> Result<Outcome> {
    let lib = load_library(&a.lib.library)?;
    let (index, blend) = load_model(&lib, &a.model)?;
    let frames = match (&a.track, &a.meshes) {
        (Some(t), _) => read_track(t, a.jaw.as_deref())?,
        (None, Some(m)) => mesh_track(&lib, m, a.jaw.as_deref())?,
        (None, None) => return Err(invalid("either --track or --meshes is required")),
    };
    if frames.is_empty() {
        return Err(invalid("track has no frames"));
    }
    let method = match a.blend {
        BlendArg::Nn => BlendMethod::Nn,
        BlendArg::Rbf => BlendMethod::Rbf { sigma: a.sigma },
        BlendArg::Baseline => BlendMethod::Baseline,
        BlendArg::Lsq => BlendMethod::Lsq,
    };
    if a.sigma.is_some_and(|s| !(s > 0.0)) {
        return Err(invalid("--sigma must be positive"));
    }
    let mut opts = ReconstructOptions::for_library(&lib);
    opts.method = method;
    opts.window = a.window;
    opts.solver.temporal = !a.no_temporal;

    let start = Instant::now();
    let rec = reconstruct(&lib, &index, &blend, &frames, &opts)?;
    let seconds = start.elapsed().as_secs_f64();

    create_dir(&a.out)?;
    for (f, m) in frames.iter().zip(&rec.meshes) {
        save_obj(&lib.neutral, m, a.out.join(frame_file_name(f.frame)))?;
    }
    let solution_path = a.out.join("solution.json");
    let text = serde_json::to_string_pretty(&solutions_to_json(&lib, &rec.solutions))?;
    fs::write(&solution_path, text + "\n").map_err(|source| Error::Io {
        path: solution_path.clone(),
        source,
    })?;

    let per_bundle = rec.solutions.iter().flat_map(|f| &f.per_bundle);
    let projected = per_bundle.clone().filter(|s| s.projected).count();
    let missing = per_bundle.clone().filter(|s| s.selection == Selection::Missing).count();
    let max_solver_residual = per_bundle.map(|s| s.residual).fold(0.0, f64::max);
    let max_interp = rec.max_interpolated_residual();
    let tolerance = tol * lib.diagonal() + blend.quantization;
    // natural-neighbor blending must pass through every interpolated bundle
    let passed = method != BlendMethod::Nn || max_interp <= tolerance;
    if passed {
        log::info!("reconstructed {} frames in {seconds:.2} s", frames.len());
    } else {
        log::error!("bundle interpolation residual {max_interp:e} exceeds {tolerance:e}");
    }

    let mut out = json!({
        "frames": frames.len(),
        "method": method.label(),
        "window": a.window,
        "out": a.out,
        "solution": solution_path,
        "projected_bundles": projected,
        "missing_bundles": missing,
        "max_solver_residual": max_solver_residual,
        "max_interpolated_surface_residual": max_interp,
        "tolerance": tolerance,
        "interpolation_ok": passed,
        "seconds": seconds,
    });
    if let Some(truth_dir) = &a.truth {
        let truth = load_positions(&obj_sequence(truth_dir)?)?;
        let residuals = rec
            .surface_residuals
            .iter()
            .map(|r| r.iter().flatten().copied().collect())
            .collect();
        let report = CompareReport::new(method.label(), &rec.meshes, &truth)?.with_residuals(residuals)?;
        let report_path = a.out.join("report.json");
        let text = serde_json::to_string_pretty(&report)?;
        fs::write(&report_path, text + "\n").map_err(|source| Error::Io {
            path: report_path.clone(),
            source,
        })?;
        let errors_path = a.out.join("vertex_errors.csv");
        report.write_vertex_errors(&errors_path)?;
        out["report"] = json!({
            "path": report_path,
            "vertex_errors": errors_path,
            "rms": report.rms,
            "max": report.max,
        });
    }
    Ok(Outcome { json: out, passed })
}

fn roundtrip_cmd(a: &RoundtripArgs, tol: f64) -> Result<Outcome> {
    let lib = load_library(&a.lib.library)?;
    let (index, blend) = load_model(&lib, &a.model)?;
    let report = roundtrip(&lib, &index, &blend, tol * lib.diagonal())?;
    for s in report.failures() {
        if s.reachable {
            log::error!("shape `{}`: RMS {:e} exceeds {:e}", s.name, s.rms, report.tolerance);
        } else {
            log::error!("shape `{}` is not in any bundle cloud", s.name);
        }
    }
    Ok(Outcome {
        passed: report.passed,
        json: serde_json::to_value(&report)?,
    })
}

fn compare(a: &CompareArgs) -> Result<Outcome> {
    let got = load_positions(&obj_sequence(&a.got)?)?;
    let truth = load_positions(&obj_sequence(&a.truth)?)?;
    let report = CompareReport::new(&a.method, &got, &truth)?;
    if let Some(path) = &a.vertex_errors {
        report.write_vertex_errors(path)?;
    }
    Ok(Outcome::ok(serde_json::to_value(&report)?))
}

/// Rows of `bundle,a,b,c,d`; blank lines, `#` comments and a header are skipped.
fn read_blacklist(path: &Path) -> Result<Vec<(String, Tetra)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let ids: Option<Vec<u32>> = fields.get(1..).map(|f| f.iter().filter_map(|x| x.parse().ok()).collect());
        let parse_error = || Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `bundle,a,b,c,d` with four distinct point ids".into(),
        };
        match ids {
            Some(ids) if fields.len() == 5 && ids.len() == 4 => {
                let tet = Tetra::new([ids[0], ids[1], ids[2], ids[3]]).ok_or_else(parse_error)?;
                out.push((fields[0].to_string(), tet));
            }
            Some(ids) if i == 0 && ids.is_empty() => continue,
            _ => return Err(parse_error()),
        }
    }
    Ok(out)
}

fn prune_index(a: &PruneArgs) -> Result<Outcome> {
    if a.track.is_none() && a.blacklist.is_none() {
        return Err(invalid("nothing to prune: give --track and/or --blacklist"));
    }
    let lib = load_library(&a.lib.library)?;
    let mut index = load_index(&a.index)?;
    index.check_library(&lib)?;
    let before: usize = index.bundles.iter().flat_map(|b| &b.clouds).map(|c| c.tets.len()).sum();

    let by_usage = match &a.track {
        Some(t) => prune_by_usage(&lib, &mut index, &read_track(t, a.jaw.as_deref())?, a.min_usage)?,
        None => 0,
    };
    let mut by_blacklist = 0;
    if let Some(path) = &a.blacklist {
        for (name, tet) in read_blacklist(path)? {
            let b = index
                .bundles
                .iter_mut()
                .find(|b| b.name == name)
                .ok_or_else(|| Error::UnknownBundle(name.clone()))?;
            by_blacklist += b.clouds.iter_mut().map(|c| c.prune(0, &[tet])).sum::<usize>();
        }
    }
    save_index(&a.out, &index)?;
    let after: usize = index.bundles.iter().flat_map(|b| &b.clouds).map(|c| c.tets.len()).sum();
    log::info!("pruned {} of {before} tets", before - after);
    Ok(Outcome::ok(json!({
        "out": a.out,
        "tets_before": before,
        "tets_after": after,
        "removed_by_usage": by_usage,
        "removed_by_blacklist": by_blacklist,
    })))
}
