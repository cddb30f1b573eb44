//! End-to-end runs of the `lgi` binary on a small synthetic library.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use serde_json::Value;

struct Run {
    code: i32,
    json: Value,
    stderr: String,
}

fn lgi(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_lgi"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("run lgi");
    let stdout = String::from_utf8(out.stdout).unwrap();
    Run {
        code: out.status.code().unwrap_or(-1),
        json: serde_json::from_str(&stdout).unwrap_or(Value::Null),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &[
    "--nx", "12", "--ny", "16", "--shapes", "8", "--inbetweens", "2", "--bundles", "8", "--frames", "6",
];

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("lgi-cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn synth(dir: &Path, extra: &[&str]) -> Run {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    lgi(&args)
}

fn build(dir: &Path, extra: &[&str]) -> Run {
    let lib = dir.join("library/library.json");
    let idx = dir.join("index.lgi");
    let mut args = vec!["build-index", "--library", s(&lib), "--out", s(&idx), "--resolution", "64"];
    args.extend_from_slice(extra);
    lgi(&args)
}

/// Synthetic library without jaw motion, with index and weights.
fn fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = fresh_dir("fixture");
        assert_eq!(synth(&dir, &["--jaw-fraction", "0"]).code, 0);
        let r = build(&dir, &[]);
        assert_eq!(r.code, 0, "{}", r.stderr);
        dir
    })
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_in(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic() {
    let (a, b, c) = (fresh_dir("det_a"), fresh_dir("det_b"), fresh_dir("det_c"));
    assert_eq!(synth(&a, &[]).code, 0);
    assert_eq!(synth(&b, &[]).code, 0);
    assert_eq!(synth(&c, &["--seed", "8"]).code, 0);
    let (fa, fb) = (files_in(&a), files_in(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
    let obj = "library/shapes/ex00.obj";
    assert_ne!(fs::read(a.join(obj)).unwrap(), fs::read(c.join(obj)).unwrap());
}

#[test]
fn synth_rejects_bad_config() {
    let dir = fresh_dir("bad_synth");
    let r = lgi(&["synth", "--out", s(&dir), "--shapes", "0"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn build_index_reports_stats_and_is_idempotent() {
    let dir = fixture();
    let again = fresh_dir("rebuild");
    let r = lgi(&[
        "build-index",
        "--library",
        s(&dir.join("library/library.json")),
        "--out",
        s(&again.join("index.lgi")),
        "--resolution",
        "64",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["bundles"].as_array().unwrap().len(), 8);
    let first = &r.json["bundles"][0]["clouds"][0];
    assert!(first["points"].as_u64().unwrap() >= 5);
    assert!(first["tets"].as_u64().unwrap() >= 1);
    assert_eq!(fs::read(dir.join("index.lgi")).unwrap(), fs::read(again.join("index.lgi")).unwrap());
    assert_eq!(fs::read(dir.join("index.lgnn")).unwrap(), fs::read(again.join("index.lgnn")).unwrap());
}

#[test]
fn build_index_cap_names_bundle() {
    let dir = fresh_dir("cap");
    assert_eq!(synth(&dir, &[]).code, 0);
    let r = build(&dir, &["--cap", "1"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("bundle `b0"), "{}", r.stderr);
    assert!(r.stderr.contains("jaw binning"), "{}", r.stderr);
}

fn model_args(dir: &Path) -> Vec<String> {
    vec![
        "--library".into(),
        dir.join("library/library.json").to_string_lossy().into(),
        "--index".into(),
        dir.join("index.lgi").to_string_lossy().into(),
    ]
}

fn lgi_owned(args: Vec<String>) -> Run {
    lgi(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn roundtrip_passes() {
    let dir = fixture();
    let mut args = vec!["roundtrip".to_string()];
    args.extend(model_args(dir));
    let r = lgi_owned(args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["passed"], true);
    let shapes = r.json["shapes"].as_array().unwrap();
    assert_eq!(shapes.len(), 9);
    assert_eq!(shapes[0]["name"], "neutral");
    assert_eq!(shapes[0]["rms"], 0.0);
}

#[test]
fn roundtrip_flags_unreachable_shapes() {
    let dir = fresh_dir("unreachable");
    assert_eq!(synth(&dir, &[]).code, 0);
    // every shape moves every bundle less than a full diagonal, so all are pruned
    assert_eq!(build(&dir, &["--min-disp-frac", "1"]).code, 0);
    let mut args = vec!["roundtrip".to_string()];
    args.extend(model_args(&dir));
    let r = lgi_owned(args);
    assert_eq!(r.code, 3);
    assert_eq!(r.json["passed"], false);
    assert_eq!(r.json["shapes"][1]["reachable"], false);
    assert!(r.stderr.contains("not in any bundle cloud"));
}

fn reconstruct(dir: &Path, out: &str, extra: &[&str]) -> Run {
    let mut args = vec!["reconstruct".to_string()];
    args.extend(model_args(dir));
    args.extend(["--out".into(), dir.join(out).to_string_lossy().into()]);
    args.extend(extra.iter().map(|x| x.to_string()));
    lgi_owned(args)
}

#[test]
fn reconstruct_track_with_truth() {
    let dir = fixture();
    let track = dir.join("track_bundles.csv");
    let jaw = dir.join("track_jaw.csv");
    let truth = dir.join("truth");
    let r = reconstruct(dir, "rec_nn", &["--track", s(&track), "--jaw", s(&jaw), "--truth", s(&truth), "--window", "1"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json["frames"], 6);
    assert_eq!(r.json["interpolation_ok"], true);
    let out = dir.join("rec_nn");
    for f in 0..6 {
        assert!(out.join(format!("frame_{f:04}.obj")).is_file());
    }
    let solution: Value = serde_json::from_str(&fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(solution.as_array().unwrap().len(), 6);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "nn");
    assert!(report["rms"].as_f64().unwrap() <= report["max"].as_f64().unwrap());
    let csv = fs::read_to_string(out.join("vertex_errors.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 12 * 16);

    // the same run through every blending method
    for method in ["rbf", "baseline", "lsq"] {
        let r = reconstruct(dir, &format!("rec_{method}"), &["--track", s(&track), "--blend", method, "--truth", s(&truth)]);
        assert_eq!(r.code, 0, "{method}: {}", r.stderr);
        assert_eq!(r.json["method"], method);
    }
}

#[test]
fn reconstruct_library_meshes_is_exact() {
    let dir = fixture();
    let shapes = dir.join("library/shapes");
    let nn = reconstruct(dir, "fig2_nn", &["--meshes", s(&shapes), "--truth", s(&shapes), "--window", "1"]);
    assert_eq!(nn.code, 0, "{}", nn.stderr);
    let base = reconstruct(dir, "fig2_base", &["--meshes", s(&shapes), "--truth", s(&shapes), "--blend", "baseline"]);
    assert_eq!(base.code, 0, "{}", base.stderr);
    let (nn_rms, base_rms) = (nn.json["report"]["rms"].as_f64().unwrap(), base.json["report"]["rms"].as_f64().unwrap());
    assert!(nn_rms < 1e-9, "{nn_rms}");
    assert!(base_rms > 10.0 * nn_rms.max(1e-12), "{base_rms}");
}

#[test]
fn rest_track_gives_neutral_and_compare_agrees() {
    let dir = fixture();
    let rest = fresh_dir("rest_meshes");
    for f in 0..3 {
        fs::copy(dir.join("library/neutral.obj"), rest.join(format!("f{f}.obj"))).unwrap();
    }
    let r = reconstruct(dir, "rest_out", &["--meshes", s(&rest)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let c = lgi(&["compare", "--got", s(&dir.join("rest_out")), "--truth", s(&rest)]);
    assert_eq!(c.code, 0, "{}", c.stderr);
    assert!(c.json["max"].as_f64().unwrap() < 1e-9);
    assert_eq!(c.json["frames"].as_array().unwrap().len(), 3);
}

#[test]
fn reconstruct_lists_every_unknown_bundle() {
    let dir = fixture();
    let bad = fresh_dir("bad_track").join("track.csv");
    let text = fs::read_to_string(dir.join("track_bundles.csv")).unwrap();
    fs::write(&bad, text.replace(",b001,", ",zz_top,").replace(",b003,", ",aa_first,")).unwrap();
    let r = reconstruct(dir, "bad_out", &["--track", s(&bad)]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("aa_first, zz_top"), "{}", r.stderr);
}

#[test]
fn compare_closed_form() {
    let dir = fixture();
    let work = fresh_dir("compare");
    let neutral = fs::read_to_string(dir.join("library/neutral.obj")).unwrap();
    let mut moved = false;
    let shifted: String = neutral
        .lines()
        .map(|l| {
            if !moved && l.starts_with("v ") {
                moved = true;
                let v: Vec<f64> = l[2..].split_whitespace().map(|x| x.parse().unwrap()).collect();
                format!("v {} {} {}\n", v[0], v[1], v[2] + 0.5)
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    fs::write(work.join("a.obj"), &neutral).unwrap();
    fs::write(work.join("b.obj"), shifted).unwrap();
    let csv = work.join("errors.csv");
    let r = lgi(&[
        "compare",
        "--got",
        s(&work.join("b.obj")),
        "--truth",
        s(&work.join("a.obj")),
        "--vertex-errors",
        s(&csv),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let n = (12.0 * 16.0f64).sqrt();
    assert!((r.json["max"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!((r.json["rms"].as_f64().unwrap() - 0.5 / n).abs() < 1e-9);
    assert!(csv.is_file());

    let same = lgi(&["compare", "--got", s(&work.join("a.obj")), "--truth", s(&work.join("a.obj"))]);
    assert_eq!(same.json["max"], 0.0);

    let other = fresh_dir("compare_topo");
    fs::write(other.join("x.obj"), "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
    let bad = lgi(&["compare", "--got", s(&other.join("x.obj")), "--truth", s(&work.join("a.obj"))]);
    assert_eq!(bad.code, 2);
}

#[test]
fn prune_index_by_usage_and_blacklist() {
    let dir = fixture();
    let out = dir.join("pruned.lgi");
    let r = lgi(&[
        "prune-index",
        "--library",
        s(&dir.join("library/library.json")),
        "--index",
        s(&dir.join("index.lgi")),
        "--track",
        s(&dir.join("track_bundles.csv")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (before, after) = (r.json["tets_before"].as_u64().unwrap(), r.json["tets_after"].as_u64().unwrap());
    assert!(after < before);
    assert_eq!(r.json["removed_by_usage"].as_u64().unwrap(), before - after);

    // shapes are still reached through their cloud points
    let rt = lgi(&[
        "roundtrip",
        "--library",
        s(&dir.join("library/library.json")),
        "--index",
        s(&out),
        "--weights",
        s(&dir.join("index.lgnn")),
    ]);
    assert_eq!(rt.code, 0, "{}", rt.stderr);

    let list = dir.join("blacklist.csv");
    fs::write(&list, "bundle,a,b,c,d\nb000,0,1,2,3\n").unwrap();
    let b = lgi(&[
        "prune-index",
        "--library",
        s(&dir.join("library/library.json")),
        "--index",
        s(&dir.join("index.lgi")),
        "--blacklist",
        s(&list),
        "--out",
        s(&dir.join("blacklisted.lgi")),
    ]);
    assert_eq!(b.code, 0, "{}", b.stderr);
    assert!(b.json["removed_by_blacklist"].as_u64().unwrap() <= 1);

    fs::write(&list, "b000,0,1,2\n").unwrap();
    let bad = lgi(&[
        "prune-index",
        "--library",
        s(&dir.join("library/library.json")),
        "--index",
        s(&dir.join("index.lgi")),
        "--blacklist",
        s(&list),
        "--out",
        s(&dir.join("never.lgi")),
    ]);
    assert_eq!(bad.code, 2);
}

#[test]
fn exit_codes_for_bad_inputs() {
    let dir = fixture();
    let missing = lgi(&["roundtrip", "--library", "/nonexistent/library.json", "--index", "/nonexistent/x.lgi"]);
    assert_eq!(missing.code, 1);
    let junk = fresh_dir("junk").join("junk.lgi");
    fs::write(&junk, b"not an index").unwrap();
    let mut args = vec!["roundtrip".to_string(), "--library".into()];
    args.push(dir.join("library/library.json").to_string_lossy().into());
    args.extend(["--index".into(), junk.to_string_lossy().into()]);
    assert_eq!(lgi_owned(args).code, 2);
    assert_eq!(lgi(&["reconstruct"]).code, 2);
}
