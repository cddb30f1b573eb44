use super::cache::{blend_from_bytes, blend_to_bytes};
use super::*;
use crate::library::Source;
use crate::solver::{BundleSolution, Selection};
use crate::testutil;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frame(lib: &ShapeLibrary, per: Vec<ShapeWeights>, jaw: JawPose) -> FrameSolution {
    FrameSolution {
        frame: 0,
        per_bundle: per
            .into_iter()
            .enumerate()
            .map(|(b, w)| BundleSolution {
                bundle: b,
                cloud: 0,
                simplex: vec![0],
                weights_on_points: vec![1.0],
                tet: None,
                shape_weights: w,
                selection: Selection::Contained,
                projected: false,
                residual: 0.0,
                target: Some(lib.bundle_rest(b).unwrap()),
            })
            .collect(),
        jaw,
    }
}

fn model(lib: &ShapeLibrary) -> BlendModel {
    BlendModel::build(lib, 64, NnMode::Uv).unwrap()
}

#[test]
fn single_shape_frame_reproduces_shape() {
    let lib = testutil::library(4, 1, true);
    let m = model(&lib);
    for s in 0..4 {
        let src = Source::Shape(s as u32);
        let f = frame(&lib, vec![ShapeWeights::single(src); 4], lib.shapes[s].jaw);
        let out = blend_frame(&lib, &f, &m.nn).unwrap();
        for (p, q) in out.iter().zip(lib.posed_positions(src)) {
            assert!((p - q).norm() < 1e-9 * lib.diagonal());
        }
    }
}

#[test]
fn neutral_frame_is_neutral_mesh() {
    let lib = testutil::library(2, 2, false);
    let m = model(&lib);
    let out = blend_frame(&lib, &frame(&lib, vec![ShapeWeights::neutral(); 4], JawPose::REST), &m.nn).unwrap();
    assert_eq!(out, lib.neutral.positions);
}

#[test]
fn mixed_frame_interpolates_bundles() {
    let lib = testutil::library(6, 3, true);
    let m = model(&lib);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let per: Vec<ShapeWeights> = (0..4)
        .map(|_| ShapeWeights::from_pairs((0..6).map(|s| (Source::Shape(s), rng.gen_range(0.0..1.0)))).normalized())
        .collect();
    let jaw = JawPose { rot: 0.2, protrude: 0.5, lateral: 0.1 };
    let f = frame(&lib, per.clone(), jaw);
    let out = blend_frame(&lib, &f, &m.nn).unwrap();
    for b in 0..4 {
        let want = eval_bundle(&lib, b, &per[b], &jaw).unwrap();
        let got = crate::mesh::eval_surface_point(&out, &lib.neutral, &lib.bundles[b].attach).unwrap();
        assert!((got - want).norm() <= 1e-6 * lib.diagonal());
    }
}

#[test]
fn blending_is_affine_in_bundle_weights() {
    let lib = testutil::library(3, 5, true);
    let m = model(&lib);
    let jaw = JawPose { rot: 0.1, ..JawPose::REST };
    let a = vec![ShapeWeights::single(Source::Shape(0)); 4];
    let mut b = a.clone();
    b[2] = ShapeWeights::single(Source::Shape(2));
    let mut mix = a.clone();
    mix[2] = ShapeWeights::combine([(0.3, &a[2]), (0.7, &b[2])]);
    let xa = blend_frame(&lib, &frame(&lib, a, jaw), &m.nn).unwrap();
    let xb = blend_frame(&lib, &frame(&lib, b, jaw), &m.nn).unwrap();
    let xm = blend_frame(&lib, &frame(&lib, mix, jaw), &m.nn).unwrap();
    for v in 0..xa.len() {
        assert!((xm[v] - (xa[v] * 0.3 + xb[v] * 0.7)).norm() < 1e-9);
    }
}

#[test]
fn missing_bundle_in_frame_is_an_error() {
    let lib = testutil::library(2, 6, false);
    let m = model(&lib);
    let mut f = frame(&lib, vec![ShapeWeights::neutral(); 4], JawPose::REST);
    f.per_bundle.truncate(2);
    assert!(blend_frame(&lib, &f, &m.nn).is_err());
}

#[test]
fn baseline_rest_and_single_displacement() {
    let lib = testutil::library(2, 7, false);
    let m = model(&lib);
    let rest: Vec<Option<Vec3>> = (0..4).map(|b| Some(lib.bundle_rest(b).unwrap())).collect();
    let out = baseline_displacement_interp(&lib, &rest, &JawPose::REST, &m.nn).unwrap();
    assert_eq!(out, lib.neutral.positions);

    let d = Vec3::new(0.5, -1.0, 2.0);
    let mut moved = rest.clone();
    moved[1] = Some(rest[1].unwrap() + d);
    let out = baseline_displacement_interp(&lib, &moved, &JawPose::REST, &m.nn).unwrap();
    let p = crate::mesh::eval_surface_point(&out, &lib.neutral, &lib.bundles[1].attach).unwrap();
    assert!((p - moved[1].unwrap()).norm() < 1e-12);
}

#[test]
fn adjacency_is_symmetric_and_covers_neighbors() {
    let lib = testutil::library(1, 8, false);
    let m = model(&lib);
    for (a, list) in m.adjacency.iter().enumerate() {
        assert!(!list.is_empty());
        for b in list {
            assert!(m.adjacency[*b].contains(&a));
        }
    }
    // b0 (lower left) and b1 (lower right) share a boundary
    assert!(m.adjacency[0].contains(&1));
}

#[test]
fn nn_field_is_one_at_sites() {
    let lib = testutil::library(1, 9, false);
    for mode in [NnMode::Uv, NnMode::Mesh] {
        let m = BlendModel::build(&lib, 64, mode).unwrap();
        for (b, v) in [6, 8, 16, 18].iter().enumerate() {
            assert_eq!(m.nn.weights[*v], vec![(b as u32, 1.0)]);
        }
    }
}

#[test]
fn rbf_default_sigma_uses_spacing() {
    let lib = testutil::library(1, 10, false);
    let m = model(&lib);
    let s = m.median_spacing();
    assert!((s - 20.0).abs() < 1.0, "{s}");
    let f = m.rbf_field(None);
    assert_eq!(f, rbf_blend_field(&m.vertex_dist, 0.5 * s));
}

#[test]
fn cache_round_trip() {
    let lib = testutil::library(1, 11, false);
    let m = model(&lib);
    let bytes = blend_to_bytes(&m);
    assert_eq!(&bytes[..4], b"LGNN");
    let back = blend_from_bytes(&bytes).unwrap();
    assert_eq!(back.adjacency, m.adjacency);
    assert_eq!(back.vertex_dist, m.vertex_dist);
    for (a, b) in back.nn.weights.iter().zip(&m.nn.weights) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).abs() < 1e-6);
        }
    }
    assert_eq!(blend_to_bytes(&back), bytes);
    assert!(blend_from_bytes(&bytes[..bytes.len() - 2]).is_err());
}
