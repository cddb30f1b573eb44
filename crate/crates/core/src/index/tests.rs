use super::io::{index_from_bytes, index_to_bytes};
use super::*;
use crate::jaw::{JawModel, JawPose};
use crate::library::{BundleDef, ShapeInput, Source, Tags};
use crate::mesh::{SurfacePoint, TriMesh, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sheet() -> TriMesh {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for j in 0..4 {
        for i in 0..4 {
            positions.push(Vec3::new(i as f64 * 10.0, j as f64 * 10.0, 0.0));
            uvs.push(Vec2::new(i as f64 / 3.0, j as f64 / 3.0));
        }
    }
    let mut faces = Vec::new();
    for j in 0..3u32 {
        for i in 0..3u32 {
            let a = j * 4 + i;
            faces.push([a, a + 1, a + 5]);
            faces.push([a, a + 5, a + 4]);
        }
    }
    TriMesh::new(positions, faces, uvs).unwrap()
}

fn tags(list: &[&str]) -> Tags {
    list.iter().map(|s| s.to_string()).collect()
}

/// Shape moving every vertex by `d` with small per-vertex noise.
fn shape(rng: &mut ChaCha8Rng, name: &str, d: Vec3, rot: f64, tag: &[&str]) -> ShapeInput {
    ShapeInput {
        name: name.into(),
        positions: sheet()
            .positions
            .iter()
            .map(|p| p + d + Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
            .collect(),
        jaw: JawPose { rot, ..JawPose::REST },
        tags: tags(tag),
    }
}

fn bundles() -> Vec<BundleDef> {
    vec![
        BundleDef {
            name: "brow".into(),
            attach: SurfacePoint::new(16, [0.1, 0.6, 0.3]).unwrap(),
            region_tags: tags(&["upper"]),
        },
        BundleDef {
            name: "chin".into(),
            attach: SurfacePoint::new(1, [0.2, 0.3, 0.5]).unwrap(),
            region_tags: tags(&["lower"]),
        },
    ]
}

fn library(shapes: Vec<ShapeInput>) -> ShapeLibrary {
    let skin = (0..16).map(|v| if v < 8 { 1.0 } else { 0.0 }).collect();
    let jaw = JawModel {
        hinge_point: [15.0, 40.0, -20.0],
        ..JawModel::default()
    };
    ShapeLibrary::new(sheet(), shapes, bundles(), skin, jaw).unwrap()
}

fn random_library(n: usize, seed: u64) -> ShapeLibrary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = (0..n)
        .map(|i| {
            let d = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let rot = rng.gen_range(-0.3..0.3);
            shape(&mut rng, &format!("s{i}"), d, rot, &[])
        })
        .collect();
    library(shapes)
}

fn random_cloud(n: usize, seed: u64) -> CloudIndex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|i| CloudPoint {
            source: if i == 0 { Source::Neutral } else { Source::Shape(i as u32 - 1) },
            pos: Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            neighbor_evals: vec![],
        })
        .collect();
    let cloud = BundleCloud {
        bundle: 0,
        neighbors: vec![],
        points,
        jaw_bin: None,
    };
    CloudIndex::new(cloud, &QualityConfig::default(), "b", vec![]).unwrap()
}

fn single_tet_cloud() -> CloudIndex {
    let pts = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let cloud = BundleCloud {
        bundle: 0,
        neighbors: vec![],
        points: pts
            .iter()
            .enumerate()
            .map(|(i, p)| CloudPoint {
                source: Source::from_code(if i == 0 { u32::MAX } else { i as u32 - 1 }),
                pos: *p,
                neighbor_evals: vec![],
            })
            .collect(),
        jaw_bin: None,
    };
    let cfg = QualityConfig { max_extent_frac: 1.0, ..QualityConfig::default() };
    CloudIndex::new(cloud, &cfg, "b", vec![]).unwrap()
}

#[test]
fn empty_library_cloud_is_neutral_only() {
    let lib = library(vec![]);
    let c = build_cloud(&lib, 0, &[1], &PruneConfig::for_library(&lib)).unwrap();
    assert_eq!(c.points.len(), 1);
    assert_eq!(c.points[0].source, Source::Neutral);
    assert_eq!(c.points[0].pos, lib.bundle_rest(0).unwrap());
    assert_eq!(c.points[0].neighbor_evals, vec![lib.bundle_rest(1).unwrap()]);
}

#[test]
fn duplicate_shapes_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = shape(&mut rng, "a", Vec3::new(1.0, 2.0, 0.5), 0.0, &[]);
    let mut b = a.clone();
    b.name = "b".into();
    let lib = library(vec![a, b]);
    let c = build_cloud(&lib, 1, &[], &PruneConfig::for_library(&lib)).unwrap();
    assert_eq!(c.points.len(), 2);
    assert_eq!(c.points[1].source, Source::Shape(0));
}

#[test]
fn region_tags_exclude_unrelated_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lib = library(vec![
        shape(&mut rng, "smile", Vec3::new(1.0, 0.0, 0.0), 0.0, &["lower"]),
        shape(&mut rng, "raise", Vec3::new(0.0, 1.0, 0.0), 0.0, &["upper"]),
        shape(&mut rng, "any", Vec3::new(0.0, 0.0, 1.0), 0.0, &[]),
    ]);
    let cfg = PruneConfig::for_library(&lib);
    let brow: Vec<Source> = build_cloud(&lib, 0, &[], &cfg).unwrap().sources().collect();
    assert_eq!(brow, vec![Source::Neutral, Source::Shape(1), Source::Shape(2)]);
    let chin: Vec<Source> = build_cloud(&lib, 1, &[], &cfg).unwrap().sources().collect();
    assert_eq!(chin, vec![Source::Neutral, Source::Shape(0), Source::Shape(2)]);
}

#[test]
fn small_displacements_are_pruned() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tiny = shape(&mut rng, "tiny", Vec3::zeros(), 0.0, &[]);
    tiny.positions = sheet().positions;
    tiny.positions[0].z += 1e-6;
    let lib = library(vec![tiny]);
    let c = build_cloud(&lib, 1, &[], &PruneConfig::for_library(&lib)).unwrap();
    assert_eq!(c.points.len(), 1);
}

#[test]
fn jaw_bins_split_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let lib = library(vec![
        shape(&mut rng, "a", Vec3::new(1.0, 0.0, 0.0), 0.1, &[]),
        shape(&mut rng, "b", Vec3::new(0.0, 1.0, 0.0), 0.3, &[]),
    ]);
    let cfg = PruneConfig::for_library(&lib);
    let bins = bin_clouds_by_jaw(&lib, 1, &[], &cfg, &[0.2]).unwrap();
    assert_eq!(bins.len(), 2);
    assert_eq!(bins[0].sources().collect::<Vec<_>>(), vec![Source::Neutral, Source::Shape(0)]);
    assert_eq!(bins[1].sources().collect::<Vec<_>>(), vec![Source::Neutral, Source::Shape(1)]);
    // unskinned positions are independent of the bin
    let all = build_cloud(&lib, 1, &[], &cfg).unwrap();
    assert_eq!(bins[1].points[1].pos, all.points[2].pos);

    assert_eq!(bin_clouds_by_jaw(&lib, 1, &[], &cfg, &[]).unwrap(), vec![all]);
    assert!(bin_clouds_by_jaw(&lib, 1, &[], &cfg, &[0.3, 0.1]).is_err());
}

#[test]
fn binned_sources_partition_unbinned() {
    let lib = random_library(25, 7);
    let cfg = PruneConfig::for_library(&lib);
    for b in 0..2 {
        let all: Vec<Source> = build_cloud(&lib, b, &[], &cfg).unwrap().sources().collect();
        let mut union: Vec<Source> = bin_clouds_by_jaw(&lib, b, &[], &cfg, &[-0.1, 0.0, 0.15])
            .unwrap()
            .iter()
            .flat_map(|c| c.sources().filter(|s| *s != Source::Neutral).collect::<Vec<_>>())
            .collect();
        union.sort();
        union.insert(0, Source::Neutral);
        assert_eq!(union, all);
    }
}

#[test]
fn bin_boundaries_are_closed_open() {
    let bins = jaw_bins(&[0.2]);
    assert!(bins[0].contains(0.19) && !bins[0].contains(0.2));
    assert!(bins[1].contains(0.2) && bins[1].contains(f64::INFINITY));
}

#[test]
fn one_tet_grid_is_single_cell() {
    let c = single_tet_cloud();
    assert_eq!(c.grid.dims, [1, 1, 1]);
    assert_eq!(c.grid.cells, vec![vec![0]]);
}

#[test]
fn spanning_tet_is_in_every_cell() {
    let mut c = random_cloud(12, 8);
    // add a tet whose bbox covers the whole cloud
    let n = c.cloud.points.len() as u32;
    for (k, p) in [
        Vec3::new(-1.0, -1.0, -1.0),
        Vec3::new(3.0, -1.0, -1.0),
        Vec3::new(-1.0, 3.0, -1.0),
        Vec3::new(-1.0, -1.0, 3.0),
    ]
    .into_iter()
    .enumerate()
    {
        c.cloud.points.push(CloudPoint {
            source: Source::Shape(100 + k as u32),
            pos: p,
            neighbor_evals: vec![],
        });
    }
    let big = Tetra::new([n, n + 1, n + 2, n + 3]).unwrap();
    let mut tets = c.tets.clone();
    tets.tets.push(big);
    tets.quality.push(TetQuality::of(&big.corners(&c.cloud.positions())));
    let c = CloudIndex::from_parts(c.cloud, tets, vec![], vec![]);
    assert!(c.grid.cell_count() > 1);
    let bi = (c.tets.len() - 1) as u32;
    assert!(c.grid.cells.iter().all(|cell| cell.contains(&bi)));
}

use crate::simplex::TetQuality;

#[test]
fn grid_cells_cover_brute_force_containment() {
    let c = random_cloud(14, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let cell = c.grid.candidates(&p);
        for cand in c.query_containing_brute(&p) {
            assert!(cell.contains(&cand.tet));
        }
    }
}

#[test]
fn containment_matches_brute_force() {
    let c = random_cloud(15, 11);
    assert!(c.tets.len() > 100);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut hits = 0;
    for _ in 0..1000 {
        let p = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let fast = c.query_containing(&p);
        let brute = c.query_containing_brute(&p);
        assert_eq!(fast, brute);
        hits += (!fast.is_empty()) as usize;
        for cand in &fast {
            assert!(cand.weights.iter().all(|w| *w >= 0.0));
            assert!((cand.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
    assert!(hits > 100);
}

#[test]
fn vertex_query_returns_every_incident_tet() {
    let c = random_cloud(10, 13);
    let v = 3u32;
    let p = c.positions()[v as usize];
    let incident = c.tets.tets.iter().filter(|t| t.ids().contains(&v)).count();
    let found = c.query_containing(&p);
    assert_eq!(found.len(), incident);
    for cand in found {
        let k = cand.ids.iter().position(|i| *i == v).unwrap();
        assert!((cand.weights[k] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn far_point_has_no_candidates() {
    let c = random_cloud(10, 14);
    assert!(c.query_containing(&Vec3::new(50.0, 50.0, 50.0)).is_empty());
}

#[test]
fn projection_inside_is_exact() {
    let c = single_tet_cloud();
    let p = Vec3::new(0.2, 0.2, 0.2);
    let pr = c.project(&p);
    assert_eq!(pr.tet, Some(0));
    assert!(pr.distance < 1e-12);
    assert!((pr.weights[0] - 0.4).abs() < 1e-12);
}

#[test]
fn single_point_cloud_projection() {
    let cloud = BundleCloud {
        bundle: 0,
        neighbors: vec![],
        points: vec![CloudPoint {
            source: Source::Neutral,
            pos: Vec3::new(1.0, 2.0, 3.0),
            neighbor_evals: vec![],
        }],
        jaw_bin: None,
    };
    let c = CloudIndex::new(cloud, &QualityConfig::default(), "b", vec![]).unwrap();
    assert!(c.tets.is_projection_only());
    let pr = c.project(&Vec3::new(1.0, 2.0, 7.0));
    assert_eq!(pr.ids, vec![0]);
    assert_eq!(pr.weights, vec![1.0]);
    assert_eq!(pr.tet, None);
    assert!((pr.distance - 4.0).abs() < 1e-12);
}

#[test]
fn planar_cloud_projects_onto_triangles() {
    let pts = [
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
    ];
    let cloud = BundleCloud {
        bundle: 0,
        neighbors: vec![],
        points: pts
            .iter()
            .enumerate()
            .map(|(i, p)| CloudPoint {
                source: Source::Shape(i as u32),
                pos: *p,
                neighbor_evals: vec![],
            })
            .collect(),
        jaw_bin: None,
    };
    let c = CloudIndex::new(cloud, &QualityConfig::default(), "b", vec![]).unwrap();
    let pr = c.project(&Vec3::new(0.9, 0.8, 2.0));
    assert!((pr.distance - 2.0).abs() < 1e-12);
    assert_eq!(pr.ids.len(), 3);
    let x = pr.ids.iter().zip(&pr.weights).fold(Vec3::zeros(), |a, (i, w)| a + pts[*i as usize] * *w);
    assert!((x - Vec3::new(0.9, 0.8, 0.0)).norm() < 1e-12);
}

#[test]
fn projection_matches_brute_force() {
    let c = random_cloud(12, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let p = Vec3::new(rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..3.0));
        let pr = c.project(&p);
        let brute = c
            .tets
            .tets
            .iter()
            .map(|t| (closest_point_on_simplex(&p, &t.corners(c.positions())).0 - p).norm())
            .fold(f64::INFINITY, f64::min);
        assert!((pr.distance - brute).abs() <= 1e-9);
        let x = pr
            .ids
            .iter()
            .zip(&pr.weights)
            .fold(Vec3::zeros(), |a, (i, w)| a + c.positions()[*i as usize] * *w);
        assert!((x - pr.point).norm() < 1e-9);
    }
}

#[test]
fn prune_drops_unused_and_blacklisted() {
    let mut c = random_cloud(9, 17);
    let n = c.tets.len();
    c.record_usage(0);
    c.record_usage(0);
    c.record_usage(1);
    c.record_usage(2);
    let black = c.tets.tets[2];
    let removed = c.prune(1, &[black]);
    assert_eq!(removed, n - 2);
    assert_eq!(c.usage, vec![2, 1]);
    assert_eq!(c.grid, UniformGrid::build(&c.tets.tets, c.positions()));
    assert_eq!(c.blacklist, vec![black]);
}

#[test]
fn blacklisted_tets_are_never_built() {
    let base = random_cloud(8, 18);
    let black = base.tets.tets[0];
    let c = CloudIndex::new(base.cloud.clone(), &QualityConfig::default(), "b", vec![black]).unwrap();
    assert_eq!(c.tets.len(), base.tets.len() - 1);
    assert!(!c.tets.tets.contains(&black));
}

#[test]
fn full_index_round_trips_bit_exact() {
    let lib = random_library(12, 19);
    let cfg = IndexConfig {
        jaw_bin_edges: vec![0.0],
        ..IndexConfig::default()
    };
    let mut idx = LgiIndex::build(&lib, &[vec![1], vec![0]], &cfg).unwrap();
    idx.bundles[1].clouds[0].record_usage(0);
    idx.check_library(&lib).unwrap();
    let bytes = index_to_bytes(&idx);
    assert_eq!(&bytes[..4], b"LGI1");
    let back = index_from_bytes(&bytes).unwrap();
    assert_eq!(back, idx);
    assert_eq!(index_to_bytes(&back), bytes);
    // rebuilding gives identical bytes
    let mut again = LgiIndex::build(&lib, &[vec![1], vec![0]], &cfg).unwrap();
    again.bundles[1].clouds[0].record_usage(0);
    assert_eq!(index_to_bytes(&again), bytes);
}

#[test]
fn corrupt_index_rejected() {
    let lib = random_library(6, 20);
    let idx = LgiIndex::build(&lib, &[vec![], vec![]], &IndexConfig::default()).unwrap();
    let bytes = index_to_bytes(&idx);
    assert!(index_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(index_from_bytes(&bad).is_err());
    let mut long = bytes;
    long.push(0);
    assert!(index_from_bytes(&long).is_err());
}

#[test]
fn index_rejects_other_library() {
    let idx = LgiIndex::build(&random_library(6, 21), &[vec![], vec![]], &IndexConfig::default()).unwrap();
    assert!(idx.check_library(&random_library(7, 21)).is_err());
}

#[test]
fn cap_names_bundle() {
    let lib = random_library(60, 22);
    let cfg = IndexConfig {
        min_disp_frac: 0.0,
        dedupe_frac: 0.0,
        ..IndexConfig::default()
    };
    let e = LgiIndex::build(&lib, &[vec![], vec![]], &cfg).unwrap_err();
    assert!(e.to_string().contains("brow") || e.to_string().contains("chin"), "{e}");
}
