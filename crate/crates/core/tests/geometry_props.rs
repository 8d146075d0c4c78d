use nalgebra::Point3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use synthforge_core::geometry::{
    apply_subdivide, apply_wireframe, bounding_box, cube, make_primitive, merge, Mesh, Placement,
    PrimitiveKind, PrimitiveSpec,
};
use synthforge_core::procgen::{generate_class_mesh, ProcGenConfig};

fn proc_meshes(seed: u64, n: usize) -> Vec<Mesh> {
    let cfg = ProcGenConfig { seed, ..Default::default() };
    (0..n).map(|i| generate_class_mesh(&cfg, i).unwrap().mesh).collect()
}

/// Unique undirected edges, counted independently of `Mesh::edges`.
fn edge_count(m: &Mesh) -> usize {
    let mut e: Vec<(u32, u32)> = m
        .faces
        .iter()
        .flat_map(|f| (0..f.len()).map(move |k| {
            let (a, b) = (f[k], f[(k + 1) % f.len()]);
            (a.min(b), a.max(b))
        }))
        .collect();
    e.sort_unstable();
    e.dedup();
    e.len()
}

#[test]
fn subdivision_counts_on_procedural_meshes() {
    for (i, m) in proc_meshes(21, 100).iter().enumerate() {
        if m.faces.iter().any(|f| f.len() > 4) {
            continue;
        }
        let corners: usize = m.faces.iter().map(Vec::len).sum();
        let out = apply_subdivide(m, 1).unwrap().mesh;
        assert_eq!(out.face_count(), corners, "mesh {i}");
        assert_eq!(out.vertex_count(), m.vertex_count() + edge_count(m) + m.face_count(), "mesh {i}");
        assert!(out.faces.iter().all(|f| f.len() == 4));
    }
}

#[test]
fn wireframe_stays_inside_inflated_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (i, m) in proc_meshes(22, 100).iter().enumerate() {
        let t = rng.random_range(0.01..0.3);
        let out = apply_wireframe(m, t).unwrap().mesh;
        let outer = bounding_box(m).unwrap().inflate(t);
        assert!(outer.contains(&bounding_box(&out).unwrap()), "mesh {i} t {t}");
    }
}

#[test]
fn operations_are_pure() {
    for m in proc_meshes(23, 5) {
        assert_eq!(apply_wireframe(&m, 0.05).unwrap().mesh, apply_wireframe(&m, 0.05).unwrap().mesh);
        if m.faces.iter().all(|f| f.len() <= 4) {
            assert_eq!(apply_subdivide(&m, 1).unwrap().mesh, apply_subdivide(&m, 1).unwrap().mesh);
        }
    }
}

#[test]
fn catmull_clark_cube() {
    let out = apply_subdivide(&cube(1.0), 1).unwrap().mesh;
    assert_eq!((out.vertex_count(), out.face_count()), (26, 24));
}

fn placed(kind: PrimitiveKind, t: [f64; 3]) -> Mesh {
    make_primitive(&PrimitiveSpec {
        kind,
        placement: Placement { translation: t, ..Default::default() },
    })
    .unwrap()
}

fn kind() -> impl Strategy<Value = PrimitiveKind> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|edge| PrimitiveKind::Cube { edge }),
        (0.2f64..2.0, 3u32..20, 3u32..12).prop_map(|(radius, segments, rings)| PrimitiveKind::Sphere { radius, segments, rings }),
        (0.2f64..2.0, 0.2f64..3.0, 3u32..20).prop_map(|(radius, height, segments)| PrimitiveKind::Cone { radius, height, segments }),
        (0.2f64..2.0, 0.2f64..3.0, 3u32..20).prop_map(|(radius, height, segments)| PrimitiveKind::Cylinder { radius, height, segments }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_is_associative(
        ka in kind(), kb in kind(), kc in kind(),
        ta in prop::array::uniform3(-5.0f64..5.0),
        tb in prop::array::uniform3(-5.0f64..5.0),
        tc in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let (a, b, c) = (placed(ka, ta), placed(kb, tb), placed(kc, tc));
        let left = merge([&merge([&a, &b]).mesh, &c]).mesh;
        let right = merge([&a, &merge([&b, &c]).mesh]).mesh;
        prop_assert_eq!(bounding_box(&left).unwrap(), bounding_box(&right).unwrap());
        prop_assert_eq!(&left, &merge([&a, &b, &c]).mesh);
        prop_assert_eq!(left.face_count(), right.face_count());
    }

    #[test]
    fn wireframe_of_primitive_is_contained(k in kind(), t in 0.01f64..0.5) {
        let m = placed(k, [0.0; 3]);
        let out = apply_wireframe(&m, t).unwrap().mesh;
        prop_assert!(bounding_box(&m).unwrap().inflate(t).contains(&bounding_box(&out).unwrap()));
    }

    #[test]
    fn subdivision_of_primitive_follows_counting_law(k in kind(), levels in 1u32..=2) {
        let m = placed(k, [0.0; 3]);
        let mut expected_faces: usize = m.faces.iter().map(Vec::len).sum();
        for _ in 1..levels {
            expected_faces *= 4;
        }
        let out = apply_subdivide(&m, levels).unwrap().mesh;
        prop_assert_eq!(out.face_count(), expected_faces);
        // Closed surfaces stay closed with the same Euler characteristic.
        prop_assert_eq!(out.euler_characteristic(), m.euler_characteristic());
    }
}

#[test]
fn isolated_point_mesh_has_zero_extent() {
    let m = Mesh::new(vec![Point3::new(2.0, 3.0, 4.0)], vec![]).unwrap();
    assert_eq!(bounding_box(&m).unwrap().max_extent(), 0.0);
}
