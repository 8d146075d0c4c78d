use nalgebra::Point3;
use proptest::prelude::*;

use super::*;
use crate::geometry::{cube, make_primitive, PrimitiveKind, PrimitiveSpec};
use crate::procgen::{generate_class_mesh, ProcGenConfig};

fn pose(az: f64, el: f64, distance: f64) -> CameraPose {
    CameraPose {
        azimuth_deg: az,
        elevation_deg: el,
        distance,
        fov_deg: 40.0,
    }
}

fn job(pose: CameraPose, illumination: Illumination) -> RenderJob {
    RenderJob {
        mesh: "test".into(),
        class_index: 0,
        image_index: 0,
        pose,
        illumination,
        aniso: None,
        resolution: 128,
        color: ColorMode::Gray,
        flat: false,
        framing: false,
        augment: None,
    }
}

fn light(direction: [f64; 3], k_d: f64) -> Illumination {
    Illumination { direction, k_d, k_a: 0.1 }
}

/// Triangle in the z = 0 plane; with azimuth 0 and elevation 0 the camera sits on +z.
fn facing_triangle() -> Mesh {
    Mesh::new(
        vec![
            Point3::new(-1.0, -1.0, 0.0),
            Point3::new(1.0, -1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        vec![vec![0, 1, 2]],
    )
    .unwrap()
}

fn quad(z: f64, dx: f64) -> (Vec<Point3<f64>>, Vec<u32>) {
    let v = vec![
        Point3::new(-0.5 + dx, -0.5, z),
        Point3::new(0.5 + dx, -0.5, z),
        Point3::new(0.5 + dx, 0.5, z),
        Point3::new(-0.5 + dx, 0.5, z),
    ];
    (v, vec![0, 1, 2, 3])
}

fn proc_mesh(i: usize) -> Mesh {
    let cfg = ProcGenConfig { seed: 11, ..Default::default() };
    generate_class_mesh(&cfg, i).unwrap().mesh
}

#[test]
fn lambert_normal_incidence_is_full_white() {
    let img = rasterize(&facing_triangle(), &job(pose(0.0, 0.0, 4.0), light([0.0, 0.0, 1.0], 0.9))).unwrap();
    assert_eq!(img.pixel(64, 64), &[255]);
    // Backside lit: double-sided shading flips the normal toward the camera.
    let img = rasterize(&facing_triangle(), &job(pose(180.0, 0.0, 4.0), light([0.0, 0.0, -1.0], 0.9))).unwrap();
    assert_eq!(img.pixel(64, 64), &[255]);
}

#[test]
fn lambert_ambient_only() {
    let img = rasterize(&facing_triangle(), &job(pose(0.0, 0.0, 4.0), light([1.0, 0.0, 0.0], 0.9))).unwrap();
    assert_eq!(img.pixel(64, 64), &[26]);
    assert_eq!(img.pixel(0, 0), &[0], "background");
}

#[test]
fn rgb_uses_albedo() {
    let m = facing_triangle().with_albedo(vec![[1.0, 0.5, 0.0]; 3]).unwrap();
    let mut j = job(pose(0.0, 0.0, 4.0), light([0.0, 0.0, 1.0], 0.9));
    j.color = ColorMode::Rgb;
    let img = rasterize(&m, &j).unwrap();
    assert_eq!(img.channels, 3);
    assert_eq!(img.pixel(64, 64), &[255, 128, 0]);
}

#[test]
fn zbuffer_keeps_nearer_quad() {
    // Eye on +z at z = 1: the quads sit at depths 1 and 2.
    let (near_v, near_f) = quad(0.0, 0.0);
    let (far_v, far_f) = quad(-1.0, 0.8);
    let build = |near_first: bool| {
        let mut vertices = Vec::new();
        let mut albedo = Vec::new();
        let mut faces = Vec::new();
        let parts = if near_first {
            [(&near_v, &near_f, [1.0, 0.0, 0.0]), (&far_v, &far_f, [0.0, 0.0, 1.0])]
        } else {
            [(&far_v, &far_f, [0.0, 0.0, 1.0]), (&near_v, &near_f, [1.0, 0.0, 0.0])]
        };
        for (v, f, c) in parts {
            let off = vertices.len() as u32;
            vertices.extend(v.iter().copied());
            albedo.extend(std::iter::repeat_n(c, 4));
            faces.push(f.iter().map(|i| i + off).collect());
        }
        Mesh::new(vertices, faces).unwrap().with_albedo(albedo).unwrap()
    };
    let a = build(true);
    // Target is the box center (z = -0.5), so distance 1.5 puts the eye at z = 1.
    let mut j = job(pose(0.0, 0.0, 1.5), light([0.0, 0.0, 1.0], 0.9));
    j.pose.fov_deg = 90.0;
    j.color = ColorMode::Rgb;
    let ia = rasterize(&a, &j).unwrap();
    let ib = rasterize(&build(false), &j).unwrap();
    assert_eq!(ia.pixels, ib.pixels, "draw order must not matter");

    // Independent overlap oracle: a pixel shows the far quad only where the near
    // quad does not cover it.
    // The far quad's corners stay as unreferenced vertices so the camera target is unchanged.
    let near_only = {
        let (mut v, f) = quad(0.0, 0.0);
        v.extend(quad(-1.0, 0.8).0);
        Mesh::new(v, vec![f]).unwrap()
    };
    let mut jn = j.clone();
    jn.color = ColorMode::Gray;
    let mask = rasterize(&near_only, &jn).unwrap();
    let (mut overlap, mut far_seen) = (0, 0);
    for i in 0..128 * 128 {
        let px = &ia.pixels[3 * i..3 * i + 3];
        if mask.coverage[i] {
            overlap += 1;
            assert_eq!(px, &[255, 0, 0], "pixel {i}");
        } else if ia.coverage[i] {
            far_seen += 1;
            assert_eq!(px, &[0, 0, 255], "pixel {i}");
        }
    }
    assert!(overlap > 1000 && far_seen > 10, "{overlap} {far_seen}");
}

#[test]
fn perspective_area_scaling() {
    let c = cube(1.0);
    let il = light([0.0, 1.0, 0.0], 0.7);
    let mut near = job(pose(30.0, 20.0, 5.0), il);
    near.resolution = 256;
    let mut far = near.clone();
    far.pose.distance = 10.0;
    let n = rasterize(&c, &near).unwrap().foreground_count() as f64;
    let f = rasterize(&c, &far).unwrap().foreground_count() as f64;
    let ratio = n / f;
    assert!((ratio - 4.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn opposite_azimuths_have_equal_silhouettes() {
    let il = light([0.0, 1.0, 0.0], 0.7);
    let meshes = [
        cube(1.0),
        make_primitive(&PrimitiveSpec::at_origin(PrimitiveKind::Cylinder { radius: 0.6, height: 1.5, segments: 24 })).unwrap(),
    ];
    for m in &meshes {
        for az in [0.0, 37.0, 75.0] {
            let mut a = job(pose(az, 20.0, 1.0), il);
            a.framing = true;
            a.resolution = 256;
            let mut b = a.clone();
            b.pose.azimuth_deg = az + 180.0;
            let ca = rasterize(m, &a).unwrap().foreground_count() as f64;
            let cb = rasterize(m, &b).unwrap().foreground_count() as f64;
            assert!((ca - cb).abs() / ca <= 0.01, "az {az}: {ca} vs {cb}");
        }
    }
}

#[test]
fn silhouette_ignores_illumination() {
    for i in 0..4 {
        let m = proc_mesh(i);
        let base = {
            let mut j = job(pose(40.0 * i as f64, 15.0, 1.0), light([0.0, 1.0, 0.0], 0.5));
            j.framing = true;
            j
        };
        let reference = rasterize(&m, &base).unwrap().coverage;
        for (d, k_d) in [([1.0, 0.0, 0.0], 0.9), ([0.0, 0.6, 0.8], 0.0), ([0.0, 0.0, -1.0], 0.3)] {
            let mut j = base.clone();
            j.illumination = light(d, k_d);
            assert_eq!(rasterize(&m, &j).unwrap().coverage, reference);
        }
    }
}

#[test]
fn flat_renders_are_identical() {
    let m = proc_mesh(2);
    let cfg = RenderConfig { resolution: 64, ..Default::default() };
    let fixed = Augment2d { rotation_deg: 17.0, jitter: [0.02, -0.03] };
    let mut first: Option<Vec<u8>> = None;
    for seed in 0..10u64 {
        let plan = sample_render_plan(class_stream(seed, 3), 10, true, &cfg).unwrap();
        for mut j in plan {
            j.augment = Some(fixed);
            // Pose angles are overridden in flat mode.
            j.pose.azimuth_deg = seed as f64 * 31.0;
            let px = rasterize(&m, &j).unwrap().pixels;
            match &first {
                None => first = Some(px),
                Some(f) => assert!(f == &px),
            }
        }
    }
}

#[test]
fn flat_shade_ignores_normals() {
    let j = RenderJob { flat: true, ..job(pose(0.0, 0.0, 1.0), FLAT_ILLUMINATION) };
    let j = RenderJob { framing: true, ..j };
    let img = rasterize(&cube(1.0), &j).unwrap();
    let v = (0.8f64 * 255.0).round() as u8;
    assert!(img.pixels.iter().zip(&img.coverage).all(|(&p, &c)| if c { p == v } else { p == 0 }));
}

#[test]
fn shading_bound_holds() {
    for i in 0..3 {
        let m = proc_mesh(i);
        let n = m.vertex_count();
        let albedo: Vec<[f64; 3]> = (0..n).map(|k| {
            let t = (k % 7) as f64 / 10.0;
            [t, 0.5 * t, 0.2]
        }).collect();
        let max = albedo.iter().flat_map(|c| c.iter().copied()).fold(0.0, f64::max);
        let m = m.with_albedo(albedo).unwrap();
        let plan = sample_render_plan(class_stream(5, i), 4, false, &RenderConfig { resolution: 96, ..Default::default() }).unwrap();
        for mut j in plan {
            for color in [ColorMode::Gray, ColorMode::Rgb] {
                j.color = color;
                let img = rasterize(&m, &j).unwrap();
                let bound = (255.0 * max).round() as u8;
                assert!(img.pixels.iter().all(|&p| p <= bound));
            }
        }
    }
}

#[test]
fn plan_varies_pose() {
    let cfg = RenderConfig::default();
    let plan = sample_render_plan(class_stream(1, 0), 100, false, &cfg).unwrap();
    let mut pairs: Vec<(u64, u64)> = plan
        .iter()
        .map(|j| (j.pose.azimuth_deg.to_bits(), j.pose.elevation_deg.to_bits()))
        .collect();
    pairs.sort();
    pairs.dedup();
    assert!(pairs.len() >= 95);
    let mut aniso = 0;
    for j in &plan {
        j.validate().unwrap();
        assert!((0.0..360.0).contains(&j.pose.azimuth_deg));
        assert!((-30.0..=60.0).contains(&j.pose.elevation_deg));
        assert!(j.illumination.direction[1] >= 0.0);
        assert!((0.5..=0.9).contains(&j.illumination.k_d));
        assert_eq!(j.illumination.k_a, 0.1);
        if let Some(a) = j.aniso {
            aniso += 1;
            assert!((0.5..=2.0).contains(&a.factor));
        }
    }
    assert!((30..=70).contains(&aniso), "{aniso}");
}

#[test]
fn flat_plan_is_uniform() {
    let plan = sample_render_plan(class_stream(1, 0), 100, true, &RenderConfig::default()).unwrap();
    for j in &plan {
        assert_eq!(j.pose, plan[0].pose);
        assert_eq!(j.illumination, plan[0].illumination);
        assert!(j.aniso.is_none());
        let a = j.augment.unwrap();
        assert!((0.0..360.0).contains(&a.rotation_deg));
        assert!(a.jitter.iter().all(|x| x.abs() <= 0.05));
    }
}

#[test]
fn plan_sizes_and_determinism() {
    let cfg = RenderConfig::default();
    assert_eq!(sample_render_plan(class_stream(1, 0), 1, false, &cfg).unwrap().len(), 1);
    assert!(sample_render_plan(class_stream(1, 0), 0, false, &cfg).is_err());
    let a = sample_render_plan(class_stream(9, 4), 12, false, &cfg).unwrap();
    let b = sample_render_plan(class_stream(9, 4), 30, false, &cfg).unwrap();
    assert_eq!(a[..], b[..12], "job k is independent of the plan length");
    let c = sample_render_plan(class_stream(9, 5), 12, false, &cfg).unwrap();
    assert_ne!(a, c);
}

#[test]
fn factor2_mode() {
    let cfg = RenderConfig { aniso_mode: AnisoMode::Factor2, ..Default::default() };
    let plan = sample_render_plan(class_stream(2, 0), 50, false, &cfg).unwrap();
    assert!(plan.iter().filter_map(|j| j.aniso).all(|a| a.factor == 2.0));
}

#[test]
fn aniso_scale_stretches_one_axis() {
    let c = cube(1.0);
    let mut j = job(pose(0.0, 0.0, 1.0), light([0.0, 0.0, 1.0], 0.9));
    j.aniso = Some(AnisoScale { axis: Axis::X, factor: 2.0 });
    let s = raster::scaled_mesh(&c, &j).unwrap();
    let e = crate::geometry::bounding_box(&s).unwrap().extents();
    assert!((e[0] - 2.0).abs() < 1e-12 && (e[1] - 1.0).abs() < 1e-12 && (e[2] - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_jobs_rejected() {
    let base = job(pose(0.0, 0.0, 4.0), light([0.0, 0.0, 1.0], 0.9));
    let m = facing_triangle();
    assert!(rasterize(&m, &RenderJob { resolution: 31, ..base.clone() }).is_err());
    assert!(rasterize(&m, &RenderJob { illumination: light([0.0, 0.0, 2.0], 0.5), ..base.clone() }).is_err());
    assert!(rasterize(&m, &RenderJob { illumination: Illumination { direction: [0.0, 0.0, 1.0], k_d: 0.95, k_a: 0.1 }, ..base.clone() }).is_err());
    assert!(rasterize(&m, &RenderJob { aniso: Some(AnisoScale { axis: Axis::Y, factor: 0.0 }), ..base }).is_err());
}

#[test]
fn render_db_writes_images_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProcGenConfig { n: 2, seed: 3, ..Default::default() };
    let classes = crate::procgen::generate_db(&cfg).unwrap();
    crate::procgen::write_db(dir.path(), &classes).unwrap();
    let out = dir.path().join("render");
    let rc = RenderConfig { resolution: 48, ..Default::default() };
    let recs = render_db(dir.path(), &out, 5, 3, false, &rc).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(out.join("class_0001/img_0002.png").is_file());
    let log = std::fs::read_to_string(out.join("renderlog.jsonl")).unwrap();
    let parsed: Vec<RenderRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, recs);
    assert!(parsed.iter().all(|r| r.seed == 5 && r.mesh_seed == Some(3)));
    // Replaying a logged job reproduces its image.
    let mesh = crate::geometry::obj::read_obj(&dir.path().join("meshes/class_0001.obj")).unwrap();
    let png = rasterize(&mesh, &parsed[5].job).unwrap().to_png().unwrap();
    assert_eq!(png, std::fs::read(out.join(&parsed[5].path)).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn image_dimensions_match_job(res in 32usize..80, az in 0.0f64..360.0, el in -30.0f64..60.0) {
        let mut j = job(pose(az, el, 1.0), light([0.0, 1.0, 0.0], 0.6));
        j.framing = true;
        j.resolution = res;
        let img = rasterize(&cube(1.0), &j).unwrap();
        prop_assert_eq!(img.width, res);
        prop_assert_eq!(img.height, res);
        prop_assert_eq!(img.pixels.len(), res * res);
        prop_assert!(img.foreground_count() > 0);
    }
}
