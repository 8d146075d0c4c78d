//! Procedural class meshes: random assemblies of primitives with optional
//! wireframe/subdivision modifiers, filtered by a bounding-box size limit.
//!
//! One class mesh is built per class index. A candidate consists of `p`
//! repetitions (`p` uniform in `1..=v`); each repetition adds `0..=w`
//! instances of every primitive kind. Candidates whose largest bounding-box
//! extent exceeds `max_size`, or that contain no primitive at all, are
//! rejected and a fresh candidate is drawn from the same class stream.

use std::f64::consts::TAU;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::geometry::{
    apply_modifier, bounding_box, make_primitive, merge, obj, Aabb, Mesh, ModifierSpec, Placement,
    PrimitiveKind, PrimitiveSpec,
};
use crate::rng::{domain, RngStream};

pub const PRIMITIVE_KINDS: [&str; 5] = ["cube", "sphere", "cone", "cylinder", "torus"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tessellation {
    pub sphere_segments: u32,
    pub sphere_rings: u32,
    pub torus_segments: u32,
    pub torus_sides: u32,
    /// Segments around cones and cylinders.
    pub round_segments: u32,
}

impl Default for Tessellation {
    fn default() -> Self {
        Tessellation {
            sphere_segments: 24,
            sphere_rings: 16,
            torus_segments: 24,
            torus_sides: 12,
            round_segments: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcGenConfig {
    pub n: usize,
    /// Upper bound of the repetition count `p`.
    pub v: u32,
    /// Upper bound of instances per primitive kind per repetition.
    pub w: u32,
    pub max_size: f64,
    pub seed: u64,
    /// Translations are uniform in `[-translation_range, translation_range]³`.
    pub translation_range: f64,
    pub scale_range: [f64; 2],
    /// Per-kind size parameters (edge, radius, height, major radius).
    pub size_range: [f64; 2],
    /// Torus tube radius as a fraction of its major radius.
    pub tube_ratio_range: [f64; 2],
    pub wireframe_thickness: [f64; 2],
    pub subdivide_levels: [u32; 2],
    pub max_rejections: u32,
    pub tessellation: Tessellation,
}

impl Default for ProcGenConfig {
    fn default() -> Self {
        ProcGenConfig {
            n: 1000,
            v: 3,
            w: 5,
            max_size: 10.0,
            seed: 0,
            translation_range: 3.0,
            scale_range: [0.3, 2.0],
            size_range: [0.5, 2.0],
            tube_ratio_range: [0.1, 0.5],
            wireframe_thickness: [0.02, 0.15],
            subdivide_levels: [1, 2],
            max_rejections: 1000,
            tessellation: Tessellation::default(),
        }
    }
}

impl ProcGenConfig {
    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [f64; 2], min_exclusive: f64| {
            if r[0].is_finite() && r[1].is_finite() && r[0] > min_exclusive && r[0] <= r[1] {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} range {r:?} is invalid")))
            }
        };
        if self.n < 1 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.v < 1 || self.w < 1 {
            return Err(Error::invalid("v and w must be at least 1"));
        }
        if !(self.max_size.is_finite() && self.max_size > 0.0) {
            return Err(Error::invalid("max_size must be positive"));
        }
        if !(self.translation_range.is_finite() && self.translation_range >= 0.0) {
            return Err(Error::invalid("translation_range must be non-negative"));
        }
        range("scale", self.scale_range, 0.0)?;
        range("size", self.size_range, 0.0)?;
        range("wireframe thickness", self.wireframe_thickness, 0.0)?;
        range("tube ratio", self.tube_ratio_range, 0.0)?;
        if self.tube_ratio_range[1] >= 1.0 {
            return Err(Error::invalid("tube ratio must stay below 1"));
        }
        let [lo, hi] = self.subdivide_levels;
        if lo < 1 || hi < lo || hi > crate::geometry::MAX_SUBDIVISION_LEVELS {
            return Err(Error::invalid(format!("subdivide levels {lo}..={hi} out of range")));
        }
        if self.max_rejections < 1 {
            return Err(Error::invalid("max_rejections must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub primitive: PrimitiveSpec,
    pub modifier: Option<ModifierSpec>,
}

/// Everything sampled for one class; enough to rebuild the mesh exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub class_index: usize,
    pub class_id: String,
    pub seed: u64,
    pub p: u32,
    /// Instance count per primitive kind (in [`PRIMITIVE_KINDS`] order), one row per repetition.
    pub type_counts: Vec<[u32; 5]>,
    pub instances: Vec<Instance>,
    /// Candidates discarded before this one (oversized or empty).
    pub rejections: u32,
    pub modifier_warnings: usize,
    pub dropped_faces: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub aabb: Aabb,
}

#[derive(Debug, Clone)]
pub struct ClassMesh {
    pub class_id: String,
    pub mesh: Mesh,
    pub record: GenerationRecord,
}

pub fn class_id(index: usize) -> String {
    format!("{index:04}")
}

pub fn class_stream(seed: u64, class_index: usize) -> RngStream {
    RngStream::keyed(seed, domain::PROCGEN, class_index as u64)
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Uniform rotation over SO(3) (Shoemake's subgroup algorithm), as `[w, x, y, z]`.
fn random_rotation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    [
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    ]
}

fn sample_instance(rng: &mut ChaCha8Rng, cfg: &ProcGenConfig, kind_index: usize) -> Instance {
    let t = &cfg.tessellation;
    let size = |rng: &mut ChaCha8Rng| uniform(rng, cfg.size_range);
    let kind = match kind_index {
        0 => PrimitiveKind::Cube { edge: size(rng) },
        1 => PrimitiveKind::Sphere {
            radius: size(rng),
            segments: t.sphere_segments,
            rings: t.sphere_rings,
        },
        2 => PrimitiveKind::Cone {
            radius: size(rng),
            height: size(rng),
            segments: t.round_segments,
        },
        3 => PrimitiveKind::Cylinder {
            radius: size(rng),
            height: size(rng),
            segments: t.round_segments,
        },
        _ => {
            let major = size(rng);
            PrimitiveKind::Torus {
                major_radius: major,
                tube_radius: major * uniform(rng, cfg.tube_ratio_range),
                segments: t.torus_segments,
                sides: t.torus_sides,
            }
        }
    };
    let tr = cfg.translation_range;
    let translation = [0; 3].map(|_| uniform(rng, [-tr, tr]));
    let rotation = random_rotation(rng);
    let scale = uniform(rng, cfg.scale_range);
    let modifier = match rng.random_range(0..3u32) {
        0 => Some(ModifierSpec::Wireframe {
            thickness: uniform(rng, cfg.wireframe_thickness),
        }),
        1 => Some(ModifierSpec::Subdivide {
            levels: rng.random_range(cfg.subdivide_levels[0]..=cfg.subdivide_levels[1]),
        }),
        _ => None,
    };
    Instance {
        primitive: PrimitiveSpec {
            kind,
            placement: Placement {
                translation,
                rotation,
                scale,
            },
        },
        modifier,
    }
}

struct Built {
    mesh: Mesh,
    warnings: usize,
    dropped: usize,
}

fn build_instances(instances: &[Instance]) -> Result<Built> {
    let mut warnings = 0;
    let mut parts = Vec::with_capacity(instances.len());
    for inst in instances {
        let base = make_primitive(&inst.primitive)?;
        let mesh = match &inst.modifier {
            Some(m) => {
                let out = apply_modifier(&base, m)?;
                warnings += out.warnings;
                out.mesh
            }
            None => base,
        };
        parts.push(mesh);
    }
    let merged = merge(&parts);
    Ok(Built {
        mesh: merged.mesh,
        warnings,
        dropped: merged.dropped_faces,
    })
}

/// Generates the mesh for one class. Depends only on `(config, class_index)`.
pub fn generate_class_mesh(cfg: &ProcGenConfig, class_index: usize) -> Result<ClassMesh> {
    cfg.validate()?;
    if class_index >= cfg.n {
        return Err(Error::invalid(format!(
            "class index {class_index} out of range for n = {}",
            cfg.n
        )));
    }
    let mut rng = class_stream(cfg.seed, class_index).rng();
    let mut rejections = 0u32;
    loop {
        if rejections >= cfg.max_rejections {
            return Err(Error::GenerationExhausted {
                class: class_index,
                rejections,
            });
        }
        let p = rng.random_range(1..=cfg.v);
        let mut type_counts = Vec::with_capacity(p as usize);
        let mut instances = Vec::new();
        for _ in 0..p {
            let mut counts = [0u32; 5];
            for (kind, count) in counts.iter_mut().enumerate() {
                *count = rng.random_range(0..=cfg.w);
                for _ in 0..*count {
                    instances.push(sample_instance(&mut rng, cfg, kind));
                }
            }
            type_counts.push(counts);
        }
        if instances.is_empty() {
            rejections += 1;
            continue;
        }
        let built = build_instances(&instances)?;
        let aabb = match bounding_box(&built.mesh) {
            Ok(b) => b,
            Err(_) => {
                rejections += 1;
                continue;
            }
        };
        if aabb.max_extent() > cfg.max_size {
            rejections += 1;
            continue;
        }
        let record = GenerationRecord {
            class_index,
            class_id: class_id(class_index),
            seed: cfg.seed,
            p,
            type_counts,
            instances,
            rejections,
            modifier_warnings: built.warnings,
            dropped_faces: built.dropped,
            vertex_count: built.mesh.vertex_count(),
            face_count: built.mesh.face_count(),
            aabb,
        };
        return Ok(ClassMesh {
            class_id: record.class_id.clone(),
            mesh: built.mesh,
            record,
        });
    }
}

/// Rebuilds a class mesh from its generation record.
pub fn replay(record: &GenerationRecord) -> Result<Mesh> {
    Ok(build_instances(&record.instances)?.mesh)
}

/// Generates all `n` classes, possibly in parallel; output is ordered by class index.
pub fn generate_db(cfg: &ProcGenConfig) -> Result<Vec<ClassMesh>> {
    cfg.validate()?;
    (0..cfg.n)
        .into_par_iter()
        .map(|i| generate_class_mesh(cfg, i))
        .collect()
}

/// Number of classes whose (vertex count, bounding box) differ between two databases.
pub fn distinct_class_count(a: &[ClassMesh], b: &[ClassMesh]) -> usize {
    a.iter()
        .zip(b)
        .filter(|(x, y)| {
            x.record.vertex_count != y.record.vertex_count || x.record.aabb != y.record.aabb
        })
        .count()
}

pub fn mesh_path(root: &Path, class_index: usize) -> std::path::PathBuf {
    root.join("meshes").join(format!("class_{class_index:04}.obj"))
}

/// Writes `meshes/class_NNNN.obj` and `genlog.jsonl` under `root`.
pub fn write_db(root: &Path, classes: &[ClassMesh]) -> Result<()> {
    let mesh_dir = root.join("meshes");
    std::fs::create_dir_all(&mesh_dir).at(&mesh_dir)?;
    classes.par_iter().try_for_each(|c| {
        obj::write_obj(&c.mesh, &mesh_path(root, c.record.class_index))
    })?;
    let log_path = root.join("genlog.jsonl");
    let mut log = Vec::new();
    for c in classes {
        serde_json::to_writer(&mut log, &c.record)?;
        log.push(b'\n');
    }
    std::fs::File::create(&log_path)
        .and_then(|mut f| f.write_all(&log))
        .at(&log_path)
}

pub fn read_genlog(path: &Path) -> Result<Vec<GenerationRecord>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, seed: u64) -> ProcGenConfig {
        ProcGenConfig {
            n,
            seed,
            ..ProcGenConfig::default()
        }
    }

    #[test]
    fn default_class_passes_quality_control() {
        let c = generate_class_mesh(&small(4, 1), 3).unwrap();
        assert!(bounding_box(&c.mesh).unwrap().max_extent() <= 10.0);
        c.mesh.validate().unwrap();
        assert!(!c.record.instances.is_empty());
    }

    #[test]
    fn same_seed_and_class_is_bit_identical() {
        let cfg = small(3, 42);
        let a = generate_class_mesh(&cfg, 2).unwrap();
        let b = generate_class_mesh(&cfg, 2).unwrap();
        assert_eq!(a.mesh, b.mesh);
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn class_mesh_independent_of_n() {
        let a = generate_class_mesh(&small(3, 9), 1).unwrap();
        let b = generate_class_mesh(&small(50, 9), 1).unwrap();
        assert_eq!(a.mesh, b.mesh);
    }

    #[test]
    fn wide_translation_forces_rejections() {
        // Translations spanning 40 units put instances far apart, so most
        // multi-instance candidates are oversized. With v = w = 1 a candidate holds
        // at most five instances and acceptance stays reachable.
        let cfg = ProcGenConfig {
            translation_range: 20.0,
            v: 1,
            w: 1,
            ..small(1, 5)
        };
        let c = generate_class_mesh(&cfg, 0).unwrap();
        assert!(c.record.rejections > 0);
        assert!(c.record.aabb.max_extent() <= 10.0);
    }

    #[test]
    fn impossible_bound_is_exhausted() {
        let cfg = ProcGenConfig {
            max_size: 1e-3,
            max_rejections: 5,
            ..small(1, 5)
        };
        assert!(matches!(
            generate_class_mesh(&cfg, 0),
            Err(Error::GenerationExhausted { class: 0, rejections: 5 })
        ));
    }

    #[test]
    fn zero_classes_rejected() {
        assert!(generate_db(&small(0, 1)).is_err());
        assert!(generate_class_mesh(&small(2, 1), 2).is_err());
    }

    #[test]
    fn record_ranges_and_replay() {
        let db = generate_db(&small(6, 11)).unwrap();
        assert_eq!(db.len(), 6);
        for (i, c) in db.iter().enumerate() {
            assert_eq!(c.record.class_index, i);
            assert_eq!(c.class_id, format!("{i:04}"));
            assert!((1..=3).contains(&c.record.p));
            assert_eq!(c.record.type_counts.len(), c.record.p as usize);
            assert!(c.record.type_counts.iter().flatten().all(|&k| k <= 5));
            let total: u32 = c.record.type_counts.iter().flatten().sum();
            assert_eq!(total as usize, c.record.instances.len());
            assert_eq!(replay(&c.record).unwrap(), c.mesh);
        }
    }

    #[test]
    fn replay_from_serialized_record() {
        let c = generate_class_mesh(&small(1, 3), 0).unwrap();
        let json = serde_json::to_string(&c.record).unwrap();
        let back: GenerationRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(replay(&back).unwrap(), c.mesh);
    }

    #[test]
    fn rotation_quaternions_are_unit() {
        let mut rng = RngStream::new(1, 1).rng();
        for _ in 0..100 {
            let q = random_rotation(&mut rng);
            let n: f64 = q.iter().map(|c| c * c).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
