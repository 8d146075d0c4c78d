//! Gaussian-process shape and albedo deformation of base meshes.
//!
//! Each base mesh is clustered down to at most `downsample_target` control
//! points. On the control points we build squared-exponential kernels
//! `k(x, x') = b · exp(-‖x - x'‖² / c)` for shape and for albedo, keep the top
//! `rank` eigenpairs, and draw fields as `Σ sqrt(b λ_k) z_k φ_k` with standard
//! normal `z_k`, independently per output dimension. Full-resolution vertices
//! take the displacement and albedo offset of their cluster.

use std::io::Write as _;
use std::path::Path;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::{Mat, Par};
use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::geometry::{bounding_box, obj, Mesh, Rgb};
use crate::rng::{domain, RngStream};

pub const DEFAULT_BASE_ALBEDO: Rgb = [0.5, 0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpDeformParams {
    /// Shape kernel magnitude (scene units²).
    pub b_s: f64,
    /// Shape kernel bandwidth (scene units²).
    pub c_s: f64,
    /// Albedo kernel magnitude.
    pub b_a: f64,
    /// Albedo kernel bandwidth (scene units²).
    pub c_a: f64,
    pub rank: usize,
    pub downsample_target: usize,
    pub seed: u64,
}

impl Default for GpDeformParams {
    fn default() -> Self {
        GpDeformParams {
            b_s: 50.0,
            c_s: 300.0,
            b_a: 0.05,
            c_a: 0.2,
            rank: 50,
            downsample_target: 2000,
            seed: 0,
        }
    }
}

impl GpDeformParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("b_s", self.b_s),
            ("c_s", self.c_s),
            ("b_a", self.b_a),
            ("c_a", self.c_a),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.rank < 1 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        if self.downsample_target < 4 {
            return Err(Error::invalid("downsample target must be at least 4"));
        }
        Ok(())
    }
}

/// Result of vertex clustering: the coarse mesh and, for every original
/// vertex, the index of its cluster in the coarse mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Downsampled {
    pub mesh: Mesh,
    pub correspondence: Vec<usize>,
    /// Grid cells along the longest axis (0 when the input passed through).
    pub grid_resolution: usize,
}

/// Uniform-grid vertex clustering to at most `target` vertices.
///
/// The grid uses cubic cells of side `max_extent / r`; the largest `r` found
/// by bisection whose cluster count fits the target is used. Cluster
/// positions (and albedo) are member averages; faces that collapse below three
/// distinct corners are dropped.
pub fn downsample(mesh: &Mesh, target: usize) -> Result<Downsampled> {
    if target < 4 {
        return Err(Error::invalid("downsample target must be at least 4"));
    }
    let aabb = bounding_box(mesh)?;
    if mesh.vertex_count() <= target {
        return Ok(Downsampled {
            mesh: mesh.clone(),
            correspondence: (0..mesh.vertex_count()).collect(),
            grid_resolution: 0,
        });
    }
    let extent = aabb.max_extent();
    let assign = |r: usize| -> (Vec<usize>, usize) {
        let cell = if extent > 0.0 { extent / r as f64 } else { 1.0 };
        let mut ids = std::collections::HashMap::new();
        let map = mesh
            .vertices
            .iter()
            .map(|v| {
                let key: [usize; 3] = std::array::from_fn(|a| {
                    (((v[a] - aabb.min[a]) / cell).floor().max(0.0) as usize).min(r - 1)
                });
                let next = ids.len();
                *ids.entry(key).or_insert(next)
            })
            .collect();
        (map, ids.len())
    };
    let (mut lo, mut hi) = (1usize, target + 1);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if assign(mid).1 <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (correspondence, clusters) = assign(lo);

    let mut sums = vec![Vector3::zeros(); clusters];
    let mut colors = vec![[0.0; 3]; clusters];
    let mut counts = vec![0usize; clusters];
    for (v, &c) in correspondence.iter().enumerate() {
        sums[c] += mesh.vertices[v].coords;
        counts[c] += 1;
        if let Some(a) = &mesh.albedo {
            for k in 0..3 {
                colors[c][k] += a[v][k];
            }
        }
    }
    let vertices = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| Point3::from(s / n as f64))
        .collect();
    let albedo = mesh.albedo.as_ref().map(|_| {
        colors
            .iter()
            .zip(&counts)
            .map(|(c, &n)| c.map(|x| (x / n as f64).clamp(0.0, 1.0)))
            .collect()
    });
    let faces = mesh
        .faces
        .iter()
        .filter_map(|f| {
            let mut out: Vec<u32> = Vec::with_capacity(f.len());
            for &i in f {
                let c = correspondence[i as usize] as u32;
                if !out.contains(&c) {
                    out.push(c);
                }
            }
            (out.len() >= 3).then_some(out)
        })
        .collect();
    Ok(Downsampled {
        mesh: Mesh {
            vertices,
            faces,
            albedo,
        },
        correspondence,
        grid_resolution: lo,
    })
}

/// Top eigenpairs of a unit-magnitude squared-exponential kernel matrix.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k][i]`: component `i` of eigenvector `k`.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Trace of the full kernel matrix (the point count).
    pub trace: f64,
}

impl KernelBasis {
    pub fn new(points: &[Point3<f64>], bandwidth: f64, rank: usize) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyInput("kernel basis without points"));
        }
        let kernel = Mat::<f64>::from_fn(n, n, |i, j| {
            (-(points[i] - points[j]).norm_squared() / bandwidth).exp()
        });
        if (0..n).any(|j| (0..n).any(|i| !kernel[(i, j)].is_finite())) {
            return Err(Error::Numeric("kernel matrix has non-finite entries".into()));
        }
        let mut s = faer::diag::Diag::<f64>::zeros(n);
        let mut u = Mat::<f64>::zeros(n, n);
        let params = Default::default();
        let mut mem = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
            n,
            ComputeEigenvectors::Yes,
            Par::Seq,
            params,
        ));
        evd::self_adjoint_evd(
            kernel.as_ref(),
            s.as_mut(),
            Some(u.as_mut()),
            Par::Seq,
            MemStack::new(&mut mem),
            params,
        )
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;

        let keep = rank.min(n);
        let mut eigenvalues = Vec::with_capacity(keep);
        let mut eigenvectors = Vec::with_capacity(keep);
        // Eigenvalues come out ascending.
        for col in (n - keep..n).rev() {
            let lambda = s[col];
            if !lambda.is_finite() {
                return Err(Error::Numeric("non-finite eigenvalue".into()));
            }
            let mut v: Vec<f64> = (0..n).map(|i| u[(i, col)]).collect();
            // Fix the sign so the largest-magnitude component is positive.
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            eigenvalues.push(lambda.max(0.0));
            eigenvectors.push(v);
        }
        Ok(KernelBasis {
            eigenvalues,
            eigenvectors,
            trace: n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fraction of the kernel trace carried by the first `rank` eigenpairs.
    pub fn captured_variance(&self, rank: usize) -> f64 {
        self.eigenvalues.iter().take(rank).sum::<f64>() / self.trace
    }

    /// Diagonal of the rank-truncated kernel, scaled by `magnitude`.
    pub fn truncated_diagonal(&self, magnitude: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                magnitude
                    * self
                        .eigenvalues
                        .iter()
                        .zip(&self.eigenvectors)
                        .map(|(l, v)| l * v[i] * v[i])
                        .sum::<f64>()
            })
            .collect()
    }

    /// One scalar field draw; consumes `rank` normals from `rng`.
    fn draw(&self, magnitude: f64, rng: &mut impl Rng) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (lambda, v) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            let z: f64 = rng.sample(StandardNormal);
            let w = (magnitude * lambda).sqrt() * z;
            for (o, x) in out.iter_mut().zip(v) {
                *o += w * x;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub control_points: Vec<Point3<f64>>,
    pub displacement: Vec<Vector3<f64>>,
    pub albedo_offset: Vec<Rgb>,
}

impl DeformationField {
    pub fn zero(control_points: Vec<Point3<f64>>) -> Self {
        let n = control_points.len();
        DeformationField {
            control_points,
            displacement: vec![Vector3::zeros(); n],
            albedo_offset: vec![[0.0; 3]; n],
        }
    }
}

/// Shape and albedo bases for one control-point set. Building them is the
/// expensive step; sampling many variants from one pair is cheap.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub control_points: Vec<Point3<f64>>,
    pub shape: KernelBasis,
    pub albedo: KernelBasis,
}

impl GpModel {
    pub fn new(control_points: Vec<Point3<f64>>, params: &GpDeformParams) -> Result<Self> {
        params.validate()?;
        if control_points.len() < 4 {
            return Err(Error::invalid(format!(
                "need at least 4 control points, got {}",
                control_points.len()
            )));
        }
        let shape = KernelBasis::new(&control_points, params.c_s, params.rank)?;
        let albedo = KernelBasis::new(&control_points, params.c_a, params.rank)?;
        Ok(GpModel {
            control_points,
            shape,
            albedo,
        })
    }

    /// Draws a field from `stream`: three shape dimensions, then three albedo dimensions.
    pub fn sample(&self, params: &GpDeformParams, stream: RngStream) -> DeformationField {
        let mut rng = stream.rng();
        let sx = self.shape.draw(params.b_s, &mut rng);
        let sy = self.shape.draw(params.b_s, &mut rng);
        let sz = self.shape.draw(params.b_s, &mut rng);
        let ar = self.albedo.draw(params.b_a, &mut rng);
        let ag = self.albedo.draw(params.b_a, &mut rng);
        let ab = self.albedo.draw(params.b_a, &mut rng);
        let n = self.control_points.len();
        DeformationField {
            control_points: self.control_points.clone(),
            displacement: (0..n).map(|i| Vector3::new(sx[i], sy[i], sz[i])).collect(),
            albedo_offset: (0..n).map(|i| [ar[i], ag[i], ab[i]]).collect(),
        }
    }
}

pub fn variant_stream(seed: u64, base_index: usize, variant_index: usize) -> RngStream {
    RngStream::keyed(seed, domain::MORPHGEN, base_index as u64).child(variant_index as u64)
}

/// Samples one deformation field on `control_points`, keyed by `(params.seed, variant_index)`.
pub fn sample_deformation(
    control_points: &[Point3<f64>],
    params: &GpDeformParams,
    variant_index: usize,
) -> Result<DeformationField> {
    let model = GpModel::new(control_points.to_vec(), params)?;
    Ok(model.sample(params, variant_stream(params.seed, 0, variant_index)))
}

/// Displaces every vertex by its cluster's displacement and offsets its albedo
/// (mid-gray when the mesh has none), clamping channels to [0, 1].
pub fn apply_deformation(
    mesh: &Mesh,
    field: &DeformationField,
    correspondence: &[usize],
) -> Result<Mesh> {
    if correspondence.len() != mesh.vertex_count() {
        return Err(Error::ContractViolation(format!(
            "correspondence covers {} of {} vertices",
            correspondence.len(),
            mesh.vertex_count()
        )));
    }
    let controls = field.displacement.len();
    if field.albedo_offset.len() != controls {
        return Err(Error::ContractViolation(
            "displacement and albedo offsets differ in length".into(),
        ));
    }
    if let Some(v) = correspondence.iter().position(|&c| c >= controls) {
        return Err(Error::ContractViolation(format!(
            "vertex {v} maps to control {} of {controls}",
            correspondence[v]
        )));
    }
    let vertices = mesh
        .vertices
        .iter()
        .zip(correspondence)
        .map(|(p, &c)| p + field.displacement[c])
        .collect();
    let albedo = correspondence
        .iter()
        .enumerate()
        .map(|(v, &c)| {
            let base = mesh.albedo.as_ref().map_or(DEFAULT_BASE_ALBEDO, |a| a[v]);
            std::array::from_fn(|k| (base[k] + field.albedo_offset[c][k]).clamp(0.0, 1.0))
        })
        .collect();
    let out = Mesh {
        vertices,
        faces: mesh.faces.clone(),
        albedo: Some(albedo),
    };
    out.validate()?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphRecord {
    pub class_index: usize,
    pub class_id: String,
    pub base_index: usize,
    pub variant_index: usize,
    pub seed: u64,
    pub control_points: usize,
    pub shape_captured_variance: f64,
    pub albedo_captured_variance: f64,
    pub rms_displacement: f64,
}

#[derive(Debug, Clone)]
pub struct MorphClass {
    pub class_id: String,
    pub mesh: Mesh,
    pub record: MorphRecord,
}

/// Deforms one base mesh into `variants` classes.
fn morph_base(
    base_index: usize,
    base: &Mesh,
    params: &GpDeformParams,
    variants: usize,
) -> Result<Vec<MorphClass>> {
    let coarse = downsample(base, params.downsample_target)?;
    let mut controls = coarse.mesh.vertices.clone();
    let mut correspondence = coarse.correspondence;
    if controls.len() < 4 {
        // Too few clusters for a kernel; sample on the full-resolution vertices.
        controls = base.vertices.clone();
        correspondence = (0..base.vertex_count()).collect();
    }
    let model = GpModel::new(controls, params)?;
    (0..variants)
        .map(|j| {
            let field = model.sample(params, variant_stream(params.seed, base_index, j));
            let mesh = apply_deformation(base, &field, &correspondence)?;
            let class_index = base_index * variants + j;
            let rms = (mesh
                .vertices
                .iter()
                .zip(&base.vertices)
                .map(|(a, b)| (a - b).norm_squared())
                .sum::<f64>()
                / base.vertex_count() as f64)
                .sqrt();
            Ok(MorphClass {
                class_id: crate::procgen::class_id(class_index),
                mesh,
                record: MorphRecord {
                    class_index,
                    class_id: crate::procgen::class_id(class_index),
                    base_index,
                    variant_index: j,
                    seed: params.seed,
                    control_points: model.control_points.len(),
                    shape_captured_variance: model.shape.captured_variance(params.rank),
                    albedo_captured_variance: model.albedo.captured_variance(params.rank),
                    rms_displacement: rms,
                },
            })
        })
        .collect()
}

/// `bases.len() × variants_per_base` colored classes; class `i · variants + j`
/// is base `i` under variant `j`.
pub fn generate_morph_db(
    bases: &[Mesh],
    params: &GpDeformParams,
    variants_per_base: usize,
) -> Result<Vec<MorphClass>> {
    params.validate()?;
    if bases.is_empty() {
        return Err(Error::EmptyInput("no base meshes"));
    }
    if variants_per_base < 1 {
        return Err(Error::invalid("variants per base must be at least 1"));
    }
    let per_base: Vec<Vec<MorphClass>> = bases
        .par_iter()
        .enumerate()
        .map(|(i, m)| morph_base(i, m, params, variants_per_base))
        .collect::<Result<_>>()?;
    Ok(per_base.into_iter().flatten().collect())
}

/// Writes `meshes/class_NNNN.obj` (with vertex colors) and `genlog.jsonl`.
pub fn write_db(root: &Path, classes: &[MorphClass]) -> Result<()> {
    let mesh_dir = root.join("meshes");
    std::fs::create_dir_all(&mesh_dir).at(&mesh_dir)?;
    classes.par_iter().try_for_each(|c| {
        obj::write_obj(
            &c.mesh,
            &crate::procgen::mesh_path(root, c.record.class_index),
        )
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
