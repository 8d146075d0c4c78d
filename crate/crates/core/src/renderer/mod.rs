//! Software renderer for class meshes and the per-class render plans that
//! vary viewpoint, lighting and anisotropic scale (or, in flat mode, only
//! 2D in-plane augmentation).

mod camera;
mod raster;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use camera::{fixed_camera, frame_camera, framing_distance, CameraPose, CameraTransform, FRAME_FILL};
pub use raster::rasterize;

use crate::error::{Error, IoContext, Result};
use crate::geometry::{obj, Mesh};
use crate::imageio;
use crate::rng::{domain, RngStream};

pub const FLAT_AZIMUTH_DEG: f64 = 30.0;
pub const FLAT_ELEVATION_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Illumination {
    /// Unit vector pointing from the surface toward the light.
    pub direction: [f64; 3],
    pub k_d: f64,
    pub k_a: f64,
}

impl Illumination {
    pub fn validate(&self) -> Result<()> {
        let n = self.direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("light direction norm is {n}, not 1")));
        }
        if !(0.0..=1.0).contains(&self.k_d) || !(0.0..=1.0).contains(&self.k_a) {
            return Err(Error::invalid("k_d and k_a must lie in [0, 1]"));
        }
        if self.k_a + self.k_d > 1.0 + 1e-12 {
            return Err(Error::invalid("k_a + k_d must not exceed 1"));
        }
        Ok(())
    }
}

/// Lighting used by every flat-mode render.
pub const FLAT_ILLUMINATION: Illumination = Illumination {
    direction: [0.0, 1.0, 0.0],
    k_d: 0.7,
    k_a: 0.1,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisoScale {
    pub axis: Axis,
    pub factor: f64,
}

/// In-plane rotation (degrees, about the image center) and translation
/// jitter (fractions of the frame width/height).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augment2d {
    pub rotation_deg: f64,
    pub jitter: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Gray,
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderJob {
    /// Mesh reference (path or class id); provenance only.
    pub mesh: String,
    pub class_index: usize,
    pub image_index: usize,
    pub pose: CameraPose,
    pub illumination: Illumination,
    pub aniso: Option<AnisoScale>,
    pub resolution: usize,
    pub color: ColorMode,
    pub flat: bool,
    /// Fit the mesh to the frame; otherwise the camera sits at `pose.distance`.
    pub framing: bool,
    pub augment: Option<Augment2d>,
}

impl RenderJob {
    pub fn validate(&self) -> Result<()> {
        self.pose.validate()?;
        self.illumination.validate()?;
        if let Some(a) = self.aniso {
            if !(a.factor.is_finite() && a.factor > 0.0) {
                return Err(Error::invalid("anisotropic scale factor must be positive"));
            }
        }
        if self.resolution < 32 {
            return Err(Error::invalid("resolution must be at least 32"));
        }
        Ok(())
    }

    /// Pose after the flat-mode override.
    pub fn effective_pose(&self) -> CameraPose {
        if self.flat {
            CameraPose {
                azimuth_deg: FLAT_AZIMUTH_DEG,
                elevation_deg: FLAT_ELEVATION_DEG,
                ..self.pose
            }
        } else {
            self.pose
        }
    }

    pub fn effective_illumination(&self) -> Illumination {
        self.illumination
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, interleaved channels.
    pub pixels: Vec<u8>,
    /// Pixels written by at least one triangle.
    pub coverage: Vec<bool>,
    pub job: RenderJob,
}

impl RenderedImage {
    pub fn foreground_count(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / (self.width * self.height) as f64
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        imageio::encode_png(self.width as u32, self.height as u32, self.channels as u8, &self.pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnisoMode {
    /// Factor uniform in `aniso_range`.
    #[default]
    UniformRange,
    /// Factor fixed at 2.
    Factor2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorChoice {
    /// RGB when the mesh carries albedo, grayscale otherwise.
    #[default]
    Auto,
    Gray,
    Rgb,
}

impl ColorChoice {
    pub fn resolve(self, mesh: &Mesh) -> ColorMode {
        match self {
            ColorChoice::Gray => ColorMode::Gray,
            ColorChoice::Rgb => ColorMode::Rgb,
            ColorChoice::Auto if mesh.albedo.is_some() => ColorMode::Rgb,
            ColorChoice::Auto => ColorMode::Gray,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub resolution: usize,
    pub fov_deg: f64,
    pub elevation_range: [f64; 2],
    pub k_d_range: [f64; 2],
    pub k_a: f64,
    pub aniso_probability: f64,
    pub aniso_mode: AnisoMode,
    pub aniso_range: [f64; 2],
    /// Flat mode in-plane rotation range, degrees.
    pub flat_rotation_range: [f64; 2],
    /// Flat mode translation jitter bound, fraction of the frame.
    pub flat_jitter: f64,
    pub color: ColorChoice,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            resolution: 256,
            fov_deg: 40.0,
            elevation_range: [-30.0, 60.0],
            k_d_range: [0.5, 0.9],
            k_a: 0.1,
            aniso_probability: 0.5,
            aniso_mode: AnisoMode::UniformRange,
            aniso_range: [0.5, 2.0],
            flat_rotation_range: [0.0, 360.0],
            flat_jitter: 0.05,
            color: ColorChoice::Auto,
        }
    }
}

pub fn class_stream(seed: u64, class_index: usize) -> RngStream {
    RngStream::keyed(seed, domain::RENDER, class_index as u64)
}

fn draw(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Deterministic list of render jobs for one class; job `k` depends only on
/// `(class stream, k)`. Jobs carry `color` and an empty mesh reference, which
/// callers fill in.
pub fn sample_render_plan(
    class_stream: RngStream,
    images_per_class: usize,
    flat: bool,
    cfg: &RenderConfig,
) -> Result<Vec<RenderJob>> {
    if images_per_class < 1 {
        return Err(Error::invalid("images per class must be at least 1"));
    }
    Ok((0..images_per_class)
        .map(|k| {
            let mut rng = class_stream.child(k as u64).rng();
            if flat {
                let rotation_deg = draw(&mut rng, cfg.flat_rotation_range);
                let j = cfg.flat_jitter;
                let jitter = [draw(&mut rng, [-j, j]), draw(&mut rng, [-j, j])];
                RenderJob {
                    mesh: String::new(),
                    class_index: 0,
                    image_index: k,
                    pose: CameraPose {
                        azimuth_deg: FLAT_AZIMUTH_DEG,
                        elevation_deg: FLAT_ELEVATION_DEG,
                        distance: 1.0,
                        fov_deg: cfg.fov_deg,
                    },
                    illumination: FLAT_ILLUMINATION,
                    aniso: None,
                    resolution: cfg.resolution,
                    color: ColorMode::Gray,
                    flat: true,
                    framing: true,
                    augment: Some(Augment2d {
                        rotation_deg,
                        jitter,
                    }),
                }
            } else {
                let azimuth_deg = draw(&mut rng, [0.0, 360.0]);
                let elevation_deg = draw(&mut rng, cfg.elevation_range);
                // Uniform on the upper hemisphere: the height is uniform on [0, 1).
                let up: f64 = rng.random();
                let phi = draw(&mut rng, [0.0, std::f64::consts::TAU]);
                let r = (1.0 - up * up).sqrt();
                let direction = [r * phi.cos(), up, r * phi.sin()];
                let k_d = draw(&mut rng, cfg.k_d_range);
                let aniso = (rng.random::<f64>() < cfg.aniso_probability).then(|| {
                    let axis = [Axis::X, Axis::Y, Axis::Z][rng.random_range(0..3usize)];
                    let factor = match cfg.aniso_mode {
                        AnisoMode::UniformRange => draw(&mut rng, cfg.aniso_range),
                        AnisoMode::Factor2 => 2.0,
                    };
                    AnisoScale { axis, factor }
                });
                RenderJob {
                    mesh: String::new(),
                    class_index: 0,
                    image_index: k,
                    pose: CameraPose {
                        azimuth_deg,
                        elevation_deg,
                        distance: 1.0,
                        fov_deg: cfg.fov_deg,
                    },
                    illumination: Illumination {
                        direction,
                        k_d,
                        k_a: cfg.k_a,
                    },
                    aniso,
                    resolution: cfg.resolution,
                    color: ColorMode::Gray,
                    flat: false,
                    framing: true,
                    augment: None,
                }
            }
        })
        .collect())
}

/// Sorted `(class index, path)` pairs of `meshes/class_NNNN.obj` under `root`.
pub fn list_class_meshes(root: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let dir = root.join("meshes");
    let mut out = Vec::new();
    for entry in std::fs::read_dir(&dir).at(&dir)? {
        let path = entry.at(&dir)?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(idx) = name
            .strip_prefix("class_")
            .and_then(|s| s.strip_suffix(".obj"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            out.push((idx, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Builds the complete job list of one class, with mesh reference and color filled in.
pub fn class_jobs(
    mesh: &Mesh,
    mesh_ref: &str,
    class_index: usize,
    seed: u64,
    images_per_class: usize,
    flat: bool,
    cfg: &RenderConfig,
) -> Result<Vec<RenderJob>> {
    let color = cfg.color.resolve(mesh);
    let mut jobs = sample_render_plan(class_stream(seed, class_index), images_per_class, flat, cfg)?;
    for j in &mut jobs {
        j.mesh = mesh_ref.to_string();
        j.class_index = class_index;
        j.color = color;
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecord {
    pub path: String,
    /// Seed of the render plan.
    pub seed: u64,
    /// Seed recorded for this class in the mesh database's `genlog.jsonl`, if any.
    pub mesh_seed: Option<u64>,
    pub foreground_fraction: f64,
    #[serde(flatten)]
    pub job: RenderJob,
}

/// Renders every class mesh under `meshes_root` into
/// `out/class_NNNN/img_NNNN.png` and writes `out/renderlog.jsonl`.
pub fn render_db(
    meshes_root: &Path,
    out: &Path,
    seed: u64,
    images_per_class: usize,
    flat: bool,
    cfg: &RenderConfig,
) -> Result<Vec<RenderRecord>> {
    let meshes_root = std::fs::canonicalize(meshes_root).at(meshes_root)?;
    let classes = list_class_meshes(&meshes_root)?;
    if classes.is_empty() {
        return Err(Error::EmptyInput("no class meshes to render"));
    }
    let mesh_seeds = read_mesh_seeds(&meshes_root.join("genlog.jsonl"))?;
    std::fs::create_dir_all(out).at(out)?;
    let per_class: Vec<Vec<RenderRecord>> = classes
        .par_iter()
        .map(|(class_index, path)| {
            let mesh = obj::read_obj(path)?;
            let mesh_ref = path.display().to_string();
            let jobs = class_jobs(&mesh, &mesh_ref, *class_index, seed, images_per_class, flat, cfg)?;
            jobs.into_iter()
                .map(|job| {
                    let img = rasterize(&mesh, &job)?;
                    let rel = imageio::image_rel_path(*class_index, job.image_index);
                    let dest = out.join(&rel);
                    if let Some(dir) = dest.parent() {
                        std::fs::create_dir_all(dir).at(dir)?;
                    }
                    std::fs::write(&dest, img.to_png()?).at(&dest)?;
                    Ok(RenderRecord {
                        path: rel.to_string_lossy().replace('\\', "/"),
                        seed,
                        mesh_seed: mesh_seeds.get(class_index).copied(),
                        foreground_fraction: img.foreground_fraction(),
                        job,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let records: Vec<RenderRecord> = per_class.into_iter().flatten().collect();
    let log_path = out.join("renderlog.jsonl");
    let mut log = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut log, r)?;
        log.push(b'\n');
    }
    std::fs::File::create(&log_path)
        .and_then(|mut f| f.write_all(&log))
        .at(&log_path)?;
    Ok(records)
}

/// `class_index -> seed` from a mesh generation log; empty when the log is absent.
fn read_mesh_seeds(path: &Path) -> Result<std::collections::HashMap<usize, u64>> {
    #[derive(Deserialize)]
    struct Line {
        class_index: usize,
        seed: u64,
    }
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Default::default()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let r: Line = serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            Ok((r.class_index, r.seed))
        })
        .collect()
}

pub fn read_renderlog(path: &Path) -> Result<Vec<RenderRecord>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
