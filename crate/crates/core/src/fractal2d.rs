//! Iterated-function-system fractal classes rendered with the chaos game.
//!
//! One sampled IFS defines one class. Systems whose rendered attractor covers
//! less than `min_fill` of the canvas are rejected. Images within a class are
//! produced by jittering every matrix entry and rotating the point cloud.

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::imageio;
use crate::rng::{domain, RngStream};

pub const BURN_IN: usize = 100;
pub const DIVERGENCE_RADIUS: f64 = 1e6;

const SYSTEM_STREAM: u64 = 1 << 63;
const PROBE_STREAM: u64 = (1 << 63) | 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    /// Row-major 2×2 matrix.
    pub matrix: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl AffineMap {
    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + self.translation[0],
            m[1][0] * p[0] + m[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn det(&self) -> f64 {
        self.matrix[0][0] * self.matrix[1][1] - self.matrix[0][1] * self.matrix[1][0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSystem {
    pub maps: Vec<AffineMap>,
    pub weights: Vec<f64>,
}

impl IfsSystem {
    pub fn new(maps: Vec<AffineMap>, weights: Vec<f64>) -> Result<Self> {
        let s = IfsSystem { maps, weights };
        s.validate()?;
        Ok(s)
    }

    /// Equal-weight system.
    pub fn uniform(maps: Vec<AffineMap>) -> Result<Self> {
        let w = 1.0 / maps.len() as f64;
        let n = maps.len();
        Self::new(maps, vec![w; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.maps.len() < 2 {
            return Err(Error::invalid("an IFS needs at least two maps"));
        }
        if self.weights.len() != self.maps.len() {
            return Err(Error::invalid("one weight per map required"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        if self
            .maps
            .iter()
            .any(|m| !m.matrix.iter().flatten().chain(&m.translation).all(|x| x.is_finite()))
        {
            return Err(Error::invalid("map coefficients must be finite"));
        }
        Ok(())
    }

    fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut c: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *c.last_mut().unwrap() = f64::INFINITY;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FractalConfig {
    pub points: usize,
    pub resolution: usize,
    pub min_fill: f64,
    pub map_count: [usize; 2],
    /// Matrix entries are uniform in `[-entry_range, entry_range]`.
    pub entry_range: f64,
    pub translation_range: f64,
    /// Lower bound applied to `|det|` before normalizing weights.
    pub det_floor: f64,
    /// Per-entry multiplicative jitter applied per augmented image.
    pub jitter_range: [f64; 2],
    /// In-plane rotation range for augmented images, degrees.
    pub rotation_range: [f64; 2],
    pub max_augment_retries: u32,
    pub max_system_attempts: u32,
}

impl Default for FractalConfig {
    fn default() -> Self {
        FractalConfig {
            points: 100_000,
            resolution: 256,
            min_fill: 0.2,
            map_count: [2, 8],
            entry_range: 1.0,
            translation_range: 1.0,
            det_floor: 0.01,
            jitter_range: [0.8, 1.2],
            rotation_range: [0.0, 360.0],
            max_augment_retries: 20,
            max_system_attempts: 100_000,
        }
    }
}

impl FractalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 1000 {
            return Err(Error::invalid("chaos game needs at least 1000 points"));
        }
        if self.resolution < 32 {
            return Err(Error::invalid("resolution must be at least 32"));
        }
        if !(0.0..=1.0).contains(&self.min_fill) {
            return Err(Error::invalid("min_fill must lie in [0, 1]"));
        }
        let [lo, hi] = self.map_count;
        if lo < 2 || hi < lo {
            return Err(Error::invalid("map count range must start at 2 or more"));
        }
        if self.jitter_range[0] > self.jitter_range[1] || self.rotation_range[0] > self.rotation_range[1] {
            return Err(Error::invalid("augmentation ranges must be ordered"));
        }
        Ok(())
    }
}

/// Square 8-bit grayscale image of an attractor: 255 where visited, 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FractalImage {
    pub resolution: usize,
    pub pixels: Vec<u8>,
    visited: usize,
}

impl FractalImage {
    pub fn fill_rate(&self) -> f64 {
        self.visited as f64 / (self.resolution * self.resolution) as f64
    }

    pub fn visited_pixels(&self) -> usize {
        self.visited
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let r = self.resolution as u32;
        imageio::encode_png(r, r, 1, &self.pixels)
    }
}

fn draw(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Samples one IFS: map count uniform in the configured range, entries and
/// translations uniform, weights proportional to `max(|det|, det_floor)`.
pub fn sample_ifs(stream: RngStream, cfg: &FractalConfig) -> IfsSystem {
    let mut rng = stream.rng();
    let n = rng.random_range(cfg.map_count[0]..=cfg.map_count[1]);
    let (e, t) = (cfg.entry_range, cfg.translation_range);
    let maps: Vec<AffineMap> = (0..n)
        .map(|_| AffineMap {
            matrix: [
                [draw(&mut rng, -e, e), draw(&mut rng, -e, e)],
                [draw(&mut rng, -e, e), draw(&mut rng, -e, e)],
            ],
            translation: [draw(&mut rng, -t, t), draw(&mut rng, -t, t)],
        })
        .collect();
    let raw: Vec<f64> = maps.iter().map(|m| m.det().abs().max(cfg.det_floor)).collect();
    let total: f64 = raw.iter().sum();
    IfsSystem {
        maps,
        weights: raw.iter().map(|w| w / total).collect(),
    }
}

/// Iterates the chaos game from the origin, dropping the first [`BURN_IN`] iterates.
pub fn orbit(system: &IfsSystem, points: usize, stream: RngStream) -> Result<Vec<[f64; 2]>> {
    let cumulative = system.cumulative();
    let mut rng = stream.rng();
    let mut p = [0.0, 0.0];
    let mut out = Vec::with_capacity(points);
    for i in 0..BURN_IN + points {
        let u: f64 = rng.random();
        let j = cumulative.partition_point(|&c| c <= u);
        p = system.maps[j].apply(p);
        if !(p[0].abs() <= DIVERGENCE_RADIUS && p[1].abs() <= DIVERGENCE_RADIUS) {
            return Err(Error::Divergence { iteration: i });
        }
        if i >= BURN_IN {
            out.push(p);
        }
    }
    Ok(out)
}

/// Splats points onto a `resolution²` canvas after rotating them by
/// `rotation_deg` about their bounding-box center; the bounding square of the
/// (rotated) cloud is mapped onto the full canvas.
pub fn splat(points: &[[f64; 2]], resolution: usize, rotation_deg: f64) -> FractalImage {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    if rotation_deg != 0.0 && !pts.is_empty() {
        let (min, max) = bounds(&pts);
        let c = [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])];
        let (s, co) = (rotation_deg * PI / 180.0).sin_cos();
        for p in &mut pts {
            let (x, y) = (p[0] - c[0], p[1] - c[1]);
            *p = [co * x - s * y + c[0], s * x + co * y + c[1]];
        }
    }
    let mut pixels = vec![0u8; resolution * resolution];
    let mut visited = 0;
    if !pts.is_empty() {
        let (min, max) = bounds(&pts);
        let side = (max[0] - min[0]).max(max[1] - min[1]);
        let c = [0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])];
        let lo = [c[0] - 0.5 * side, c[1] - 0.5 * side];
        let last = (resolution - 1) as f64;
        let to_px = |v: f64, lo: f64| -> usize {
            if side > 0.0 {
                (((v - lo) / side) * last).round().clamp(0.0, last) as usize
            } else {
                resolution / 2
            }
        };
        for p in &pts {
            let col = to_px(p[0], lo[0]);
            let row = resolution - 1 - to_px(p[1], lo[1]);
            let px = &mut pixels[row * resolution + col];
            if *px == 0 {
                *px = 255;
                visited += 1;
            }
        }
    }
    FractalImage {
        resolution,
        pixels,
        visited,
    }
}

fn bounds(pts: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    pts.iter().fold(
        ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]),
        |(mn, mx), p| {
            (
                [mn[0].min(p[0]), mn[1].min(p[1])],
                [mx[0].max(p[0]), mx[1].max(p[1])],
            )
        },
    )
}

pub fn chaos_game(
    system: &IfsSystem,
    points: usize,
    resolution: usize,
    stream: RngStream,
) -> Result<FractalImage> {
    if points < 1000 {
        return Err(Error::invalid("chaos game needs at least 1000 points"));
    }
    if resolution < 32 {
        return Err(Error::invalid("resolution must be at least 32"));
    }
    system.validate()?;
    Ok(splat(&orbit(system, points, stream)?, resolution, 0.0))
}

pub fn accept_system(image: &FractalImage, min_fill: f64) -> bool {
    image.fill_rate() >= min_fill
}

/// Stream driving the orbit of augmented image `image_index` on retry `attempt`.
pub fn augmentation_orbit_stream(class_stream: RngStream, image_index: usize, attempt: u32) -> RngStream {
    class_stream.child(image_index as u64).child(u64::from(attempt))
}

/// Renders augmented image `image_index` of a class.
pub fn augment_one(
    system: &IfsSystem,
    class_stream: RngStream,
    image_index: usize,
    cfg: &FractalConfig,
) -> Result<FractalImage> {
    let mut rng = class_stream.child(image_index as u64).rng();
    let [jlo, jhi] = cfg.jitter_range;
    let [rlo, rhi] = cfg.rotation_range;
    let mut last_err = None;
    for attempt in 0..=cfg.max_augment_retries {
        let maps = system
            .maps
            .iter()
            .map(|m| AffineMap {
                matrix: m.matrix.map(|row| row.map(|x| x * draw(&mut rng, jlo, jhi))),
                translation: m.translation,
            })
            .collect();
        let rotation = draw(&mut rng, rlo, rhi);
        let perturbed = IfsSystem {
            maps,
            weights: system.weights.clone(),
        };
        let stream = augmentation_orbit_stream(class_stream, image_index, attempt);
        match orbit(&perturbed, cfg.points, stream) {
            Ok(pts) => return Ok(splat(&pts, cfg.resolution, rotation)),
            Err(e @ Error::Divergence { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// `count` augmented images of one class, deterministic per `(class stream, image index)`.
pub fn augment(
    system: &IfsSystem,
    class_stream: RngStream,
    count: usize,
    cfg: &FractalConfig,
) -> Result<Vec<FractalImage>> {
    if count < 1 {
        return Err(Error::invalid("augmentation count must be at least 1"));
    }
    system.validate()?;
    (0..count)
        .map(|k| augment_one(system, class_stream, k, cfg))
        .collect()
}

pub fn class_stream(seed: u64, class_index: usize) -> RngStream {
    RngStream::keyed(seed, domain::FRACTAL, class_index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalRecord {
    pub class_index: usize,
    pub class_id: String,
    pub seed: u64,
    /// Systems drawn before this one was accepted, including this one.
    pub attempts: u32,
    pub fill_rate: f64,
    pub image_fill_rates: Vec<f64>,
    pub system: IfsSystem,
}

#[derive(Debug, Clone)]
pub struct FractalClass {
    pub record: FractalRecord,
    pub images: Vec<FractalImage>,
}

/// Finds the first system of a class that renders, passes the fill filter and
/// survives all `images` augmentations.
pub fn generate_class(
    cfg: &FractalConfig,
    seed: u64,
    class_index: usize,
    images: usize,
) -> Result<FractalClass> {
    cfg.validate()?;
    let cls = class_stream(seed, class_index);
    for attempt in 0..cfg.max_system_attempts {
        let system = sample_ifs(cls.child(SYSTEM_STREAM).child(u64::from(attempt)), cfg);
        let probe = match chaos_game(
            &system,
            cfg.points,
            cfg.resolution,
            cls.child(PROBE_STREAM).child(u64::from(attempt)),
        ) {
            Ok(img) => img,
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !accept_system(&probe, cfg.min_fill) {
            continue;
        }
        let rendered = match augment(&system, cls, images, cfg) {
            Ok(r) => r,
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        };
        return Ok(FractalClass {
            record: FractalRecord {
                class_index,
                class_id: crate::procgen::class_id(class_index),
                seed,
                attempts: attempt + 1,
                fill_rate: probe.fill_rate(),
                image_fill_rates: rendered.iter().map(FractalImage::fill_rate).collect(),
                system,
            },
            images: rendered,
        });
    }
    Err(Error::GenerationExhausted {
        class: class_index,
        rejections: cfg.max_system_attempts,
    })
}

/// Renders image `image_index` of a class from its recorded system.
pub fn replay_image(
    record: &FractalRecord,
    image_index: usize,
    cfg: &FractalConfig,
) -> Result<FractalImage> {
    augment_one(
        &record.system,
        class_stream(record.seed, record.class_index),
        image_index,
        cfg,
    )
}

pub fn generate_db(
    cfg: &FractalConfig,
    seed: u64,
    classes: usize,
    images: usize,
) -> Result<Vec<FractalClass>> {
    if classes < 1 || images < 1 {
        return Err(Error::invalid("need at least one class and one image"));
    }
    (0..classes)
        .into_par_iter()
        .map(|c| generate_class(cfg, seed, c, images))
        .collect()
}

pub const CONFIG_FILE: &str = "fractal_config.json";

/// Writes `class_NNNN/img_NNNN.png`, `genlog.jsonl` and the generator
/// configuration (needed for replay) under `root`.
pub fn write_db(root: &Path, cfg: &FractalConfig, classes: &[FractalClass]) -> Result<()> {
    classes.par_iter().try_for_each(|c| {
        c.images.iter().enumerate().try_for_each(|(k, img)| {
            let r = img.resolution as u32;
            imageio::write_png(
                &root.join(imageio::image_rel_path(c.record.class_index, k)),
                r,
                r,
                1,
                &img.pixels,
            )
        })
    })?;
    let cfg_path = root.join(CONFIG_FILE);
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(cfg)?).at(&cfg_path)?;
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

pub fn read_config(root: &Path) -> Result<FractalConfig> {
    let path = root.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).at(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path, msg: e.to_string() })
}

pub fn read_genlog(path: &Path) -> Result<Vec<FractalRecord>> {
    let text = std::fs::read_to_string(path).at(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Canonical Sierpinski triangle: three half-scale maps toward (0,0), (½,0), (0,½).
pub fn sierpinski() -> IfsSystem {
    let half = |t: [f64; 2]| AffineMap {
        matrix: [[0.5, 0.0], [0.0, 0.5]],
        translation: t,
    };
    IfsSystem::uniform(vec![half([0.0, 0.0]), half([0.5, 0.0]), half([0.0, 0.5])])
        .expect("valid system")
}
